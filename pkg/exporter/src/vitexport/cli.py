"""Command line front end: ``vitexport attention`` and ``vitexport scores``."""

import argparse
import sys

from . import ExportError
from .export import ExportJob, export_attention, export_scores


def _add_job_args(p):
    p.add_argument("--model", required=True, help="checkpoint directory")
    p.add_argument("--images", required=True, help="input image directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resize", type=int, default=224)
    p.add_argument("--device", default="cpu")
    p.add_argument("--batch-size", type=int, default=16)


def build_parser():
    ap = argparse.ArgumentParser(prog="vitexport")
    sub = ap.add_subparsers(dest="command", required=True)
    a = sub.add_parser("attention", help="export images + attention + manifest")
    _add_job_args(a)
    s = sub.add_parser("scores", help="score proposal composites")
    _add_job_args(s)
    s.add_argument("--proposals", required=True, help="proposal boxes CSV")
    s.add_argument("--manifest", default=None,
                   help="manifest CSV (default: <images>/manifest.csv)")
    s.add_argument("--sigma", type=float, default=None)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code else 0
    from transformers.utils import logging as hf_logging
    hf_logging.set_verbosity_error()
    hf_logging.disable_progress_bar()
    try:
        job = ExportJob(model=args.model, image_dir=args.images,
                        out_dir=args.out, resize=args.resize,
                        device=args.device, batch_size=args.batch_size,
                        sigma=getattr(args, "sigma", None))
        if args.command == "attention":
            path = export_attention(job)
        else:
            path = export_scores(job, args.proposals, args.manifest)
        print(path)
        return 0
    except ExportError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
