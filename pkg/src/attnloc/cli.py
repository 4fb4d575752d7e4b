"""Command-line pipeline driver.

Subcommands mirror the pipeline stages: synth, proposals, pseudolabels,
train, eval, hist. Every stage writes deterministic artifacts into its
--out directory (reruns are byte-identical) plus a run_config.txt
echoing the arguments. Exit codes: 0 ok, 1 usage, 2 data or format
problem, 3 numerical failure.
"""

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import attention, evaluate, learn, proposal, pseudolabel, tensorio
from .errors import FormatError, NumericError, PipelineError
from .segment import BBox

PROPOSALS_HEADER = "image_id,x0,y0,x1,y1,source_map,class_id,confidence"
BOXES_HEADER = "image_id,proposal_index,x0,y0,x1,y1,source_map"
SCORES_HEADER = "image_id,proposal_index,class_id,score"
HIST_HEADER = "bin_lo,bin_hi,count_fg,count_bg,frac_fg,frac_bg"


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _Usage(message)


def _write_lines(path, lines):
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return "" if v is None else str(v)


def _write_run_config(out_dir: Path, args) -> None:
    skip = {"func"}
    lines = [f"{k}={_fmt(v)}" for k, v in sorted(vars(args).items())
             if k not in skip]
    _write_lines(out_dir / "run_config.txt", lines)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _map_records(manifest, fn, threads: int):
    """Apply fn to each record, preserving manifest order."""
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, manifest.records))
    return [fn(rec) for rec in manifest.records]


def _read_csv_strict(path, header: str):
    try:
        with open(path, "r", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise PipelineError(f"cannot read {path}: {e}") from e
    if not rows or ",".join(rows[0]) != header:
        raise FormatError(f"{path}: expected header {header!r}")
    return [r for r in rows[1:] if r]


def _read_proposals_csv(path) -> dict:
    """Winning proposal per image: id -> (box, source_map, class_id)."""
    out = {}
    for row in _read_csv_strict(path, PROPOSALS_HEADER):
        if len(row) != 8:
            raise FormatError(f"{path}: expected 8 fields, got {len(row)}")
        image_id = row[0]
        try:
            x0, y0, x1, y1, source_map, class_id = (int(v) for v in row[1:7])
        except ValueError:
            raise FormatError(f"{path}: bad integer field in row for "
                              f"{image_id}") from None
        if image_id in out:
            raise FormatError(f"{path}: duplicate image {image_id}")
        out[image_id] = (BBox(x0, y0, x1, y1), source_map, class_id)
    return out


def _read_scores_csv(path) -> dict:
    """id -> dense [n_proposals, n_classes] probability table."""
    cells: dict = {}
    for row in _read_csv_strict(path, SCORES_HEADER):
        if len(row) != 4:
            raise FormatError(f"{path}: expected 4 fields, got {len(row)}")
        image_id = row[0]
        try:
            p_idx, c_idx = int(row[1]), int(row[2])
            score = float(row[3])
        except ValueError:
            raise FormatError(f"{path}: bad row for {image_id}") from None
        cells.setdefault(image_id, {})[(p_idx, c_idx)] = score
    tables = {}
    for image_id, entries in cells.items():
        n_p = max(k[0] for k in entries) + 1
        n_c = max(k[1] for k in entries) + 1
        if len(entries) != n_p * n_c:
            raise FormatError(f"{path}: sparse score grid for {image_id}")
        t = np.empty((n_p, n_c))
        for (i, c), s in entries.items():
            t[i, c] = s
        tables[image_id] = t
    return tables


def _winning_map(manifest, rec, source_map: int) -> np.ndarray:
    attn = manifest.load_attention(rec)
    cand = attention.candidate_maps(attn)
    if not 0 <= source_map < cand.shape[0]:
        raise FormatError(f"{rec.image_id}: source map {source_map} out of range")
    img = manifest.load_image(rec)
    return attention.upsample_map(cand[source_map], img.shape[0], img.shape[1])


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    out = _out_dir(args)
    cfg = tensorio.SynthConfig(
        n_images=args.n, image_size=(args.size[0], args.size[1]),
        n_classes=args.classes, n_heads=args.heads,
        noise_sigma=args.noise_sigma, distractor_prob=args.distractor_prob,
        rng_seed=args.seed)
    tensorio.generate_synthetic(cfg, out)
    _write_run_config(out, args)
    return 0


def cmd_proposals(args) -> int:
    out = _out_dir(args)
    manifest = tensorio.read_manifest(args.manifest)
    if args.scores:
        tables = _read_scores_csv(args.scores)
        scorer_for = lambda rec: proposal.PrecomputedScores(  # noqa: E731
            tables[rec.image_id]) if rec.image_id in tables else None
    else:
        fit_manifest = tensorio.read_manifest(args.scorer_manifest or args.manifest)
        toy = proposal.toy_scorer_fit(fit_manifest)
        scorer_for = lambda rec: toy  # noqa: E731

    def one(rec):
        img = manifest.load_image(rec)
        cand = attention.candidate_maps(manifest.load_attention(rec))
        props = proposal.make_proposals(
            img, cand, sigma=args.sigma, min_area_frac=args.min_area_frac,
            connectivity=args.connectivity)
        scorer = scorer_for(rec)
        if not props or scorer is None:
            return rec, props, None
        scores = proposal.score_all(props, scorer)
        return rec, props, scores

    results = _map_records(manifest, one, args.threads)
    win_lines = [PROPOSALS_HEADER]
    box_lines = [BOXES_HEADER]
    score_lines = [SCORES_HEADER]
    for rec, props, scores in results:
        for i, p in enumerate(props):
            b = p.box
            box_lines.append(f"{rec.image_id},{i},{b.x0},{b.y0},{b.x1},{b.y1},"
                             f"{p.source_map}")
        if scores is None:
            print(f"warning: no scored proposals for {rec.image_id}",
                  file=sys.stderr)
            continue
        for i in range(scores.shape[0]):
            for c in range(scores.shape[1]):
                score_lines.append(
                    f"{rec.image_id},{i},{c},{repr(float(scores[i, c]))}")
        idx, cls, conf = proposal.select_from_scores(scores)
        b = props[idx].box
        win_lines.append(f"{rec.image_id},{b.x0},{b.y0},{b.x1},{b.y1},"
                         f"{props[idx].source_map},{cls},{repr(conf)}")
    _write_lines(out / "proposals.csv", win_lines)
    _write_lines(out / "proposal_boxes.csv", box_lines)
    _write_lines(out / "scores.csv", score_lines)
    _write_run_config(out, args)
    return 0


def cmd_pseudolabels(args) -> int:
    out = _out_dir(args)
    manifest = tensorio.read_manifest(args.manifest)
    winners = _read_proposals_csv(args.proposals)
    items = []
    for rec in manifest:
        if rec.image_id not in winners:
            continue
        box, source_map, _ = winners[rec.image_id]
        t_map = _winning_map(manifest, rec, source_map)
        items.append((rec.image_id,
                      pseudolabel.sample_pseudo_labels(t_map, box, args.n_frac)))
    pseudolabel.write_pseudo_labels(items, out / "pseudolabels.csv")
    _write_run_config(out, args)
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    manifest = tensorio.read_manifest(args.manifest)
    winners = _read_proposals_csv(args.proposals)
    labels = pseudolabel.read_pseudo_labels(args.pseudolabels)
    examples = []
    for rec in manifest:
        if rec.image_id not in winners or rec.image_id not in labels:
            continue
        box, source_map, class_id = winners[rec.image_id]
        t_map = _winning_map(manifest, rec, source_map)
        examples.append(learn.TrainExample(
            image=manifest.load_image(rec), attention=t_map,
            labels=labels[rec.image_id], class_id=class_id))
    cfg = learn.TrainerConfig(
        lr=args.lr, steps=args.steps, lambda_crf=args.lambda_crf,
        lambda_class=args.lambda_class, seed=args.seed,
        crf=learn.CrfParams(sigma_spatial=args.crf_sigma_spatial,
                            sigma_range=args.crf_sigma_range,
                            grid_size=args.crf_grid),
        resample_k=args.resample_k)
    params, trace = learn.train(examples, cfg)
    learn.save_params(params, out / "checkpoint")
    learn.write_trace(trace, out / "loss_trace.csv")
    _write_run_config(out, args)
    return 0


def _score_maps(manifest, args):
    params = None
    winners = None
    if args.checkpoint:
        params = learn.load_params(args.checkpoint)
        winners = _read_proposals_csv(args.proposals)

    def one(rec):
        if params is None:
            attn = manifest.load_attention(rec)
            cand = attention.candidate_maps(attn)
            img = manifest.load_image(rec)
            return attention.upsample_map(cand[attention.MEAN_MAP_INDEX],
                                          img.shape[0], img.shape[1])
        if rec.image_id not in winners:
            return None
        t_map = _winning_map(manifest, rec, winners[rec.image_id][1])
        return learn.predict_map(params, manifest.load_image(rec), t_map)

    maps = _map_records(manifest, one, getattr(args, "threads", 0))
    records = []
    for rec, m in zip(manifest.records, maps):
        if m is None:
            print(f"warning: no proposal for {rec.image_id}, skipped",
                  file=sys.stderr)
            continue
        records.append(evaluate.EvalRecord(score_map=m, gt_boxes=rec.gt_boxes,
                                           image_id=rec.image_id))
    return records


def _check_map_source(args, parser):
    if bool(args.checkpoint) == bool(args.baseline):
        parser.error("give exactly one of --checkpoint or --baseline")
    if args.checkpoint and not args.proposals:
        parser.error("--checkpoint requires --proposals")


def cmd_eval(args) -> int:
    out = _out_dir(args)
    manifest = tensorio.read_manifest(args.manifest)
    records = _score_maps(manifest, args)
    taus = evaluate.default_taus(args.n_taus)
    acc, curve = evaluate.max_box_acc(records, taus,
                                      connectivity=args.connectivity)
    acc2, curve2 = evaluate.max_box_acc_v2(records, taus,
                                           connectivity=args.connectivity)
    _write_lines(out / "max_box_acc_curve.csv",
                 ["tau,acc"] + [f"{repr(t)},{repr(a)}" for t, a in curve])
    _write_lines(out / "max_box_acc_v2_curve.csv",
                 ["tau,delta,acc"] + [f"{repr(t)},{repr(d)},{repr(a)}"
                                      for t, d, a in curve2])
    _write_lines(out / "summary.txt",
                 [f"max_box_acc,{repr(acc)},max_box_acc_v2,{repr(acc2)}"])
    _write_run_config(out, args)
    return 0


def cmd_hist(args) -> int:
    out = _out_dir(args)
    manifest = tensorio.read_manifest(args.manifest)
    records = _score_maps(manifest, args)
    res = evaluate.activation_histogram(records, bins=args.bins)
    lines = [HIST_HEADER]
    for b in range(args.bins):
        lines.append(f"{repr(b / args.bins)},{repr((b + 1) / args.bins)},"
                     f"{res.counts_fg[b]},{res.counts_bg[b]},"
                     f"{repr(float(res.frac_fg[b]))},{repr(float(res.frac_bg[b]))}")
    _write_lines(out / "histogram.csv", lines)
    _write_lines(out / "separation.txt", [f"separation,{repr(res.separation)}"])
    _write_run_config(out, args)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="attnloc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="render the synthetic corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=64)
    sp.add_argument("--size", type=int, nargs=2, default=[64, 64],
                    metavar=("H", "W"))
    sp.add_argument("--classes", type=int, default=4)
    sp.add_argument("--heads", type=int, default=6)
    sp.add_argument("--noise-sigma", type=float, default=0.15)
    sp.add_argument("--distractor-prob", type=float, default=0.25)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("proposals", help="box proposals and composite scores")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--scorer", choices=["toy"], default="toy")
    sp.add_argument("--scorer-manifest",
                    help="manifest the toy classifier is fit on "
                         "(defaults to --manifest)")
    sp.add_argument("--scores", help="precomputed score table CSV")
    sp.add_argument("--sigma", type=float, default=None,
                    help="blur width, defaults to min(H, W)/8")
    sp.add_argument("--min-area-frac", type=float,
                    default=proposal.DEFAULT_MIN_AREA_FRAC)
    sp.add_argument("--connectivity", type=int, choices=[4, 8], default=8)
    sp.add_argument("--threads", type=int, default=0)
    sp.set_defaults(func=cmd_proposals)

    sp = sub.add_parser("pseudolabels", help="sample pixel supervision")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--proposals", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-frac", type=float, default=0.1)
    sp.set_defaults(func=cmd_pseudolabels)

    sp = sub.add_parser("train", help="fit the pixel localizer")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--proposals", required=True)
    sp.add_argument("--pseudolabels", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--lr", type=float, default=0.05)
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--lambda-crf", type=float, default=1e-4)
    sp.add_argument("--lambda-class", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--resample-k", type=int, default=None)
    sp.add_argument("--crf-sigma-spatial", type=float, default=8.0)
    sp.add_argument("--crf-sigma-range", type=float, default=0.1)
    sp.add_argument("--crf-grid", type=int, default=32)
    sp.set_defaults(func=cmd_train)

    for name, fn in (("eval", cmd_eval), ("hist", cmd_hist)):
        sp = sub.add_parser(name, help=f"{name} score maps against boxes")
        sp.add_argument("--manifest", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--checkpoint", help="trained localizer directory")
        sp.add_argument("--proposals",
                        help="winners CSV that picked each image's map")
        sp.add_argument("--baseline", choices=["attention"],
                        help="score the head-mean attention map instead")
        sp.add_argument("--threads", type=int, default=0)
        if name == "eval":
            sp.add_argument("--n-taus", type=int, default=100)
            sp.add_argument("--connectivity", type=int, choices=[4, 8],
                            default=8)
        else:
            sp.add_argument("--bins", type=int, default=evaluate.HIST_BINS)
        sp.set_defaults(func=fn)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.func in (cmd_eval, cmd_hist):
            _check_map_source(args, parser)
        return args.func(args)
    except _Usage as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 3
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
