"""Command-line surface.

Subcommands: ``synth`` (generate fixture files), ``diagnose`` (hubness report
for an embedding pair), ``rerank`` (hub-suppressed rankings, no adaptation),
``adapt`` (full online stream with report + rankings), ``eval`` (Recall@K on a
rankings CSV), ``gradcheck`` (finite-difference verification of the loss
gradients).

Option values resolve as: command-line flag > config-file entry > manifest
entry (``adapt`` only) > built-in default. Config files are plain
``key = value`` lines with ``#`` comments, keys named like the long flags
with underscores. Validation problems exit with status 2 and a single
diagnostic line; no output file is written before all inputs validate.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import io as hio
from .core import l2_normalize
from .diagnostics import hubness_report, recall_at_k
from .errors import HubttaError
from .gradcheck import DEFAULT_TOLERANCE, run_gradient_suite
from .pipeline import RetrievalDataset, StreamConfig, run_stream
from .suppression import SuppressionConfig
from .synth import GENERATOR_NAME, SHIFT_KINDS, SynthSpec, apply_shift, make_paired


def parse_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    values = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


class _Resolver:
    """Three-layer option resolution: CLI flag > config file > fallback dict > default."""

    def __init__(self, args: argparse.Namespace, config: dict, fallback: Optional[dict] = None):
        self.args = args
        self.config = config
        self.fallback = fallback or {}

    def get(self, key: str, default, cast):
        cli = getattr(self.args, key, None)
        if cli is not None:
            return cli
        if key in self.config:
            return cast(self.config[key])
        if key in self.fallback:
            return cast(self.fallback[key])
        return default


def _cast_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def _stream_config(res: _Resolver, mode: str, seed: int) -> StreamConfig:
    suppression = SuppressionConfig(
        gallery_scale=res.get("gallery_scale", 100.0, float),
        query_scale=res.get("query_scale", 10.0, float),
        blend=res.get("blend", 0.5, float),
        window=res.get("window", 100, int),
    )
    return StreamConfig(
        batch_size=res.get("batch_size", 16, int),
        tau=res.get("tau", 0.02, float),
        temperature=res.get("temperature", 10.0, float),
        learning_rate=res.get("lr", None, float),
        mode=mode,
        seed=seed,
        suppression=suppression,
        rm_capacity=res.get("rm_capacity", 16, int),
        threshold_scale=res.get("threshold_scale", 1.0, float),
        fallback_fraction=res.get("fallback_fraction", 0.5, float),
        rank_after_update=res.get("rank_after_update", False, _cast_bool),
        report_k=res.get("report_k", 15, int),
    )


def _add_stream_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--gallery-scale", dest="gallery_scale", type=float)
    p.add_argument("--query-scale", dest="query_scale", type=float)
    p.add_argument("--blend", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--rm-capacity", dest="rm_capacity", type=int)
    p.add_argument("--threshold-scale", dest="threshold_scale", type=float)
    p.add_argument("--fallback-fraction", dest="fallback_fraction", type=float)
    p.add_argument("--report-k", dest="report_k", type=int)
    p.add_argument("--rank-after-update", dest="rank_after_update", action="store_const", const=True)


def _load_pair(query_path: str, gallery_path: str):
    return hio.read_embeddings(query_path), hio.read_embeddings(gallery_path)


def cmd_synth(args: argparse.Namespace) -> int:
    config = parse_config_file(args.config) if args.config else {}
    res = _Resolver(args, config)
    spec = SynthSpec(
        n_items=res.get("n", 256, int),
        dim=res.get("dim", 32, int),
        n_frames=res.get("frames", 4, int),
        shift_kind=res.get("shift", "none", str),
        strength=res.get("strength", 0.0, float),
        n_hubs=res.get("n_hubs", 5, int),
        seed=res.get("seed", 42, int),
        jitter=res.get("jitter", 0.02, float),
    )
    queries, gallery, _ = make_paired(spec)
    shifted = apply_shift(queries, spec)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    query_path = out_dir / "queries.hatv"
    gallery_path = out_dir / "gallery.hatv"
    hio.write_embeddings(shifted, query_path)
    hio.write_embeddings(gallery, gallery_path)
    manifest = hio.RunManifest(
        query_path="queries.hatv",
        gallery_path="gallery.hatv",
        ground_truth="identity",
        mode="v2t",
        seed=spec.seed,
        generator={
            "algorithm": GENERATOR_NAME,
            "n_items": spec.n_items,
            "dim": spec.dim,
            "n_frames": spec.n_frames,
            "shift_kind": spec.shift_kind,
            "strength": spec.strength,
            "n_hubs": spec.n_hubs,
            "jitter": spec.jitter,
            "seed": spec.seed,
        },
    )
    hio.write_manifest(manifest, out_dir / "manifest.json")
    print(
        f"synth: wrote {spec.n_items}x{spec.n_frames}x{spec.dim} queries "
        f"({spec.shift_kind}, strength {spec.strength}) to {out_dir}"
    )
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    queries, gallery = _load_pair(args.queries, args.gallery)
    q = l2_normalize(queries)
    g = l2_normalize(gallery)
    scores = q.data @ g.data.T
    rankings = np.argsort(-scores, axis=1, kind="stable")
    gt = None
    if args.gt != "none":
        gt = hio.read_ground_truth(args.gt, queries.n_items, gallery.n_items)
    k = min(args.k, gallery.n_items)
    report = hubness_report(rankings, k=k, ground_truth=gt)
    hio.write_json(report.to_dict(), args.out)
    recall_txt = f" R@1={report.recall_at.get(1, float('nan')):.2f}" if report.recall_at else ""
    print(
        f"diagnose: k={k} skew={report.skew:.3f} hub_occurrence={report.hub_occurrence:.3f} "
        f"antihub_rate={report.antihub_rate:.3f}{recall_txt} -> {args.out}"
    )
    return 0


def cmd_rerank(args: argparse.Namespace) -> int:
    config = parse_config_file(args.config) if args.config else {}
    res = _Resolver(args, config)
    queries, gallery = _load_pair(args.queries, args.gallery)
    gt = hio.read_ground_truth(args.gt, queries.n_items, gallery.n_items)
    stream_cfg = _stream_config(res, mode=args.mode, seed=res.get("seed", 42, int))
    dataset = RetrievalDataset(queries=queries, gallery=gallery, ground_truth=gt)
    report = run_stream(dataset, stream_cfg, adapt=False)
    hio.write_rankings_csv(report.rankings_refined, args.out, top=args.top)
    print(
        f"rerank: {report.n_queries} queries, refined R@1={report.recall_refined.get(1, 0.0):.2f} "
        f"(raw {report.recall_raw.get(1, 0.0):.2f}) -> {args.out}"
    )
    return 0


def cmd_adapt(args: argparse.Namespace) -> int:
    manifest_cfg: dict = {}
    if args.manifest:
        manifest = hio.load_manifest(args.manifest)
        query_path = str(hio.resolve_manifest_path(args.manifest, manifest.query_path))
        gallery_path = str(hio.resolve_manifest_path(args.manifest, manifest.gallery_path))
        gt_spec = manifest.ground_truth
        if gt_spec != "identity" and not Path(gt_spec).is_absolute():
            gt_spec = str(hio.resolve_manifest_path(args.manifest, gt_spec))
        mode = args.mode or manifest.mode
        seed = args.seed if args.seed is not None else manifest.seed
        manifest_cfg = manifest.config
    else:
        if not (args.queries and args.gallery):
            raise HubttaError("adapt needs either --manifest or both --queries and --gallery")
        query_path, gallery_path = args.queries, args.gallery
        gt_spec = args.gt
        mode = args.mode or "v2t"
        seed = args.seed if args.seed is not None else 42

    config_file = parse_config_file(args.config) if args.config else {}
    res = _Resolver(args, config_file, fallback=manifest_cfg)
    queries, gallery = _load_pair(query_path, gallery_path)
    gt = hio.read_ground_truth(gt_spec, queries.n_items, gallery.n_items)
    stream_cfg = _stream_config(res, mode=mode, seed=seed)
    dataset = RetrievalDataset(queries=queries, gallery=gallery, ground_truth=gt)
    report = run_stream(dataset, stream_cfg)
    hio.write_json(report.to_dict(), args.report)
    if args.rankings:
        hio.write_rankings_csv(report.rankings_refined, args.rankings, top=args.top)
    print(
        f"adapt[{mode}]: {report.n_queries} queries, lr={stream_cfg.lr:g}, "
        f"refined R@1={report.recall_refined.get(1, 0.0):.2f} "
        f"(raw {report.recall_raw.get(1, 0.0):.2f}) -> {args.report}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    rankings = hio.read_rankings_csv(args.rankings)
    n = rankings.shape[0]
    if args.gt == "identity":
        gt = np.arange(n)
    else:
        gt = hio.read_ground_truth(args.gt, n, n_gallery=np.iinfo(np.int64).max)
    ks = [int(k) for k in args.ks.split(",")]
    usable = [k for k in ks if k <= rankings.shape[1]]
    if not usable:
        raise HubttaError(f"rankings are only {rankings.shape[1]} deep; cannot evaluate K={ks}")
    recall = recall_at_k(rankings, gt, usable, strict=False)
    summary = " ".join(f"R@{k}={v:.2f}" for k, v in recall.items())
    print(f"eval: {n} queries {summary}")
    if args.out:
        hio.write_json({"recall": {str(k): v for k, v in recall.items()}, "n_queries": n}, args.out)
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    errors = run_gradient_suite(seed=args.seed, trials=args.trials)
    worst = max(errors.values())
    for name in sorted(errors):
        status = "ok" if errors[name] < args.tolerance else "FAIL"
        print(f"gradcheck {name:12s} max_rel_err={errors[name]:.3e} [{status}]")
    if args.json:
        hio.write_json(
            {"errors": errors, "tolerance": args.tolerance, "seed": args.seed}, args.json
        )
    if worst >= args.tolerance:
        print(f"gradcheck: FAILED (worst {worst:.3e} >= {args.tolerance:g})")
        return 1
    print(f"gradcheck: all gradients within {args.tolerance:g} (worst {worst:.3e})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hubtta",
        description="Hubness-aware online retrieval: suppression reranking, "
        "test-time adaptation, and diagnostics on embedding files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a paired synthetic fixture")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--n", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--shift", choices=SHIFT_KINDS)
    p.add_argument("--strength", type=float)
    p.add_argument("--n-hubs", dest="n_hubs", type=int)
    p.add_argument("--jitter", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("diagnose", help="hubness report for a query/gallery pair")
    p.add_argument("--queries", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--gt", default="identity", help="'identity', 'none', or an index file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("rerank", help="hub-suppressed rankings, no adaptation")
    p.add_argument("--queries", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--gt", default="identity")
    p.add_argument("--mode", choices=("v2t", "t2v"), default="v2t")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    _add_stream_flags(p)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("adapt", help="full online adaptation stream")
    p.add_argument("--manifest")
    p.add_argument("--queries")
    p.add_argument("--gallery")
    p.add_argument("--gt", default="identity")
    p.add_argument("--mode", choices=("v2t", "t2v"))
    p.add_argument("--seed", type=int)
    p.add_argument("--report", required=True)
    p.add_argument("--rankings")
    p.add_argument("--top", type=int, default=10)
    _add_stream_flags(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", help="Recall@K for a rankings CSV")
    p.add_argument("--rankings", required=True)
    p.add_argument("--gt", default="identity")
    p.add_argument("--ks", default="1,5,10")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all loss gradients")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--json")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (HubttaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
