"""Operator entry points: gen-slide, score, serve, simulate, eval.

Every subcommand prints machine-readable JSON on stdout and a short human
summary on stderr. Exit codes: 0 success, 1 validation error, 2 IO error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .agents import AGENT_KINDS, Agent, run_agent
from .errors import NaviPathError, NotFoundError, StorageError, ValidationError
from .evaluate import Report, trial_metrics
from .navigate import Trace
from .recommend import DEFAULT_SENSITIVITY, Weights, generate_recommendations
from .scoring import ScoreGrid, score_slide
from .slide import SlideStore
from .synth import SyntheticSpec, generate_synthetic

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

SUMMARY_COLUMNS = [
    "session_id",
    "slide_id",
    "condition",
    "precision",
    "recall",
    "f1",
    "duration_s",
    "efficiency",
    "visited_mr_hpf",
    "visited_mr_mm2",
    "visited_area_mm2",
    "gt_visited",
    "events",
]


def _emit(payload: dict, summary: str) -> None:
    print(json.dumps(payload, separators=(",", ":")))
    print(summary, file=sys.stderr)


def _slide_store(slide_dir: Path) -> tuple[SlideStore, str]:
    slide_dir = slide_dir.resolve()
    if not (slide_dir / "meta.json").is_file():
        raise NotFoundError(f"{slide_dir} does not contain a slide (no meta.json)")
    return SlideStore(slide_dir.parent), slide_dir.name


def cmd_gen_slide(args) -> int:
    spec_payload = json.loads(Path(args.spec).read_text())
    spec = SyntheticSpec.from_dict(spec_payload)
    store = SlideStore(args.out)
    slide_id = args.id or f"slide-{spec.seed}"
    meta, gt = generate_synthetic(spec, store, slide_id)
    _emit(
        {
            "slide_id": slide_id,
            "slide_dir": str(store.slide_dir(slide_id)),
            "meta": meta.to_dict(),
            "ground_truth_mitoses": len(gt.mitoses),
        },
        f"generated {slide_id}: {meta.width0}x{meta.height0}, "
        f"{meta.levels} levels, {len(gt.mitoses)} planted mitoses",
    )
    return EXIT_OK


def cmd_score(args) -> int:
    store, slide_id = _slide_store(Path(args.slide))
    meta = store.load_meta(slide_id)
    grid = score_slide(store, meta, hpf_px=args.hpf_px, jobs=args.jobs)
    path = grid.save(store)
    n_dets = sum(len(c.detections) for c in grid)
    _emit(
        {
            "slide_id": slide_id,
            "scores": str(path),
            "grid": {"cols": grid.cols, "rows": grid.rows, "hpf_px": grid.hpf_px},
            "detections": n_dets,
            "cells_counted": sum(c.cell_count for c in grid),
        },
        f"scored {slide_id}: {grid.cols}x{grid.rows} cells, {n_dets} detections",
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import run_server

    data_dir = args.data_dir or os.environ.get("NAVIPATH_DATA_DIR")
    if not data_dir:
        raise ValidationError("provide --data-dir or set NAVIPATH_DATA_DIR")
    print(f"serving {data_dir} on port {args.port}", file=sys.stderr)
    run_server(data_dir, port=args.port, host=args.host)
    return EXIT_OK


def cmd_simulate(args) -> int:
    store, slide_id = _slide_store(Path(args.slide))
    meta = store.load_meta(slide_id)
    gt = store.load_ground_truth(slide_id)
    grid = ScoreGrid.load(store, slide_id)
    weights = Weights(
        w_cell=args.w_cell,
        w_prolif=args.w_prolif,
        w_mitosis=args.w_mitosis,
        sensitivity=args.sensitivity,
    )
    recs = generate_recommendations(grid, meta, weights)
    agent = Agent(kind=args.agent, budget=args.budget, seed=args.seed)
    session_id = f"{slide_id}-{args.agent}-{args.seed}"
    run = run_agent(agent, meta, gt, grid, recs, session_id=session_id)
    out_dir = Path(args.out) if args.out else store.root / "sessions"
    trace_path = run.trace.save(out_dir / f"{session_id}.jsonl")
    report_path = run.report.save(out_dir / f"{session_id}.report.json")
    (out_dir / f"{session_id}.json").write_text(
        json.dumps(
            {
                "format_version": 1,
                "id": session_id,
                "slide_id": slide_id,
                "condition": run.trace.condition,
                "agent": args.agent,
                "seed": args.seed,
                "budget": args.budget,
                "weights": weights.to_dict(),
                "status": "closed",
            }
        )
    )
    _emit(
        {
            "session_id": session_id,
            "trace": str(trace_path),
            "report": str(report_path),
            "events": len(run.trace.events),
            "reported": len(run.report.points),
            "truncated": run.truncated,
        },
        f"{args.agent} on {slide_id}: {len(run.trace.events)} events, "
        f"{len(run.report.points)} reported"
        + (" (budget exhausted)" if run.truncated else ""),
    )
    return EXIT_OK


def _update_summary_csv(eval_dir: Path, slide_id: str) -> Path:
    """Rebuild the per-slide summary CSV from every stored trial JSON."""
    slide_eval = eval_dir / slide_id
    rows = []
    for path in sorted(slide_eval.glob("*.json")):
        d = json.loads(path.read_text())
        rows.append(
            {
                "session_id": path.stem,
                "slide_id": slide_id,
                "condition": d.get("condition", ""),
                **{
                    k: d[k]
                    for k in (
                        "precision",
                        "recall",
                        "f1",
                        "duration_s",
                        "efficiency",
                        "visited_mr_hpf",
                        "visited_mr_mm2",
                        "visited_area_mm2",
                        "gt_visited",
                    )
                },
                "events": sum(d["interaction_counts"].values()),
            }
        )
    csv_path = slide_eval / "summary.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return csv_path


def cmd_eval(args) -> int:
    store, slide_id = _slide_store(Path(args.slide))
    meta = store.load_meta(slide_id)
    gt = store.load_ground_truth(slide_id)
    trace = Trace.load(Path(args.trace), slide_id=slide_id)
    if trace.slide_id != slide_id:
        raise ValidationError(
            f"trace belongs to slide {trace.slide_id!r}, not {slide_id!r}"
        )
    report = Report.load(Path(args.report))
    m = trial_metrics(trace, report, gt, meta, eps=args.epsilon)
    payload = m.to_dict()
    payload["condition"] = trace.condition
    payload["session_id"] = trace.session_id
    eval_dir = Path(args.out) if args.out else store.root / "eval"
    trial_path = eval_dir / slide_id / f"{trace.session_id}.json"
    trial_path.parent.mkdir(parents=True, exist_ok=True)
    trial_path.write_text(json.dumps(payload, separators=(",", ":")))
    csv_path = _update_summary_csv(eval_dir, slide_id)
    _emit(
        payload,
        f"eval {trace.session_id}: P={m.precision:.3f} R={m.recall:.3f} "
        f"eff={m.efficiency:.4f}/s mr={m.visited_mr_hpf:.3f}/HPF -> {trial_path} "
        f"(summary {csv_path})",
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="navipath",
        description="Slide navigation engine: synthesize, score, serve, simulate, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-slide", help="render a synthetic slide pyramid with ground truth")
    p.add_argument("--spec", required=True, help="JSON file with synthetic slide parameters")
    p.add_argument("--out", required=True, help="slide store root directory")
    p.add_argument("--id", default=None, help="slide id (default: slide-<seed>)")
    p.set_defaults(func=cmd_gen_slide)

    p = sub.add_parser("score", help="score every HPF cell of a stored slide")
    p.add_argument("--slide", required=True, help="slide directory (contains meta.json)")
    p.add_argument("--hpf-px", type=int, default=1680, dest="hpf_px")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--data-dir", default=None, help="slide store root (or NAVIPATH_DATA_DIR)")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="run a navigation agent, writing trace + report")
    p.add_argument("--slide", required=True)
    p.add_argument("--agent", required=True, choices=AGENT_KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=400)
    p.add_argument("--w-cell", type=float, default=1.0, dest="w_cell")
    p.add_argument("--w-prolif", type=float, default=1.0, dest="w_prolif")
    p.add_argument("--w-mitosis", type=float, default=1.0, dest="w_mitosis")
    p.add_argument("--sensitivity", type=float, default=DEFAULT_SENSITIVITY)
    p.add_argument("--out", default=None, help="session output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="compute trial metrics for a trace + report")
    p.add_argument("--slide", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--epsilon", type=float, default=30.0)
    p.add_argument("--out", default=None, help="eval output directory")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ValidationError, NotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (StorageError, OSError, json.JSONDecodeError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NaviPathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
