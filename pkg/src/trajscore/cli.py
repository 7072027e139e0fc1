"""Command line entry point: analyze, top, compare, synth."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import Config, ConfigError, load_config

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trajscore", description="Score interaction, anomaly and relevance "
                                "of road users in trajectory recordings.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="analyze one recording and write a report directory")
    a.add_argument("--tracks", required=True)
    a.add_argument("--tracks-meta", required=True)
    a.add_argument("--recording-meta", required=True)
    a.add_argument("--map", required=True)
    a.add_argument("--config")
    a.add_argument("--scenario", choices=("urban", "highway"))
    a.add_argument("--kappa", type=float)
    a.add_argument("--out", required=True)
    a.add_argument("--no-figures", action="store_true", help="skip the PNG figures")

    t = sub.add_parser("top", help="rank tracks or situations of an analyzed recording")
    t.add_argument("--report", required=True)
    t.add_argument("--score", default="relevance", choices=("interaction", "anomaly", "relevance"))
    t.add_argument("--k", type=int, default=10)
    t.add_argument("--level", default="track", choices=("track", "punctual"))

    c = sub.add_parser("compare", help="compare dataset scores of several reports")
    c.add_argument("--reports", nargs="+", required=True)
    c.add_argument("--out", required=True, help="CSV path; a JSON and a PNG are written alongside")

    s = sub.add_parser("synth", help="write a synthetic intersection recording and its map")
    s.add_argument("--tracks", type=int, default=100)
    s.add_argument("--duration", type=float, default=120.0)
    s.add_argument("--frame-rate", type=float, default=25.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    return p


def _config(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    return cfg.with_overrides(scenario=args.scenario, kappa=args.kappa)


def cmd_analyze(args) -> int:
    from .dataset_io import load_recording
    from .pipeline import analyze_recording
    from .report import write_report
    from .semantic_map import load_map

    cfg = _config(args)
    rec = load_recording(args.tracks, args.tracks_meta, args.recording_meta)
    smap = load_map(args.map)
    result = analyze_recording(rec, smap, cfg)
    out = write_report(result, args.out, figures=not args.no_figures)
    ds = result.dataset
    print(f"{rec.recording_id}: interaction={ds['interaction']:.3f} anomaly={ds['anomaly']:.3f} "
          f"relevance={ds['relevance']:.3f} -> {out}")
    return EXIT_OK


def cmd_top(args) -> int:
    from .report import top_from_report

    ranked = top_from_report(args.report, args.score, args.k, args.level)
    ranked.to_csv(sys.stdout, index=False, float_format="%.6g")
    return EXIT_OK


def cmd_compare(args) -> int:
    from .aggregation import compare_table
    from .plotting import plot_comparison
    from .report import load_summary

    table = compare_table([load_summary(r) for r in args.reports])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False, float_format="%.12g")
    out.with_suffix(".json").write_text(json.dumps(table.to_dict(orient="records"), indent=1) + "\n")
    plot_comparison(table, out.with_suffix(".png"))
    table.to_csv(sys.stdout, index=False, float_format="%.6g")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .dataset_io import write_recording
    from .semantic_map import save_map
    from .synthetic import synthetic_intersection

    rec, smap = synthetic_intersection(args.tracks, args.duration, args.frame_rate, args.seed,
                                       recording_id=f"synthetic{args.seed}")
    paths = write_recording(rec, args.out, prefix="")
    save_map(smap, Path(args.out) / "map.json")
    print("\n".join(str(p) for p in (*paths, Path(args.out) / "map.json")))
    return EXIT_OK


def main(argv=None) -> int:
    from .dataset_io import DatasetError
    from .semantic_map import MapError

    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"analyze": cmd_analyze, "top": cmd_top, "compare": cmd_compare, "synth": cmd_synth}
    try:
        return handler[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, MapError, OSError, KeyError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
