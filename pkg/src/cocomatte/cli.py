"""Command line entry point: ``cocomatte {build,eval,eval-instances,stats}``.

Exit codes: 0 success, 1 configuration or input error, 2 empty result set.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import EmptyInput, MatteError
from .pipeline import INDEX_NAME, PipelineConfig, build_dataset, evaluate, evaluate_instances, stats
from .solver import ExternalBackendConfig

EXIT_OK, EXIT_INPUT, EXIT_EMPTY = 0, 1, 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON document mirroring PipelineConfig")
    p.add_argument("--tau", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--overlap-mode", choices=["iou", "ioa"])
    p.add_argument("--backend-cmd", help="external matting command with {image} {trimap} {out}")
    p.add_argument("--workers", type=int)
    p.add_argument("--json-out", type=Path, help="also write the JSON report here")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cocomatte", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="convert instance masks into alpha mattes")
    _add_common(p)

    p = sub.add_parser("eval", help="SAD/MSE/MAD/Grad/Conn between two PNG directories")
    _add_common(p)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--resize", type=int, help="longer-side target; 0 disables (default: config or 1024)")

    p = sub.add_parser("eval-instances", help="IMQ between two dataset indexes")
    _add_common(p)
    p.add_argument("--pred-index", type=Path, required=True)
    p.add_argument("--gt-index", type=Path, required=True)
    p.add_argument("--metric", choices=["mad", "mse", "grad", "conn"], default="mad")

    p = sub.add_parser("stats", help="summarize a dataset index")
    _add_common(p)
    p.add_argument("--index", type=Path, help="index path (default: <output_dir>/index.jsonl)")
    return parser


def load_config(args) -> PipelineConfig | None:
    if args.config is None:
        return None
    cfg = PipelineConfig.load(args.config)
    if args.tau is not None:
        cfg.fusion = replace(cfg.fusion, tau=args.tau)
    if args.overlap_mode is not None:
        cfg.fusion = replace(cfg.fusion, overlap_mode=args.overlap_mode)
    if args.eta is not None:
        cfg.trimap = replace(cfg.trimap, eta=args.eta)
    if args.backend_cmd is not None:
        cfg.solver = ExternalBackendConfig(args.backend_cmd)
    if args.workers is not None:
        cfg.parallelism = args.workers
    return cfg


def _emit(payload: dict, text: str | None, json_out: Path | None) -> None:
    doc = json.dumps(payload, indent=2, sort_keys=True)
    print(doc)
    if text:
        print(text)
    if json_out:
        json_out.write_text(doc + "\n", encoding="utf-8")


def _run(args) -> int:
    cfg = load_config(args)
    if args.command == "build":
        if cfg is None:
            raise MatteError("build needs --config")
        records, summary = build_dataset(cfg)
        _emit(summary, None, args.json_out)
        return EXIT_OK if summary["active"] else EXIT_EMPTY

    if args.command == "eval":
        target = args.resize if args.resize is not None else (cfg.resize_target if cfg else 1024)
        report = evaluate(args.pred, args.gt, target or None)
        _emit(report.to_dict(), report.to_table(), args.json_out)
        return EXIT_OK

    if args.command == "eval-instances":
        result = evaluate_instances(args.pred_index, args.gt_index, args.metric)
        lines = [f"{'image':>12} {'IMQ':>10}"]
        lines += [f"{k:>12} {v:>10.3f}" for k, v in result["per_image"].items()]
        lines.append(f"{'mean':>12} {result['mean_imq']:>10.3f}")
        _emit(result, "\n".join(lines), args.json_out)
        return EXIT_OK

    index = args.index or (cfg.output_dir / INDEX_NAME if cfg else None)
    if index is None:
        raise MatteError("stats needs --index or --config")
    summary = stats(index)
    _emit(summary, None, args.json_out)
    return EXIT_OK if summary["total"] else EXIT_EMPTY


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except EmptyInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (MatteError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
