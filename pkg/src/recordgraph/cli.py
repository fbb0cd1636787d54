"""Command-line entry point: build, train, summarize, eval, grad-check, fixture."""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from recordgraph import pipeline
from recordgraph.fixtures import shipped_fixture_path

GRAD_CHECK_BOUND = 1e-4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--dataset", help="JSON-lines dataset")
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", help="per-dataset dropout/alpha preset: qmsum, academiceval, wcep, booksum")
    p.add_argument("--chunk-size", type=int)
    p.add_argument("--overlap", type=int)
    p.add_argument("--n-queries", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", dest="base_lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--mode", choices=["self_supervised", "supervised"])
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--embedding-mode", choices=["deterministic", "live"])
    p.add_argument("--llm-mode", choices=["canned", "live"])
    p.add_argument("--force", action="store_true", help="ignore config-hash mismatches")
    p.add_argument("-v", "--verbose", action="store_true")


_OVERRIDES = (
    "dataset", "out_dir", "seed", "preset", "chunk_size", "overlap", "n_queries", "k", "epochs",
    "batch_size", "base_lr", "dropout", "alpha", "tau", "mode", "checkpoint_every",
    "embedding_mode", "llm_mode",
)


def _config(args, skip: tuple[str, ...] = ()) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig.load(args.config) if args.config else pipeline.PipelineConfig()
    cfg = pipeline.apply_overrides(cfg, {k: getattr(args, k, None) for k in _OVERRIDES if k not in skip})
    if not cfg.dataset:
        raise ValueError("no dataset given (--dataset or 'dataset' in --config)")
    return cfg


def _emit(obj) -> None:
    print(json.dumps(obj, ensure_ascii=False, sort_keys=True))


def _grad_check(seeds: list[int], taus: list[float], dropout: float) -> int:
    from recordgraph.nn.gradcheck import grad_check

    worst = 0.0
    for tau in taus:
        for seed in seeds:
            err = grad_check(seed, tau=tau, alpha=0.5, dropout=dropout)
            worst = max(worst, err)
            _emit({"seed": seed, "tau": tau, "dropout": dropout, "max_relative_error": err})
    _emit({"max_relative_error": worst, "bound": GRAD_CHECK_BOUND, "ok": worst < GRAD_CHECK_BOUND})
    return 0 if worst < GRAD_CHECK_BOUND else 2


def cmd_build(args) -> int:
    result = pipeline.run_build(_config(args))
    _emit(result)
    if result["failed"]:
        raise RuntimeError(f"build failed for {len(result['failed'])} document(s): {sorted(result['failed'])}")
    return 0


def cmd_train(args) -> int:
    if args.grad_check:
        return _grad_check(list(range(10)), [0.07, 1.0], 0.0)
    cfg = _config(args)
    ckpt = pipeline.run_train(cfg, force=args.force, resume=args.resume)
    last = [r for r in ckpt.trace if r["epoch"] == ckpt.epoch - 1]
    _emit({"epochs": ckpt.epoch, "checkpoint": str(pipeline.final_checkpoint_path(cfg)),
           "final_loss": last[-1]["total"] if last else None})
    return 0


def cmd_summarize(args) -> int:
    query = None if args.global_query else args.query
    if not args.global_query and not args.query:
        raise ValueError("pass --query TEXT or --global")
    # --k here is the retrieval depth at inference, not the build-time k
    records = pipeline.run_summarize(_config(args, skip=("k",)), args.checkpoint, query, args.k, args.chunks_only,
                                     args.force, args.output)
    for rec in records:
        _emit(rec)
    return 0


def cmd_eval(args) -> int:
    report = pipeline.run_eval(_config(args), args.predictions, args.output)
    _emit({k: report[k] for k in ("n_docs", "rouge_l", "rouge_1", "rouge_2")})
    return 0


def cmd_grad_check(args) -> int:
    return _grad_check(args.seeds, args.tau, args.dropout)


def cmd_fixture(args) -> int:
    out = Path(args.directory).resolve()
    out.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(shipped_fixture_path(), out / "fixture.jsonl")
    cfg = pipeline.fixture_config(out / "run", out / "fixture.jsonl")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    _emit({"dataset": str(out / "fixture.jsonl"), "config": str(out / "config.json")})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recordgraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="simulate queries, build graphs, precompute rankings")
    _common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", help="train the GAT on built graphs")
    _common(p)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--grad-check", action="store_true", help="run the gradient check and exit")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("summarize", help="retrieve from each graph and generate summaries")
    _common(p)
    p.add_argument("--checkpoint")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--query")
    group.add_argument("--global", dest="global_query", action="store_true",
                       help="use the global summarization query")
    p.add_argument("--chunks-only", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("eval", help="Rouge-L/1/2 against reference summaries")
    _common(p)
    p.add_argument("--predictions")
    p.add_argument("--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grad-check", help="finite-difference gradient check")
    p.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    p.add_argument("--tau", type=float, nargs="+", default=[0.07, 1.0])
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("fixture", help="write the synthetic fixture dataset and config")
    p.add_argument("directory")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
