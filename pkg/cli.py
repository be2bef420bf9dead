"""
Command-line front end.

    python cli.py run-bdbnn --config configs/desk.toml --seed 7 --threads 1
    python cli.py eval --checkpoint artifacts/distill.bdck
    python cli.py analyze --checkpoint artifacts/distill.bdck --baseline artifacts/teacher.bdck

Exit codes: 0 ok, 1 unexpected error, 2 usage or invalid config,
3 missing or malformed file, 4 numeric divergence.
"""
import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

logger = logging.getLogger("bdbnn.cli")

COMMANDS = (
    "train-teacher", "train-bnn", "distill", "run-bdbnn", "eval", "export",
    "bench", "analyze", "ablate", "dump-features", "serve",
)
THREAD_VARIABLES = ("OMP_NUM_THREADS", "MKL_NUM_THREADS", "OPENBLAS_NUM_THREADS", "NUMBA_NUM_THREADS")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED = 0, 1, 2, 3, 4


def _set_threads(threads: int) -> None:
    # BLAS and numba read these once, at import
    for name in THREAD_VARIABLES:
        os.environ[name] = str(threads)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--recipe", help="named recipe to start from (desk, cifar-resnet20, imagenet-style-resnet18)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set kurtosis.lambda=1e-3")
    common.add_argument("--seed", type=int, help="run seed (overrides the config)")
    common.add_argument("--threads", type=int, default=None, help="thread budget (1 for byte-identical reruns)")
    common.add_argument("--log-level", default=None)
    common.add_argument("--out", help="artifact directory (default: BDBNN_ARTIFACT_DIR)")
    common.add_argument("--data-dir", help="dataset directory (default: config, then BDBNN_DATA_DIR/<dataset>)")
    common.add_argument("--progress", action="store_true", help="show progress bars")

    parser = argparse.ArgumentParser(prog="bdbnn", description="Bi-modal distribution-aware binarized networks")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub.add_parser("train-teacher", parents=[common], help="train the kurtosis-regularized FP teacher")

    p = sub.add_parser("train-bnn", parents=[common], help="train one BNN stage")
    p.add_argument("--stage", help="stage name (default: first stage of the config)")
    p.add_argument("--init", help="checkpoint to start from")
    p.add_argument("--teacher", help="teacher checkpoint for distilling stages")

    p = sub.add_parser("distill", parents=[common], help="run the distilling stage against a teacher")
    p.add_argument("--teacher", required=True, help="teacher checkpoint")
    p.add_argument("--init", help="checkpoint to start from")
    p.add_argument("--stage", help="stage name (default: last distilling stage)")

    p = sub.add_parser("run-bdbnn", parents=[common], help="teacher plus every BNN stage")
    p.add_argument("--teacher", help="reuse a trained teacher checkpoint")

    p = sub.add_parser("eval", parents=[common], help="accuracy and per-layer diagnostics of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--mode", choices=["fp", "binary-act-only", "full-binary"])
    p.add_argument("--batch-size", type=int, default=256)

    p = sub.add_parser("export", parents=[common], help="write a bit-packed inference model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output", help="export path (default: <out>/<name>.bdbn)")
    p.add_argument("--word-bits", type=int, default=64, choices=[8, 16, 32, 64])
    p.add_argument("--layout", default="hwc", choices=["hwc", "chw"])
    p.add_argument("--float-dtype", default="float64", choices=["float32", "float64"])

    p = sub.add_parser("bench", parents=[common], help="XNOR-popcount vs float convolution timings")
    p.add_argument("--suite", default="default", choices=["default", "smoke"])
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--word-bits", type=int, default=64, choices=[8, 16, 32, 64])

    p = sub.add_parser("analyze", parents=[common], help="histograms, kurtosis, cosine and sign flips per layer")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--baseline", help="checkpoint to count sign flips against")
    p.add_argument("--bins", type=int, default=64)

    p = sub.add_parser("ablate", parents=[common], help="ablation suite over several seeds")
    p.add_argument("--suite", default="components", choices=["components", "teacher-student"])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])

    p = sub.add_parser("dump-features", parents=[common], help="FP and binary feature maps of one conv layer")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--count", type=int, default=8, help="number of test images")
    p.add_argument("--random", action="store_true", help="use seeded random inputs instead of the test split")
    p.add_argument("--output", help="dump path (default: <out>/<layer>.bdfm)")

    p = sub.add_parser("serve", parents=[common], help="run the HTTP inference API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


class Context:
    """Resolved options shared by the command handlers."""

    def __init__(self, args: argparse.Namespace):
        from config import settings

        self.args = args
        self.settings = settings
        self.out = Path(args.out) if args.out else Path(settings.artifact_dir)
        self.quiet = not args.progress
        self._cfg = None

    @property
    def cfg(self):
        if self._cfg is None:
            from config import load_config

            overrides = list(self.args.overrides)
            if self.args.seed is not None:
                overrides.append(f"seed={self.args.seed}")
            recipe = self.args.recipe or (None if self.args.config else "desk")
            self._cfg = load_config(self.args.config, overrides, recipe)
        return self._cfg

    def dataset(self, split: str):
        from data_loader import load_dataset

        cfg = self.cfg
        data_dir = self.args.data_dir or cfg.data.data_dir
        subset = cfg.data.subset if split == "train" else cfg.data.test_subset
        return load_dataset(cfg.data.dataset, split, data_dir, subset, cfg.precision)

    def manifest(self, command: str, stages=(), artifacts=None, summary=None, config: bool = True) -> Path:
        from config import dump_config
        from models.analysis_output import RunManifest
        from training.checkpoint import write_atomic

        manifest = RunManifest(
            command=command,
            config=dump_config(self.cfg) if config else {},
            seed=self.cfg.seed if config else (self.args.seed or 0),
            stages=list(stages),
            artifacts={k: str(v) for k, v in (artifacts or {}).items()},
            summary=summary or {},
        )
        path = self.out / f"{command}.manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_atomic(path, manifest.model_dump_json(indent=2).encode("utf-8"))
        logger.info("Manifest written to %s", path)
        return path


def _stage_record(ckpt, path: Path, seconds: float):
    from models.analysis_output import StageRecord
    from training.pipeline import checkpoint_metrics

    rows = checkpoint_metrics(ckpt)
    return StageRecord(
        name=ckpt.name, mode=ckpt.mode.value, epochs=len(rows), checkpoint=str(path),
        wall_clock_s=round(seconds, 3), final=rows[-1] if rows else None,
    )


# ==================== COMMANDS ====================

def cmd_train_teacher(ctx: Context) -> int:
    from training import train_teacher

    started = time.perf_counter()
    ckpt = train_teacher(ctx.cfg, ctx.dataset("train"), ctx.dataset("test"), quiet=ctx.quiet, artifact_dir=ctx.out)
    path = ckpt.save(ctx.out / f"{ckpt.name}.bdck")
    ctx.manifest("train-teacher", [_stage_record(ckpt, path, time.perf_counter() - started)], {"teacher": path})
    return EXIT_OK


def _pick_stage(cfg, name: Optional[str], distilling: bool):
    from utils.errors import ConfigError

    if name is not None:
        for stage in cfg.stages:
            if stage.name == name:
                return stage
        raise ConfigError(f"no stage named '{name}' in {[s.name for s in cfg.stages]}", key="stages")
    candidates = [s for s in cfg.stages if s.is_distillation] if distilling else list(cfg.stages)
    if not candidates:
        raise ConfigError("the config has no distilling stage", key="stages")
    return candidates[-1] if distilling else candidates[0]


def _train_stage(ctx: Context, command: str, stage, init_path, teacher_path) -> int:
    from training import Checkpoint, train_bnn_stage

    init = Checkpoint.load(init_path) if init_path else None
    teacher = Checkpoint.load(teacher_path) if teacher_path else None
    started = time.perf_counter()
    ckpt = train_bnn_stage(
        ctx.cfg, stage, init, ctx.dataset("train"), ctx.dataset("test"),
        teacher=teacher, quiet=ctx.quiet, artifact_dir=ctx.out,
    )
    path = ckpt.save(ctx.out / f"{ckpt.name}.bdck")
    ctx.manifest(command, [_stage_record(ckpt, path, time.perf_counter() - started)], {ckpt.name: path})
    return EXIT_OK


def cmd_train_bnn(ctx: Context) -> int:
    stage = _pick_stage(ctx.cfg, ctx.args.stage, distilling=False)
    return _train_stage(ctx, "train-bnn", stage, ctx.args.init, ctx.args.teacher)


def cmd_distill(ctx: Context) -> int:
    stage = _pick_stage(ctx.cfg, ctx.args.stage, distilling=True)
    return _train_stage(ctx, "distill", stage, ctx.args.init, ctx.args.teacher)


def cmd_run_bdbnn(ctx: Context) -> int:
    from training import Checkpoint, run_bdbnn

    teacher = Checkpoint.load(ctx.args.teacher) if ctx.args.teacher else None
    result = run_bdbnn(ctx.cfg, ctx.dataset("train"), ctx.dataset("test"), ctx.out, teacher=teacher, quiet=ctx.quiet)
    artifacts = dict(result.checkpoints)
    artifacts["metrics"] = result.metrics_path
    summary = {
        "final_top1": result.final_top1,
        "sign_flip_pct": result.sign_flip_pct,
        "sign_flip_by_layer": result.sign_flip_by_layer,
    }
    ctx.manifest("run-bdbnn", result.stages, artifacts, summary)
    return EXIT_OK


def cmd_eval(ctx: Context) -> int:
    from training import Checkpoint, evaluate

    ckpt = Checkpoint.load(ctx.args.checkpoint)
    report = evaluate(ckpt, ctx.dataset(ctx.args.split), ctx.args.mode, ctx.args.batch_size)
    path = ctx.out / f"eval_{ckpt.name}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2))
    print(f"{ckpt.name} [{report.mode}] {report.split}: top1={report.top1:.2f}% top5={report.top5:.2f}% "
          f"mean kurtosis={report.mean_kurtosis:.3f} mean cosine={report.mean_cosine:.3f}")
    ctx.manifest("eval", artifacts={"report": path}, summary={"top1": report.top1, "top5": report.top5}, config=False)
    return EXIT_OK


def cmd_export(ctx: Context) -> int:
    from engines import export_packed
    from training import Checkpoint
    from utils.formatters import format_bytes

    ckpt = Checkpoint.load(ctx.args.checkpoint)
    packed = export_packed(ckpt, ctx.args.word_bits, ctx.args.layout, ctx.args.float_dtype)
    path = packed.save(ctx.args.output or ctx.out / f"{ckpt.name}.bdbn")
    memory = packed.memory_report()
    packed_bytes = sum(row.bytes_packed for row in memory)
    float_bytes = sum(row.bytes_float32 for row in memory)
    ratio = float_bytes / packed_bytes if packed_bytes else 0.0
    print(f"exported {path}: binarized weights {format_bytes(packed_bytes)} vs {format_bytes(float_bytes)} float32 ({ratio:.1f}x)")
    ctx.manifest("export", artifacts={"export": path}, summary={"memory_ratio": ratio}, config=False)
    return EXIT_OK


def cmd_bench(ctx: Context) -> int:
    from engines import DEFAULT_SUITE, SMOKE_SUITE, bench

    suite = SMOKE_SUITE if ctx.args.suite == "smoke" else DEFAULT_SUITE
    path = ctx.out / "bench.csv"
    frame = bench(suite, ctx.args.iterations, ctx.args.warmup, ctx.args.word_bits, seed=ctx.args.seed or 0, path=path)
    print(frame.to_string(index=False))
    ctx.manifest("bench", artifacts={"bench": path}, summary={"rows": len(frame)}, config=False)
    return EXIT_OK


def cmd_analyze(ctx: Context) -> int:
    from analyzers import analyze
    from utils.formatters import format_pct

    report = analyze(ctx.args.checkpoint, ctx.args.baseline, ctx.out / "analysis", ctx.args.bins)
    if report.overall_sign_flip_pct is not None:
        print(f"{report.checkpoint} vs {report.baseline}: {format_pct(report.overall_sign_flip_pct)} of weights changed sign")
    for row in report.layers:
        print(f"  {row.layer_id:<24} kurtosis={row.kurtosis:7.3f} cosine={row.cosine:.3f}")
    ctx.manifest("analyze", artifacts=report.files, summary={"overall_sign_flip_pct": report.overall_sign_flip_pct}, config=False)
    return EXIT_OK


def cmd_ablate(ctx: Context) -> int:
    from training import run_ablation, summarize

    frame = run_ablation(ctx.cfg, ctx.args.suite, ctx.args.seeds, ctx.dataset("train"), ctx.dataset("test"),
                         ctx.out, quiet=ctx.quiet)
    summary = summarize(frame)
    print(summary.to_string(index=False))
    artifacts = {
        "results": ctx.out / f"ablation_{ctx.args.suite}.csv",
        "summary": ctx.out / f"ablation_{ctx.args.suite}_summary.csv",
    }
    ctx.manifest("ablate", artifacts=artifacts, summary={"top1_mean": {str(k): float(v) for k, v in zip(summary["variant"], summary["top1_mean"])}})
    return EXIT_OK


def cmd_dump_features(ctx: Context) -> int:
    import numpy as np

    from analyzers import dump_features
    from training import Checkpoint

    ckpt = Checkpoint.load(ctx.args.checkpoint)
    shape = tuple(ckpt.model["input_shape"])
    if ctx.args.random:
        images = np.random.default_rng(ctx.args.seed or 0).standard_normal((ctx.args.count,) + shape)
    else:
        images = ctx.dataset("test").images[:ctx.args.count]
    path = Path(ctx.args.output) if ctx.args.output else ctx.out / f"{ctx.args.layer.replace('/', '_')}.bdfm"
    dump = dump_features(ckpt, images, ctx.args.layer, path)
    print(f"dumped {dump.layer_id} feature maps {list(dump.shape)} to {path}")
    ctx.manifest("dump-features", artifacts={"dump": path}, config=False)
    return EXIT_OK


def cmd_serve(ctx: Context) -> int:
    import uvicorn

    uvicorn.run("api_server:app", host=ctx.args.host, port=ctx.args.port, log_level=logging.getLevelName(logging.getLogger().level).lower())
    return EXIT_OK


HANDLERS = {
    "train-teacher": cmd_train_teacher,
    "train-bnn": cmd_train_bnn,
    "distill": cmd_distill,
    "run-bdbnn": cmd_run_bdbnn,
    "eval": cmd_eval,
    "export": cmd_export,
    "bench": cmd_bench,
    "analyze": cmd_analyze,
    "ablate": cmd_ablate,
    "dump-features": cmd_dump_features,
    "serve": cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    if args.threads is not None:
        _set_threads(args.threads)

    from config import settings
    from utils.errors import BdbnnError
    from utils.log import configure_logging

    configure_logging(args.log_level or settings.log_level)
    if args.threads is not None:
        settings.threads = args.threads

    try:
        return HANDLERS[args.command](Context(args))
    except BdbnnError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        logger.error("I/O error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception:
        logger.exception("%s failed", args.command)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
