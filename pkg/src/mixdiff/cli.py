"""Command-line entry point: ``mixdiff <command> ...``.

Exit codes: 0 success, 1 domain error (one ``ERROR <module>: <message>``
line on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .backend import LinearSoftmaxModel, LocalBackend, RemoteBackend, fit_logistic
from .core import (
    AccessLevel,
    MixDiffConfig,
    OracleSet,
    atomic_write_text,
    load_dataset,
    save_dataset,
)
from .engine import attack_dataset, run_detection
from .errors import BackendError, MixDiffError, TheoryError
from .metrics import metric_report
from .server import ServerConfig, serve_forever
from .synthetic import BenchmarkSpec, SyntheticSpec, default_theory_spec, overconfidence_benchmark, sample_synthetic
from .theory import TheorySettings, run_theory_suite

log = logging.getLogger("mixdiff")


class CommandError(MixDiffError):
    module = "cli"


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_manifest(out_dir: Path, command: str, seed: int, config, inputs: dict, outputs: list,
                    timings: dict) -> None:
    manifest = {
        "command": command,
        "version": _version(),
        "seed": seed,
        "config": config,
        "inputs": {k: (str(v) if v is not None else None) for k, v in inputs.items()},
        "outputs": [str(p) for p in outputs],
        "timings": timings,
    }
    atomic_write_text(out_dir / "manifest.json", _dumps(manifest))


# ---------------------------------------------------------------------------
# shared option handling

_CONFIG_FIELDS = [f.name for f in dataclasses.fields(MixDiffConfig)]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value file with MixDiffConfig fields")
    group = p.add_argument_group("config overrides")
    for name in _CONFIG_FIELDS:
        group.add_argument("--" + name.replace("_", "-"), dest="cfg_" + name, metavar="VALUE")


def _load_config(args) -> MixDiffConfig:
    cfg = MixDiffConfig.from_file(args.config) if args.config else MixDiffConfig()
    overrides = {n: getattr(args, "cfg_" + n) for n in _CONFIG_FIELDS if getattr(args, "cfg_" + n) is not None}
    if overrides:
        merged = {k: str(v) for k, v in cfg.to_dict().items()}
        merged.update(overrides)
        cfg = MixDiffConfig.from_mapping(merged)
    return cfg


def _open_backend(spec: str):
    kind, _, target = spec.partition(":")
    if not target:
        # a bare path means a local model file
        kind, target = "local", spec
    if kind == "local":
        return LocalBackend(LinearSoftmaxModel.load(target))
    if kind == "remote":
        return RemoteBackend(target)
    raise CommandError(f"unknown backend {spec!r}; use local:<path> or remote:<url>")


def _oracle_set(path: Path, cfg: MixDiffConfig, num_classes: int) -> OracleSet:
    data = load_dataset(path)
    id_rows = ~data.ood
    labeled = bool(np.all(data.labels[id_rows] >= 0))
    if labeled:
        return OracleSet.from_dataset(data, per_class=cfg.oracle_size, num_classes=num_classes)
    return OracleSet.from_dataset(data, labeled=False)


def _metrics(results, is_ood) -> dict:
    y = np.asarray(is_ood, dtype=bool)
    out = {}
    variants = {
        "base": [r.base_score for r in results],
        "mixdiff": [r.mixdiff_score for r in results],
        "final": [r.final_score for r in results],
    }
    both = y.any() and not y.all()
    for name, scores in variants.items():
        if not both or any(s is None for s in scores):
            out[name] = None
        else:
            out[name] = metric_report(scores, y)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_detect(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    targets = load_dataset(args.data)
    backend = _open_backend(args.backend)
    head = LinearSoftmaxModel.load(args.head) if args.head else None
    K = head.num_classes if head is not None else backend.num_classes
    oracles = _oracle_set(args.oracles, cfg, K)
    aux_pool = aux_ids = None
    if args.aux:
        aux = load_dataset(args.aux)
        aux_pool, aux_ids = aux.features, aux.ids
    t_load = time.perf_counter()
    results = run_detection(backend, targets, oracles, cfg, seed=args.seed, aux_pool=aux_pool,
                            aux_pool_ids=aux_ids, head=head, jobs=args.jobs)
    t_run = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = "".join(json.dumps(r.to_json()) + "\n" for r in results)
    atomic_write_text(out / "results.jsonl", lines)
    atomic_write_text(out / "metrics.json", _dumps(_metrics(results, targets.ood)))
    _write_manifest(
        out, "detect", args.seed, cfg.to_dict(),
        {"data": args.data, "oracles": args.oracles, "aux": args.aux, "config": args.config,
         "backend": args.backend, "head": args.head},
        [out / "results.jsonl", out / "metrics.json"],
        {"load": t_load - t0, "detect": t_run - t_load, "total": time.perf_counter() - t0},
    )
    return 0


def cmd_verify_theory(args) -> int:
    t0 = time.perf_counter()
    spec = SyntheticSpec.load(args.spec) if args.spec else default_theory_spec(args.seed)
    settings = TheorySettings(resolution=args.resolution, lam=args.lam)
    report = run_theory_suite(spec, settings, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, rep in report.decay.items():
        path = out / f"taylor_decay_{name}.csv"
        atomic_write_text(path, rep.to_csv())
        written.append(path)
    for name, res in report.lattices.items():
        path = out / f"lattice_{name}.csv"
        atomic_write_text(path, res.to_csv())
        written.append(path)
    summary = {"checks": report.checks, "details": report.details, "passed": report.passed}
    atomic_write_text(out / "summary.json", _dumps(summary))
    written.append(out / "summary.json")
    _write_manifest(out, "verify-theory", args.seed, dataclasses.asdict(settings),
                    {"spec": args.spec}, written,
                    {**report.timings, "total": time.perf_counter() - t0})
    for name, ok in report.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    if not report.passed:
        failed = ", ".join(k for k, ok in report.checks.items() if not ok)
        raise TheoryError(f"verification failed: {failed}")
    return 0


def cmd_serve(args) -> int:
    cfg = ServerConfig(model_path=str(args.model), access_level=args.level, host=args.host,
                       port=args.port, max_batch=args.max_batch, latency=args.latency)

    def ready(server):
        print(f"serving {cfg.access_level.value} at {server.url}", flush=True)

    serve_forever(cfg, ready)
    return 0


def _parse_steps(text: str) -> list[int]:
    try:
        steps = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid step list {text!r}") from None
    if not steps or any(s < 0 for s in steps):
        raise argparse.ArgumentTypeError("steps must be non-negative integers")
    return steps


def cmd_attack(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    kind, _, target = args.model.partition(":")
    if kind == "remote":
        raise BackendError("gradients unavailable")
    model = LinearSoftmaxModel.load(target if kind == "local" and target else args.model)
    backend = LocalBackend(model)
    data = load_dataset(args.data)
    oracles = _oracle_set(args.oracles, cfg, model.num_classes)
    aux_pool = aux_ids = None
    if args.aux:
        aux = load_dataset(args.aux)
        aux_pool, aux_ids = aux.features, aux.ids
    step_size = args.step_size if args.step_size is not None else args.eps / 5.0
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["mode", "steps", "score_variant", "auroc"])
    for mode in args.mode:
        for steps in args.steps:
            attacked = attack_dataset(model, data, mode, args.eps, steps, step_size)
            results = run_detection(backend, attacked, oracles, cfg, seed=args.seed, aux_pool=aux_pool,
                                    aux_pool_ids=aux_ids, jobs=args.jobs)
            for variant, rep in _metrics(results, attacked.ood).items():
                auroc = "" if rep is None else repr(rep["auroc"])
                wr.writerow([mode, steps, variant, auroc])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out, buf.getvalue())
    _write_manifest(
        out.parent, "attack", args.seed,
        {**cfg.to_dict(), "eps": args.eps, "steps": args.steps, "step_size": step_size, "mode": args.mode},
        {"data": args.data, "model": args.model, "oracles": args.oracles, "aux": args.aux, "config": args.config},
        [out], {"total": time.perf_counter() - t0},
    )
    return 0


def cmd_synth(args) -> int:
    """Write synthetic datasets: a theory spec sample or the benchmark splits."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.spec:
        data = sample_synthetic(SyntheticSpec.load(args.spec))
        save_dataset(data, out / "data.csv")
        return 0
    spec = BenchmarkSpec(num_classes=args.num_classes, dim=args.dim, ood_scale=args.ood_scale)
    bench = overconfidence_benchmark(args.seed, spec)
    for name in ("train", "oracles", "aux", "tune", "test"):
        save_dataset(getattr(bench, name), out / f"{name}.csv")
    return 0


def cmd_fit(args) -> int:
    data = load_dataset(args.data)
    model = fit_logistic(data, epochs=args.epochs, lr=args.lr, seed=args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    model.save(args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixdiff", description="Mixup-based OOD detection toolkit")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    jobs_default = os.cpu_count() or 1

    p = sub.add_parser("detect", help="score a dataset with MixDiff")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--oracles", type=Path, required=True)
    p.add_argument("--backend", required=True, help="local:<model.json> or remote:<url>")
    p.add_argument("--aux", type=Path, help="pool for the random_id auxiliary strategy")
    p.add_argument("--head", type=Path, help="linear head for embedding access")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=jobs_default)
    _add_config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("verify-theory", help="check the Taylor expansion and auxiliary existence")
    p.add_argument("--spec", type=Path, help="synthetic spec JSON (default: built-in four-Gaussian spec)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=TheorySettings.resolution)
    p.add_argument("--lam", type=float, default=TheorySettings.lam)
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("serve", help="serve a model at one access level")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--level", required=True, choices=[lv.value for lv in AccessLevel])
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-batch", type=int, default=256)
    p.add_argument("--latency", type=float, default=0.0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("attack", help="PGD sweep followed by detection")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", required=True, help="model JSON path (remote backends are rejected)")
    p.add_argument("--oracles", type=Path, required=True)
    p.add_argument("--aux", type=Path)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--steps", type=_parse_steps, default=[0, 1, 5, 10])
    p.add_argument("--step-size", type=float)
    p.add_argument("--mode", type=lambda s: s.split(","), default=["both"])
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=jobs_default)
    _add_config_flags(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("synth", help="write synthetic datasets")
    p.add_argument("--spec", type=Path)
    p.add_argument("--num-classes", type=int, default=BenchmarkSpec.num_classes)
    p.add_argument("--dim", type=int, default=BenchmarkSpec.dim)
    p.add_argument("--ood-scale", type=float, default=BenchmarkSpec.ood_scale)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="train a linear softmax model")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "mode", None) is not None and args.command == "attack":
        bad = [m for m in args.mode if m not in ("in", "out", "both")]
        if bad:
            parser.error(f"unknown attack mode {bad[0]!r}")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MixDiffError as exc:
        sys.stdout.flush()
        print(f"ERROR {exc.module}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ERROR cli: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
