"""Command-line interface: ``asgd train | eval | synthetic | verify``.

Options may come from a JSON config file (``--config``) and are overridden
by explicit flags.  Output files default to ``$ASGD_OUTPUT_DIR`` (or the
current directory).  Errors are reported on stderr as one JSON object and
give a nonzero exit status.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .core import AsgdError, ContractError, MetricsRecord
from .evaluation import TestSet
from .ingest import LibsvmSource, count_samples
from .losses import LossKind
from .schedule import Schedule, recommended_schedule
from .trainers import TrainConfig, Trainer, geometric_checkpoints

OUTPUT_ENV = "ASGD_OUTPUT_DIR"

# lambda, M and (where known) t0 and dim of published benchmark settings;
# the data files themselves are supplied by the user.
PRESETS: Dict[str, dict] = {
    "covtype": {"loss": "l2svm", "lambda": 1e-6, "M": 6.8, "t0": 100, "dim": 54},
    "delta": {"loss": "l2svm", "lambda": 1e-2, "M": 3.8e3, "t0": 100, "dim": 500},
    "rcv1": {"loss": "l2svm", "lambda": 1e-5, "M": 1.0, "t0": 781, "dim": 47153},
    "mnist9": {"loss": "l2svm", "lambda": 1e-3, "M": 2.1e4, "t0": 128, "dim": 2304},
    "alpha": {"lambda": 1e-5, "M": 1.0, "dim": 500},
    "beta": {"lambda": 1e-4, "M": 1.0, "dim": 500},
    "gamma": {"lambda": 1e-3, "M": 2.5e3, "dim": 500},
    "epsilon": {"lambda": 1e-5, "M": 1.0, "dim": 2000},
    "zeta": {"lambda": 1e-5, "M": 1.0, "dim": 2000},
    "fd": {"lambda": 1e-5, "M": 1.0, "dim": 900},
    "ocr": {"lambda": 1e-5, "M": 1.0, "dim": 1156},
    "dna": {"lambda": 1e-3, "M": 200.0, "dim": 800},
}

TRAIN_DEFAULTS = {
    "train": None, "test": None, "algorithm": "asgd", "loss": "l2svm", "lambda": 1e-5,
    "schedule": "auto", "M": None, "t0": None, "passes": 1, "checkpoints": 20, "dim": None,
    "bias": False, "label_map": None, "m_prefix": 1000, "seed": 0, "timing": True,
    "metrics": None, "snapshot": None, "output_dir": None, "preset": None,
}

CSV_COLUMNS = ("step", "passes", "model", "error_rate", "cost", "excess_risk", "seconds")


# -- config handling -----------------------------------------------------------

def parse_label_map(value) -> Optional[dict]:
    """``"2:1,*:-1"`` or a dict -> ``{raw: target}``."""
    if value is None or isinstance(value, dict):
        return value
    out = {}
    for item in str(value).split(","):
        raw, sep, target = item.partition(":")
        if not sep:
            raise ContractError(f"bad label map entry {item!r}; expected raw:target")
        out[raw.strip()] = float(target)
    return out


def resolve_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < preset < config file < explicit flags."""
    file_cfg = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ContractError("config file must hold a JSON object")
    flags = {k: v for k, v in vars(args).items() if k in defaults and v is not None}
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ContractError(f"unknown config keys: {sorted(unknown)}")
    preset_name = flags.get("preset", file_cfg.get("preset"))
    preset = {}
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ContractError(f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}")
        preset = PRESETS[preset_name]
    cfg = {**defaults, **preset, **file_cfg, **flags}
    cfg["label_map"] = parse_label_map(cfg.get("label_map"))
    return cfg


def resolve_schedule(spec, algorithm: str, loss: LossKind, lam: float, M: Optional[float]) -> Schedule:
    if isinstance(spec, dict):
        return Schedule.from_dict(spec)
    if str(spec).strip().lower() != "auto":
        return Schedule.parse(str(spec))
    if not lam > 0:
        raise ContractError("schedule 'auto' needs lambda > 0 (used as the curvature lower bound)")
    if M is None or not M > 0:
        raise ContractError("schedule 'auto' needs a positive M")
    if algorithm == "sgd":
        return Schedule(1.0 / M, lam, 1.0)
    return recommended_schedule(loss, M, lam)


def output_path(cfg: dict, key: str, default_name: str) -> Path:
    if cfg.get(key):
        return Path(cfg[key])
    base = cfg.get("output_dir") or os.environ.get(OUTPUT_ENV) or "."
    return Path(base) / default_name


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics(path: Path, header: dict, records: Sequence[MetricsRecord]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# run: " + json.dumps(header, sort_keys=True), ",".join(CSV_COLUMNS)]
    for r in records:
        lines.append(",".join(_fmt(v) for v in (
            r.step, float(r.passes), r.model, r.test_error_rate, r.test_cost, r.excess_risk,
            float(r.elapsed_seconds))))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_metrics(path) -> tuple:
    """Returns ``(header dict, list of row dicts)`` of a metrics file."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(text[0][len("# run: "):])
    cols = text[1].split(",")
    rows = [dict(zip(cols, line.split(","))) for line in text[2:] if line]
    return header, rows


def _source(path, cfg: dict, loss: LossKind, dim=None) -> LibsvmSource:
    return LibsvmSource(path, dim=dim, bias=bool(cfg["bias"]), label_map=cfg["label_map"],
                        m_prefix=int(cfg["m_prefix"]), regression=loss is LossKind.SQUARED)


def load_test_set(path, cfg: dict, loss: LossKind, base_dim: int, dim: int, lam: float) -> TestSet:
    return TestSet(_source(path, cfg, loss, dim=base_dim).load(), dim, loss, lam)


# -- commands ----------------------------------------------------------------------

def cmd_train(cfg: dict) -> int:
    if not cfg.get("train"):
        raise ContractError("train needs a training file (--train)")
    loss = LossKind.parse(cfg["loss"])
    lam = float(cfg["lambda"])
    src = _source(cfg["train"], cfg, loss, dim=cfg["dim"])
    stream = src.open()
    meta = src.meta
    M = float(cfg["M"]) if cfg.get("M") is not None else meta.M_hat
    schedule = resolve_schedule(cfg["schedule"], cfg["algorithm"], loss, lam, M)
    t0 = None if cfg.get("t0") is None else int(cfg["t0"])
    config = TrainConfig(schedule, loss, lam, cfg["algorithm"], t0)
    base_dim = meta.dim - (1 if cfg["bias"] else 0)
    evaluate = None
    if cfg.get("test"):
        evaluate = load_test_set(cfg["test"], cfg, loss, base_dim, meta.dim, lam)
    passes = int(cfg["passes"])
    if passes < 1:
        raise ContractError("passes must be >= 1")
    n = count_samples(cfg["train"]) if int(cfg["checkpoints"]) > 0 else 0
    per_pass = geometric_checkpoints(n, int(cfg["checkpoints"])) if n else []
    trainer = Trainer(meta.dim, config, record_time=bool(cfg["timing"]))
    for p in range(passes):
        if p > 0:
            stream = src.open()
        trainer.run_pass(stream, [p * n + c for c in per_pass], evaluate)
    result = trainer.result()

    header = {
        "command": "train", "version": __version__, "algorithm": cfg["algorithm"], "loss": loss.value,
        "lambda": lam, "schedule": schedule.to_dict(), "M": M, "M_hat": meta.M_hat,
        "t0": t0, "t0_used": result.t0, "seed": cfg["seed"], "passes": passes,
        "train": str(cfg["train"]), "test": cfg.get("test") and str(cfg["test"]),
        "dim": meta.dim, "bias": bool(cfg["bias"]), "label_map": cfg["label_map"],
        "m_prefix": int(cfg["m_prefix"]), "n_samples": meta.n_samples, "preset": cfg.get("preset"),
    }
    metrics = output_path(cfg, "metrics", "metrics.csv")
    write_metrics(metrics, header, result.records)
    snapshot = output_path(cfg, "snapshot", "model.npz")
    snap_meta = {"loss": loss.value, "lambda": lam, "bias": bool(cfg["bias"]),
                 "label_map": cfg["label_map"], "dim": meta.dim, "base_dim": base_dim,
                 "m_prefix": int(cfg["m_prefix"]), "algorithm": cfg["algorithm"]}
    snapshot.parent.mkdir(parents=True, exist_ok=True)
    with open(snapshot, "wb") as fh:
        np.savez(fh, theta=result.theta.weights, theta_bar=result.theta_bar.weights,
                 meta=np.array(json.dumps(snap_meta, sort_keys=True)))
    print(f"schedule {schedule}  M={M:.6g}  t0={result.t0}  steps={result.steps}")
    for r in result.records[-2:]:
        print(f"{r.model:9s} step={r.step} error_rate={_fmt(r.test_error_rate) or '-'} cost={_fmt(r.test_cost)}")
    print(f"metrics -> {metrics}\nsnapshot -> {snapshot}")
    return 0


def load_snapshot(path):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        return z["theta"].copy(), z["theta_bar"].copy(), meta


def cmd_eval(snapshot, test) -> int:
    theta, theta_bar, meta = load_snapshot(snapshot)
    loss = LossKind.parse(meta["loss"])
    cfg = {"bias": meta["bias"], "label_map": meta["label_map"], "m_prefix": meta["m_prefix"]}
    ts = load_test_set(test, cfg, loss, meta["base_dim"], meta["dim"], meta["lambda"])
    print("model,error_rate,cost")
    models = [("theta", theta)] + ([("theta_bar", theta_bar)] if meta["algorithm"] == "asgd" else [])
    for name, w in models:
        err, cost, _ = ts(w)
        print(f"{name},{_fmt(err)},{_fmt(cost)}")
    return 0


def cmd_synthetic(which: str, seeds: int = 10, steps: Optional[int] = None, checkpoints: int = 20,
                  seed: int = 0, output: Optional[Path] = None) -> int:
    from .theory import make_quadratic_toy, make_regression_toy, run_arms, toy1_arms, toy2_arms

    if which == "toy1":
        problem, default_steps = make_quadratic_toy(), 10_000
        arms = toy1_arms(problem)
    elif which == "toy2":
        problem, default_steps = make_regression_toy(), 100_000
        arms = toy2_arms(problem)
    else:
        raise ContractError(f"unknown synthetic experiment {which!r}; use toy1 or toy2")
    steps = default_steps if steps is None else int(steps)
    cps = geometric_checkpoints(steps, checkpoints) or [steps]
    res = run_arms(problem, arms, cps, seeds=seeds, base_seed=seed)
    header = {"command": "synthetic", "which": which, "version": __version__, "seeds": seeds,
              "seed": seed, "steps": steps,
              "arms": {a.name: {"kind": a.kind, "schedule": a.schedule and a.schedule.to_dict()} for a in arms}}
    lines = ["# run: " + json.dumps(header, sort_keys=True), "step,arm,excess_mean,excess_stderr"]
    for a in arms:
        m, s = res.mean(a.name), res.stderr(a.name)
        lines += [f"{t},{a.name},{float(m[i])!r},{float(s[i])!r}" for i, t in enumerate(cps)]
    out = output or Path(os.environ.get(OUTPUT_ENV) or ".") / f"{which}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    for a in arms:
        sched = f"  schedule {a.schedule}" if a.schedule else ""
        print(f"{a.name:9s} excess risk at t={steps}: {res.final_mean(a.name):.4e}{sched}")
    print(f"trajectories -> {out}")
    return 0


def verify_checks(quick: bool = False, seed: int = 0, schedule: Optional[Schedule] = None):
    """``[(name, callable -> (passed, detail, report dict))]`` for the verification suite."""
    from .theory import (divergence_check, make_regression_toy, psd_sandwich_check,
                         random_sandwich_case, theorem1_case, verify_theorem1, xi2_bound_check)

    reps = 50 if quick else 200
    cps = [100, 1000] if quick else [100, 1000, 10_000]

    def theorem1():
        rep = verify_theorem1(theorem1_case(seed, schedule=schedule), reps, cps)
        worst = max(r.estimate - 2 * r.stderr - r.bound for r in rep.rows)
        return rep.passed, f"max(est-2se-bound)={worst:.3g}", rep.to_dict()

    def theorem1_zero_noise():
        cfg = theorem1_case(seed, noise_scale=0.0, schedule=schedule)
        cfg.b = np.zeros(cfg.dim)  # optimum and start both exactly at the origin
        rep = verify_theorem1(cfg, 4, cps)
        est = max(r.estimate for r in rep.rows)
        return rep.passed and est == 0.0, f"estimate={est:.3g}", rep.to_dict()

    def sandwich():
        rng = np.random.default_rng(seed)
        cases = [random_sandwich_case(rng) for _ in range(20)]
        ok = [psd_sandwich_check(*c) for c in cases]
        return all(ok), f"{sum(ok)}/{len(ok)} cases", {"check": "sandwich", "passed": ok}

    def divergence():
        n_steps = 20_000 if quick else 100_000
        hi = [divergence_check(1.0, 2.4, n_steps, seed=seed + s) for s in range(5)]
        lo = [divergence_check(1.0, 0.5, n_steps, seed=seed + s) for s in range(5)]
        ok = all(r.diverged for r in hi) and all(r.max_norm < 1e3 for r in lo)
        detail = f"2.4/M diverged {sum(r.diverged for r in hi)}/5, 0.5/M bounded {sum(r.max_norm < 1e3 for r in lo)}/5"
        return ok, detail, {"check": "divergence", "passed": ok,
                            "high": [vars(r) for r in hi], "low": [vars(r) for r in lo]}

    def xi2():
        problem = make_regression_toy()
        rng = np.random.default_rng(seed)
        thetas = [problem.theta_star + rng.standard_normal(problem.dim) for _ in range(20)]
        rep = xi2_bound_check(problem, thetas, draws=20_000 if quick else 100_000, seed=seed,
                              cov_draws=100_000 if quick else 400_000)
        return rep.passed, f"max ratio={max(r.ratio for r in rep.rows):.3g}", rep.to_dict()

    return [("theorem1", theorem1), ("theorem1_zero_noise", theorem1_zero_noise),
            ("sandwich", sandwich), ("divergence", divergence), ("xi2_bound", xi2)]


def cmd_verify(quick: bool = False, seed: int = 0, schedule: Optional[Schedule] = None,
               json_out: Optional[Path] = None) -> int:
    results = []
    for name, fn in verify_checks(quick, seed, schedule):
        try:
            ok, detail, report = fn()
        except AsgdError as exc:
            ok, detail, report = False, f"{type(exc).__name__}: {exc}", {"check": name, "error": str(exc)}
        results.append((name, ok, detail, report))
    width = max(len(r[0]) for r in results)
    for name, ok, detail, _ in results:
        print(f"{name:{width}s}  {'PASS' if ok else 'FAIL'}  {detail}")
    if json_out is not None:
        json_out.parent.mkdir(parents=True, exist_ok=True)
        json_out.write_text(json.dumps([r[3] for r in results], indent=2, default=float), encoding="utf-8")
    failed = [r[0] for r in results if not r[1]]
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asgd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"asgd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="one or more passes over a libsvm file")
    t.add_argument("--config", help="JSON config file; flags override its keys")
    t.add_argument("--preset", choices=sorted(PRESETS))
    t.add_argument("--train", help="training file (libsvm, optionally gzipped)")
    t.add_argument("--test", help="held-out file evaluated at each checkpoint")
    t.add_argument("--algorithm", choices=["asgd", "sgd"])
    t.add_argument("--loss", choices=[k.value for k in LossKind])
    t.add_argument("--lambda", dest="lambda", type=float, help="L2 coefficient")
    t.add_argument("--schedule", help="'auto' or 'gamma0,a,c'")
    t.add_argument("--M", dest="M", type=float, help="max squared feature norm (default: estimated)")
    t.add_argument("--t0", type=int, help="fixed averaging start (default: detected)")
    t.add_argument("--passes", type=int)
    t.add_argument("--checkpoints", type=int, help="geometric checkpoints per pass (0: final only)")
    t.add_argument("--dim", type=int)
    t.add_argument("--bias", action="store_const", const=True)
    t.add_argument("--label-map", dest="label_map", help="e.g. '2:1,*:-1'")
    t.add_argument("--m-prefix", dest="m_prefix", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--no-timing", dest="timing", action="store_const", const=False,
                   help="write 0 for elapsed seconds so outputs are byte-reproducible")
    t.add_argument("--metrics")
    t.add_argument("--snapshot")
    t.add_argument("--output-dir", dest="output_dir")

    e = sub.add_parser("eval", help="evaluate a saved model on a libsvm file")
    e.add_argument("--snapshot", required=True)
    e.add_argument("--test", required=True)

    s = sub.add_parser("synthetic", help="synthetic comparisons of averaged SGD, SGD and batch")
    s.add_argument("which", choices=["toy1", "toy2"])
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--steps", type=int)
    s.add_argument("--checkpoints", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output")

    v = sub.add_parser("verify", help="numerical checks of the convergence theory")
    v.add_argument("--quick", action="store_true", help="smaller Monte-Carlo sizes")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--schedule", help="'gamma0,a,c' used in the bound check instead of the default")
    v.add_argument("--json", help="write the full reports here")
    return p


def _error_payload(exc: BaseException) -> dict:
    out = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("line", "column", "step"):
        if getattr(exc, attr, None) is not None:
            out[attr] = getattr(exc, attr)
    return out


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(resolve_config(args, TRAIN_DEFAULTS))
        if args.command == "eval":
            return cmd_eval(args.snapshot, args.test)
        if args.command == "synthetic":
            return cmd_synthetic(args.which, args.seeds, args.steps, args.checkpoints, args.seed,
                                 Path(args.output) if args.output else None)
        schedule = Schedule.parse(args.schedule) if args.schedule else None
        return cmd_verify(args.quick, args.seed, schedule, Path(args.json) if args.json else None)
    except (AsgdError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps(_error_payload(exc)), file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
