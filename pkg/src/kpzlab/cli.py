"""Command-line runner: ``kpzlab run`` for one test or sampling experiment, ``kpzlab suite`` for a manifest.

Exit codes: 0 all tests pass, 1 some test failed, 2 bad arguments or
config, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import shlex
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import brownian as bm
from . import polymer as pm
from . import rng as rngmod
from .catalog import CATALOG, run_identity_test
from .stats import TestReport, gue_top_scaled

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def parse_number(text: str) -> float | int:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def parse_pairs(tokens, numeric_only: bool = True) -> dict:
    out = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"expected key=value, got {tok!r}")
        out[key] = parse_number(val) if numeric_only else val
    return out


def read_config_file(path: str | Path) -> dict:
    """Flat ``key=value`` file; blank lines and ``#`` comments ignored."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    tokens = [ln.split("#", 1)[0].strip() for ln in lines]
    return parse_pairs([t for t in tokens if t])


# --- sampling experiments ------------------------------------------------------


def _sample_oy(cfg) -> Callable[[int], float]:
    params = pm.OYParams.from_theta(float(cfg.get("theta", 1.0)), float(cfg.get("n", 1.0)))
    x, y, step = float(cfg.get("x", 0.0)), float(cfg.get("y", 0.0)), float(cfg.get("step", 0.02))
    return lambda s: pm.oy_scaled_kernel_sample(params, x, y, s, step)


def _sample_kpz(cfg):
    she = pm.SHEParams(eps=float(cfg.get("eps", 0.1)))
    n, x, y = float(cfg.get("n", 1.0)), float(cfg.get("x", 0.0)), float(cfg.get("y", 0.0))
    return lambda s: pm.kpz_scaled_kernel_sample(n, x, y, she, s)


def _sample_blp(cfg):
    n, tau = int(cfg.get("n", 2)), float(cfg.get("tau", 1.0))
    nu = np.zeros(n)
    return lambda s: float(bm.blp_batch(rngmod.generator(s), 1, np.zeros(n), nu, 0.0, [tau])[0, 0])


def _sample_ep(cfg):
    n, tau = int(cfg.get("n", 2)), float(cfg.get("tau", 1.0))
    return lambda s: bm.pointed_ep_sample_gue(n, 0.0, 0.0, np.zeros(n), tau, s)


def _sample_tw(cfg):
    N = int(cfg.get("N", 400))
    return lambda s: float(gue_top_scaled(rngmod.generator(s), 1, N)[0])


SAMPLERS = {
    "oy-kernel": _sample_oy,
    "kpz-kernel": _sample_kpz,
    "blp": _sample_blp,
    "ep-gue": _sample_ep,
    "tw": _sample_tw,
}


def write_samples(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "seed", "value"])
        for i, s, v in rows:
            w.writerow([i, s, repr(float(v))])


def run_sample(model: str, cfg: dict, replicas: int, seed: int, output: str | None) -> int:
    if model not in SAMPLERS:
        raise ConfigError(f"unknown sample model {model!r}; choose from {sorted(SAMPLERS)}")
    if replicas < 1:
        raise ConfigError("replicas must be >= 1")
    draw = SAMPLERS[model](cfg)
    rows = []
    for i in range(replicas):
        s = rngmod.derive_seed(seed, i)
        rows.append((i, s, draw(s)))
    if output:
        write_samples(output, rows)
    else:
        for i, s, v in rows:
            sys.stdout.write(f"{i},{s},{float(v)!r}\n")
    return EXIT_PASS


# --- reports -----------------------------------------------------------------


def write_reports(path, reports: list[TestReport], omit_runtime: bool) -> None:
    data = [r.to_dict(omit_runtime) for r in reports]
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def summary_table(reports: list[TestReport]) -> str:
    head = f"{'test_id':<12} {'statistic':>12} {'threshold':>10} {'pass':>5} {'seconds':>8}"
    rows = [head]
    for r in reports:
        rows.append(f"{r.test_id:<12} {r.statistic:>12.6g} {r.threshold:>10.3g} {str(r.passed):>5} {r.runtime:>8.1f}")
    return "\n".join(rows)


def _check_test(test_id: str) -> None:
    if test_id not in CATALOG:
        raise ConfigError(f"unknown test id {test_id!r}; choose from {sorted(CATALOG)}")


def read_manifest(path: str | Path) -> list[dict]:
    """One experiment per line: whitespace-separated ``key=value`` tokens with ``test=ID``.

    ``config=FILE`` pulls in a key=value file (relative to the manifest);
    keys on the line override it. ``seed=`` sets the seed (default 0).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read manifest {path}: {e}") from None
    entries = []
    for ln in text.splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        raw = parse_pairs(shlex.split(ln), numeric_only=False)
        if "test" not in raw:
            raise ConfigError(f"manifest line without test=: {ln!r}")
        test_id = raw.pop("test")
        _check_test(test_id)
        cfg = read_config_file(path.parent / raw.pop("config")) if "config" in raw else {}
        seed = int(raw.pop("seed", cfg.pop("seed", 0)))
        cfg.update({k: parse_number(v) for k, v in raw.items()})
        entries.append({"test": test_id, "seed": seed, "config": cfg})
    return entries


# --- argument parsing ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kpzlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one catalog test or sampling experiment")
    what = run.add_mutually_exclusive_group(required=True)
    what.add_argument("--test", help="catalog test id, e.g. DW-EXACT")
    what.add_argument("--sample", help=f"sampling model: {', '.join(SAMPLERS)}")
    run.add_argument("--config", help="key=value config file")
    run.add_argument("--set", nargs="*", default=[], metavar="KEY=VALUE", help="extra config overrides")
    for key in ("n", "r", "p", "t", "theta", "x", "y", "tau", "eps", "step", "N"):
        run.add_argument(f"--{key}", type=parse_number, default=None)
    run.add_argument("--replicas", type=int, default=None)
    run.add_argument("--threshold", type=float, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--output", help="JSON report (tests) or CSV (samples)")
    run.add_argument("--omit-runtime", action="store_true", help="drop runtime from JSON for byte-stable output")

    suite = sub.add_parser("suite", help="run every test listed in a manifest")
    suite.add_argument("manifest")
    suite.add_argument("--workers", type=int, default=1)
    suite.add_argument("--output", help="JSON report array")
    suite.add_argument("--omit-runtime", action="store_true")
    return p


def _run_config(args) -> tuple[dict, int]:
    cfg = read_config_file(args.config) if args.config else {}
    cfg.update(parse_pairs(args.set))
    for key in ("n", "r", "p", "t", "theta", "x", "y", "tau", "eps", "step", "N", "replicas", "threshold"):
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    seed = args.seed if args.seed is not None else int(cfg.pop("seed", 0))
    cfg.pop("seed", None)
    if "replicas" in cfg and int(cfg["replicas"]) < 1:
        raise ConfigError("replicas must be >= 1")
    return cfg, seed


def _report_and_exit(reports, output, omit_runtime) -> int:
    for r in reports:
        print(r.line())
    if output:
        write_reports(output, reports, omit_runtime)
    return EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_PASS
    try:
        if args.command == "run":
            cfg, seed = _run_config(args)
            if args.sample:
                replicas = int(cfg.pop("replicas", 1000))
                return run_sample(args.sample, cfg, replicas, seed, args.output)
            _check_test(args.test)
            report = run_identity_test(args.test, cfg, seed, workers=args.workers)
            return _report_and_exit([report], args.output, args.omit_runtime)
        entries = read_manifest(args.manifest)
        reports = [run_identity_test(e["test"], e["config"], e["seed"], workers=args.workers) for e in entries]
        print(summary_table(reports))
        return _report_and_exit(reports, args.output, args.omit_runtime)
    except ConfigError as e:
        print(f"kpzlab: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001 - any failure inside a run maps to the runtime exit code
        print(f"kpzlab: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
