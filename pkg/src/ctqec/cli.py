"""Command-line scenario runner.

Usage::

    ctqec run <scenario> [--config FILE] [--set key=value ...] [--out FILE]
    ctqec sweep --param NAME --values a,b,c [--scenario NAME] [--config FILE]
                [--set key=value ...] [--out FILE]
    ctqec list

Config files hold one ``key = value`` pair per line; ``#`` starts a comment.
Recognised keys are ``scenario``, ``kappa``, ``lambda``, ``gamma``, ``dt``,
``t_max``, ``n_traj``, ``seed``, ``store_stride``, ``filter_time_constant``,
``stochastic_min_eigenvalue`` (eigenvalue floor of the SDE guard) and the
scenario options listed by ``ctqec list``. CSV goes to ``--out`` (or
stdout); the run summary goes to stderr as ``# key = value`` lines.

Exit status: 0 on success, 2 for usage errors and unknown scenarios or keys,
3 when a domain, stability or numeric-guard check fails.
"""

from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from . import numerics, scenarios
from .integrators import SimConfig
from .numerics import DomainError, NumericGuardError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

CONFIG_KEYS = {
    "kappa": float,
    "lambda": float,
    "gamma": float,
    "dt": float,
    "t_max": float,
    "n_traj": int,
    "seed": int,
    "store_stride": int,
    "filter_time_constant": float,
}

# tolerance overrides accepted as config keys
TOLERANCE_KEYS = {"stochastic_min_eigenvalue": float}

SWEEP_PARAMS = ("kappa", "lambda", "gamma", "dt", "n_traj")

DEFAULTS = {
    "markov-1q": {"kappa": "8", "lambda": "1", "t_max": "10"},
    "markov-3q": {"kappa": "10", "lambda": "1", "t_max": "2", "store_stride": "10"},
    "nonmarkov-1q": {"kappa": "1", "gamma": "1", "t_max": "20"},
    "nonmarkov-3q": {"kappa": "100", "gamma": "1", "t_max": "30000", "dt": "10"},
    "adl-sme": {"kappa": "4", "lambda": "0.1", "t_max": "2", "dt": "0.001",
                "n_traj": "200", "store_stride": "10"},
    "jump-weakmeas": {"kappa": "8", "lambda": "1", "t_max": "5", "dt": "0.00125"},
    "zeno-probe": {"kappa": "0", "gamma": "1", "t_max": "0.01", "dt": "0.00001"},
}


class UsageError(Exception):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def parse_set(items) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_config(scenario: str, values: dict[str, str]) -> tuple[SimConfig, dict]:
    """Turn string key/values into a ``SimConfig`` and scenario options."""
    if scenario not in scenarios.SCENARIOS:
        raise UsageError(f"unknown scenario {scenario!r}")
    merged = {**DEFAULTS.get(scenario, {}), **values}
    merged.pop("scenario", None)
    extras = scenarios.EXTRA_OPTIONS.get(scenario, set())
    kwargs, opts = {}, {}
    for key, raw in merged.items():
        if key in CONFIG_KEYS:
            try:
                kwargs["lam" if key == "lambda" else key] = CONFIG_KEYS[key](raw)
            except ValueError:
                raise UsageError(f"bad value for {key}: {raw!r}") from None
        elif key in TOLERANCE_KEYS:
            opts["_tol_" + key] = TOLERANCE_KEYS[key](raw)
        elif key in extras:
            opts[key] = raw
        else:
            raise UsageError(f"unknown key {key!r} for scenario {scenario}")
    return SimConfig(scenario=scenario, **kwargs), opts


def run_seed(seed: int, index: int) -> int:
    """Per-run seed for sweeps, derived from ``(seed, run index)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline="\n"), True


def _print_summary(report, label=""):
    for key, value in report.summary.items():
        print(f"# {label}{key} = {value}", file=sys.stderr)
    print(f"# {label}wall_time = {report.wall_time:.3f}", file=sys.stderr)


def run_with_tolerances(scenario: str, cfg: SimConfig, opts: dict):
    tol = {k[5:]: v for k, v in opts.items() if k.startswith("_tol_")}
    opts = {k: v for k, v in opts.items() if not k.startswith("_tol_")}
    with numerics.override(**tol):
        return scenarios.run(scenario, cfg, opts)


def cmd_run(args) -> int:
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    values.update(parse_set(args.set))
    cfg, opts = build_config(args.scenario, values)
    report = run_with_tolerances(args.scenario, cfg, opts)
    fh, close = _open_out(args.out)
    try:
        report.write_csv(fh)
    finally:
        if close:
            fh.close()
    _print_summary(report)
    return EXIT_OK


def cmd_sweep(args) -> int:
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    values.update(parse_set(args.set))
    scenario = args.scenario or values.get("scenario")
    if not scenario:
        raise UsageError("sweep needs --scenario or a scenario key in the config")
    if args.param not in SWEEP_PARAMS:
        raise UsageError(f"--param must be one of {', '.join(SWEEP_PARAMS)}")
    items = [v.strip() for v in args.values.split(",") if v.strip()] if args.values else []
    base_seed = int(values.get("seed", 0))
    fh, close = _open_out(args.out)
    try:
        for i, raw in enumerate(items):
            run_values = dict(values, **{args.param: raw, "seed": str(run_seed(base_seed, i))})
            cfg, opts = build_config(scenario, run_values)
            report = run_with_tolerances(scenario, cfg, opts)
            swept = CONFIG_KEYS[args.param](raw)
            report.write_csv(fh, extra={"run": i, args.param: swept}, header=(i == 0))
            _print_summary(report, label=f"run{i}.")
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_list(args) -> int:
    for name in scenarios.SCENARIOS:
        extra = sorted(scenarios.EXTRA_OPTIONS.get(name, ()))
        defaults = " ".join(f"{k}={v}" for k, v in DEFAULTS.get(name, {}).items())
        line = f"{name:14s} {defaults}"
        if extra:
            line += f"  options: {', '.join(extra)}"
        print(line)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctqec", description="Continuous-time error-correction scenarios.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario")
    r.add_argument("--config")
    r.add_argument("--set", action="append", metavar="KEY=VALUE")
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a scenario for several values of one parameter")
    s.add_argument("--param", required=True)
    s.add_argument("--values", default="")
    s.add_argument("--scenario")
    s.add_argument("--config")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    ls = sub.add_parser("list", help="list scenarios and their defaults")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (UsageError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, NumericGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
