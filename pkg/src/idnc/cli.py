"""Command-line entry point.

Subcommands::

    idnc sweep SPEC [--seed S] [--trials T] [--threads K] [--out CSV]
                    [--include-initial] [--secondary-weight {psi-tilde,q-psi}]
    idnc verify {formulas,ssp,policies} [--trials T] [--seed S] [--max-bits B]
    idnc oracle FIXTURE [--max-bits B]
    idnc dump-graph FIXTURE

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import build_graph, dump_graph
from .model import FrameState, ModelError
from .policies import PolicyKind
from .sim import AXES, ResultRow, SimConfig, run_sweep
from .ssp import StateSpaceTooLarge, solve
from .verify import FAULTS, formula_suite, search_suite, ssp_suite

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
CSV_HEADER = ["axis", "value", "policy", "mean_delay", "stderr", "trials", "truncated", "seed"]
DEFAULT_POLICIES = ("mwcs:n=3", "mwvs:n=3", "mc", "rnd")


class ConfigError(ValueError):
    pass


def fmt(x: float) -> str:
    return "%#.6g" % x


# ---------------------------------------------------------------- spec files


@dataclass
class ExperimentSpec:
    M: int
    N: int
    p: float = 0.15
    mu: float = 1.0
    axis: str = "mu"
    values: list[float] = field(default_factory=list)
    policies: list[str] = field(default_factory=lambda: list(DEFAULT_POLICIES))
    trials: int = 1000
    seed: int = 0
    out: str | None = None
    erasure_spread: float = 0.5
    demand_spread: float = 0.5
    max_slots: int | None = None
    include_initial: bool = False
    secondary_weight: str = "psi-tilde"

    def base_config(self) -> SimConfig:
        return SimConfig(
            self.M,
            self.N,
            self.p,
            self.mu,
            PolicyKind.parse(self.policies[0]),
            self.trials,
            self.seed,
            self.erasure_spread,
            self.demand_spread,
            self.max_slots,
            self.include_initial,
            self.secondary_weight,
        )


_INT_KEYS = {"M", "N", "trials", "seed", "max_slots"}
_FLOAT_KEYS = {"p", "mu", "erasure_spread", "demand_spread"}
_STR_KEYS = {"axis", "out", "secondary_weight"}
_LIST_KEYS = {"values", "policies"}
_BOOL_KEYS = {"include_initial"}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _LIST_KEYS | _BOOL_KEYS


def _as_int(key: str, v) -> int:
    if isinstance(v, bool):
        raise ConfigError(f"{key}: expected an integer")
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from None
    if not f.is_integer():
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    return int(f) if not isinstance(v, int) else v


def _as_float(key: str, v) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {v!r}") from None


def _as_bool(key: str, v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {v!r}")


def _as_list(v) -> list[str]:
    if isinstance(v, (list, tuple)):
        return [str(x).strip() for x in v]
    return [s.strip() for s in str(v).split(",") if s.strip()]


def validate_spec(raw: dict) -> ExperimentSpec:
    """Shared validator for both spec formats; raises ConfigError."""
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    for key in ("M", "N"):
        if key not in raw:
            raise ConfigError(f"missing required key {key}")
    kw: dict = {}
    for key, v in raw.items():
        if key in _INT_KEYS:
            kw[key] = _as_int(key, v)
        elif key in _FLOAT_KEYS:
            kw[key] = _as_float(key, v)
        elif key in _BOOL_KEYS:
            kw[key] = _as_bool(key, v)
        elif key in _LIST_KEYS:
            kw[key] = _as_list(v)
        else:
            kw[key] = None if v is None else str(v).strip()
    spec = ExperimentSpec(**kw)
    if spec.axis not in AXES:
        raise ConfigError(f"axis must be one of {', '.join(AXES)}")
    if not spec.policies:
        raise ConfigError("policies must not be empty")
    try:
        spec.policies = [str(PolicyKind.parse(p)) for p in spec.policies]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not spec.values:
        spec.values = [{"mu": spec.mu, "M": spec.M, "N": spec.N, "p": spec.p}[spec.axis]]
    else:
        spec.values = [_as_float("values", v) for v in spec.values]
    try:
        base = spec.base_config()
        for v in spec.values:
            if spec.axis in ("M", "N") and not float(v).is_integer():
                raise ValueError(f"axis {spec.axis} needs integer values, got {v}")
            cast = int(v) if spec.axis in ("M", "N") else float(v)
            for pol in spec.policies:
                cfg = base.replace(**{AXES[spec.axis]: cast, "policy": PolicyKind.parse(pol)})
                if cfg.policy.variant == "rnc" and cfg.mean_demand != 1.0:
                    raise ValueError("policy rnc needs a broadcast frame (mu = 1)")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return spec


def parse_spec_text(text: str) -> ExperimentSpec:
    """JSON object, or ``key = value`` lines with ``#`` comments."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON spec: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("JSON spec must be an object")
        return validate_spec(raw)
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        raw[key] = value
    return validate_spec(raw)


# ---------------------------------------------------------------- fixtures


def parse_fixture(text: str) -> FrameState:
    """First line ``M N``, then M rows of N entries in {-1, 0, 1}, then M success probabilities."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        if not rows or len(rows[0]) != 2:
            raise ValueError("first line must be 'M N'")
        m, n = (int(x) for x in rows[0])
        if m < 1 or n < 1 or len(rows) != m + 2:
            raise ValueError(f"expected {m} matrix rows and one probability row")
        sfm = [[int(x) for x in r] for r in rows[1 : m + 1]]
        if any(len(r) != n for r in sfm):
            raise ValueError(f"every matrix row needs {n} entries")
        q = [float(x) for x in rows[m + 1]]
        if len(q) != m:
            raise ValueError(f"need {m} success probabilities")
        if any(not 0.0 < x <= 1.0 for x in q):
            raise ValueError("success probabilities must lie in (0, 1]")
        return FrameState.from_sfm(sfm, q)
    except (ValueError, ModelError) as exc:
        raise ConfigError(f"bad fixture: {exc}") from None


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


# ---------------------------------------------------------------- commands


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        value = str(int(r.value)) if r.axis in ("M", "N") else fmt(r.value)
        w.writerow([r.axis, value, r.policy, fmt(r.mean_delay), fmt(r.stderr), r.trials, r.truncated, r.seed])
    return buf.getvalue()


def _write_atomic(path: str, text: str) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent if str(target.parent) else ".", prefix=f".{target.name}.", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cmd_sweep(args) -> int:
    spec = parse_spec_text(_read(args.spec))
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "out": args.out,
        "secondary_weight": args.secondary_weight,
        "include_initial": True if args.include_initial else None,
    }
    if any(v is not None for v in overrides.values()):
        raw = {k: v for k, v in vars(spec).items() if v is not None}
        raw.update({k: v for k, v in overrides.items() if v is not None})
        spec = validate_spec(raw)
    out = spec.out
    if out and not Path(out).parent.exists():
        raise ConfigError(f"output directory {Path(out).parent} does not exist")
    try:
        rows = run_sweep(spec.base_config(), spec.axis, spec.values, spec.policies, workers=args.threads)
    except Exception as exc:
        print(f"error: sweep failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    text = rows_to_csv(rows)
    if out:
        _write_atomic(out, text)
    else:
        sys.stdout.write(text)
    stream = sys.stderr if not out else sys.stdout
    print(f"# seed={spec.seed} trials={spec.trials} M={spec.M} N={spec.N} p={fmt(spec.p)} mu={fmt(spec.mu)}", file=stream)
    print(f"{'value':>10}  {'policy':<10} {'mean':>10} {'stderr':>10} {'trunc':>6}", file=stream)
    for r in rows:
        print(f"{fmt(r.value):>10}  {r.policy:<10} {fmt(r.mean_delay):>10} {fmt(r.stderr):>10} {r.truncated:>6}", file=stream)
    return EXIT_OK


def cmd_verify(args) -> int:
    trials = args.trials if args.trials is not None else 100_000
    fault = args.inject_fault
    if args.suite == "formulas":
        checks = formula_suite(trials=trials, seed=args.seed, fault=fault)
    elif args.suite == "ssp":
        checks = ssp_suite(max_bits=args.max_bits, n_instances=args.instances, trials=trials, seed=args.seed, fault=fault)
    else:
        checks = search_suite(n_graphs=args.instances * 2, seed=args.seed, fault=fault)
    failed = [c for c in checks if not c.passed]
    for c in checks:
        if args.verbose or not c.passed:
            print(c.line())
    print(f"{args.suite}: {len(checks) - len(failed)}/{len(checks)} checks passed (seed={args.seed})")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_oracle(args) -> int:
    state = parse_fixture(_read(args.fixture))
    try:
        table = solve(state, size_bound=args.max_bits)
    except StateSpaceTooLarge as exc:
        raise ConfigError(str(exc)) from None
    bits = table.problem.n_bits
    print(f"lacking bits: {bits}  states solved: {len(table.values)}")
    print(f"V={fmt(table.initial_value)}")
    if 0 not in table.policy:
        print("first transmission: none (every Wants set is already empty)")
        return EXIT_OK
    c = table.policy[0]
    fs = lambda s: "{" + ", ".join(str(x) for x in sorted(s)) + "}"
    print(f"first transmission: packets {fs(c.packet_set)}")
    print(f"  primary targets {fs(c.targeted_primary)}  secondary targets {fs(c.targeted_secondary)}")
    print("  vertices " + " ".join(v.label() for v in c.vertices))
    return EXIT_OK


def cmd_dump_graph(args) -> int:
    state = parse_fixture(_read(args.fixture))
    sys.stdout.write(dump_graph(build_graph(state)))
    return EXIT_OK


def _trials(text: str) -> int:
    try:
        f = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid trial count {text!r}") from None
    if not f.is_integer() or f < 1:
        raise argparse.ArgumentTypeError(f"trial count must be a positive integer, got {text!r}")
    return int(f)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="idnc", description="IDNC completion-delay toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="run a parameter sweep and emit CSV")
    sw.add_argument("spec", help="experiment spec (key = value lines or a JSON object)")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--trials", type=_trials)
    sw.add_argument("--threads", type=int, default=1, help="worker processes")
    sw.add_argument("--out", help="CSV path (stdout when omitted)")
    sw.add_argument("--include-initial", action="store_true", help="count the N uncoded slots in the delay")
    sw.add_argument("--secondary-weight", choices=("psi-tilde", "q-psi"))
    sw.set_defaults(func=cmd_sweep)

    vf = sub.add_parser("verify", help="run a self-check suite")
    vf.add_argument("suite", choices=("formulas", "ssp", "policies"))
    vf.add_argument("--trials", type=_trials)
    vf.add_argument("--seed", type=int, default=0)
    vf.add_argument("--max-bits", type=int, default=8)
    vf.add_argument("--instances", type=int, default=50)
    vf.add_argument("-v", "--verbose", action="store_true")
    vf.add_argument("--inject-fault", choices=FAULTS, help=argparse.SUPPRESS)
    vf.set_defaults(func=cmd_verify)

    oc = sub.add_parser("oracle", help="exact optimal delay of a small SFM fixture")
    oc.add_argument("fixture")
    oc.add_argument("--max-bits", type=int, default=16)
    oc.set_defaults(func=cmd_oracle)

    dg = sub.add_parser("dump-graph", help="print the IDNC graph of a fixture as adjacency lists")
    dg.add_argument("fixture")
    dg.set_defaults(func=cmd_dump_graph)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
