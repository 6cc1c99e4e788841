"""``jamsim`` command line: run an experiment described in a YAML file.

    jamsim <analyze|simulate|verify-budget|reproduce-paper> --spec FILE
           [--out DIR] [--seed N] [--runs N]

Exit codes: 0 success, 2 config error, 3 budget verification failed,
4 compute cap exceeded, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import presets
from .analysis import (Condition, NormContext, certify, max_admissible_v, plant_norms)
from .attacks import SleepJamParams, UnreachableTarget, constant_strategy, explicit_strategy, sleep_jam_strategy
from .channel import EnvelopeError, PHatEnvelope, TabulatedEnvelope, verify_assumption1, verify_assumption2
from .model import (AttackStrategy, Budget, BudgetKind, ChannelParams, ModelError, PlantModel,
                    constant_disturbance, gaussian_disturbance, no_disturbance, uniform_disturbance)
from .output import OutputError, emit_csv, fmt
from .sim import (FAILURE_STREAM, DISTURBANCE_STREAM, INPUT_DISTURBANCE_STREAM, BudgetViolation,
                  CountermeasureParams, SimConfig, check_budget_for, monte_carlo_first_moment,
                  simulate_trajectory)

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_CAP, EXIT_IO = 0, 2, 3, 4, 5
MODES = ("analyze", "simulate", "verify-budget", "reproduce-paper")
DEFAULT_COMPUTE_CAP = 10**8
BOUND_KINDS = {"prop1": Condition.FIRST_MOMENT, "thm1": Condition.BOUNDED_DISTURBANCE,
               "thm2": Condition.SECOND_MOMENT}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ComputeCapExceeded(RuntimeError):
    pass


def _get(block: dict, key: str, where: str, default=...):
    if not isinstance(block, dict):
        raise ConfigError(where, "expected a mapping")
    if key not in block:
        if default is ...:
            raise ConfigError(key if where == "spec" else f"{where}.{key}", "missing required field")
        return default
    return block[key]


def _num(block, key, where, default=..., kind=float):
    value = _get(block, key, where, default)
    if value is None or value is default and default is not ...:
        return value
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}", f"expected a number, got {value!r}") from None
    if kind is int and out != value:
        raise ConfigError(f"{where}.{key}", f"expected an integer, got {value!r}")
    return out


def _preset(value, where, presets_by_name):
    if isinstance(value, str):
        if value not in presets_by_name:
            raise ConfigError(where, f"unresolved reference {value!r} (known: {', '.join(presets_by_name)})")
        return presets_by_name[value]()
    return None


def parse_plant(block, where="plant") -> PlantModel:
    found = _preset(block, where, {"benchmark": presets.plant})
    if found is not None:
        return found
    try:
        return PlantModel(*(_get(block, k, where) for k in ("A", "B", "K", "x0")))
    except ModelError as exc:
        raise ConfigError(where, str(exc)) from None


def parse_channel(block, where="channel") -> ChannelParams:
    found = _preset(block, where, {"benchmark": presets.channel})
    if found is not None:
        return found
    values = [_num(block, k, where) for k in ("c", "xi", "sigma")]
    try:
        return ChannelParams(*values)
    except ModelError as exc:
        raise ConfigError(where, str(exc)) from None


def parse_norm(block, where="norm") -> NormContext:
    found = _preset(block, where, {"benchmark": presets.norm_context})
    if found is not None:
        return found
    try:
        return NormContext.from_matrix(_get(block, "P", where))
    except ValueError as exc:
        raise ConfigError(f"{where}.P", str(exc)) from None


def parse_envelope(block, channel: ChannelParams, where="envelope"):
    if block is None:
        block = {"kind": "shifted"}
    kind = _get(block, "kind", where)
    try:
        if kind == "shifted":
            psi = _num(block, "psi", where, None)
            return PHatEnvelope.shifted(channel) if psi is None else PHatEnvelope(channel, psi)
        if kind == "tabulated":
            return TabulatedEnvelope(channel, _get(block, "knots", where), _get(block, "values", where))
    except EnvelopeError as exc:
        raise ConfigError(where, str(exc)) from None
    raise ConfigError(f"{where}.kind", f"unknown envelope kind {kind!r}")


def _budgets(block, where) -> tuple:
    if block is None:
        return ()
    items = block if isinstance(block, list) else [block]
    out = []
    for i, b in enumerate(items):
        w = f"{where}[{i}]" if isinstance(block, list) else where
        kind = _get(b, "kind", w)
        try:
            out.append(Budget(_num(b, "kappa", w), _num(b, "vbar", w), BudgetKind(kind)))
        except ValueError:
            raise ConfigError(f"{w}.kind", f"unknown budget kind {kind!r} (assumption1 or assumption2)") from None
    return tuple(out)


def parse_attack(block, channel: ChannelParams, plant: Optional[PlantModel], where="attack") -> AttackStrategy:
    kind = _get(block, "kind", where)
    try:
        if kind == "none":
            strategy = constant_strategy(0.0)
        elif kind == "constant":
            strategy = constant_strategy(_num(block, "vstar", where))
        elif kind == "explicit":
            strategy = explicit_strategy(_num(block, "tau1", where, kind=int), _num(block, "tau2", where, kind=int),
                                         _num(block, "vstar", where), _num(block, "period", where, None, kind=int))
        elif kind == "sleep_jam":
            a_default = float(plant.A[0, 0]) if plant is not None and plant.n == 1 else ...
            params = SleepJamParams(_num(block, "vbar", where), _num(block, "rho", where), _num(block, "z", where),
                                    _num(block, "wstar", where), _num(block, "A_scalar", where, a_default))
            strategy = sleep_jam_strategy(params, channel)
        else:
            raise ConfigError(f"{where}.kind", f"unknown attack kind {kind!r}")
    except (ModelError, UnreachableTarget) as exc:
        raise ConfigError(where, str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(where, str(exc)) from None
    extra = _budgets(block.get("budget"), f"{where}.budget")
    if extra:
        strategy = AttackStrategy(strategy.schedule, extra, strategy.name, strategy.params)
    return strategy


def parse_disturbance(block, n: int, where="disturbance"):
    if block is None:
        return no_disturbance(n)
    kind = _get(block, "kind", where)
    if kind == "none":
        return no_disturbance(n)
    if kind == "uniform":
        return uniform_disturbance(n, _num(block, "half_width", where))
    if kind == "gaussian":
        return gaussian_disturbance(n, _num(block, "std", where), block.get("mean"))
    if kind == "constant":
        w = _get(block, "wstar", where)
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if w.size == 1 and n > 1:
            w = np.full(n, w[0])
        if w.size != n:
            raise ConfigError(f"{where}.wstar", f"expected {n} entries")
        return constant_disturbance(w)
    raise ConfigError(f"{where}.kind", f"unknown disturbance kind {kind!r}")


def parse_countermeasure(block, channel: ChannelParams, where="countermeasure"):
    if block is None:
        return None
    try:
        return CountermeasureParams(_num(block, "xi_c", where), _num(block, "n_c", where, kind=int),
                                    _num(block, "t_c", where, kind=int), channel.xi)
    except ModelError as exc:
        raise ConfigError(where, str(exc)) from None


@dataclass
class ExperimentSpec:
    name: str
    mode: str
    raw: dict
    output_dir: Path
    seed: int = 0
    runs: Optional[int] = None
    plant: Optional[PlantModel] = None
    channel: Optional[ChannelParams] = None
    norm: Optional[NormContext] = None
    envelope: object = None
    strategy: Optional[AttackStrategy] = None
    disturbance: object = None
    countermeasure: Optional[CountermeasureParams] = None
    horizon: Optional[int] = None
    bound: Optional[str] = None
    trajectories: list = field(default_factory=list)
    compute_cap: int = DEFAULT_COMPUTE_CAP

    def sim_config(self) -> SimConfig:
        return SimConfig(self.plant, self.channel, self.strategy, self.disturbance, self.horizon,
                         self.runs, self.seed, self.countermeasure)


def load_spec(path, mode: str, out: Optional[str] = None, seed: Optional[int] = None,
              runs: Optional[int] = None) -> ExperimentSpec:
    """Parse and resolve an experiment file for ``mode``."""
    if path is None:
        raw = {}
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise OutputError(f"cannot read spec {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("spec", f"parse failure: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("spec", "top level must be a mapping")
    declared = raw.get("mode")
    if declared is not None and declared != mode:
        raise ConfigError("mode", f"spec declares mode {declared!r} but {mode!r} was requested")

    run = raw.get("run", {}) or {}
    spec = ExperimentSpec(
        name=str(raw.get("name", Path(path).stem if path else mode)),
        mode=mode, raw=raw,
        output_dir=Path(out or raw.get("output_dir") or "out"),
        seed=seed if seed is not None else _num(run, "seed", "run", 0, kind=int),
        runs=runs if runs is not None else _num(run, "n_runs", "run", None, kind=int),
        horizon=_num(run, "horizon", "run", None, kind=int),
        compute_cap=_num(run, "compute_cap", "run", DEFAULT_COMPUTE_CAP, kind=int),
    )
    if spec.seed < 0:
        raise ConfigError("run.seed", "seed must be nonnegative")
    if mode == "reproduce-paper":
        return spec

    if mode in ("analyze", "simulate"):
        spec.plant = parse_plant(_get(raw, "plant", "spec"))
        spec.channel = parse_channel(_get(raw, "channel", "spec"))
    elif "channel" in raw:
        spec.channel = parse_channel(raw["channel"])
    if mode == "analyze":
        spec.norm = parse_norm(_get(raw, "norm", "spec"))
        spec.envelope = parse_envelope(raw.get("envelope"), spec.channel)
        if "attack" in raw:
            spec.strategy = parse_attack(raw["attack"], spec.channel, spec.plant)
        return spec

    spec.strategy = parse_attack(_get(raw, "attack", "spec"), spec.channel or presets.channel(), spec.plant)
    if spec.horizon is None:
        raise ConfigError("run.horizon", "missing required field")
    if spec.horizon < 1:
        raise ConfigError("run.horizon", "must be >= 1")
    if mode == "verify-budget":
        return spec

    if spec.runs is None:
        raise ConfigError("run.n_runs", "missing required field")
    if spec.runs < 1:
        raise ConfigError("run.n_runs", "must be >= 1")
    spec.disturbance = parse_disturbance(raw.get("disturbance"), spec.plant.n)
    spec.countermeasure = parse_countermeasure(raw.get("countermeasure"), spec.channel)
    spec.bound = run.get("bound", "none")
    if spec.bound != "none" and spec.bound not in BOUND_KINDS:
        raise ConfigError("run.bound", f"unknown bound {spec.bound!r} (none, prop1, thm1, thm2)")
    if spec.bound != "none":
        spec.norm = parse_norm(_get(raw, "norm", "spec"))
        spec.envelope = parse_envelope(raw.get("envelope"), spec.channel)
    spec.trajectories = [int(i) for i in run.get("trajectories", [])]
    if spec.horizon * spec.runs > spec.compute_cap:
        raise ComputeCapExceeded(f"run.n_runs: horizon*n_runs = {spec.horizon * spec.runs} "
                                 f"exceeds compute cap {spec.compute_cap}")
    return spec


def _write_text(path: Path, text: str) -> Path:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def seed_manifest(seed: int, n_runs: int, extra: Optional[dict] = None) -> str:
    doc = {
        "generator": "Philox4x64 (numpy)",
        "key": ["base_seed", "run_index"],
        "counter_high_word": {"failure": FAILURE_STREAM, "disturbance": DISTURBANCE_STREAM,
                              "input_disturbance": INPUT_DISTURBANCE_STREAM},
        "base_seed": seed,
        "run_indices": [0, n_runs - 1],
    }
    doc.update(extra or {})
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def certificate_lines(cert) -> list:
    lines = [f"condition {cert.condition.value}: v={fmt(cert.v)} kappa={fmt(cert.kappa or 0.0)} "
             f"lhs={fmt(cert.lhs_value)} holds={cert.holds}"]
    c = cert.constants
    if c is not None:
        gain_name = {Condition.BOUNDED_DISTURBANCE: "d_hat", Condition.SECOND_MOMENT: "f_hat"}.get(cert.condition)
        line = f"  theta={fmt(c.theta)} mu={fmt(c.mu)} log_mu={fmt(c.log_mu)} T_star={c.T_star}"
        if gain_name:
            line += f" {gain_name}={fmt(c.gain)} log_{gain_name}={fmt(c.log_gain)}"
        if c.T_star_squared is not None:
            line += f" T_star_squared={c.T_star_squared}"
        lines.append(line)
    return lines


def run_analyze(spec: ExperimentSpec) -> int:
    norm_a, norm_cl = plant_norms(spec.plant, spec.norm)
    lines = [f"experiment: {spec.name}",
             f"norm_A_P: {fmt(norm_a)}", f"norm_A_plus_BK_P: {fmt(norm_cl)}",
             f"zeta1: {fmt(norm_a - norm_cl)}", f"zeta0: {fmt(norm_cl)}",
             f"c1: {fmt(spec.norm.c1)}", f"c2: {fmt(spec.norm.c2)}",
             "max admissible average interference power:"]
    for kind in Condition:
        adm = max_admissible_v(kind, spec.plant, spec.norm, spec.envelope)
        lines.append(f"  {kind.value}: {adm.value:.6f} ({adm.status})")
    analysis = spec.raw.get("analysis") or {}
    points = []
    if "v" in analysis:
        points.append((_num(analysis, "v", "analysis"), _num(analysis, "kappa", "analysis", 0.0), None))
    elif spec.strategy is not None:
        points.extend((b.vbar, b.kappa, b.kind) for b in spec.strategy.budgets)
    for v, kappa, budget_kind in points:
        lines.append(f"certificates at v={fmt(v)} kappa={fmt(kappa)}:")
        for kind in Condition:
            if budget_kind is BudgetKind.CUMULATIVE and kind in (Condition.BOUNDED_DISTURBANCE,
                                                                 Condition.SECOND_MOMENT):
                continue
            if budget_kind is BudgetKind.WINDOWED and kind is Condition.FIRST_MOMENT:
                continue
            lines.extend("  " + s for s in certificate_lines(certify(kind, spec.plant, spec.norm,
                                                                      spec.envelope, v, kappa)))
    text = "\n".join(lines) + "\n"
    _write_text(spec.output_dir / "report.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


def run_simulate(spec: ExperimentSpec) -> int:
    config = spec.sim_config()
    bound = None
    if spec.bound != "none":
        kind = BOUND_KINDS[spec.bound]
        budget_kind = BudgetKind.CUMULATIVE if kind is Condition.FIRST_MOMENT else BudgetKind.WINDOWED
        budget = spec.strategy.budget(budget_kind)
        if budget is None:
            raise ConfigError("attack.budget", f"bound {spec.bound} needs a declared {budget_kind.value} budget")
        cert = certify(kind, spec.plant, spec.norm, spec.envelope, budget.vbar, budget.kappa)
        if not cert.holds:
            raise ConfigError("run.bound", f"{kind.value} condition fails at v={budget.vbar}")
        check = check_budget_for(cert, spec.strategy, spec.horizon)
        if not check.passed:
            raise BudgetViolation(f"attack violates its declared {budget_kind.value} budget: {check}")
    series = monte_carlo_first_moment(config)
    if spec.bound != "none":
        level = spec.disturbance.bound or 0.0
        bound = cert.bound(series.t, float(np.linalg.norm(spec.plant.x0)), level)
    emit_csv(series, spec.output_dir / "moments.csv", bound)
    for i in spec.trajectories:
        emit_csv(simulate_trajectory(config, i), spec.output_dir / f"trajectory_{i}.csv")
    _write_text(spec.output_dir / "seeds.json", seed_manifest(spec.seed, spec.runs, {"horizon": spec.horizon}))
    sys.stdout.write(f"wrote {spec.output_dir / 'moments.csv'} ({spec.runs} runs, horizon {spec.horizon})\n")
    return EXIT_OK


def run_verify_budget(spec: ExperimentSpec) -> int:
    trace = spec.strategy.trace(spec.horizon)
    budgets = _budgets(spec.raw.get("verify"), "verify") or spec.strategy.budgets
    if not budgets:
        raise ConfigError("attack.budget", "no budget declared to verify")
    lines, ok = [f"experiment: {spec.name}", f"horizon: {spec.horizon}"], True
    for b in budgets:
        if b.kind is BudgetKind.CUMULATIVE:
            res = verify_assumption1(trace, b.kappa, b.vbar)
            where = "" if res.passed else f" first_violation_t={res.horizon}"
        else:
            res = verify_assumption2(trace, b.kappa, b.vbar)
            where = "" if res.passed else f" violating_window={res.window[0]},{res.window[1]}"
        ok &= res.passed
        lines.append(f"{b.kind.value} kappa={fmt(b.kappa)} vbar={fmt(b.vbar)}: "
                     f"{'PASS' if res.passed else 'FAIL'}{where}")
    text = "\n".join(lines) + "\n"
    _write_text(spec.output_dir / "budget.txt", text)
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_BUDGET


def run_reproduce(spec: ExperimentSpec) -> int:
    from .reproduce import reproduce_paper

    runs = spec.runs or presets.BURST_RUNS
    if (presets.CM_HORIZON * runs * (len(presets.countermeasure_grid()) + 1) > spec.compute_cap):
        raise ComputeCapExceeded(f"run.n_runs: {runs} runs exceed compute cap {spec.compute_cap}")
    summary = reproduce_paper(spec.output_dir, seed=spec.seed, runs=runs)
    sys.stdout.write(summary)
    return EXIT_OK


HANDLERS = {"analyze": run_analyze, "simulate": run_simulate,
            "verify-budget": run_verify_budget, "reproduce-paper": run_reproduce}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jamsim", description=__doc__.split("\n")[0])
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--spec", help="experiment YAML file (optional for reproduce-paper)")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="base seed (overrides run.seed)")
    parser.add_argument("--runs", type=int, help="Monte Carlo runs (overrides run.n_runs)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.spec is None and args.mode != "reproduce-paper":
        print("jamsim: error: --spec is required for this mode", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = load_spec(args.spec, args.mode, args.out, args.seed, args.runs)
        try:
            spec.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"cannot create {spec.output_dir}: {exc}") from exc
        return HANDLERS[args.mode](spec)
    except ConfigError as exc:
        print(f"jamsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetViolation as exc:
        print(f"jamsim: budget verification failed: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ComputeCapExceeded as exc:
        print(f"jamsim: compute cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except OutputError as exc:
        print(f"jamsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
