"""Built-in benchmark runs behind ``jamsim reproduce-paper``.

Everything here is driven by :mod:`jamsim.presets` and a base seed, so the
written files are byte-for-byte reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import presets
from .analysis import Condition, max_admissible_v
from .channel import max_burst_power, max_consecutive_duration, verify_assumption1, verify_assumption2
from .model import uniform_disturbance
from .output import OutputError, emit_csv, fmt
from .sim import CountermeasureParams, MomentSeries, SimConfig, monte_carlo_first_moment, run_totals

Z95 = float(norm.ppf(0.95))


def threshold_table() -> dict:
    plant, ctx, env = presets.plant(), presets.norm_context(), presets.envelope()
    return {kind.value: max_admissible_v(kind, plant, ctx, env) for kind in
            (Condition.FIRST_MOMENT, Condition.ALMOST_SURE, Condition.SECOND_MOMENT)}


def budget_table() -> dict:
    cb, wb = presets.CUMULATIVE_BUDGET, presets.WINDOWED_BUDGET
    out = {}
    for which in ("short", "long"):
        cfg = presets.BURST_SHORT if which == "short" else presets.BURST_LONG
        trace = presets.burst_strategy(which).trace(cfg["tau1"] + cfg["tau2"] + presets.BURST_AFTER)
        out[which] = (verify_assumption1(trace, cb["kappa"], cb["vbar"]),
                      verify_assumption2(trace, wb["kappa"], wb["vbar"]))
    out["max_duration"] = max_consecutive_duration(wb["kappa"], wb["vbar"], presets.BURST_SHORT["vstar"])
    out["burst_power_60"] = max_burst_power(wb["kappa"], wb["vbar"], presets.BURST_LONG["tau2"])
    return out


def burst_config(which: str, runs: int, seed: int) -> SimConfig:
    cfg = presets.BURST_SHORT if which == "short" else presets.BURST_LONG
    return SimConfig(presets.plant(), presets.channel(), presets.burst_strategy(which),
                     uniform_disturbance(2, presets.UNIFORM_HALF_WIDTH),
                     cfg["tau1"] + cfg["tau2"] + presets.BURST_AFTER, runs, seed)


@dataclass(frozen=True)
class PeakSummary:
    series: MomentSeries
    window: tuple          # jam steps [tau1, tau1 + tau2)
    peak_t: int
    peak: float
    peak_se: float
    final: float

    @property
    def peak_in_window(self) -> bool:
        # x(tau1 + tau2) is the state produced by the last jammed step
        return self.window[0] <= self.peak_t <= self.window[1]


def burst_run(which: str, runs: int, seed: int) -> PeakSummary:
    cfg = presets.BURST_SHORT if which == "short" else presets.BURST_LONG
    series = monte_carlo_first_moment(burst_config(which, runs, seed))
    k = int(np.argmax(series.mean_norm))
    return PeakSummary(series, (cfg["tau1"], cfg["tau1"] + cfg["tau2"]), int(series.t[k]),
                       float(series.mean_norm[k]), float(series.std_err[k]), float(series.mean_norm[-1]))


@dataclass(frozen=True)
class CountermeasureRow:
    xi_c: float
    n_c: int
    t_c: int
    state_norm: float
    state_norm_se: float
    power: float
    diff: float            # paired mean of (with - without) cumulative state norm
    diff_se: float

    @property
    def reduces(self) -> bool:
        return self.diff + Z95 * self.diff_se < 0


def _mean_se(x: np.ndarray) -> tuple:
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0


def countermeasure_config(runs: int, seed: int, setting=None) -> SimConfig:
    ch = presets.channel()
    cm = None if setting is None else CountermeasureParams(setting[0], setting[1], setting[2], ch.xi)
    return SimConfig(presets.plant(), ch, presets.burst_strategy("long"),
                     uniform_disturbance(2, presets.UNIFORM_HALF_WIDTH),
                     presets.CM_HORIZON, runs, seed, cm)


def countermeasure_study(runs: int, seed: int) -> tuple:
    """Cumulative state norm and power with and without each countermeasure.

    All configurations share the seed, so the comparison is paired run by run.
    """
    base = run_totals(countermeasure_config(runs, seed))
    rows = []
    for setting in presets.countermeasure_grid():
        tot = run_totals(countermeasure_config(runs, seed, setting))
        m, se = _mean_se(tot.state_norm)
        d, dse = _mean_se(tot.state_norm - base.state_norm)
        rows.append(CountermeasureRow(setting[0], setting[1], setting[2], m, se, float(tot.power.mean()), d, dse))
    return base, rows


def power_monotone(rows) -> bool:
    """Mean power is nondecreasing in xi_c for each fixed (n_c, t_c)."""
    by_key = {}
    for r in rows:
        by_key.setdefault((r.n_c, r.t_c), []).append((r.xi_c, r.power))
    return all(all(a[1] <= b[1] for a, b in zip(s, s[1:])) for s in (sorted(v) for v in by_key.values()))


def _write(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def reproduce_paper(out_dir, seed: int = 0, runs: int = presets.BURST_RUNS) -> str:
    """Run every preset, write the CSV files and ``summary.txt``; returns the summary."""
    out_dir = Path(out_dir)
    lines = [f"base_seed: {seed}", f"runs: {runs}", "", "admissible average interference power:"]
    for name, adm in threshold_table().items():
        target, tol = presets.THRESHOLDS[name]
        ok = abs(adm.value - target) <= tol
        lines.append(f"  {name}: {adm.value:.5f} (target {target} +/- {tol}) {'ok' if ok else 'MISMATCH'}")

    b = budget_table()
    lines += ["", "budget arithmetic:"]
    for which in ("short", "long"):
        a1, a2 = b[which]
        lines.append(f"  {which}: cumulative {'pass' if a1 else 'fail'}, windowed {'pass' if a2 else 'fail'}"
                     + ("" if a2 else f" (window {a2.window[0]},{a2.window[1]})"))
    lines.append(f"  max consecutive steps at v*=32: {b['max_duration']}")
    lines.append(f"  max power for a 60-step burst: {b['burst_power_60']:.10g}")

    lines += ["", "state norm peaks (uniform disturbance):"]
    peaks = {}
    for i, which in enumerate(("short", "long")):
        s = peaks[which] = burst_run(which, runs, seed + i)
        emit_csv(s.series, out_dir / f"burst_{which}.csv")
        lines.append(f"  {which}: peak {s.peak:.6g} +/- {s.peak_se:.3g} at t={s.peak_t} "
                     f"(jam window {s.window[0]}..{s.window[1] - 1}), final mean {s.final:.6g}")
    gap = peaks["long"].peak - peaks["short"].peak
    gap_se = math.hypot(peaks["long"].peak_se, peaks["short"].peak_se)
    lines.append(f"  long - short peak: {gap:.6g} (z = {gap / gap_se:.3f})")

    base, rows = countermeasure_study(runs, seed)
    bm, bse = _mean_se(base.state_norm)
    lines += ["", f"countermeasure study (horizon {presets.CM_HORIZON}, long burst):",
              f"  without: cumulative norm {bm:.6g} +/- {bse:.3g}, power {base.power.mean():.6g}",
              "  xi_c n_c t_c  cum_norm      diff        z      power"]
    for r in rows:
        z = r.diff / r.diff_se if r.diff_se > 0 else -math.inf
        lines.append(f"  {r.xi_c:4g} {r.n_c:3d} {r.t_c:3d}  {r.state_norm:10.6g}  {r.diff:10.6g}  {z:7.3f}  {r.power:9.6g}")
    lines.append(f"  power nondecreasing in xi_c: {power_monotone(rows)}")

    csv_lines = ["xi_c,n_c,t_c,state_norm,state_norm_se,power,diff,diff_se"]
    csv_lines.append(",".join(["0", "0", "0", fmt(bm), fmt(bse), fmt(base.power.mean()), "0", "0"]))
    for r in rows:
        csv_lines.append(",".join([fmt(r.xi_c), str(r.n_c), str(r.t_c), fmt(r.state_norm), fmt(r.state_norm_se),
                                   fmt(r.power), fmt(r.diff), fmt(r.diff_se)]))
    _write(out_dir / "countermeasure.csv", "\n".join(csv_lines) + "\n")

    manifest = {"base_seed": seed, "runs": runs, "burst_short_seed": seed, "burst_long_seed": seed + 1,
                "countermeasure_seed": seed, "key": ["base_seed", "run_index"],
                "streams": {"failure": 0, "disturbance": 1, "input_disturbance": 2}}
    _write(out_dir / "seeds.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    summary = "\n".join(lines) + "\n"
    _write(out_dir / "summary.txt", summary)
    return summary
