import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jamsim.attacks import (SleepJamParams, UnreachableTarget, constant_strategy, explicit_strategy,
                            inverse_failure_probability, sleep_jam_strategy)
from jamsim.channel import failure_probability, verify_assumption1, verify_assumption2
from jamsim.model import ChannelParams, ModelError


def bisect_inverse(target, channel):
    # plain fixed-bracket bisection, used as the oracle
    lo, hi = 0.0, 1e9
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if failure_probability(mid, channel) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_explicit_schedules():
    short = explicit_strategy(960, 40, 32).trace(1100)
    assert np.all(short[960:1000] == 32) and short.sum() == 1280
    long = explicit_strategy(1440, 60, 32).trace(1600)
    assert np.flatnonzero(long).tolist() == list(range(1440, 1500))
    np.testing.assert_array_equal(explicit_strategy(0, 5, 7).trace(8), [7] * 5 + [0] * 3)


def test_explicit_periodic():
    v = explicit_strategy(2, 1, 4.0, period=4).trace(12)
    np.testing.assert_array_equal(v, [0, 0, 4, 0] * 3)
    with pytest.raises(ValueError):
        explicit_strategy(3, 2, 1.0, period=4)
    with pytest.raises(ValueError):
        explicit_strategy(0, 0, 1.0)


def test_constant_strategy_budgets():
    s = constant_strategy(3.0)
    v = s.trace(500)
    assert verify_assumption2(v, 0.0, 3.0)
    res = verify_assumption1(v, 0.0, 2.9)
    assert not res.passed and res.horizon == 1


def test_zero_power_still_fails_at_noise_rate(bench_channel):
    s = constant_strategy(0.0)
    assert failure_probability(s.trace(10), bench_channel).min() > 0


def test_inverse_matches_oracle(bench_channel):
    for target in (0.05, 0.3, 0.9, 0.9999):
        v = inverse_failure_probability(target, bench_channel)
        assert v == pytest.approx(bisect_inverse(target, bench_channel), rel=1e-8, abs=1e-8)
        assert failure_probability(v, bench_channel) == pytest.approx(target, abs=1e-9)


def test_inverse_unreachable(bench_channel):
    with pytest.raises(UnreachableTarget, match="noise floor"):
        inverse_failure_probability(0.001, bench_channel)
    with pytest.raises(UnreachableTarget):
        inverse_failure_probability(1.0, bench_channel)


def test_sleep_jam_small_target_level(bench_channel):
    s = sleep_jam_strategy(SleepJamParams(1.28, 0.8, 0.4, 0.5, 1.1), bench_channel)
    assert s.params["tau2"] == 1


def test_sleep_jam_reference_case(bench_channel):
    s = sleep_jam_strategy(SleepJamParams(1.28, 0.9, 10.0, 0.5, 1.1), bench_channel)
    tau1, tau2, vstar = s.params["tau1"], s.params["tau2"], s.params["vstar"]
    assert tau2 == 32
    assert tau2 == math.floor(math.log(20) / math.log(1.1)) + 1
    assert failure_probability(vstar - 1, bench_channel) == pytest.approx(0.9 ** (1 / 32), abs=1e-9)
    assert vstar - 1 == pytest.approx(bisect_inverse(0.9 ** (1 / 32), bench_channel), rel=1e-8)
    assert verify_assumption1(s.trace(tau1 + tau2), 0.0, 1.28)


def test_sleep_jam_rejects_bad_params():
    with pytest.raises(ModelError):
        SleepJamParams(1.28, 1.0, 10, 0.5, 2.0)
    with pytest.raises(ModelError):
        SleepJamParams(1.28, 0.5, 10, 0.5, 0.9)


@settings(max_examples=60, deadline=None)
@given(vbar=st.floats(0.05, 20), rho=st.floats(0.05, 0.95), z=st.floats(0.1, 100),
       wstar=st.floats(0.05, 5), A=st.floats(1.05, 4))
def test_sleep_jam_respects_budget(vbar, rho, z, wstar, A):
    channel = ChannelParams(1.0, 3.0, 0.4)
    s = sleep_jam_strategy(SleepJamParams(vbar, rho, z, wstar, A), channel)
    p = s.params
    assert p["tau2"] >= 1 and p["tau1"] >= 1
    assert A ** p["tau2"] * wstar > z or p["tau2"] == 1
    v = s.trace(p["tau1"] + p["tau2"] + 10)
    assert verify_assumption1(v, 0.0, vbar)
    assert failure_probability(p["vstar"], channel) ** p["tau2"] > rho
