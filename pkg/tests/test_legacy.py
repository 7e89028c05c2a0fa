import numpy as np
import pytest

from larmorclock.legacy import (
    LegacyError,
    LegacyTimes,
    dwell_time,
    epsilon_start,
    legacy_reflection_time,
    legacy_times,
    legacy_transmission_time,
)
from larmorclock.observables import SpinMoments, TimeSeriesBundle

T = np.linspace(0.0, 10.0, 10001)


def bundle(P1, P3):
    z = np.zeros_like(T)
    return TimeSeriesBundle(0.0, T, SpinMoments(P1, z, z, z), SpinMoments(P3, z, z, z), None, None, {})


def smooth_case(Tfrac=0.3):
    # packet enters the barrier around t=2 and leaves around t=4
    inside = np.exp(-((T - 3.0) ** 2) / 0.5)
    out = 0.5 * (1 + np.tanh((T - 3.0) / 0.3))
    P3 = Tfrac * out
    P1 = np.clip(1.0 - P3 - 0.2 * inside, 0, 1)
    P1[-1] = 1.0 - P3[-1]
    return bundle(P1, P3)


def test_step_function_transmission():
    t_star, t3 = 4.0, 1.5
    P3 = np.where(T >= t_star, 0.25, 0.0)
    b = bundle(1.0 - P3, P3)
    tau, clipped = legacy_transmission_time(b, t3)
    assert tau == pytest.approx(t_star - t3, abs=2e-3)
    assert clipped == 0.0


def test_sensitivity_to_lower_limit():
    P3 = np.where(T >= 4.0, 0.25, 0.0)
    b = bundle(1.0 - P3, P3)
    a, _ = legacy_transmission_time(b, 1.0)
    c, _ = legacy_transmission_time(b, 1.5)
    assert (c - a) / 0.5 == pytest.approx(-1.0, abs=1e-9)


def test_zero_dwell():
    b = bundle(np.ones_like(T), np.zeros_like(T))
    assert dwell_time(b) == 0.0
    with pytest.raises(LegacyError):
        LegacyTimes(0.0, 0.0, None, None, 0.01, 0.0, 0.0)


def test_dwell_and_epsilon():
    b = smooth_case()
    tau_D = dwell_time(b)
    assert tau_D == pytest.approx(0.2 * np.sqrt(0.5 * np.pi), rel=1e-4)
    e1, e2 = epsilon_start(b, 0.01), epsilon_start(b, 0.02)
    assert e2 >= e1
    assert 1.0 < e1 < 3.0
    tiny = epsilon_start(b, 1e-9)
    assert tiny <= T[np.argmax(b.P2 > 1e-12)] + 0.5
    with pytest.raises(ValueError):
        epsilon_start(b, 0.5)


def test_dwell_independent_of_lower_limit():
    b = smooth_case()
    first = T[np.argmax(b.P2 > 1e-10)]
    keep = T >= first
    assert abs(np.trapezoid(b.P2[keep], T[keep]) - dwell_time(b)) < 1e-8


def test_incomplete_series_rejected():
    P3 = np.zeros_like(T)
    P1 = np.full_like(T, 0.9)
    with pytest.raises(LegacyError, match="P2"):
        dwell_time(bundle(P1, P3))


def test_reflection_clipped_and_reported():
    b = smooth_case()
    tau, clipped = legacy_reflection_time(b, 0.0)
    assert np.isfinite(tau) and clipped > 0


def test_small_fractions_rejected():
    P3 = np.full_like(T, 1e-6)
    b = bundle(1.0 - P3, P3)
    with pytest.raises(LegacyError, match="transmission"):
        legacy_transmission_time(b, 0.0)
    out = legacy_times(smooth_case(Tfrac=1e-6), 0.01)
    assert out.tau_T_legacy is None and out.tau_R_legacy is not None
