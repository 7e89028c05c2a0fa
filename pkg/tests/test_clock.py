import math

import numpy as np
import pytest
from scipy.integrate import cumulative_simpson

from larmorclock.clock import (
    ClockError,
    _even,
    _odd,
    clamped_weight,
    clock_time_x,
    clock_time_y,
    excluded_weight,
    extract_orders,
    tau_x_of_t,
    tau_y_of_t,
    tau_z_diagnostic,
    time_R_kspace,
    time_y_kspace,
)
from larmorclock.observables import RegionId, SpinMoments, TimeSeriesBundle, ratio_R
from larmorclock.packet import PacketSpec, build_kgrid
from larmorclock.scattering import BarrierSpec, amplitude_derivatives, amplitudes

W1, W2 = 5e-4, 1e-3
T = np.linspace(0.0, 20.0, 8001)


def manufactured(tau_star, omega, *, w4=0.3, neg=0.0):
    """Region-3 bundle whose exact y- and x-prescriptions both return tau_star(t).

    Rates follow dp0 = g, dny1 = -tau g / 2 and dp2 - 2 dnx2 = tau^2 g / 2,
    with an omega^4 contamination that the Richardson step has to remove.
    """
    g = np.exp(-((T - 6.0) ** 2) / 2.0) / math.sqrt(2 * math.pi)
    tau = tau_star(T)
    dnx2 = 0.1 * g
    dp2 = tau**2 * g / 2 + 2 * dnx2 - neg * g
    rates = SpinMoments(
        P=g + omega**2 * dp2 + omega**4 * w4 * g,
        Nx=g / 2 + omega**2 * dnx2 - omega**4 * w4 * g,
        Ny=omega * (-tau * g / 2) + omega**3 * w4 * g,
        Nz=omega * 0.2 * g,
    )
    acc = lambda f: cumulative_simpson(f, x=T, initial=0.0)
    region3 = SpinMoments(*(acc(getattr(rates, n)) for n in ("P", "Nx", "Ny", "Nz")))
    zero = SpinMoments(*(np.zeros_like(T) for _ in range(4)))
    return TimeSeriesBundle(omega, T, zero, region3, zero, rates, {})


def manufactured_orders(tau_star, **kw):
    b = [manufactured(tau_star, w, **kw) for w in (0.0, W1, W2)]
    return extract_orders(*b, RegionId.BEYOND)


def expected_time(tau_star):
    g = np.exp(-((T - 6.0) ** 2) / 2.0)
    return np.trapezoid(tau_star(T) * g, T) / np.trapezoid(g, T)


@pytest.mark.parametrize(
    "tau_star",
    [lambda t: 3.5 + 0 * t, lambda t: 1.0 + 0.5 * np.sin(t), lambda t: 0.2 + 0.1 * t],
    ids=["constant", "oscillating", "linear"],
)
def test_manufactured_round_trip(tau_star):
    o = manufactured_orders(tau_star)
    active = o.active
    assert np.max(np.abs(tau_y_of_t(o)[active] - tau_star(T)[active]) / tau_star(T)[active]) < 1e-3
    assert np.max(np.abs(tau_x_of_t(o)[active] - tau_star(T)[active]) / tau_star(T)[active]) < 1e-3
    ref = expected_time(tau_star)
    assert clock_time_x(o) == pytest.approx(ref, rel=1e-3)
    endpoint, integral = clock_time_y(o)
    assert endpoint == pytest.approx(ref, rel=1e-3)
    assert integral == pytest.approx(ref, rel=1e-3)
    assert not o.omega_too_large


def test_richardson_is_exact_on_polynomials():
    c1, c3, c2, c4 = 1.7, -40.0, 0.3, 55.0
    f = lambda w: c1 * w + c3 * w**3
    est, *_ = _odd(f(W1), f(W2), W1, W2)
    assert est == pytest.approx(c1, rel=1e-12)
    g = lambda w: 2.0 + c2 * w**2 + c4 * w**4
    est, *_ = _even(g(0.0), g(W1), g(W2), W1, W2)
    assert est == pytest.approx(c2, rel=1e-6)


def test_ratio_relation_identity():
    o = manufactured_orders(lambda t: 1.0 + 0.5 * np.sin(t))
    R = ratio_R(o, W2)
    ty, tx = tau_y_of_t(o), tau_x_of_t(o)
    m = np.isfinite(R)
    assert np.allclose(R[m], W2**2 * (ty[m] ** 2 - tx[m] ** 2), rtol=1e-8, atol=1e-18)


def test_omega_too_large_flag():
    o = manufactured_orders(lambda t: 2.0 + 0 * t, w4=1e5)
    assert o.omega_too_large
    assert o.omega_discrepancy > 0.01


def test_negative_radicand_raises_and_reports():
    o = manufactured_orders(lambda t: 0.5 + 0 * t, neg=1.0)
    assert clamped_weight(o) > 0.5
    with pytest.raises(ClockError):
        tau_x_of_t(o)
    mild = manufactured_orders(lambda t: 0.5 + 0 * t, neg=0.0)
    assert clamped_weight(mild) == 0.0


def test_noise_floor_excludes_tails():
    o = manufactured_orders(lambda t: 3.0 + 0 * t)
    assert not o.active[-1] and o.active[np.argmin(np.abs(T - 6.0))]
    assert np.isnan(tau_y_of_t(o)[-1])
    assert 0 < excluded_weight(o) < 1e-6


def test_tau_z_zero_without_precession():
    o = manufactured_orders(lambda t: 3.0 + 0 * t)
    o.nz1 = np.zeros_like(o.nz1)
    tz = tau_z_diagnostic(o, 3.0, 3.0)
    assert tz.tau_z == 0.0
    assert not tz.buttiker_relation_holds


def test_extract_orders_validates_input():
    b = [manufactured(lambda t: 1 + 0 * t, w) for w in (0.0, W1, W2)]
    with pytest.raises(ValueError):
        extract_orders(b[0], b[1], b[1], RegionId.BEYOND)
    with pytest.raises(ValueError):
        extract_orders(b[1], b[0], b[2], RegionId.BEYOND)


def test_kspace_independent_of_start():
    b = BarrierSpec()
    g = build_kgrid(PacketSpec(), 8192, 8.0, barrier=b)
    a = time_y_kspace(g, b, PacketSpec(y0=-15.0))
    c = time_y_kspace(g, b, PacketSpec(y0=-25.0))
    assert a == pytest.approx(c, rel=1e-6)


def test_kspace_monochromatic_limit():
    b = BarrierSpec()
    p = PacketSpec(delta=1000.0)
    g = build_kgrid(p, 4096, 8.0, barrier=b)
    k = np.array([p.k_av])
    _, D = amplitudes(k, b.V0, b)
    dD, _ = amplitude_derivatives(k, b.V0, b)
    point = float(-np.imag(np.conj(D) * dD)[0] / abs(D[0]) ** 2)
    assert time_y_kspace(g, b, p) == pytest.approx(point, rel=1e-3)


def test_kspace_reflection_finite():
    b = BarrierSpec()
    g = build_kgrid(PacketSpec(), 4096, 8.0, barrier=b)
    assert 0 < time_R_kspace(g, b, PacketSpec()) < 5
