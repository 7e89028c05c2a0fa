"""Stationary scattering states of a one-dimensional square barrier.

The barrier occupies ``|y| < d`` with height ``V``.  A state of wavenumber
``k`` is normalised to a unit incident wave from the left::

    psi(y) = exp(iky) + A exp(-iky)        y < -d
           = B exp(iqy) + C exp(-iqy)      |y| < d
           = D exp(iky)                    y > d

with ``q**2 = k**2 - 2 m V``.  Every amplitude is an entire function of
``q**2``, so the formulas below are written in terms of ``z = q**2`` and the
even functions ``cos(q u)`` and ``sin(q u) / q``.  The same code path covers
tunnelling (``z < 0``), over-barrier motion (``z > 0``) and the branch point
``z = 0`` without any division by ``q``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BarrierSpec",
    "ScatteringState",
    "scattering_state",
    "eval_state",
    "eval_state_derivative",
    "amplitudes",
    "amplitude_derivatives",
    "boundary_values",
    "state_values",
]

# |q u| below this uses the power series of cos and sin(q u)/q
_SERIES_CUT = 0.1
_SERIES_TERMS = 10


@dataclass(frozen=True)
class BarrierSpec:
    """Square barrier ``V0 = k0**2 / 2m`` on ``|y| < d`` (units with hbar = 1)."""

    m: float = 1.0
    k0: float = 10.0
    d: float = 2.0

    def __post_init__(self):
        for name in ("m", "k0", "d"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"BarrierSpec.{name} must be finite (got {value!r})")
        if self.m <= 0:
            raise ValueError(f"invariant violated: m > 0 (got m={self.m})")
        if self.d <= 0:
            raise ValueError(f"invariant violated: d > 0 (got d={self.d})")
        if self.k0 < 0:
            raise ValueError(f"invariant violated: k0 >= 0 (got k0={self.k0})")

    @property
    def V0(self) -> float:
        return self.k0**2 / (2.0 * self.m)


def _cos_qu(z, u):
    """cos(sqrt(z) u), even in sqrt(z)."""
    z = np.asarray(z, dtype=complex)
    u = np.asarray(u, dtype=float)
    return np.cos(np.sqrt(z) * u)


def _sin_qu_over_q(z, u):
    """sin(sqrt(z) u) / sqrt(z); equals u at z = 0."""
    z, u = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(u, dtype=float))
    q = np.sqrt(z)
    x2 = z * u * u
    small = np.abs(q * u) < _SERIES_CUT
    out = np.empty(z.shape, dtype=complex)
    # sin(x)/x = sum (-1)^n x^(2n) / (2n+1)!
    if np.any(small):
        xs = x2[small]
        term = np.ones_like(xs)
        acc = np.ones_like(xs)
        for n in range(1, _SERIES_TERMS):
            term = -term * xs / ((2 * n) * (2 * n + 1))
            acc = acc + term
        out[small] = u[small] * acc
    big = ~small
    if np.any(big):
        out[big] = np.sin(q[big] * u[big]) / q[big]
    return out


def _dsin_qu_over_q_dz(z, u):
    """Derivative of sin(sqrt(z) u) / sqrt(z) with respect to z."""
    z, u = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(u, dtype=float))
    q = np.sqrt(z)
    x2 = z * u * u
    small = np.abs(q * u) < _SERIES_CUT
    out = np.empty(z.shape, dtype=complex)
    if np.any(small):
        # d/dz of u * sum (-1)^n (z u^2)^n / (2n+1)!  =  u^3 * sum_{n>=1} (-1)^n n x2^(n-1) / (2n+1)!
        xs = x2[small]
        coef = -1.0 / 6.0
        acc = coef * np.ones_like(xs)
        power = np.ones_like(xs)
        for n in range(2, _SERIES_TERMS):
            coef = -coef / ((2 * n) * (2 * n + 1)) * n / (n - 1)
            power = power * xs
            acc = acc + coef * power
        out[small] = u[small] ** 3 * acc
    big = ~small
    if np.any(big):
        qb, ub = q[big], u[big]
        out[big] = (qb * ub * np.cos(qb * ub) - np.sin(qb * ub)) / (2.0 * qb**3)
    return out


def _check_kV(k, V):
    k = np.asarray(k, dtype=float)
    V = np.asarray(V, dtype=float)
    if not (np.all(np.isfinite(k)) and np.all(np.isfinite(V))):
        raise ValueError("non-finite wavenumber or barrier height")
    if np.any(k <= 0):
        raise ValueError("wavenumber must be positive")
    return k, V


def amplitudes(k, V, spec: BarrierSpec):
    """Vectorised reflection and transmission amplitudes ``(A, D)``."""
    k, V = _check_kV(k, V)
    d, m = spec.d, spec.m
    z = (k * k - 2.0 * m * V).astype(complex)
    c = _cos_qu(z, 2 * d)
    s = _sin_qu_over_q(z, 2 * d)
    den = c - 1j * (k * k + z) / (2.0 * k) * s
    D = np.exp(-2j * k * d) / den
    A = -1j * (k * k - z) / (2.0 * k) * s * D
    return A, D


def amplitude_derivatives(k, V, spec: BarrierSpec, branch_window: float = 0.0):
    """Derivatives ``(dD/dV, dA/dV)`` at fixed ``k``.

    The expressions are analytic in ``q**2`` and stay accurate through the
    branch point.  ``branch_window`` > 0 emits a warning when some
    ``|q| d`` falls below it, for callers that want to know when the series
    branch was taken.
    """
    k, V = _check_kV(k, V)
    d, m = spec.d, spec.m
    z = (k * k - 2.0 * m * V).astype(complex)
    if branch_window > 0 and np.any(np.abs(np.sqrt(z)) * d < branch_window):
        warnings.warn("amplitude derivative evaluated inside the branch-point window", RuntimeWarning)
    c = _cos_qu(z, 2 * d)
    s = _sin_qu_over_q(z, 2 * d)
    ds = _dsin_qu_over_q_dz(z, 2 * d)
    dc = -d * s  # d cos(2qd)/dz = -d sin(2qd)/q
    g = (k * k + z) / (2.0 * k)
    den = c - 1j * g * s
    dden = dc - 1j * s / (2.0 * k) - 1j * g * ds
    phase = np.exp(-2j * k * d)
    D = phase / den
    dD_dz = -phase * dden / den**2
    h = (k * k - z) / (2.0 * k)
    dA_dz = -1j * (-s / (2.0 * k) * D + h * ds * D + h * s * dD_dz)
    dz_dV = -2.0 * m
    return dD_dz * dz_dV, dA_dz * dz_dV


@dataclass(frozen=True)
class ScatteringState:
    """One stationary state.

    ``B`` and ``C`` diverge like ``1/q`` at the branch point even though
    their combination stays finite; evaluation inside the barrier therefore
    goes through :func:`eval_state`, never through ``B`` and ``C``.
    """

    k: float
    V: float
    A: complex
    D: complex
    B: complex
    C: complex
    q: complex
    spec: BarrierSpec

    @property
    def z(self) -> complex:
        return complex(self.k**2 - 2.0 * self.spec.m * self.V)


def scattering_state(k: float, V: float, spec: BarrierSpec) -> ScatteringState:
    if not (math.isfinite(k) and math.isfinite(V)):
        raise ValueError("non-finite wavenumber or barrier height")
    if k <= 0:
        raise ValueError(f"wavenumber must be positive (got k={k})")
    A, D = amplitudes(np.array([k]), np.array([V]), spec)
    A, D = complex(A[0]), complex(D[0])
    z = complex(k * k - 2.0 * spec.m * V)
    q = complex(np.sqrt(z))
    d = spec.d
    if q != 0:
        B = D * np.exp(1j * (k - q) * d) * (q + k) / (2 * q)
        C = D * np.exp(1j * (k + q) * d) * (q - k) / (2 * q)
    else:
        B = C = complex("nan")
    return ScatteringState(k=k, V=V, A=A, D=D, B=complex(B), C=complex(C), q=q, spec=spec)


def _eval(state: ScatteringState, y, derivative: bool):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite position")
    k, d, A, D = state.k, state.spec.d, state.A, state.D
    z = state.z
    out = np.empty(y.shape, dtype=complex)
    left = y < -d
    right = y > d
    mid = ~(left | right)
    if derivative:
        out[left] = 1j * k * (np.exp(1j * k * y[left]) - A * np.exp(-1j * k * y[left]))
        out[right] = 1j * k * D * np.exp(1j * k * y[right])
        u = y[mid] - d
        out[mid] = D * np.exp(1j * k * d) * (-z * _sin_qu_over_q(z, u) + 1j * k * _cos_qu(z, u))
    else:
        out[left] = np.exp(1j * k * y[left]) + A * np.exp(-1j * k * y[left])
        out[right] = D * np.exp(1j * k * y[right])
        u = y[mid] - d
        out[mid] = D * np.exp(1j * k * d) * (_cos_qu(z, u) + 1j * k * _sin_qu_over_q(z, u))
    return out if out.ndim else complex(out)


def eval_state(state: ScatteringState, y):
    """Wavefunction value at ``y`` (scalar or array)."""
    return _eval(state, y, derivative=False)


def eval_state_derivative(state: ScatteringState, y):
    """Spatial derivative ``d psi / dy`` at ``y``."""
    return _eval(state, y, derivative=True)


def boundary_values(k, V, spec: BarrierSpec):
    """Stationary values and slopes at the barrier edges for every ``k``.

    Returns ``(f_left, df_left, f_right, df_right)`` evaluated at
    ``y = -d`` (outer side) and ``y = +d``.
    """
    k = np.asarray(k, dtype=float)
    A, D = amplitudes(k, V, spec)
    d = spec.d
    inc = np.exp(-1j * k * d)
    ref = A * np.exp(1j * k * d)
    f_left = inc + ref
    df_left = 1j * k * (inc - ref)
    f_right = D * np.exp(1j * k * d)
    df_right = 1j * k * f_right
    return f_left, df_left, f_right, df_right


def state_values(k, V, y, spec: BarrierSpec):
    """Values and slopes of the states ``psi_k`` on a (y, k) grid.

    Returns two complex arrays of shape ``(len(y), len(k))``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    A, D = amplitudes(k, V, spec)
    d = spec.d
    z = (k * k - 2.0 * spec.m * np.asarray(V, dtype=float)).astype(complex)
    K = k[None, :]
    Y = y[:, None]
    psi = np.empty((y.size, k.size), dtype=complex)
    dpsi = np.empty_like(psi)
    left = y < -d
    right = y > d
    mid = ~(left | right)
    if left.any():
        inc = np.exp(1j * K * Y[left])
        ref = A[None, :] / inc
        psi[left] = inc + ref
        dpsi[left] = 1j * K * (inc - ref)
    if right.any():
        tr = D[None, :] * np.exp(1j * K * Y[right])
        psi[right] = tr
        dpsi[right] = 1j * K * tr
    if mid.any():
        u = Y[mid] - d
        zz = np.broadcast_to(z[None, :], (u.shape[0], k.size))
        uu = np.broadcast_to(u, zz.shape)
        cq = _cos_qu(zz, uu)
        sq = _sin_qu_over_q(zz, uu)
        pref = (D * np.exp(1j * k * d))[None, :]
        psi[mid] = pref * (cq + 1j * K * sq)
        dpsi[mid] = pref * (-zz * sq + 1j * K * cq)
    return psi, dpsi
