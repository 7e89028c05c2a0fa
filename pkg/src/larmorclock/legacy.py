"""Probability-based times: dwell time and the transmitted/reflected averages.

All quantities are plain reductions of the omega = 0 region probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .observables import TimeSeriesBundle

__all__ = [
    "LegacyTimes",
    "LegacyError",
    "dwell_time",
    "epsilon_start",
    "legacy_transmission_time",
    "legacy_reflection_time",
    "legacy_times",
]

MIN_FRACTION = 1e-4


class LegacyError(ValueError):
    pass


@dataclass
class LegacyTimes:
    tau_D: float
    tau_eps: float
    tau_T_legacy: float | None
    tau_R_legacy: float | None
    epsilon: float
    t1: float
    t3: float
    clipped: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.tau_D > 0:
            raise LegacyError(f"invariant violated: tau_D > 0 (got {self.tau_D})")
        if not self.tau_eps >= 0:
            raise LegacyError(f"invariant violated: tau_eps >= 0 (got {self.tau_eps})")
        for name in ("tau_T_legacy", "tau_R_legacy"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise LegacyError(f"invariant violated: {name} finite")


def dwell_time(bundle: TimeSeriesBundle, tol: float = 1e-5) -> float:
    """Time-integrated barrier occupation; the series must have emptied the barrier."""
    P2 = bundle.P2
    if abs(P2[-1]) >= tol:
        raise LegacyError(f"invariant violated: P2(t_max) < {tol:g} (got {P2[-1]:.3e}); extend t_max")
    return float(np.trapezoid(P2, bundle.times))


def epsilon_start(bundle: TimeSeriesBundle, epsilon: float = 0.01) -> float:
    """Smallest grid time by which a fraction ``epsilon`` of the dwell time has accrued."""
    if not 0 < epsilon <= 0.1:
        raise ValueError(f"epsilon must lie in (0, 0.1] (got {epsilon})")
    P2 = bundle.P2
    total = np.trapezoid(P2, bundle.times)
    cum = cumulative_trapezoid(P2, bundle.times, initial=0.0)
    i = int(np.argmax(cum >= epsilon * total))
    return float(bundle.times[i])


def _average_remaining(times, P, final, start, label):
    if final < MIN_FRACTION:
        raise LegacyError(f"{label} probability {final:.3e} below {MIN_FRACTION:g}; time undefined")
    keep = times >= start
    t = times[keep]
    raw = 1.0 - P[keep] / final
    clipped = np.clip(raw, 0.0, 1.0)
    moved = float(np.trapezoid(np.abs(raw - clipped), t))
    return float(np.trapezoid(clipped, t)), moved


def legacy_transmission_time(bundle: TimeSeriesBundle, t3: float) -> tuple[float, float]:
    """``int_{t3} (1 - P3/T) dt`` with ``T = P3(t_max)``.

    Returns the time and the weight removed by clipping the integrand to
    ``[0, 1]``.
    """
    P3 = bundle.region3.P
    return _average_remaining(bundle.times, P3, float(P3[-1]), t3, "transmission")


def legacy_reflection_time(bundle: TimeSeriesBundle, t1: float) -> tuple[float, float]:
    """Reflection analogue using ``P1`` and ``R = P1(t_max)``.

    ``P1`` starts at one, so the early integrand is negative; it is clipped
    to ``[0, 1]`` and the removed weight is returned alongside the time.
    """
    P1 = bundle.region1.P
    return _average_remaining(bundle.times, P1, float(P1[-1]), t1, "reflection")


def legacy_times(bundle: TimeSeriesBundle, epsilon: float = 0.01, t1=None, t3=None) -> LegacyTimes:
    tau_D = dwell_time(bundle)
    tau_eps = epsilon_start(bundle, epsilon)
    t1 = tau_eps if t1 is None else t1
    t3 = tau_eps if t3 is None else t3
    clipped = {}
    try:
        tau_T, clipped["transmission"] = legacy_transmission_time(bundle, t3)
    except LegacyError:
        tau_T = None
    try:
        tau_R, clipped["reflection"] = legacy_reflection_time(bundle, t1)
    except LegacyError:
        tau_R = None
    return LegacyTimes(tau_D, tau_eps, tau_T, tau_R, epsilon, t1, t3, clipped)
