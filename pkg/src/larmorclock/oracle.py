"""Brute-force grid propagation of the spinor, used only as an independent check.

Each spin component obeys ``i psi_t = -psi_yy / 2m + V_pm psi`` on a uniform
grid with hard walls far away.  Time stepping is Crank-Nicolson with the
fourth-order Numerov correction in space::

    (M + i dt/2 MH) psi^{n+1} = (M - i dt/2 MH) psi^n,
    M = tridiag(1, 10, 1) / 12,  MH = -Lap / 2m + M V

so every step is a single tridiagonal solve.  Components with different
barrier heights are stacked as independent blocks of one tridiagonal system.
Nothing here touches the stationary-state machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .packet import PacketSpec, spin_heights
from .scattering import BarrierSpec

__all__ = [
    "GridSpec",
    "SpinorField",
    "OracleError",
    "free_gaussian",
    "initial_field",
    "propagate",
    "oracle_series",
    "default_grid",
]


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    y_min: float = -90.0
    y_max: float = 90.0
    n_y: int = 18001
    dt: float = 2e-4

    def __post_init__(self):
        if not self.y_max > self.y_min:
            raise ValueError("invariant violated: y_max > y_min")
        if self.n_y < 3:
            raise ValueError("invariant violated: n_y >= 3")
        if self.spacing > 0.02 + 1e-12:
            raise ValueError(f"invariant violated: grid spacing <= 0.02 (got {self.spacing:.4g})")
        if not self.dt > 0:
            raise ValueError("invariant violated: dt > 0")

    @property
    def spacing(self) -> float:
        return (self.y_max - self.y_min) / (self.n_y - 1)

    @property
    def y(self) -> np.ndarray:
        return self.y_min + self.spacing * np.arange(self.n_y)


def default_grid(barrier: BarrierSpec, packet: PacketSpec, t_max: float, h: float = 0.01,
                 dt: float = 2e-4) -> GridSpec:
    """A grid wide enough for the packet to stay clear of the walls up to ``t_max``."""
    v = (packet.k_av + 8 * packet.sigma_k) / barrier.m
    spread = packet.delta * math.sqrt(1 + (t_max / (2 * barrier.m * packet.delta**2)) ** 2)
    reach = max(abs(packet.y0) + v * t_max, barrier.d) + 12 * spread + 5.0
    half = h * math.ceil(reach / h)
    return GridSpec(-half, half, int(round(2 * half / h)) + 1, dt)


@dataclass
class SpinorField:
    """``(psi_plus, psi_minus)`` on the grid; the physical spinor carries a 1/sqrt(2)."""

    t: float
    plus: np.ndarray
    minus: np.ndarray


def free_gaussian(y, t, packet: PacketSpec, m: float = 1.0):
    """Closed-form free evolution of the packet (no barrier)."""
    y = np.asarray(y, dtype=float)
    delta, kav = packet.delta, packet.k_av
    norm = (2 * delta**2 / (4 * math.pi**3)) ** 0.25
    s = delta**2 + 0.5j * t / m
    x = y - packet.y0
    return (
        norm
        * np.sqrt(math.pi / s)
        * np.exp(-((x - kav * t / m) ** 2) / (4 * s))
        * np.exp(1j * kav * x - 0.5j * kav**2 * t / m)
    )


def initial_field(grid: GridSpec, packet: PacketSpec, m: float = 1.0) -> SpinorField:
    phi = free_gaussian(grid.y, 0.0, packet, m)
    return SpinorField(0.0, phi.copy(), phi.copy())


def _potential(y, h, barrier: BarrierSpec, V):
    inside = np.abs(y) < barrier.d - 0.5 * h
    edge = np.abs(np.abs(y) - barrier.d) < 0.5 * h
    return np.where(inside, V, 0.0) + np.where(edge, 0.5 * V, 0.0)


def _check_aligned(grid: GridSpec, barrier: BarrierSpec):
    h = grid.spacing
    for edge in (-barrier.d, barrier.d):
        r = (edge - grid.y_min) / h
        if abs(r - round(r)) > 1e-6:
            raise ValueError(f"barrier edge {edge} is not on the grid")


def _stepper(fields, heights, grid: GridSpec, barrier: BarrierSpec, n_steps, record_every, norm_tol):
    """Advance stacked components; yield ``(step, blocks)`` every ``record_every`` steps."""
    _check_aligned(grid, barrier)
    n, h, m = grid.n_y, grid.spacing, barrier.m
    nb = len(heights)
    y = grid.y
    V = np.concatenate([_potential(y, h, barrier, v) for v in heights])
    kin = 1.0 / (2.0 * m * h * h)
    diag_MH = 2.0 * kin + V * (10.0 / 12.0)
    up_MH = -kin + V[1:] / 12.0
    lo_MH = -kin + V[:-1] / 12.0
    couple = np.ones(n * nb - 1)
    couple[n - 1 :: n] = 0.0  # no coupling between blocks
    up_MH *= couple
    lo_MH *= couple
    m_off = couple / 12.0
    a = 0.5j * grid.dt
    dl, d, du, du2, ipiv, info = lapack.zgttrf(m_off + a * lo_MH, 10.0 / 12.0 + a * diag_MH, m_off + a * up_MH)
    if info != 0:
        raise OracleError(f"tridiagonal factorisation failed (info={info})")
    b_lo, b_d, b_up = m_off - a * lo_MH, 10.0 / 12.0 - a * diag_MH, m_off - a * up_MH
    psi = np.concatenate(fields).astype(complex)
    norm0 = np.sum(np.abs(psi) ** 2) * h
    for step in range(n_steps + 1):
        if step % record_every == 0 or step == n_steps:
            norm = np.sum(np.abs(psi) ** 2) * h
            if abs(norm - norm0) > norm_tol * norm0:
                raise OracleError(f"invariant violated: norm drift {abs(norm - norm0):.2e} > {norm_tol:g}")
            yield step, psi.reshape(nb, n)
        if step == n_steps:
            return
        rhs = b_d * psi
        rhs[:-1] += b_up * psi[1:]
        rhs[1:] += b_lo * psi[:-1]
        psi, info = lapack.zgttrs(dl, d, du, du2, ipiv, rhs)
        if info != 0:
            raise OracleError(f"tridiagonal solve failed (info={info})")


def _steps(grid, t_max, every):
    n_steps = int(round(t_max / grid.dt))
    if abs(n_steps * grid.dt - t_max) > 1e-9 * max(1.0, t_max):
        raise ValueError("t_max must be a multiple of dt")
    rec = max(1, int(round(every / grid.dt)))
    return n_steps, rec


def propagate(initial: SpinorField, omega: float, grid: GridSpec, t_max: float, barrier: BarrierSpec,
              snapshot_every: float | None = None, norm_tol: float = 1e-6) -> list[SpinorField]:
    """Propagate one spinor; returns snapshots every ``snapshot_every`` (default: start and end)."""
    heights = spin_heights(barrier.V0, omega)
    n_steps, rec = _steps(grid, t_max, snapshot_every or t_max)
    out = []
    for step, blocks in _stepper([initial.plus, initial.minus], heights, grid, barrier, n_steps, rec, norm_tol):
        out.append(SpinorField(initial.t + step * grid.dt, blocks[0].copy(), blocks[1].copy()))
    return out


def _region_weights(grid: GridSpec, barrier: BarrierSpec):
    y, h = grid.y, grid.spacing
    d = barrier.d
    on_edge = lambda e: np.abs(y - e) < 0.5 * h
    w1 = np.where(y < -d - 0.5 * h, h, 0.0) + np.where(on_edge(-d), 0.5 * h, 0.0)
    w3 = np.where(y > d + 0.5 * h, h, 0.0) + np.where(on_edge(d), 0.5 * h, 0.0)
    return w1, w3


def oracle_series(omegas, t_max, grid: GridSpec, barrier: BarrierSpec, packet: PacketSpec,
                  sample_every: float = 0.05, norm_tol: float = 1e-6, boundary_tol: float = 1e-10):
    """Region moments versus time for each omega, in the ``series.csv`` layout.

    Returns a structured array with fields t, omega, P1, P2, P3, Nx1, Ny1,
    Nz1, Nx3, Ny3, Nz3.
    """
    from .observables import SPIN_PHASE_SIGN

    omegas = list(omegas)
    heights = sorted({v for om in omegas for v in spin_heights(barrier.V0, om)})
    col = {v: i for i, v in enumerate(heights)}
    phi = initial_field(grid, packet, barrier.m).plus
    n_steps, rec = _steps(grid, t_max, sample_every)
    w1, w3 = _region_weights(grid, barrier)
    h = grid.spacing
    names = ["t", "omega", "P1", "P2", "P3", "Nx1", "Ny1", "Nz1", "Nx3", "Ny3", "Nz3"]
    rows = []
    last = None
    for step, blocks in _stepper([phi] * len(heights), heights, grid, barrier, n_steps, rec, norm_tol):
        t = step * grid.dt
        for om in omegas:
            vp, vm = spin_heights(barrier.V0, om)
            p, q = blocks[col[vp]], blocks[col[vm]]
            pp, qq = np.abs(p) ** 2, np.abs(q) ** 2
            cross = np.conj(p) * q
            total = 0.5 * h * np.sum(pp + qq)
            r = []
            for w in (w1, w3):
                M = 0.5 * np.sum(w * cross)
                r.append((0.5 * np.sum(w * (pp + qq)), M.real, SPIN_PHASE_SIGN * M.imag, 0.25 * np.sum(w * (pp - qq))))
            (P1, nx1, ny1, nz1), (P3, nx3, ny3, nz3) = r
            rows.append((t, om, P1, total - P1 - P3, P3, nx1, ny1, nz1, nx3, ny3, nz3))
        last = blocks
    edge = max(float(np.max(np.abs(last[:, [0, -1]]) ** 2)), 0.0)
    if edge > boundary_tol:
        raise OracleError(f"invariant violated: boundary density {edge:.2e} > {boundary_tol:g}; widen the grid")
    return np.array(rows, dtype=[(n, float) for n in names])
