# ----------------------------------------------------------------
# RapidStab 1.0 - Saint-Venant Oracle (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

"""Simplified Saint-Venant system h_t + v_x = 0, v_t + h_x = -u, h(t,0) = v(t,1) = 0.

Everything runs on the Riemann invariants R¹ = h_x + v_x, R² = h_x - v_x stored at
the centers of M cells, advanced by the exact shift dt = dx. The explicit
transformation maps R¹ to e^{-λx}R¹/cosh λ and R² to e^{λx}R²/cosh λ.
"""

# Standard library imports
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

# Third party imports
import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

# Local application imports
from errors import UsageError
from report_io import write_csv
from spectral_core import FloatArray

logger = logging.getLogger(__name__)

ROUND_TRIP = 2.0
SV_TRACE_COLUMNS = ["t", "energy", "u"]


# =============================================================================
# GRID
# =============================================================================


@dataclass(frozen=True, eq=False)
class RiemannGrid:
    M: int
    R1: FloatArray = field(repr=False)
    R2: FloatArray = field(repr=False)
    decay: float

    def __post_init__(self) -> None:
        if self.M < 3:
            raise UsageError("The Saint-Venant grid needs at least three cells")
        if self.R1.shape != (self.M,) or self.R2.shape != (self.M,):
            raise ValueError("R1 and R2 must hold one value per cell")

    @property
    def dx(self) -> float:
        return 1.0 / self.M

    @property
    def dt(self) -> float:
        return self.dx

    @property
    def centers(self) -> FloatArray:
        return (np.arange(self.M) + 0.5) * self.dx

    @property
    def nodes(self) -> FloatArray:
        return np.linspace(0.0, 1.0, self.M + 1)

    @classmethod
    def from_hv(cls, h: FloatArray, v: FloatArray, decay: float) -> "RiemannGrid":
        """Cell differences of nodal (h, v) on M + 1 uniform nodes"""
        h = np.asarray(h, dtype=float)
        v = np.asarray(v, dtype=float)
        M = h.size - 1
        H = np.diff(h) * M
        V = np.diff(v) * M
        return cls(M=M, R1=H + V, R2=H - V, decay=decay)


def smooth_profile(M: int, h_amplitude: float = 1.0, v_amplitude: float = 0.5) -> Tuple[FloatArray, FloatArray]:
    """h = a·sin(πx), v = b·cos(πx/2) on the nodes; h(0) = v(1) = 0"""
    x = np.linspace(0.0, 1.0, M + 1)
    v = v_amplitude * np.cos(0.5 * np.pi * x)
    v[-1] = 0.0
    return h_amplitude * np.sin(np.pi * x), v


def reflection_coefficient(decay: float) -> float:
    """(tanh λ - 1)/(tanh λ + 1), equal to -e^{-2λ}"""
    th = math.tanh(decay)
    return (th - 1.0) / (th + 1.0)


def feedback_sv(grid: RiemannGrid) -> float:
    """u = -tanh(λ)v_x(1) with v_x(1) = (R¹ - R²)(1)/2 and R²(1) given by the reflection"""
    r1 = float(grid.R1[-1])
    r2 = reflection_coefficient(grid.decay) * r1
    return -math.tanh(grid.decay) * 0.5 * (r1 - r2)


def feedback_hv(h: FloatArray, v: FloatArray, decay: float) -> float:
    """K(h, v) = -tanh(λ)v_x(1), second-order one-sided difference on the nodes"""
    dx = 1.0 / (np.asarray(v).size - 1)
    vx = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dx)
    return -math.tanh(decay) * float(vx)


# =============================================================================
# STEPPING
# =============================================================================


def step_sv(grid: RiemannGrid) -> RiemannGrid:
    """Exact shift: R¹ one cell right, R² one cell left, then both boundary relations"""
    R1 = np.empty_like(grid.R1)
    R2 = np.empty_like(grid.R2)
    R1[1:] = grid.R1[:-1]
    R2[:-1] = grid.R2[1:]
    R1[0] = grid.R2[0]  # (R¹ - R²)(t, 0) = 0
    R2[-1] = reflection_coefficient(grid.decay) * grid.R1[-1]
    return replace(grid, R1=R1, R2=R2)


def transform_riemann(grid: RiemannGrid) -> RiemannGrid:
    x = grid.centers
    c = math.cosh(grid.decay)
    return replace(grid, R1=np.exp(-grid.decay * x) * grid.R1 / c, R2=np.exp(grid.decay * x) * grid.R2 / c)


def step_target_sv(grid: RiemannGrid) -> RiemannGrid:
    """Exact shift of the damped target with R̃¹(0) = R̃²(0) and R̃²(1) = -R̃¹(1)"""
    damp = math.exp(-grid.decay * grid.dx)
    R1 = np.empty_like(grid.R1)
    R2 = np.empty_like(grid.R2)
    R1[1:] = damp * grid.R1[:-1]
    R2[:-1] = damp * grid.R2[1:]
    R1[0] = damp * grid.R2[0]
    R2[-1] = -damp * grid.R1[-1]
    return replace(grid, R1=R1, R2=R2)


def reconstruct_hv(grid: RiemannGrid) -> Tuple[FloatArray, FloatArray]:
    """Nodal (h, v) from H = (R¹+R²)/2, V = (R¹-R²)/2 with h(0) = 0 and v(1) = 0"""
    H = 0.5 * (grid.R1 + grid.R2)
    V = 0.5 * (grid.R1 - grid.R2)
    h = np.concatenate([[0.0], np.cumsum(H) * grid.dx])
    v = np.concatenate([-np.cumsum(V[::-1])[::-1] * grid.dx, [0.0]])
    return h, v


def energy(grid: RiemannGrid) -> float:
    return float(grid.dx * np.sum(grid.R1**2 + grid.R2**2))


def weighted_energy(grid: RiemannGrid) -> float:
    """∫ (e^{-λx}R¹)² + (e^{λx}R²)² dx"""
    x = grid.centers
    w = np.exp(2.0 * grid.decay * x)
    return float(grid.dx * np.sum(grid.R1**2 / w + w * grid.R2**2))


# =============================================================================
# EXPLICIT TRANSFORMATION
# =============================================================================


def explicit_transform_sv(h: FloatArray, v: FloatArray, decay: float) -> Tuple[FloatArray, FloatArray]:
    """Integral form of the transformation on nodal data, trapezoidal quadrature"""
    h = np.asarray(h, dtype=float)
    v = np.asarray(v, dtype=float)
    scale = max(float(np.max(np.abs(h))), float(np.max(np.abs(v))), 1.0)
    if abs(h[0]) > 1e-12 * scale or abs(v[-1]) > 1e-12 * scale:
        raise ValueError("explicit_transform_sv expects h(0) = 0 and v(1) = 0")
    x = np.linspace(0.0, 1.0, h.size)
    lam = decay
    ch, sh = np.cosh(lam * x), np.sinh(lam * x)
    int_sh_h = cumulative_trapezoid(sh * h, x, initial=0.0)
    int_ch_h = cumulative_trapezoid(ch * h, x, initial=0.0)
    int_sh_v = cumulative_trapezoid(sh * v, x, initial=0.0)
    int_ch_v = cumulative_trapezoid(ch * v, x, initial=0.0)
    c = math.cosh(lam)
    h_t = (ch * h - lam * int_sh_h - sh * v + lam * int_ch_v) / c
    v_t = (
        math.sinh(lam) * h[-1]
        - sh * h
        - lam * (int_ch_h[-1] - int_ch_h)
        + ch * v
        + lam * (int_sh_v[-1] - int_sh_v)
    ) / c
    if abs(h_t[0]) > 1e-12 * scale or abs(v_t[-1]) > 1e-12 * scale:
        logger.warning("Transformed state misses h̃(0) = ṽ(1) = 0: %.3e, %.3e", h_t[0], v_t[-1])
    return h_t, v_t


def transform_mismatch(h: FloatArray, v: FloatArray, decay: float, t_final: float) -> float:
    """‖transform(evolve) - evolve_target(transform)‖_∞ on h̃ and ṽ"""
    grid = RiemannGrid.from_hv(h, v, decay)
    steps = int(round(t_final / grid.dt))
    closed = grid
    for _ in range(steps):
        closed = step_sv(closed)
    h1, v1 = explicit_transform_sv(*reconstruct_hv(closed), decay)

    h_t, v_t = explicit_transform_sv(h, v, decay)
    target = RiemannGrid.from_hv(h_t, v_t, decay)
    for _ in range(steps):
        target = step_target_sv(target)
    h2, v2 = reconstruct_hv(target)
    return float(max(np.max(np.abs(h1 - h2)), np.max(np.abs(v1 - v2))))


def commutation_residual(grid: RiemannGrid, steps: int) -> float:
    """Relative sup-difference of transform∘step_sv^k and step_target^k∘transform"""
    closed = grid
    target = transform_riemann(grid)
    for _ in range(steps):
        closed = step_sv(closed)
        target = step_target_sv(target)
    mapped = transform_riemann(closed)
    scale = max(float(np.max(np.abs(target.R1))), float(np.max(np.abs(target.R2))), np.finfo(float).tiny)
    diff = max(float(np.max(np.abs(mapped.R1 - target.R1))), float(np.max(np.abs(mapped.R2 - target.R2))))
    return diff / scale


def projected_gains(decay: float, M: int, n_modes: int) -> Tuple[FloatArray, FloatArray]:
    """(α¹_n, α²_n): the feedback on sin(nπx) in h and in v, with the control entering as -u"""
    x = np.linspace(0.0, 1.0, M + 1)
    zero = np.zeros_like(x)
    alpha1 = np.empty(n_modes)
    alpha2 = np.empty(n_modes)
    for n in range(1, n_modes + 1):
        mode = np.sin(n * np.pi * x)
        alpha1[n - 1] = -feedback_hv(mode, zero, decay)
        alpha2[n - 1] = -feedback_hv(zero, mode, decay)
    return alpha1, alpha2


def analytic_gains(decay: float, n_modes: int) -> FloatArray:
    """(-1)ⁿ(πn)tanh λ"""
    n = np.arange(1, n_modes + 1, dtype=float)
    return np.where(n % 2 == 0, 1.0, -1.0) * np.pi * n * math.tanh(decay)


# =============================================================================
# SIMULATION
# =============================================================================


@dataclass
class SvTrace:
    times: FloatArray
    energy: FloatArray
    weighted_energy: FloatArray
    u: FloatArray
    final: Optional[RiemannGrid] = field(default=None, repr=False)


def simulate_sv(grid: RiemannGrid, t_final: float, sample_every: int = 1) -> SvTrace:
    if t_final <= 0.0:
        raise UsageError("t_final must be positive")
    steps = int(round(t_final / grid.dt))
    every = max(1, int(sample_every))
    times: List[float] = [0.0]
    e: List[float] = [energy(grid)]
    we: List[float] = [weighted_energy(grid)]
    u: List[float] = [feedback_sv(grid)]
    for n in range(1, steps + 1):
        grid = step_sv(grid)
        if n % every == 0 or n == steps:
            times.append(n * grid.dt)
            e.append(energy(grid))
            we.append(weighted_energy(grid))
            u.append(feedback_sv(grid))
    logger.info("Saint-Venant run: %d steps on %d cells", steps, grid.M)
    return SvTrace(np.asarray(times), np.asarray(e), np.asarray(we), np.asarray(u), final=grid)


def round_trip_rate(trace: SvTrace) -> float:
    """Energy decay rate fitted on samples taken at multiples of the round-trip time"""
    phase = trace.times / ROUND_TRIP
    mask = np.abs(phase - np.round(phase)) < 1e-9
    mask &= trace.energy > 0.0
    if np.count_nonzero(mask) < 2:
        raise UsageError("Need at least two samples at multiples of the round-trip time 2")
    slope = np.polyfit(trace.times[mask], np.log(trace.energy[mask]), 1)[0]
    return float(-slope)


def write_sv_trace_csv(trace: SvTrace, path: Path) -> None:
    frame = pd.DataFrame({"t": trace.times, "energy": trace.energy, "u": trace.u}, columns=SV_TRACE_COLUMNS)
    write_csv(frame, path)
