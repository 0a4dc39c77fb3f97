# ----------------------------------------------------------------
# RapidStab 1.0 - Closed Loop Simulation (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

"""Implicit-midpoint integration of the truncated closed loop, the target system and
the rotating-feedback variant, with decay-rate estimation."""

# Standard library imports
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

# Third party imports
import numpy as np
import pandas as pd
import scipy.linalg as la

# Local application imports
from errors import FactorizationFailure, UsageError
from moment_data import ModeTable
from report_io import write_csv
from spectral_core import FloatArray, SpectralState, sobolev_norm, weights
from stabilizer import FeedbackGains, TransformOperator, closed_loop_matrix, feedback_value

logger = logging.getLogger(__name__)

INSTABILITY_GROWTH = 1e6
TRACE_COLUMNS = ["t", "norm_L2", "norm_H3", "control_v"]


# =============================================================================
# TRACES
# =============================================================================


@dataclass
class SimulationTrace:
    times: FloatArray
    norm_l2: FloatArray
    norm_h3: FloatArray
    control: FloatArray
    fitted_rate: float
    fit_window: Tuple[float, float]
    measured_C: float
    unstable: bool = False
    final_state: Optional[SpectralState] = field(default=None, repr=False)

    @property
    def norms_s(self) -> Dict[int, FloatArray]:
        return {0: self.norm_l2, 3: self.norm_h3}


@dataclass
class TransformedTrace:
    times: FloatArray
    xi_mapped: FloatArray = field(repr=False)  # rows T Ψ(t), X³-weighted
    xi_direct: FloatArray = field(repr=False)
    divergence: FloatArray = field(repr=False)

    @property
    def max_divergence(self) -> float:
        return float(np.max(self.divergence))


def fit_rate(times: FloatArray, norms: FloatArray, window: Tuple[float, float]) -> float:
    """-slope of the least-squares line through log(norm) on the window"""
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    mask = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12) & (y > 0.0)
    if np.count_nonzero(mask) < 2:
        logger.warning("Fit window [%g, %g] holds fewer than two samples", *window)
        return math.nan
    slope = np.polyfit(t[mask], np.log(y[mask]), 1)[0]
    return float(-slope)


def default_fit_window(decay: float, t_final: float) -> Tuple[float, float]:
    if decay <= 0.0:
        return (0.0, t_final)
    return (min(1.0 / decay, t_final), min(6.0 / decay, t_final))


def measured_constant(times: FloatArray, norms: FloatArray, decay: float) -> float:
    """sup_t ‖Ψ(t)‖₃ / (e^{-λt}‖Ψ₀‖₃)"""
    if norms[0] == 0.0:
        return 0.0
    return float(np.max(norms * np.exp(decay * times) / norms[0]))


# =============================================================================
# STEPPERS
# =============================================================================


@lru_cache(maxsize=8)
def _cayley_factors(gains: FeedbackGains, table: ModeTable, dt: float) -> Tuple[Tuple[FloatArray, FloatArray], FloatArray]:
    # keyed on the gains object; closed_loop_matrix ignores rotation_omega
    M = closed_loop_matrix(gains, table)
    eye = np.eye(M.shape[0])
    with warnings.catch_warnings():
        warnings.simplefilter("error", la.LinAlgWarning)
        try:
            lu_piv = la.lu_factor(eye - 0.5 * dt * M)
        except (la.LinAlgError, la.LinAlgWarning) as e:
            raise FactorizationFailure(f"I - dt/2·M is singular at dt={dt:g}; retry with a smaller step") from e
    return lu_piv, eye + 0.5 * dt * M


def step_closed_loop(state: SpectralState, gains: FeedbackGains, table: ModeTable, dt: float) -> SpectralState:
    """u₊ = (I - dt/2·M)⁻¹(I + dt/2·M)u with M = A_N + B_N K_N"""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if state.N != table.N or gains.N != table.N:
        raise ValueError(f"State, gains and mode table disagree on N ({state.N}, {gains.N}, {table.N})")
    lu_piv, explicit = _cayley_factors(gains, table, dt)
    u = la.lu_solve(lu_piv, explicit @ state.as_vector())
    return SpectralState(u[: table.N], u[table.N :], state.sobolev_index)


def _rotate_modes(p: FloatArray, q: FloatArray, sigma: FloatArray, dt: float) -> Tuple[FloatArray, FloatArray]:
    """Cayley map of the 2×2 blocks [[0, σ], [-σ, 0]]"""
    a = 0.5 * dt * sigma
    denom = 1.0 + a * a
    p_new = ((1.0 - a * a) * p + 2.0 * a * q) / denom
    q_new = (-2.0 * a * p + (1.0 - a * a) * q) / denom
    return p_new, q_new


def contraction_factor(decay: float, dt: float) -> float:
    return (1.0 - 0.5 * decay * dt) / (1.0 + 0.5 * decay * dt)


def step_target(state: SpectralState, decay: float, table: ModeTable, dt: float) -> SpectralState:
    """u̇ = (A_N - λ)u: block rotation followed by the scalar Crank-Nicolson factor"""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    p, q = _rotate_modes(state.p, state.q, table.sigma, dt)
    rho = contraction_factor(decay, dt)
    return SpectralState(rho * p, rho * q, state.sobolev_index)


def _phase(p: FloatArray, q: FloatArray, angle: float) -> Tuple[FloatArray, FloatArray]:
    """(p + iq)·e^{i·angle}"""
    c, s = math.cos(angle), math.sin(angle)
    return c * p - s * q, s * p + c * q


def step_rotating(state: SpectralState, gains: FeedbackGains, table: ModeTable, t: float, dt: float) -> SpectralState:
    """Unshifted linearization with the rotated feedback.

    The phase e^{-iλ₁t} is integrated exactly: Ψ̃ = Ψe^{iλ₁t} follows the shifted
    closed loop, which takes the Cayley step.
    """
    if not table.shifted:
        raise UsageError("The rotating feedback needs a shifted mode table")
    omega = gains.rotation_omega
    p, q = _phase(state.p, state.q, omega * t)
    co = step_closed_loop(SpectralState(p, q, state.sobolev_index), gains, table, dt)
    p, q = _phase(co.p, co.q, -omega * (t + dt))
    return SpectralState(p, q, state.sobolev_index)


# =============================================================================
# DRIVERS
# =============================================================================


def _step_count(dt: float, t_final: float) -> int:
    if dt <= 0.0 or t_final <= 0.0:
        raise UsageError("dt and t_final must be positive")
    return max(1, int(round(t_final / dt)))


def _run(
    initial: SpectralState,
    advance: Callable[[SpectralState, float], SpectralState],
    control: Callable[[SpectralState, float], float],
    decay: float,
    dt: float,
    t_final: float,
    sample_every: int,
    fit_window: Optional[Tuple[float, float]],
) -> SimulationTrace:
    steps = _step_count(dt, t_final)
    every = max(1, int(sample_every))
    state = initial
    initial_h3 = sobolev_norm(state, 3)
    times: List[float] = []
    l2: List[float] = []
    h3: List[float] = []
    ctrl: List[float] = []
    unstable = False

    def record(n: int, s: SpectralState, norm: float) -> None:
        t = n * dt
        times.append(t)
        l2.append(sobolev_norm(s, 0))
        h3.append(norm)
        ctrl.append(control(s, t))

    record(0, state, initial_h3)
    for n in range(1, steps + 1):
        state = advance(state, (n - 1) * dt)
        norm = sobolev_norm(state, 3)
        if not math.isfinite(norm) or norm > INSTABILITY_GROWTH * max(initial_h3, np.finfo(float).tiny):
            logger.warning("Instability guard tripped at t=%.4g (‖Ψ‖₃=%.3e)", n * dt, norm)
            if math.isfinite(norm):
                record(n, state, norm)
            unstable = True
            break
        if n % every == 0 or n == steps:
            record(n, state, norm)

    t_arr = np.asarray(times)
    h3_arr = np.asarray(h3)
    window = default_fit_window(decay, t_final) if fit_window is None else fit_window
    rate = math.nan if unstable else fit_rate(t_arr, h3_arr, window)
    return SimulationTrace(
        times=t_arr,
        norm_l2=np.asarray(l2),
        norm_h3=h3_arr,
        control=np.asarray(ctrl),
        fitted_rate=rate,
        fit_window=window,
        measured_C=measured_constant(t_arr, h3_arr, decay),
        unstable=unstable,
        final_state=state,
    )


def simulate(
    initial: SpectralState,
    gains: FeedbackGains,
    table: ModeTable,
    dt: float,
    t_final: float,
    sample_every: int = 1,
    fit_window: Optional[Tuple[float, float]] = None,
) -> SimulationTrace:
    """Closed loop with the static feedback v = K Ψ"""
    if table.shifted and initial.p[0] != 0.0:
        raise UsageError("The shifted system requires Re⟨Ψ₀, φ₁⟩ = 0 (p₁ = 0)")
    static = gains.static()
    trace = _run(
        initial,
        lambda s, t: step_closed_loop(s, static, table, dt),
        lambda s, t: feedback_value(static, s, t),
        table.decay,
        dt,
        t_final,
        sample_every,
        fit_window,
    )
    logger.info("Closed loop: fitted rate %.5g, measured C %.4g", trace.fitted_rate, trace.measured_C)
    return trace


def simulate_rotating(
    initial: SpectralState,
    gains: FeedbackGains,
    table: ModeTable,
    dt: float,
    t_final: float,
    sample_every: int = 1,
    fit_window: Optional[Tuple[float, float]] = None,
) -> SimulationTrace:
    """Unshifted system under v(t) = K̃(Ψ(t)e^{iλ₁t})"""
    if initial.p[0] != 0.0:
        raise UsageError("The rotating feedback requires Re⟨Ψ₀, φ₁⟩ = 0 (p₁ = 0)")
    return _run(
        initial,
        lambda s, t: step_rotating(s, gains, table, t, dt),
        lambda s, t: feedback_value(gains, s, t),
        table.decay,
        dt,
        t_final,
        sample_every,
        fit_window,
    )


def simulate_transformed(
    initial: SpectralState,
    gains: FeedbackGains,
    T: TransformOperator,
    table: ModeTable,
    dt: float,
    t_final: float,
    sample_every: int = 1,
) -> TransformedTrace:
    """TΨ(t) along the closed loop against ξ evolved directly by the target system from TΨ₀"""
    steps = _step_count(dt, t_final)
    every = max(1, int(sample_every))
    static = gains.static()
    w = weights(table.N, 3)
    psi = initial
    xi = SpectralState.from_vector(T.raw @ initial.as_vector())
    xi0_norm = float(np.linalg.norm(w * xi.as_vector()))
    times, mapped, direct = [0.0], [w * xi.as_vector()], [w * xi.as_vector()]
    for n in range(1, steps + 1):
        psi = step_closed_loop(psi, static, table, dt)
        xi = step_target(xi, table.decay, table, dt)
        if n % every == 0 or n == steps:
            times.append(n * dt)
            mapped.append(w * (T.raw @ psi.as_vector()))
            direct.append(w * xi.as_vector())
    mapped_arr = np.asarray(mapped)
    direct_arr = np.asarray(direct)
    scale = xi0_norm if xi0_norm > 0.0 else 1.0
    divergence = np.linalg.norm(mapped_arr - direct_arr, axis=1) / scale
    return TransformedTrace(times=np.asarray(times), xi_mapped=mapped_arr, xi_direct=direct_arr, divergence=divergence)


# =============================================================================
# EXPORT
# =============================================================================


def trace_frame(trace: SimulationTrace) -> pd.DataFrame:
    return pd.DataFrame(
        {"t": trace.times, "norm_L2": trace.norm_l2, "norm_H3": trace.norm_h3, "control_v": trace.control},
        columns=TRACE_COLUMNS,
    )


def write_trace_csv(trace: SimulationTrace, path: Path) -> None:
    write_csv(trace_frame(trace), path)
    logger.debug("Trace written to %s (%d samples)", path, trace.times.size)
