# ----------------------------------------------------------------
# RapidStab 1.0 - Stabilizer (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

"""TB=B solve for the feedback gains, the transformation T and its diagnostics.

Matrices come in two flavours: `raw` acts on plain sine coefficients (p, q), the
weighted one on u_k = λ_k^{3/2}·(coefficient) so that Euclidean norms are X³ norms.
"""

# Standard library imports
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

# Third party imports
import numpy as np
import scipy.linalg as la
from numpy.typing import NDArray
from scipy.optimize import linear_sum_assignment

# Local application imports
from basis_family import BasisFamily, frame_bounds
from errors import FactorizationFailure, NearSingularBasis
from moment_data import DipolarMoment, ModeTable
from spectral_core import FloatArray, SpectralState, weights

logger = logging.getLogger(__name__)


# =============================================================================
# DATA TYPES
# =============================================================================


@dataclass(frozen=True, eq=False)
class FeedbackGains:
    alpha1: FloatArray
    alpha2: FloatArray
    rotation_omega: float = 0.0
    a1: Optional[FloatArray] = field(default=None, repr=False)
    a2: Optional[FloatArray] = field(default=None, repr=False)
    solve_residual: float = 0.0

    @property
    def N(self) -> int:
        return int(self.alpha1.size)

    def static(self) -> "FeedbackGains":
        """Same gains without the rotation, for the shifted frame"""
        if self.rotation_omega == 0.0:
            return self
        return replace(self, rotation_omega=0.0)

    @classmethod
    def zeros(cls, N: int) -> "FeedbackGains":
        return cls(alpha1=np.zeros(N), alpha2=np.zeros(N))


@dataclass(frozen=True, eq=False)
class TransformOperator:
    N: int
    Tmat: FloatArray = field(repr=False)
    Tinv: FloatArray = field(repr=False)
    raw: FloatArray = field(repr=False)
    cond: float
    norm: float
    norm_inv: float
    Ttilde: Optional[FloatArray] = field(default=None, repr=False)
    cond_tilde: Optional[float] = None
    hs_tail: Optional[FloatArray] = field(default=None, repr=False)


# =============================================================================
# TB=B SOLVE
# =============================================================================


def _free_rows(table: ModeTable) -> NDArray[np.bool_]:
    """Coordinates of the state space (Ψ¹ mode 1 is frozen at 0 in the shifted mode)"""
    rows = np.ones(2 * table.N, dtype=bool)
    if table.shifted:
        rows[0] = False
    return rows


def control_vector(table: ModeTable) -> FloatArray:
    """(0, μφ₁) in plain coefficients"""
    return np.concatenate([np.zeros(table.N), table.m])


def _lu_solve_refined(matrix: FloatArray, rhs: FloatArray) -> FloatArray:
    """Dense LU with partial pivoting plus one step of iterative refinement"""
    with warnings.catch_warnings():
        warnings.simplefilter("error", la.LinAlgWarning)
        try:
            lu_piv = la.lu_factor(matrix)
        except (la.LinAlgError, la.LinAlgWarning) as e:
            raise FactorizationFailure(f"LU factorisation failed: {e}") from e
    x = la.lu_solve(lu_piv, rhs)
    x = x + la.lu_solve(lu_piv, rhs - matrix @ x)
    return np.asarray(x, dtype=float)


def solve_tb_eq_b(basis: BasisFamily, table: ModeTable) -> FeedbackGains:
    """Expand (0, μφ₁) in the basis columns (X² coordinates) and map the coordinates to gains"""
    sigma_min, _ = frame_bounds(basis, 2)
    rows = _free_rows(table)
    G = basis.x2_columns()[np.ix_(rows, basis.active)]
    b = (weights(table.N, 2) * control_vector(table))[rows]
    try:
        x = _lu_solve_refined(G, b)
    except FactorizationFailure as e:
        raise NearSingularBasis(f"TB=B system could not be factorised: {e.message}", sigma_min, 0.0) from e
    residual = float(np.linalg.norm(G @ x - b))

    coords = np.zeros(2 * table.N)
    coords[basis.active] = x
    a1, a2 = coords[: table.N], coords[table.N :]
    alpha1 = table.beta1 * a1 / table.m
    alpha2 = table.beta2 * a2 / table.m
    logger.info("TB=B solved at N=%d, residual %.3e", table.N, residual)
    return FeedbackGains(
        alpha1=alpha1,
        alpha2=alpha2,
        rotation_omega=table.lambda_shift,
        a1=a1,
        a2=a2,
        solve_residual=residual,
    )


# =============================================================================
# TRANSFORMATION
# =============================================================================


def transform_raw(basis: BasisFamily, alpha1: FloatArray, alpha2: FloatArray, table: ModeTable) -> FloatArray:
    """T in plain coefficients: input mode n feeds the g-column with (α¹_n q_n - α²_n p_n)/β¹_n
    and the h-column with (α¹_n p_n + α²_n q_n)/β²_n"""
    N = table.N
    g_act = table.g_active
    inv_b1 = np.zeros(N)
    inv_b1[g_act] = 1.0 / table.beta1[g_act]
    inv_b2 = 1.0 / table.beta2
    G, H = basis.g_block(), basis.h_block()
    T_p = G * (-alpha2 * inv_b1)[None, :] + H * (alpha1 * inv_b2)[None, :]
    T_q = G * (alpha1 * inv_b1)[None, :] + H * (alpha2 * inv_b2)[None, :]
    T = np.hstack([T_p, T_q])
    if table.shifted:
        T[0, :] = 0.0
        T[:, 0] = 0.0
        T[0, 0] = 1.0  # identity on the frozen coordinate
    return np.asarray(T, dtype=float)


def _weighted(raw: FloatArray, N: int) -> FloatArray:
    w = weights(N, 3)
    return np.asarray(w[:, None] * raw / w[None, :], dtype=float)


def _invert(matrix: FloatArray) -> FloatArray:
    return _lu_solve_refined(matrix, np.eye(matrix.shape[0]))


def assemble_T(basis: BasisFamily, gains: FeedbackGains, table: ModeTable) -> TransformOperator:
    raw = transform_raw(basis, gains.alpha1, gains.alpha2, table)
    Tw = _weighted(raw, table.N)
    sv = la.svdvals(Tw)
    if sv[-1] <= 0.0:
        raise FactorizationFailure("Transformation is singular")
    Tinv = _invert(Tw)
    Ttilde, hs_tail = fredholm_split(basis, gains, table)
    sv_tilde = la.svdvals(Ttilde)
    cond_tilde = float(sv_tilde[0] / sv_tilde[-1]) if sv_tilde[-1] > 0.0 else math.inf
    op = TransformOperator(
        N=table.N,
        Tmat=Tw,
        Tinv=Tinv,
        raw=raw,
        cond=float(sv[0] / sv[-1]),
        norm=float(sv[0]),
        norm_inv=float(1.0 / sv[-1]),
        Ttilde=Ttilde,
        cond_tilde=cond_tilde,
        hs_tail=hs_tail,
    )
    logger.info("T assembled: ‖T‖=%.4g ‖T⁻¹‖=%.4g cond=%.4g", op.norm, op.norm_inv, op.cond)
    return op


def transform_norm(T: TransformOperator) -> float:
    return T.norm


def transform_inverse_norm(T: TransformOperator) -> float:
    return T.norm_inv


def tilde_gains(gains: FeedbackGains, table: ModeTable) -> FeedbackGains:
    """α̃¹ = 0, α̃²_n = (h_n/m_n)λ_nβ²_n"""
    alpha2 = table.h_coeff / table.m * table.lam * table.beta2
    return FeedbackGains(alpha1=np.zeros(table.N), alpha2=alpha2, rotation_omega=gains.rotation_omega)


def fredholm_split(basis: BasisFamily, gains: FeedbackGains, table: ModeTable) -> Tuple[FloatArray, FloatArray]:
    """T̃ (weighted) and the X³ column norms of T - T̃ on the unit modes"""
    tilde = tilde_gains(gains, table)
    Tw = _weighted(transform_raw(basis, gains.alpha1, gains.alpha2, table), table.N)
    Ttilde = _weighted(transform_raw(basis, tilde.alpha1, tilde.alpha2, table), table.N)
    hs = np.linalg.norm(Tw - Ttilde, axis=0)
    return Ttilde, np.asarray(hs, dtype=float)


def hs_tail_fraction(hs: FloatArray) -> float:
    """Share of Σ hs² carried by the upper half of the modes (both components)"""
    N = hs.size // 2
    per_mode = hs[:N] ** 2 + hs[N:] ** 2
    total = float(np.sum(per_mode))
    if total == 0.0:
        return 0.0
    return float(np.sum(per_mode[N // 2 :]) / total)


# =============================================================================
# CLOSED LOOP
# =============================================================================


def free_matrix(table: ModeTable) -> FloatArray:
    """A in plain coefficients: ṗ = σ q, q̇ = -σ p"""
    N = table.N
    S = np.diag(table.sigma)
    return np.block([[np.zeros((N, N)), S], [-S, np.zeros((N, N))]])


def closed_loop_matrix(gains: FeedbackGains, table: ModeTable) -> FloatArray:
    """A_N + B_N K_N in plain coefficients"""
    K = np.concatenate([gains.alpha1, gains.alpha2])
    return np.asarray(free_matrix(table) + np.outer(control_vector(table), K), dtype=float)


def feedback_value(gains: FeedbackGains, state: SpectralState, t: float = 0.0) -> float:
    if gains.rotation_omega == 0.0:
        return float(np.dot(gains.alpha1, state.p) + np.dot(gains.alpha2, state.q))
    c = math.cos(gains.rotation_omega * t)
    s = math.sin(gains.rotation_omega * t)
    re = c * state.p - s * state.q
    im = s * state.p + c * state.q
    return float(np.dot(gains.alpha1, re) + np.dot(gains.alpha2, im))


def tb_eq_b_operator_residual(T: TransformOperator, table: ModeTable) -> float:
    """‖T b - b‖_{X³} / ‖b‖_{X³} for b the truncated (0, μφ₁)"""
    b = weights(table.N, 3) * control_vector(table)
    return float(np.linalg.norm(T.Tmat @ b - b) / np.linalg.norm(b))


def domain_correction(
    state: SpectralState, gains: FeedbackGains, mu: DipolarMoment, support: Optional[int] = None
) -> SpectralState:
    """Enforce the boundary relation of the closed-loop domain.

    Δ²Ψ¹ of a sine polynomial vanishes at both ends, so the relation reduces to
    K(Ψ) = 0 whenever μ'(0) or μ'(1) is nonzero. The two highest supported Ψ¹
    coefficients absorb the correction (Ψ² when α¹ vanishes there).
    """
    if mu.mu_p0 == 0.0 and mu.mu_p1 == 0.0:
        return state
    top = state.N if support is None else min(support, state.N)
    idx = np.array([top - 2, top - 1]) if top >= 2 else np.array([0])
    value = feedback_value(gains.static(), state)
    p, q = state.p.copy(), state.q.copy()
    direction = gains.alpha1[idx]
    scale = max(float(np.max(np.abs(gains.alpha1))), float(np.max(np.abs(gains.alpha2))), 1.0)
    if float(np.linalg.norm(direction)) > 1e-12 * scale:
        p[idx] -= direction * value / float(np.dot(direction, direction))
    else:
        direction = gains.alpha2[idx]
        q[idx] -= direction * value / float(np.dot(direction, direction))
    return SpectralState(p, q, state.sobolev_index)


def operator_equality_residual(
    T: TransformOperator,
    gains: FeedbackGains,
    table: ModeTable,
    test_state: SpectralState,
    strict: bool = False,
    mu: Optional[DipolarMoment] = None,
) -> float:
    """‖T(A+BK)x - (A-λ)Tx‖_{X³} / ‖(A+BK)x‖_{X³}, 0 for x with (A+BK)x = 0"""
    state = test_state
    if table.shifted:
        state = SpectralState(np.concatenate([[0.0], state.p[1:]]), state.q, state.sobolev_index)
    if strict:
        if mu is None:
            raise ValueError("strict mode needs the dipolar moment")
        state = domain_correction(state, gains, mu, support=max(2, table.N // 4))
    x = state.as_vector()
    M = closed_loop_matrix(gains.static(), table)
    Mx = M @ x
    w = weights(table.N, 3)
    denom = float(np.linalg.norm(w * Mx))
    if denom == 0.0:
        return 0.0
    target = free_matrix(table) - table.decay * np.eye(2 * table.N)
    diff = T.raw @ Mx - target @ (T.raw @ x)
    return float(np.linalg.norm(w * diff) / denom)


def eigenvalue_placement(gains: FeedbackGains, table: ModeTable, fraction: float = 0.25) -> Dict[str, Any]:
    """Match the eigenvalues of A_N + B_N K_N to -λ ± iσ_k for the lowest modes"""
    count = max(1, int(table.N * fraction))
    free = _free_rows(table)
    eig = la.eigvals(closed_loop_matrix(gains, table)[np.ix_(free, free)])
    targets = []
    for k in range(count):
        if table.shifted and k == 0:
            targets.append(complex(-table.decay, 0.0))
            continue
        targets.append(complex(-table.decay, table.sigma[k]))
        targets.append(complex(-table.decay, -table.sigma[k]))
    tgt = np.asarray(targets)
    cost = np.abs(tgt[:, None] - eig[None, :])
    rows, cols = linear_sum_assignment(cost)
    matched = eig[cols]
    real_dev = np.abs(matched.real + table.decay) / table.decay
    return {
        "pairs": count,
        "max_real_deviation": float(np.max(real_dev)),
        "max_abs_deviation": float(np.max(np.abs(matched - tgt[rows]))),
        "spectral_abscissa": float(np.max(eig.real)),
    }


def regularity_split(gains: FeedbackGains, table: ModeTable) -> Dict[str, Any]:
    """Tail behaviour of |α¹|/n³, |α² - α̃²|/n³ and |α²|/n³"""
    N = table.N
    n = np.arange(1, N + 1, dtype=float)
    tilde = tilde_gains(gains, table)
    r1 = np.abs(gains.alpha1) / n**3
    r2c = np.abs(gains.alpha2 - tilde.alpha2) / n**3
    r2 = np.abs(gains.alpha2) / n**3
    q1, q2, q3 = N // 4, N // 2, (3 * N) // 4

    def quarters(r: FloatArray) -> Dict[str, float]:
        return {"second_quarter_max": float(np.max(r[q1:q2])), "top_quarter_max": float(np.max(r[q3:]))}

    return {
        "alpha1_over_n3": quarters(r1),
        "alpha2_corrected_over_n3": quarters(r2c),
        "alpha2_over_n3_floor": float(np.min(r2[q2:])),
    }


def operator_from_weighted(Tw: FloatArray, N: int) -> TransformOperator:
    """Rebuild the operator data from a stored X³-weighted matrix"""
    if Tw.shape != (2 * N, 2 * N):
        raise ValueError(f"Expected a {2 * N}x{2 * N} matrix, got {Tw.shape}")
    w = weights(N, 3)
    sv = la.svdvals(Tw)
    if sv[-1] <= 0.0:
        raise FactorizationFailure("Transformation is singular")
    return TransformOperator(
        N=N,
        Tmat=Tw,
        Tinv=_invert(Tw),
        raw=np.asarray(Tw * w[None, :] / w[:, None], dtype=float),
        cond=float(sv[0] / sv[-1]),
        norm=float(sv[0]),
        norm_inv=float(1.0 / sv[-1]),
    )


# =============================================================================
# KERNELS
# =============================================================================


def kernel_coefficients(basis: BasisFamily, gains: FeedbackGains, table: ModeTable) -> Tuple[FloatArray, FloatArray]:
    """F^{12}[n, k], F^{22}[n, k]: coefficient of φ_k in f_n^{12}, f_n^{22}"""
    t = basis.tensor
    a1 = gains.alpha1[:, None]
    a2 = gains.alpha2[:, None]
    m = table.m[None, :]
    F12 = (a1 * t.c12 + a2 * t.d12) * m
    F22 = (a1 * t.c22 + a2 * t.d22) * m
    return np.asarray(F12, dtype=float), np.asarray(F22, dtype=float)


def kernel_tb_residuals(F12: FloatArray, F22: FloatArray, m: FloatArray) -> Dict[str, float]:
    """∫k₁₂(·,y)(μφ₁)(y)dy = 0 and ∫k₂₂(·,y)(μφ₁)(y)dy = μφ₁, in L² relative to ‖μφ₁‖"""
    scale = float(np.linalg.norm(m))
    return {
        "k12_relative": float(np.linalg.norm(F12.T @ m)) / scale,
        "k22_relative": float(np.linalg.norm(F22.T @ m - m)) / scale,
    }
