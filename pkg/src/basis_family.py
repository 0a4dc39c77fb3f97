# ----------------------------------------------------------------
# RapidStab 1.0 - Basis Family (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

"""Candidate Riesz basis {(g_n^12, g_n^22), (h_n^12, h_n^22)} from the closed-form Fourier tensors.

Coefficient vectors are laid out as (Ψ¹ modes 1..N, Ψ² modes 1..N). Column n of
`BasisFamily.columns` is (g_n^12, g_n^22), column N+n is (h_n^12, h_n^22), both in
plain sine coefficients.
"""

# Standard library imports
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

# Third party imports
import numpy as np
import scipy.linalg as la
from numpy.typing import NDArray

# Local application imports
from errors import HypothesisViolation, NearSingularBasis
from moment_data import ModeTable
from spectral_core import FloatArray

logger = logging.getLogger(__name__)

FRAME_RATIO_TOL = 1e-10


# =============================================================================
# NORMALISATION
# =============================================================================


def beta_values(decay: float, lam: FloatArray, sigma: FloatArray, m: FloatArray) -> Tuple[FloatArray, FloatArray]:
    """β¹_n, β²_n fixing ⟨g_n^12, φ_n⟩ = ⟨h_n^22, φ_n⟩ = 1/λ_n.

    With sigma == lam this is λ(λ²+4λ_n²)/(2λ_n³m_n) and
    -λ(λ²+4λ_n²)/((λ²+2λ_n²)λ_n m_n). A vanishing σ_n (mode 1 when shifted)
    leaves β¹_n undefined; it is stored as 0 and the g-column is dropped.
    """
    if np.any(m == 0.0):
        worst = int(np.flatnonzero(m == 0.0)[0]) + 1
        raise HypothesisViolation(f"m_{worst} = 0: the basis normalisation is undefined", worst_k=worst, c_lower=0.0)
    lam_sq = decay**2
    s2 = sigma**2
    beta1 = np.zeros_like(lam)
    live = sigma != 0.0
    beta1[live] = decay * (lam_sq + 4.0 * s2[live]) / (2.0 * s2[live] * lam[live] * m[live])
    beta2 = -decay * (lam_sq + 4.0 * s2) / ((lam_sq + 2.0 * s2) * lam * m)
    return beta1, beta2


def beta_coefficients(table: ModeTable) -> Tuple[FloatArray, FloatArray]:
    return beta_values(table.decay, table.lam, table.sigma, table.m)


# =============================================================================
# KERNEL TENSORS
# =============================================================================


@dataclass(frozen=True, eq=False)
class KernelTensor:
    """Entry (n, k) of each tensor is the coefficient of mode k in the n-th kernel component"""

    c11: FloatArray = field(repr=False)
    c12: FloatArray = field(repr=False)
    c21: FloatArray = field(repr=False)
    c22: FloatArray = field(repr=False)
    d12: FloatArray = field(repr=False)
    d22: FloatArray = field(repr=False)
    delta: FloatArray = field(repr=False)

    @property
    def N(self) -> int:
        return int(self.delta.shape[0])


def kernel_tensors(table: ModeTable) -> KernelTensor:
    lam = table.decay
    sn = table.sigma[:, None]
    sk = table.sigma[None, :]
    delta = (lam**2 + (sk - sn) ** 2) * (lam**2 + (sk + sn) ** 2)
    c11 = sk * (sn**2 - lam**2 - sk**2) / delta
    c12 = 2.0 * lam * sk * sn / delta
    c21 = -lam * (lam**2 + sk**2 + sn**2) / delta
    c22 = sn * (lam**2 - sk**2 + sn**2) / delta
    return KernelTensor(c11=c11, c12=c12, c21=c21, c22=c22, d12=c11, d22=c21, delta=delta)


def ank_matrix(decay: float, sigma_n: float, sigma_k: float) -> FloatArray:
    """The 4×4 matrix acting on (⟨g^11⟩, ⟨g^12⟩, ⟨g^21⟩, ⟨g^22⟩)_{nk}"""
    lam, ln, lk = decay, sigma_n, sigma_k
    return np.array(
        [
            [-lk, 0.0, -lam, ln],
            [0.0, -lk, -ln, -lam],
            [lam, -ln, -lk, 0.0],
            [ln, lam, 0.0, -lk],
        ]
    )


def continuity_row_sums(tensor: KernelTensor, table: ModeTable) -> FloatArray:
    """Σ_k |λ_k^{3/2} c_nk^12 m_k β¹_n|² for each n"""
    entries = (table.lam[None, :] ** 1.5) * tensor.c12 * table.m[None, :] * table.beta1[:, None]
    return np.asarray(np.sum(entries**2, axis=1), dtype=float)


# =============================================================================
# BASIS
# =============================================================================


@dataclass(frozen=True, eq=False)
class BasisFamily:
    lam: FloatArray
    columns: FloatArray = field(repr=False)
    active: NDArray[np.bool_]
    tensor: KernelTensor = field(repr=False)

    @property
    def N(self) -> int:
        return int(self.lam.size)

    def row_weights(self, s: float) -> FloatArray:
        w = self.lam ** (s / 2.0)
        return np.concatenate([w, w])

    def x2_columns(self) -> FloatArray:
        """Columns in λ_k-weighted coordinates (Euclidean norm = X² norm)"""
        return self.row_weights(2)[:, None] * self.columns

    def x3_tilde_columns(self) -> FloatArray:
        """X³-weighted columns scaled by λ_n^{-1/2}"""
        col_scale = np.concatenate([self.lam, self.lam]) ** -0.5
        return self.row_weights(3)[:, None] * self.columns * col_scale[None, :]

    def g_block(self) -> FloatArray:
        return self.columns[:, : self.N]

    def h_block(self) -> FloatArray:
        return self.columns[:, self.N :]


def build_basis(table: ModeTable, tensor: Optional[KernelTensor] = None) -> BasisFamily:
    t = kernel_tensors(table) if tensor is None else tensor
    m = table.m[None, :]
    g12 = t.c12 * table.beta1[:, None] * m
    g22 = t.c22 * table.beta1[:, None] * m
    h12 = t.d12 * table.beta2[:, None] * m
    h22 = t.d22 * table.beta2[:, None] * m
    # rows (Ψ¹ mode k, Ψ² mode k), columns g_1..g_N then h_1..h_N
    g_cols = np.vstack([g12.T, g22.T])
    h_cols = np.vstack([h12.T, h22.T])
    active = np.concatenate([table.g_active, np.ones(table.N, dtype=bool)])
    columns = np.hstack([g_cols, h_cols])
    columns[:, ~active] = 0.0
    return BasisFamily(lam=table.lam, columns=columns, active=active, tensor=t)


def normalisation_residual(basis: BasisFamily) -> float:
    """max_n |λ_n⟨g_n^12, φ_n⟩ - 1| and the same for h_n^22, over active columns"""
    N = basis.N
    diag_g = np.diag(basis.columns[:N, :N])
    diag_h = np.diag(basis.columns[N:, N:])
    errors = np.abs(basis.lam * diag_h - 1.0)
    g_err = np.abs(basis.lam * diag_g - 1.0)[basis.active[:N]]
    return float(max(np.max(errors), np.max(g_err) if g_err.size else 0.0))


# =============================================================================
# DIAGNOSTICS
# =============================================================================


def _tail_terms(basis: BasisFamily, s: int) -> Tuple[FloatArray, FloatArray]:
    """Per-n terms ‖(φ_n/λ_n^{s/2}) - column_n/λ_n^{(s-2)/2}‖²_{X^s} for the g and h families"""
    N = basis.N
    w = basis.row_weights(s)
    col_scale = np.concatenate([basis.lam, basis.lam]) ** (-(s - 2) / 2.0)
    scaled = basis.columns * col_scale[None, :]
    target = np.zeros_like(scaled)
    idx = np.arange(N)
    target[idx, idx] = basis.lam ** (-s / 2.0)  # (φ_n/λ_n^{s/2}, 0)
    target[N + idx, N + idx] = basis.lam ** (-s / 2.0)  # (0, φ_n/λ_n^{s/2})
    diff = w[:, None] * (target - scaled)
    terms = np.sum(diff**2, axis=0)
    terms[~basis.active] = 0.0
    return terms[:N], terms[N:]


def closeness_tails(basis: BasisFamily, s: int) -> Dict[str, Any]:
    """Partial sums S_g(M), S_h(M) for M = N/4, N/2, N"""
    if s not in (2, 3):
        raise ValueError("closeness tails are defined for s = 2 and s = 3")
    g_terms, h_terms = _tail_terms(basis, s)
    cuts: List[int] = sorted({max(1, basis.N // 4), max(1, basis.N // 2), basis.N})
    s_g = [float(np.sum(g_terms[:M])) for M in cuts]
    s_h = [float(np.sum(h_terms[:M])) for M in cuts]
    return {"s": s, "M": cuts, "S_g": s_g, "S_h": s_h}


def gram_extremes(columns: FloatArray) -> Tuple[float, float]:
    gram = columns.T @ columns
    eig = la.eigvalsh(gram)
    return float(max(eig[0], 0.0)), float(eig[-1])


def frame_bounds(basis: BasisFamily, s: int = 2, check: bool = True) -> Tuple[float, float]:
    """Extreme eigenvalues of the Gram matrix of the active columns in X^s coordinates"""
    cols = basis.x2_columns() if s == 2 else basis.x3_tilde_columns()
    rows = np.ones(cols.shape[0], dtype=bool)
    if not basis.active[0]:
        rows[0] = False  # Ψ¹ mode 1 is frozen in the shifted mode
    sigma_min, sigma_max = gram_extremes(cols[np.ix_(rows, basis.active)])
    logger.debug("frame bounds (s=%d): [%.4e, %.4e]", s, sigma_min, sigma_max)
    if check and sigma_min < FRAME_RATIO_TOL * sigma_max:
        raise NearSingularBasis(
            f"Basis Gram matrix is near singular: sigma_min={sigma_min:.3e}, sigma_max={sigma_max:.3e}",
            sigma_min,
            sigma_max,
        )
    return sigma_min, sigma_max
