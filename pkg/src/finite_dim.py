# ----------------------------------------------------------------
# RapidStab 1.0 - Finite Dimensional Pole Shift (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

"""Constructive (T, K) pair with TA + BK = AT - λT and TB = B for a single-input
system whose A has a simple spectrum."""

# Standard library imports
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

# Third party imports
import numpy as np
import scipy.linalg as la
from numpy.typing import NDArray
from scipy.optimize import linear_sum_assignment

# Local application imports
from errors import AssumptionViolation, ControllabilityViolation, NumericalDegeneracy, UsageError
from spectral_core import FloatArray

logger = logging.getLogger(__name__)

ComplexArray = NDArray[np.complex128]

RANK_TOL = 1e-10
SIMPLE_TOL = 1e-8
SHIFT_TOL = 1e-12
EIG_TOL = 1e-8


# =============================================================================
# SYSTEM
# =============================================================================


@dataclass(frozen=True, eq=False)
class LtiSystem:
    A: FloatArray = field(repr=False)
    B: FloatArray = field(repr=False)
    decay: float

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).ravel()
        if A.shape[0] != A.shape[1] or A.shape[0] != B.size:
            raise UsageError(f"A must be square and match B (got A {A.shape}, B {B.shape})")
        if self.decay < 0.0:
            raise UsageError("lambda must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return int(self.B.size)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LtiSystem":
        try:
            return cls(A=np.asarray(data["A"], dtype=float), B=np.asarray(data["B"], dtype=float), decay=float(data["lambda"]))
        except (KeyError, TypeError, ValueError) as e:
            raise UsageError(f"Finite-dimensional input needs numeric 'A', 'B' and 'lambda': {e}") from e


@dataclass(frozen=True)
class FiniteBasis:
    eigvals: ComplexArray
    V: ComplexArray = field(repr=False)  # eigenvectors e_i as columns
    F: ComplexArray = field(repr=False)  # f_i as columns


@dataclass(frozen=True)
class FiniteTransform:
    T: FloatArray
    K: FloatArray
    Ke: ComplexArray = field(repr=False)
    imag_residual: float = 0.0


def kalman_rank(sys: LtiSystem) -> int:
    cols = [sys.B]
    for _ in range(sys.n - 1):
        cols.append(sys.A @ cols[-1])
    ctrb = np.column_stack(cols)
    sv = la.svdvals(ctrb)
    return int(np.sum(sv > RANK_TOL * sv[0])) if sv[0] > 0.0 else 0


def _numerical_rank(matrix: ComplexArray) -> Tuple[int, float]:
    sv = la.svdvals(matrix)
    if sv[0] == 0.0:
        return 0, 0.0
    return int(np.sum(sv > RANK_TOL * sv[0])), float(sv[-1] / sv[0])


def _check_simple(eigvals: ComplexArray) -> None:
    scale = max(1.0, float(np.max(np.abs(eigvals))))
    gaps = np.abs(eigvals[:, None] - eigvals[None, :])
    np.fill_diagonal(gaps, np.inf)
    if eigvals.size > 1 and float(np.min(gaps)) < SIMPLE_TOL * scale:
        raise AssumptionViolation("A has a repeated eigenvalue; the construction needs a simple spectrum")


# =============================================================================
# CONSTRUCTION
# =============================================================================


def build_basis_f(sys: LtiSystem) -> FiniteBasis:
    """f_i solving ((λ_i + λ)I - A) f_i = -B for every eigenvalue λ_i"""
    eigvals, V = la.eig(sys.A)
    _check_simple(eigvals)
    eye = np.eye(sys.n)
    F = np.empty((sys.n, sys.n), dtype=complex)
    for i, lam_i in enumerate(eigvals):
        shifted = (lam_i + sys.decay) * eye - sys.A
        sv = la.svdvals(shifted)
        if sv[-1] <= SHIFT_TOL * max(sv[0], 1.0):
            raise AssumptionViolation(f"(λ_{i + 1} + λ)I - A is singular (λ_{i + 1} = {lam_i:.6g})")
        F[:, i] = la.solve(shifted, -sys.B.astype(complex))
    rank, ratio = _numerical_rank(F)
    if rank < sys.n:
        raise NumericalDegeneracy(f"f_i span only rank {rank} < {sys.n} (σ_min/σ_max = {ratio:.3e})")
    return FiniteBasis(eigvals=eigvals, V=V, F=F)


def solve_finite_tb_eq_b(sys: LtiSystem, basis: FiniteBasis) -> FiniteTransform:
    """B = Σ b_i (Ke_i) f_i, Te_i = f_i Ke_i, mapped back to the standard basis"""
    b = la.solve(basis.V, sys.B.astype(complex))
    if np.any(np.abs(b) <= RANK_TOL * float(np.max(np.abs(b)))):
        worst = int(np.argmin(np.abs(b))) + 1
        raise ControllabilityViolation(f"B has a vanishing coordinate b_{worst} on the eigenvector e_{worst}")
    y = la.solve(basis.F, sys.B.astype(complex))
    Ke = y / b
    V_inv = la.inv(basis.V)
    T_c = basis.F @ np.diag(Ke) @ V_inv
    K_c = Ke @ V_inv
    scale = max(float(np.max(np.abs(T_c))), float(np.max(np.abs(K_c))), 1.0)
    imag = max(float(np.max(np.abs(T_c.imag))), float(np.max(np.abs(K_c.imag)))) / scale
    logger.debug("finite TB=B: imaginary residual %.3e", imag)
    # real parts are the average with the conjugate solution
    return FiniteTransform(T=np.real(T_c).copy(), K=np.real(K_c).copy(), Ke=Ke, imag_residual=imag)


def synthesize_finite(sys: LtiSystem) -> FiniteTransform:
    if sys.decay == 0.0:
        return FiniteTransform(T=np.eye(sys.n), K=np.zeros(sys.n), Ke=np.zeros(sys.n, dtype=complex))
    rank = kalman_rank(sys)
    if rank < sys.n:
        raise ControllabilityViolation(f"Kalman rank {rank} < {sys.n}")
    return solve_finite_tb_eq_b(sys, build_basis_f(sys))


# =============================================================================
# VERIFICATION
# =============================================================================


def match_spectra(a: ComplexArray, b: ComplexArray) -> Tuple[float, NDArray[np.int64]]:
    """Largest distance of the optimal one-to-one matching of two eigenvalue multisets"""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.size != b.size:
        raise ValueError("Spectra of different sizes cannot be matched")
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols])) if a.size else 0.0, np.asarray(cols, dtype=np.int64)


def verify_pole_shift(sys: LtiSystem, T: FloatArray, K: FloatArray) -> Dict[str, Any]:
    A, B = sys.A, sys.B
    closed = A + np.outer(B, K)
    eig_error, _ = match_spectra(la.eigvals(closed), la.eigvals(A) - sys.decay)
    a_norm = max(float(np.linalg.norm(A, "fro")), 1.0)
    identity_residual = float(np.linalg.norm(T @ A + np.outer(B, K) - A @ T + sys.decay * T, "fro")) / a_norm
    tb_residual = float(np.linalg.norm(T @ B - B)) / max(float(np.linalg.norm(B)), 1.0)
    sv = la.svdvals(T)
    cond_T = float(sv[0] / sv[-1]) if sv[-1] > 0.0 else float("inf")
    target = A - sys.decay * np.eye(sys.n)
    similarity = float("inf")
    if np.isfinite(cond_T):
        similarity = float(np.linalg.norm(T @ closed @ la.inv(T) - target, "fro")) / max(
            float(np.linalg.norm(target, "fro")), 1.0
        )
    report = {
        "eigenvalue_error": eig_error,
        "identity_residual": identity_residual,
        "tb_residual": tb_residual,
        "similarity_residual": similarity,
        "cond_T": cond_T,
        "T_invertible": bool(np.isfinite(cond_T) and cond_T < 1e12),
    }
    report["passed"] = bool(
        eig_error <= EIG_TOL and identity_residual <= 1e-10 and tb_residual <= 1e-10 and report["T_invertible"]
    )
    if not report["passed"]:
        logger.warning("Pole shift verification failed: %s", report)
    return report


# =============================================================================
# RANDOM SYSTEMS
# =============================================================================


def _sample_spectrum(rng: np.random.Generator, n: int) -> Tuple[List[float], List[Tuple[float, float]]]:
    pairs = int(rng.integers(0, n // 2 + 1))
    reals = list(rng.uniform(-3.0, 3.0, size=n - 2 * pairs))
    complexes = [(float(rng.uniform(-3.0, 3.0)), float(rng.uniform(0.5, 2.0))) for _ in range(pairs)]
    return reals, complexes


def random_system(rng: np.random.Generator, n: int, decay: float, max_tries: int = 200) -> LtiSystem:
    """Controllable system with eigenvalues ≥ 0.5 apart, conjugated by a random orthogonal matrix"""
    for _ in range(max_tries):
        reals, complexes = _sample_spectrum(rng, n)
        spectrum = np.array([complex(r) for r in reals] + [complex(a, s * b) for a, b in complexes for s in (1, -1)])
        gaps = np.abs(spectrum[:, None] - spectrum[None, :])
        np.fill_diagonal(gaps, np.inf)
        shift_gaps = np.abs(spectrum[:, None] + decay - spectrum[None, :])
        if n > 1 and (np.min(gaps) < 0.5 or np.min(shift_gaps) < 0.25):
            continue
        blocks = [np.array([[r]]) for r in reals] + [np.array([[a, b], [-b, a]]) for a, b in complexes]
        D = la.block_diag(*blocks)
        Q, _ = la.qr(rng.standard_normal((n, n)))
        w = rng.uniform(0.5, 1.5, size=n) * rng.choice([-1.0, 1.0], size=n)
        sys = LtiSystem(A=Q @ D @ Q.T, B=Q @ w, decay=decay)
        if kalman_rank(sys) == n:
            return sys
    raise NumericalDegeneracy(f"No admissible random system of dimension {n} after {max_tries} draws")
