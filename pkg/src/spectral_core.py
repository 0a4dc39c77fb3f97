# ----------------------------------------------------------------
# RapidStab 1.0 - Spectral Core (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

"""Dirichlet sine eigenbasis on (0,1), Sobolev norms and sine-series quadrature"""

# Standard library imports
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple, Union

# Third party imports
import numpy as np
from numpy.polynomial import Polynomial
from numpy.typing import ArrayLike, NDArray
from scipy.special import roots_legendre

# Local application imports
from errors import QuadratureUnderresolution

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
RealFunction = Callable[[FloatArray], FloatArray]

SQRT2 = math.sqrt(2.0)
GAUSS_POINTS = 8
UNDERRESOLUTION_TOL = 1e-10
SOBOLEV_INDICES = (0, 2, 3, 4, 5)


# =============================================================================
# EIGENSTRUCTURE
# =============================================================================


@dataclass(frozen=True)
class EigenPair:
    k: int
    lambda_k: float

    def phi(self, x: ArrayLike) -> FloatArray:
        """φ_k(x) = √2 sin(kπx)"""
        return SQRT2 * np.sin(self.k * np.pi * np.asarray(x, dtype=float))


def eigenpair(k: int) -> EigenPair:
    if k < 1:
        raise ValueError(f"Mode index must be positive, got {k}")
    return EigenPair(k=k, lambda_k=(k * math.pi) ** 2)


def eigenvalues(N: int) -> FloatArray:
    """λ_1..λ_N of the Dirichlet Laplacian"""
    return (np.arange(1, N + 1, dtype=float) * np.pi) ** 2


def sine_matrix(N: int, x: ArrayLike) -> FloatArray:
    """Rows φ_1..φ_N evaluated on the points x"""
    pts = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.arange(1, N + 1, dtype=float)[:, None]
    return np.asarray(SQRT2 * np.sin(np.pi * k * pts[None, :]), dtype=float)


# =============================================================================
# STATE AND NORMS
# =============================================================================


@dataclass
class SpectralState:
    """Sine coefficients (p_k, q_k) of (Ψ¹, Ψ²) truncated at N modes"""

    p: FloatArray
    q: FloatArray
    sobolev_index: int = 3

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float).copy()
        self.q = np.asarray(self.q, dtype=float).copy()
        if self.p.ndim != 1 or self.p.shape != self.q.shape:
            raise ValueError("p and q must be 1-D sequences of equal length")
        if self.p.size < 1:
            raise ValueError("A spectral state needs at least one mode")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.q))):
            raise ValueError("Spectral state contains non-finite coefficients")

    @property
    def N(self) -> int:
        return int(self.p.size)

    @classmethod
    def zeros(cls, N: int) -> "SpectralState":
        return cls(np.zeros(N), np.zeros(N))

    @classmethod
    def unit_mode(cls, N: int, k: int, component: str = "q") -> "SpectralState":
        if not 1 <= k <= N:
            raise ValueError(f"Mode {k} outside 1..{N}")
        state = cls.zeros(N)
        target = state.q if component == "q" else state.p
        target[k - 1] = 1.0
        return state

    @classmethod
    def from_vector(cls, u: FloatArray) -> "SpectralState":
        n = u.size // 2
        return cls(u[:n], u[n:])

    def as_vector(self) -> FloatArray:
        return np.concatenate([self.p, self.q])

    def weighted(self, s: float = 3) -> FloatArray:
        """Coordinates λ_k^{s/2}·(p, q) whose Euclidean norm is the X^s norm"""
        w = eigenvalues(self.N) ** (s / 2.0)
        return np.concatenate([w * self.p, w * self.q])


def sobolev_norm(state: SpectralState, s: Optional[int] = None) -> float:
    """(Σ_k λ_k^s (p_k² + q_k²))^{1/2}"""
    index = state.sobolev_index if s is None else s
    if index not in SOBOLEV_INDICES:
        raise ValueError(f"Unsupported Sobolev index {index}")
    lam = eigenvalues(state.N)
    return float(np.sqrt(np.sum(lam**index * (state.p**2 + state.q**2))))


def weights(N: int, s: float) -> FloatArray:
    """Diagonal λ_k^{s/2} repeated for both components"""
    w = eigenvalues(N) ** (s / 2.0)
    return np.concatenate([w, w])


# =============================================================================
# QUADRATURE
# =============================================================================


@lru_cache(maxsize=4)
def _reference_rule(points: int) -> Tuple[FloatArray, FloatArray]:
    x, w = roots_legendre(points)
    return np.asarray(x, dtype=float), np.asarray(w, dtype=float)


def base_panels(N: int) -> int:
    return math.ceil(4 * N / GAUSS_POINTS) + 4


def default_panels(N: int) -> int:
    """Two base levels so that a panel holds at most one oscillation of mode N"""
    return 2 * base_panels(N)


@dataclass(frozen=True)
class QuadratureRule:
    """Composite Gauss-Legendre rule on [0,1]"""

    nodes: FloatArray = field(repr=False)
    weights: FloatArray = field(repr=False)
    panels: int
    breakpoints: Optional[Tuple[float, ...]] = None

    @classmethod
    def composite(cls, panels: int) -> "QuadratureRule":
        edges = np.linspace(0.0, 1.0, panels + 1)
        return cls._on_edges(edges, panels, None)

    @classmethod
    def from_breakpoints(cls, breakpoints: Sequence[float], panels: int) -> "QuadratureRule":
        """Panels aligned with the given interior breakpoints, at least `panels` in total"""
        breaks = np.unique(np.clip(np.asarray(breakpoints, dtype=float), 0.0, 1.0))
        breaks = np.unique(np.concatenate([[0.0], breaks, [1.0]]))
        target_width = 1.0 / panels
        edges = [0.0]
        for a, b in zip(breaks[:-1], breaks[1:]):
            pieces = max(1, math.ceil((b - a) / target_width - 1e-12))
            edges.extend(np.linspace(a, b, pieces + 1)[1:].tolist())
        return cls._on_edges(np.asarray(edges), panels, tuple(float(b) for b in breaks))

    @classmethod
    def _on_edges(cls, edges: FloatArray, panels: int, breaks: Optional[Tuple[float, ...]]) -> "QuadratureRule":
        ref_x, ref_w = _reference_rule(GAUSS_POINTS)
        a = edges[:-1, None]
        h = np.diff(edges)[:, None]
        nodes = (a + 0.5 * h * (ref_x[None, :] + 1.0)).ravel()
        wts = (0.5 * h * ref_w[None, :]).ravel()
        return cls(nodes=nodes, weights=wts, panels=panels, breakpoints=breaks)

    def refined(self) -> "QuadratureRule":
        if self.breakpoints is None:
            return QuadratureRule.composite(2 * self.panels)
        return QuadratureRule.from_breakpoints(self.breakpoints, 2 * self.panels)

    def integrate(self, values: FloatArray) -> float:
        return float(np.dot(self.weights, values))


def _project_on_rule(f: RealFunction, N: int, rule: QuadratureRule) -> FloatArray:
    values = np.asarray(f(rule.nodes), dtype=float)
    return np.asarray(sine_matrix(N, rule.nodes) @ (rule.weights * values), dtype=float)


# =============================================================================
# EXACT POLYNOMIAL MOMENTS
# =============================================================================


def _power_trig_moments(degree: int, r: NDArray[np.int64]) -> Tuple[FloatArray, FloatArray]:
    """S[m] = ∫₀¹ x^m sin(rπx) dx and C[m] = ∫₀¹ x^m cos(rπx) dx for integer r"""
    r = np.asarray(r, dtype=np.int64)
    S = np.zeros((degree + 1, r.size))
    C = np.zeros((degree + 1, r.size))
    zero = r == 0
    nz = ~zero
    a = r[nz] * np.pi
    sign = np.where(r[nz] % 2 == 0, 1.0, -1.0)  # cos(rπ)
    S[0, nz] = (1.0 - sign) / a
    for m in range(1, degree + 1):
        C[m, nz] = -(m / a) * S[m - 1, nz]
        S[m, nz] = -sign / a + (m / a) * C[m - 1, nz]
    C[:, zero] = (1.0 / np.arange(1, degree + 2, dtype=float))[:, None]
    return S, C


def sine_moments_polynomial(coeffs: Sequence[float], N: int, times_phi1: bool = False) -> FloatArray:
    """Exact ⟨p, φ_k⟩ (or ⟨p·φ₁, φ_k⟩) for p(x) = Σ c_j x^j, k = 1..N"""
    c = np.asarray(coeffs, dtype=float)
    if c.size == 0:
        return np.zeros(N)
    degree = c.size - 1
    k = np.arange(1, N + 1, dtype=np.int64)
    if not times_phi1:
        S, _ = _power_trig_moments(degree, k)
        return np.asarray(SQRT2 * (c @ S), dtype=float)
    # 2 sin(πx) sin(kπx) = cos((k-1)πx) - cos((k+1)πx)
    _, C_minus = _power_trig_moments(degree, k - 1)
    _, C_plus = _power_trig_moments(degree, k + 1)
    return np.asarray(c @ (C_minus - C_plus), dtype=float)


# =============================================================================
# ANALYSIS / SYNTHESIS
# =============================================================================


def project(
    f: Union[RealFunction, Polynomial],
    N: int,
    quad_order: Optional[int] = None,
    breakpoints: Optional[Sequence[float]] = None,
) -> FloatArray:
    """⟨f, φ_k⟩ for k = 1..N.

    Polynomials take the exact moment path. Other functions go through the
    composite Gauss-Legendre rule with `quad_order` panels (aligned to
    `breakpoints` when given) and are re-projected on twice as many panels;
    a relative change above 1e-10 raises QuadratureUnderresolution.
    """
    if isinstance(f, Polynomial):
        return sine_moments_polynomial(f.convert().coef, N)

    panels = default_panels(N) if quad_order is None else int(quad_order)
    if panels < 1:
        raise ValueError("quad_order must be a positive panel count")
    if breakpoints is None:
        rule = QuadratureRule.composite(panels)
    else:
        rule = QuadratureRule.from_breakpoints(breakpoints, panels)

    coarse = _project_on_rule(f, N, rule)
    fine = _project_on_rule(f, N, rule.refined())
    scale = max(float(np.max(np.abs(fine))), np.finfo(float).tiny)
    change = float(np.max(np.abs(fine - coarse))) / scale
    logger.debug("project: N=%d panels=%d relative change %.3e", N, panels, change)
    if change > UNDERRESOLUTION_TOL:
        raise QuadratureUnderresolution(
            f"Projection on {panels} panels is under-resolved (relative change {change:.3e})", change
        )
    return fine


def synthesize(coeffs: ArrayLike, x: ArrayLike) -> FloatArray:
    """Σ_k c_k φ_k(x)"""
    c = np.asarray(coeffs, dtype=float)
    return np.asarray(c @ sine_matrix(c.size, x), dtype=float)
