# ----------------------------------------------------------------
# RapidStab 1.0 - Dipolar Moment Data (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

"""Moment coefficients m_k = ⟨μφ₁, φ_k⟩, the moment hypothesis sweep and the cubic corrector"""

# Standard library imports
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

# Third party imports
import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline

# Local application imports
from errors import HypothesisViolation, UsageError
import spectral_core
from spectral_core import FloatArray

logger = logging.getLogger(__name__)

HYPOTHESIS_TOL = 1e-8
ENDPOINT_TOL = 1e-10


# =============================================================================
# DIPOLAR MOMENT
# =============================================================================


@dataclass(frozen=True, eq=False)
class DipolarMoment:
    """μ given either as a polynomial (ascending coefficients) or as uniform samples"""

    kind: str
    coefficients: Optional[Tuple[float, ...]] = None
    nodes: Optional[FloatArray] = field(default=None, repr=False)
    values: Optional[FloatArray] = field(default=None, repr=False)
    mu_p0: float = 0.0
    mu_p1: float = 0.0

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> "DipolarMoment":
        coeffs = tuple(float(c) for c in coefficients)
        if not coeffs:
            raise UsageError("Polynomial μ needs at least one coefficient")
        dpoly = Polynomial(coeffs).deriv()
        return cls(kind="polynomial", coefficients=coeffs, mu_p0=float(dpoly(0.0)), mu_p1=float(dpoly(1.0)))

    @classmethod
    def sampled(cls, nodes: Sequence[float], values: Sequence[float]) -> "DipolarMoment":
        x = np.asarray(nodes, dtype=float)
        y = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 5:
            raise UsageError("Sampled μ needs at least five (x, μ) pairs")
        spacing = np.diff(x)
        if abs(x[0]) > 1e-12 or abs(x[-1] - 1.0) > 1e-12 or not np.allclose(spacing, spacing[0], rtol=1e-9):
            raise UsageError("Sampled μ must be given on a uniform grid covering [0, 1]")
        d0, d1 = endpoint_derivatives(y, float(spacing[0]))
        return cls(kind="samples", nodes=x, values=y, mu_p0=d0, mu_p1=d1)

    @classmethod
    def from_csv(cls, path: str) -> "DipolarMoment":
        """Two-column table with headers x, mu"""
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError) as e:
            raise UsageError(f"Cannot read μ samples from {path}: {e}") from e
        if not {"x", "mu"}.issubset(frame.columns):
            raise UsageError(f"{path}: expected columns 'x' and 'mu'")
        return cls.sampled(frame["x"].to_numpy(), frame["mu"].to_numpy())

    @classmethod
    def from_config(cls, spec: Dict[str, Any], base_dir: Optional[Path] = None) -> "DipolarMoment":
        kind = spec.get("kind", "polynomial")
        if kind == "polynomial":
            return cls.polynomial(spec.get("coefficients", [0.0, 0.0, 1.0]))
        if kind == "samples":
            path = Path(str(spec.get("path", "")))
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return cls.from_csv(str(path))
        raise UsageError(f"Unknown μ representation '{kind}'")

    def __call__(self, x: FloatArray) -> FloatArray:
        if self.coefficients is not None:
            return np.asarray(Polynomial(self.coefficients)(x), dtype=float)
        return np.asarray(self._spline()(x), dtype=float)

    def _spline(self) -> CubicSpline:
        assert self.nodes is not None and self.values is not None
        return CubicSpline(self.nodes, self.values, bc_type=((1, self.mu_p0), (1, self.mu_p1)))

    def check_endpoint_condition(self) -> None:
        """Necessary condition μ'(1) ≠ ±μ'(0) for the moment hypothesis"""
        scale = max(1.0, abs(self.mu_p0), abs(self.mu_p1))
        if abs(self.mu_p1 - self.mu_p0) <= ENDPOINT_TOL * scale or abs(self.mu_p1 + self.mu_p0) <= ENDPOINT_TOL * scale:
            raise HypothesisViolation(
                f"μ'(0)={self.mu_p0:.6g}, μ'(1)={self.mu_p1:.6g}: need μ'(1) ≠ μ'(0) and μ'(1) ≠ -μ'(0)"
            )

    def scaled(self, factor: float) -> "DipolarMoment":
        if self.coefficients is not None:
            return DipolarMoment.polynomial([factor * c for c in self.coefficients])
        assert self.nodes is not None and self.values is not None
        return DipolarMoment.sampled(self.nodes, factor * self.values)


def endpoint_derivatives(values: FloatArray, h: float) -> Tuple[float, float]:
    """Fourth-order one-sided differences at both ends of a uniform grid"""
    f = values
    d0 = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    d1 = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * h)
    return float(d0), float(d1)


# =============================================================================
# MOMENT COEFFICIENTS
# =============================================================================


@dataclass(frozen=True)
class MomentCoefficients:
    m: FloatArray
    residual: FloatArray  # m_k - h_k


def corrector_coefficients(mu: DipolarMoment, N: int) -> FloatArray:
    """h_k = 4/(k³π²)((-1)^{k+1}μ'(1) - μ'(0))"""
    k = np.arange(1, N + 1, dtype=float)
    sign = np.where(np.arange(1, N + 1) % 2 == 1, 1.0, -1.0)
    return np.asarray(4.0 / (k**3 * math.pi**2) * (sign * mu.mu_p1 - mu.mu_p0), dtype=float)


def leading_asymptotic(mu: DipolarMoment, k: int) -> float:
    """Leading term of m_k for large k (the Riemann-Lebesgue remainder dropped)"""
    return float(corrector_coefficients(mu, k)[k - 1])


def moment_coefficients(mu: DipolarMoment, N: int, quad_order: Optional[int] = None) -> MomentCoefficients:
    if mu.coefficients is not None:
        m = spectral_core.sine_moments_polynomial(mu.coefficients, N, times_phi1=True)
    else:
        phi1 = spectral_core.eigenpair(1)
        assert mu.nodes is not None
        m = spectral_core.project(lambda x: mu(x) * phi1.phi(x), N, quad_order, breakpoints=mu.nodes)
    return MomentCoefficients(m=m, residual=m - corrector_coefficients(mu, N))


@dataclass(frozen=True)
class HypothesisReport:
    c_lower: float
    c_upper: float
    worst_k: int
    passed: bool

    def as_dict(self) -> Dict[str, Any]:
        return {"c_lower": self.c_lower, "c_upper": self.c_upper, "worst_k": self.worst_k, "passed": self.passed}


def check_hypothesis(m: FloatArray, N: Optional[int] = None, tol: float = HYPOTHESIS_TOL) -> HypothesisReport:
    """min/max of k³|m_k| over k ≤ N; raises HypothesisViolation when the minimum is below tol"""
    values = np.asarray(m, dtype=float)[: N if N is not None else None]
    k = np.arange(1, values.size + 1, dtype=float)
    scaled = k**3 * np.abs(values)
    worst = int(np.argmin(scaled))
    report = HypothesisReport(
        c_lower=float(scaled[worst]), c_upper=float(np.max(scaled)), worst_k=worst + 1, passed=bool(scaled[worst] > tol)
    )
    if not report.passed:
        raise HypothesisViolation(
            f"k³|m_k| = {report.c_lower:.3e} at k={report.worst_k} is below {tol:g}",
            worst_k=report.worst_k,
            c_lower=report.c_lower,
        )
    logger.info("Moment hypothesis holds for k ≤ %d: %.4g ≤ k³|m_k| ≤ %.4g", values.size, report.c_lower, report.c_upper)
    return report


# =============================================================================
# CUBIC CORRECTOR
# =============================================================================


def cubic_corrector(mu: DipolarMoment, N: int) -> Tuple[Polynomial, FloatArray]:
    """h(x) = -(π√2/3)((μ'(0)+μ'(1))x³ - 3μ'(0)x² + (2μ'(0)-μ'(1))x) and its coefficients h_k"""
    d0, d1 = mu.mu_p0, mu.mu_p1
    factor = -math.pi * math.sqrt(2.0) / 3.0
    h = Polynomial([0.0, factor * (2.0 * d0 - d1), factor * (-3.0 * d0), factor * (d0 + d1)])
    return h, corrector_coefficients(mu, N)


# =============================================================================
# MODE TABLE
# =============================================================================


@dataclass(frozen=True, eq=False)
class ModeTable:
    """Per-mode synthesis inputs. `sigma` are the eigenvalues driving the dynamics
    (λ_k, or λ_k - λ₁ in the shifted mode); `lam` are always the Dirichlet λ_k."""

    decay: float
    lam: FloatArray
    sigma: FloatArray
    m: FloatArray
    h_coeff: FloatArray
    beta1: FloatArray
    beta2: FloatArray
    lambda_shift: float = 0.0

    @property
    def N(self) -> int:
        return int(self.lam.size)

    @property
    def shifted(self) -> bool:
        return self.lambda_shift != 0.0

    @property
    def g_active(self) -> NDArray[np.bool_]:
        """g-columns kept in the basis (n = 1 is dropped in the shifted mode)"""
        active = np.ones(self.N, dtype=bool)
        if self.shifted:
            active[0] = False
        return active


def moment_table(
    mu: DipolarMoment,
    N: int,
    decay: float,
    shifted: bool = False,
    quad_order: Optional[int] = None,
    check: bool = True,
) -> ModeTable:
    """Bundle λ_k, m_k, h_k, β¹, β² for one synthesis"""
    # basis_family imports ModeTable from here
    from basis_family import beta_values

    if check:
        mu.check_endpoint_condition()
    moments = moment_coefficients(mu, N, quad_order)
    if check:
        check_hypothesis(moments.m, N)
    lam = spectral_core.eigenvalues(N)
    shift = float(lam[0]) if shifted else 0.0
    sigma = lam - shift
    beta1, beta2 = beta_values(decay, lam, sigma, moments.m)
    return ModeTable(
        decay=decay,
        lam=lam,
        sigma=sigma,
        m=moments.m,
        h_coeff=corrector_coefficients(mu, N),
        beta1=beta1,
        beta2=beta2,
        lambda_shift=shift,
    )
