# ----------------------------------------------------------------
# RapidStab 1.0 - Commands (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

# Standard library imports
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

# Third party imports
import numpy as np
import pandas as pd

# Local application imports
import basis_family
import closed_loop_sim
import finite_dim
import moment_data
import report_io
import saint_venant
import spectral_core
import stabilizer
from config import SCHEMA_VERSION, RunConfig
from errors import InstabilityDetected, UsageError
from utils import print_summary

logger = logging.getLogger(__name__)

GAINS_FILE = "gains.json"
TRANSFORM_FILE = "transform.bin"
REPORT_FILE = "report.json"
TRACE_FILE = "trace.csv"
SUMMARY_FILE = "summary.json"
KERNEL_FILE = "kernel.csv"
KERNEL_REPORT_FILE = "kernel_report.json"
FINITE_DIM_FILE = "finite_dim.json"
SV_TRACE_FILE = "sv_trace.csv"
SV_REPORT_FILE = "sv_report.json"

GIBBS_TOL = 1e-6
N_COHERENCE_TOL = 0.01


def _output_dir(cfg: RunConfig) -> Path:
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"Cannot create output directory {cfg.output_dir}: {e}") from e
    return cfg.output_dir


# =============================================================================
# SYNTHESIS
# =============================================================================


@dataclass
class Synthesis:
    mu: moment_data.DipolarMoment
    table: moment_data.ModeTable
    basis: basis_family.BasisFamily
    gains: stabilizer.FeedbackGains
    T: stabilizer.TransformOperator


def synthesize(cfg: RunConfig, N: Optional[int] = None) -> Synthesis:
    mu = moment_data.DipolarMoment.from_config(cfg.mu, cfg.base_dir)
    table = moment_data.moment_table(mu, N or cfg.N, cfg.decay, shifted=cfg.shifted)
    basis = basis_family.build_basis(table)
    gains = stabilizer.solve_tb_eq_b(basis, table)
    T = stabilizer.assemble_T(basis, gains, table)
    return Synthesis(mu=mu, table=table, basis=basis, gains=gains, T=T)


def smooth_test_state(N: int, shifted: bool) -> spectral_core.SpectralState:
    """Coefficients 1/k³ on the modes k ≤ N/4"""
    support = max(2, N // 4)
    k = np.arange(1, N + 1, dtype=float)
    coeffs = np.where(k <= support, 1.0 / k**3, 0.0)
    p = 0.5 * coeffs
    if shifted:
        p[0] = 0.0
    return spectral_core.SpectralState(p, coeffs.copy())


def n_coherence(cfg: RunConfig, syn: Synthesis) -> Dict[str, Any]:
    """Relative change of α²_n, n ≤ N/8, between the solves at N and N/2"""
    if cfg.N < 16:
        return {"checked": False, "reason": f"N={cfg.N} is too small for the N/2 comparison"}
    half = synthesize(cfg, cfg.N // 2)
    count = max(1, cfg.N // 8)
    a_full = syn.gains.alpha2[:count]
    a_half = half.gains.alpha2[:count]
    change = float(np.max(np.abs(a_full - a_half) / np.abs(a_full)))
    return {"checked": True, "modes": count, "max_relative_change": change, "passed": change < N_COHERENCE_TOL}


def gains_document(cfg: RunConfig, syn: Synthesis) -> Dict[str, Any]:
    t = syn.table
    return {
        "schema_version": SCHEMA_VERSION,
        "N": t.N,
        "lambda": t.decay,
        "mode": cfg.mode,
        "lambda_shift": t.lambda_shift,
        "lambda_k": t.lam,
        "m": t.m,
        "h_k": t.h_coeff,
        "beta1": t.beta1,
        "beta2": t.beta2,
        "alpha1": syn.gains.alpha1,
        "alpha2": syn.gains.alpha2,
        "rotation_omega": syn.gains.rotation_omega,
    }


def cmd_synth(cfg: RunConfig) -> Dict[str, Any]:
    syn = synthesize(cfg)
    t, basis, gains, T = syn.table, syn.basis, syn.gains, syn.T
    hypothesis = moment_data.check_hypothesis(t.m, t.N)
    frame2 = basis_family.frame_bounds(basis, 2)
    frame3 = basis_family.frame_bounds(basis, 3, check=False)
    test_state = smooth_test_state(t.N, t.shifted)
    hs_tail = T.hs_tail if T.hs_tail is not None else np.zeros(2 * t.N)

    report: Dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "N": t.N,
        "lambda": t.decay,
        "mode": cfg.mode,
        "hypothesis": hypothesis.as_dict(),
        "mu_endpoint_derivatives": [syn.mu.mu_p0, syn.mu.mu_p1],
        "normalisation_residual": basis_family.normalisation_residual(basis),
        "frame_bounds": {"X2": list(frame2), "X3_tilde": list(frame3)},
        "tails": {"s2": basis_family.closeness_tails(basis, 2), "s3": basis_family.closeness_tails(basis, 3)},
        "tb_eq_b_residual": gains.solve_residual,
        "tb_eq_b_operator_residual": stabilizer.tb_eq_b_operator_residual(T, t),
        "transform": {
            "norm": stabilizer.transform_norm(T),
            "inverse_norm": stabilizer.transform_inverse_norm(T),
            "cond": T.cond,
            "identity_residual": float(np.max(np.abs(T.Tmat @ T.Tinv - np.eye(2 * t.N)))),
        },
        "fredholm": {
            "cond_tilde": T.cond_tilde,
            "hs_tail_fraction": stabilizer.hs_tail_fraction(hs_tail),
            "hs_total": float(np.sum(hs_tail**2)),
        },
        "operator_equality": {
            "support": max(2, t.N // 4),
            "residual": stabilizer.operator_equality_residual(T, gains, t, test_state),
        },
        "eigen_placement": stabilizer.eigenvalue_placement(gains, t),
        "regularity_split": stabilizer.regularity_split(gains, t) if t.N >= 8 else None,
        "n_coherence": n_coherence(cfg, syn),
        "warnings": list(cfg.warnings),
    }
    if cfg.strict_domain:
        report["operator_equality"]["strict_residual"] = stabilizer.operator_equality_residual(
            T, gains, t, test_state, strict=True, mu=syn.mu
        )

    out = _output_dir(cfg)
    report_io.write_json(gains_document(cfg, syn), out / GAINS_FILE)
    report_io.write_transform_bin(T.Tmat, t.N, out / TRANSFORM_FILE)
    report_io.write_json(report, out / REPORT_FILE)
    print_summary(
        f"Synthesis N={t.N} λ={t.decay:g} ({cfg.mode})",
        [
            ("k³|m_k| range", f"[{hypothesis.c_lower:.4g}, {hypothesis.c_upper:.4g}]"),
            ("TB=B residual", gains.solve_residual),
            ("cond(T)", T.cond),
            ("HS tail fraction", report["fredholm"]["hs_tail_fraction"]),
            ("output", str(out)),
        ],
    )
    return report


# =============================================================================
# SIMULATION
# =============================================================================


def _load_synthesis(
    cfg: RunConfig,
) -> Tuple[moment_data.ModeTable, stabilizer.FeedbackGains, stabilizer.TransformOperator]:
    out = cfg.output_dir
    if not (out / GAINS_FILE).exists() or not (out / TRANSFORM_FILE).exists():
        raise UsageError(f"No synthesized gains in {out}; run 'rapidstab synth' first")
    doc = report_io.read_json(out / GAINS_FILE)
    try:
        N = int(doc["N"])
        decay = float(doc["lambda"])
        lam = np.asarray(doc["lambda_k"], dtype=float)
        shift = float(doc["lambda_shift"])
        table = moment_data.ModeTable(
            decay=decay,
            lam=lam,
            sigma=lam - shift,
            m=np.asarray(doc["m"], dtype=float),
            h_coeff=np.asarray(doc["h_k"], dtype=float),
            beta1=np.asarray(doc["beta1"], dtype=float),
            beta2=np.asarray(doc["beta2"], dtype=float),
            lambda_shift=shift,
        )
        gains = stabilizer.FeedbackGains(
            alpha1=np.asarray(doc["alpha1"], dtype=float),
            alpha2=np.asarray(doc["alpha2"], dtype=float),
            rotation_omega=float(doc["rotation_omega"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"{out / GAINS_FILE} is not a gains document: {e}") from e
    if N != cfg.N or not math.isclose(decay, cfg.decay) or doc.get("mode") != cfg.mode:
        raise UsageError(f"{out / GAINS_FILE} was synthesized for N={N}, λ={decay}, mode={doc.get('mode')}")
    n_bin, Tw = report_io.read_transform_bin(out / TRANSFORM_FILE)
    if n_bin != N:
        raise UsageError(f"{out / TRANSFORM_FILE} holds N={n_bin}, gains hold N={N}")
    return table, gains, stabilizer.operator_from_weighted(Tw, N)


def cmd_simulate(cfg: RunConfig) -> Dict[str, Any]:
    table, gains, T = _load_synthesis(cfg)
    initial = cfg.initial_state()
    trace = closed_loop_sim.simulate(initial, gains, table, cfg.dt, cfg.t_final, cfg.sample_every)
    summary: Dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "N": table.N,
        "lambda": table.decay,
        "mode": cfg.mode,
        "dt": cfg.dt,
        "t_final": cfg.t_final,
        "fitted_rate": trace.fitted_rate,
        "fit_window": list(trace.fit_window),
        "measured_C": trace.measured_C,
        "cond_T": T.cond,
        "C_within_cond_bound": bool(trace.measured_C <= 1.1 * T.cond),
        "unstable": trace.unstable,
        "warnings": list(cfg.warnings),
    }
    if cfg.check_half_dt and not trace.unstable:
        half = closed_loop_sim.simulate(initial, gains, table, 0.5 * cfg.dt, cfg.t_final, 2 * cfg.sample_every)
        summary["rate_half_dt"] = half.fitted_rate
        summary["rate_shift_half_dt"] = abs(half.fitted_rate - trace.fitted_rate) / abs(trace.fitted_rate)
    if table.shifted and not trace.unstable:
        rotating = closed_loop_sim.simulate_rotating(initial, gains, table, cfg.dt, cfg.t_final, cfg.sample_every)
        diff = np.max(np.abs(rotating.norm_h3 - trace.norm_h3)) / trace.norm_h3[0]
        summary["rotating"] = {"fitted_rate": rotating.fitted_rate, "max_norm_difference": float(diff)}

    out = _output_dir(cfg)
    closed_loop_sim.write_trace_csv(trace, out / TRACE_FILE)
    report_io.write_json(summary, out / SUMMARY_FILE)
    print_summary(
        f"Closed loop N={table.N} λ={table.decay:g}",
        [
            ("fitted rate", trace.fitted_rate),
            ("measured C", trace.measured_C),
            ("cond(T)", T.cond),
            ("unstable", trace.unstable),
        ],
    )
    if trace.unstable:
        growth = float(trace.norm_h3[-1] / trace.norm_h3[0])
        raise InstabilityDetected(
            f"Closed-loop norm grew by {growth:.3e} at t={trace.times[-1]:.4g}", float(trace.times[-1]), growth
        )
    return summary


# =============================================================================
# KERNELS
# =============================================================================


def cmd_kernel(cfg: RunConfig) -> Dict[str, Any]:
    syn = synthesize(cfg)
    F12, F22 = stabilizer.kernel_coefficients(syn.basis, syn.gains, syn.table)
    grid = np.linspace(0.0, 1.0, cfg.kernel_grid)
    S = spectral_core.sine_matrix(syn.table.N, grid)  # (N, points)
    k12 = S.T @ F12.T @ S
    k22 = S.T @ F22.T @ S
    scale = max(float(np.max(np.abs(k12))), float(np.max(np.abs(k22))), np.finfo(float).tiny)
    edges = np.concatenate(
        [k[[0, -1], :].ravel() for k in (k12, k22)] + [k[:, [0, -1]].ravel() for k in (k12, k22)]
    )
    boundary = float(np.max(np.abs(edges))) / scale
    if boundary > GIBBS_TOL:
        logger.warning("Kernel boundary values reach %.3e of the kernel scale", boundary)

    # ∫k(x,y)(μφ₁)(y)dy at the grid points against the synthesized μφ₁
    mu_phi1 = syn.table.m @ S
    tb_k12 = syn.table.m @ F12 @ S
    tb_k22 = syn.table.m @ F22 @ S
    report = {
        "schema_version": SCHEMA_VERSION,
        "N": syn.table.N,
        "grid": cfg.kernel_grid,
        "boundary_relative_max": boundary,
        "boundary_within_tolerance": bool(boundary <= GIBBS_TOL),
        "tb_eq_b": stabilizer.kernel_tb_residuals(F12, F22, syn.table.m),
        "tb_eq_b_pointwise": {
            "k12_max": float(np.max(np.abs(tb_k12))),
            "k22_max": float(np.max(np.abs(tb_k22 - mu_phi1))),
        },
        "warnings": list(cfg.warnings),
    }
    X, Y = np.meshgrid(grid, grid, indexing="ij")
    frame = pd.DataFrame({"x": X.ravel(), "y": Y.ravel(), "k12": k12.ravel(), "k22": k22.ravel()})
    out = _output_dir(cfg)
    report_io.write_csv(frame, out / KERNEL_FILE)
    report_io.write_json(report, out / KERNEL_REPORT_FILE)
    print_summary(
        f"Kernels on a {cfg.kernel_grid}x{cfg.kernel_grid} grid",
        [("boundary max (relative)", boundary), ("TB=B k22 residual", report["tb_eq_b"]["k22_relative"])],
    )
    return report


# =============================================================================
# FINITE DIMENSION
# =============================================================================


def _finite_input(cfg: RunConfig) -> Optional[finite_dim.LtiSystem]:
    spec = cfg.finite_dim
    if spec.get("input"):
        path = Path(str(spec["input"]))
        if not path.is_absolute():
            path = cfg.base_dir / path
        return finite_dim.LtiSystem.from_dict(report_io.read_json(path))
    if spec.get("A") is not None:
        data = dict(spec)
        if data.get("lambda") is None:
            data["lambda"] = cfg.decay
        return finite_dim.LtiSystem.from_dict(data)
    return None


def random_sweep(rng: np.random.Generator, trials: int, max_dim: int) -> Dict[str, Any]:
    decays = (0.5, 1.0, 2.0)
    worst: Dict[str, float] = {"eigenvalue_error": 0.0, "identity_residual": 0.0, "tb_residual": 0.0, "imag_residual": 0.0}
    failures = 0
    for trial in range(trials):
        n = int(rng.integers(1, max_dim + 1))
        sys = finite_dim.random_system(rng, n, decays[trial % len(decays)])
        result = finite_dim.synthesize_finite(sys)
        check = finite_dim.verify_pole_shift(sys, result.T, result.K)
        for key in ("eigenvalue_error", "identity_residual", "tb_residual"):
            worst[key] = max(worst[key], check[key])
        worst["imag_residual"] = max(worst["imag_residual"], result.imag_residual)
        failures += 0 if check["passed"] else 1
    return {"trials": trials, "max_dim": max_dim, "worst": worst, "failures": failures}


def cmd_finite_dim(cfg: RunConfig) -> Dict[str, Any]:
    spec = cfg.finite_dim
    trials = int(spec.get("random_trials") or 0)
    sys = _finite_input(cfg)
    if sys is None and trials <= 0:
        raise UsageError("finite-dim needs finite_dim.input, inline finite_dim.A/B or finite_dim.random_trials > 0")
    report: Dict[str, Any] = {"schema_version": SCHEMA_VERSION, "seed": cfg.seed}
    if sys is not None:
        result = finite_dim.synthesize_finite(sys)
        report["system"] = {"n": sys.n, "lambda": sys.decay, "kalman_rank": finite_dim.kalman_rank(sys)}
        report["T"] = result.T
        report["K"] = result.K
        report["imag_residual"] = result.imag_residual
        report["verification"] = finite_dim.verify_pole_shift(sys, result.T, result.K)
    if trials > 0:
        rng = np.random.default_rng(cfg.seed)
        report["random"] = random_sweep(rng, trials, int(spec.get("max_dim") or 8))

    out = _output_dir(cfg)
    report_io.write_json(report, out / FINITE_DIM_FILE)
    rows: List[Tuple[str, Any]] = []
    if sys is not None:
        rows.append(("K", np.array2string(np.asarray(report["K"]), precision=6)))
        rows.append(("eigenvalue error", report["verification"]["eigenvalue_error"]))
    if trials > 0:
        rows.append(("random failures", f"{report['random']['failures']}/{trials}"))
    print_summary("Finite-dimensional pole shift", rows)
    return report


# =============================================================================
# SAINT-VENANT
# =============================================================================


def _energy_at(trace: saint_venant.SvTrace, time: float) -> Optional[float]:
    hits = np.flatnonzero(np.abs(trace.times - time) < 1e-9)
    return float(trace.energy[hits[0]]) if hits.size else None


def cmd_saint_venant(cfg: RunConfig) -> Dict[str, Any]:
    spec = cfg.saint_venant
    try:
        decay = float(spec["lambda"])
        M = int(spec["M"])
        t_final = float(spec["t_final"])
        n_modes = int(spec["n_modes"])
        profile = dict(spec.get("profile") or {})
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"Invalid saint_venant section: {e}") from e
    if decay < 0.0 or M < 3 or t_final <= 0.0 or n_modes < 1:
        raise UsageError("saint_venant needs lambda ≥ 0, M ≥ 3, t_final > 0 and n_modes ≥ 1")

    h, v = saint_venant.smooth_profile(M, float(profile.get("h_amplitude", 1.0)), float(profile.get("v_amplitude", 0.5)))
    grid = saint_venant.RiemannGrid.from_hv(h, v, decay)
    trace = saint_venant.simulate_sv(grid, t_final)
    expected = trace.weighted_energy[0] * np.exp(-2.0 * decay * trace.times)
    weighted_error = float(np.max(np.abs(trace.weighted_energy - expected))) / trace.weighted_energy[0]

    analytic = saint_venant.analytic_gains(decay, n_modes)
    projection_error = []
    for grid_m in (M, 2 * M):
        a1, a2 = saint_venant.projected_gains(decay, grid_m, n_modes)
        projection_error.append(max(float(np.max(np.abs(a1))), float(np.max(np.abs(a2 - analytic)))))

    report: Dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "lambda": decay,
        "M": M,
        "t_final": t_final,
        "reflection_coefficient": saint_venant.reflection_coefficient(decay),
        "reflection_expected": -math.exp(-2.0 * decay),
        "weighted_energy_relative_error": weighted_error,
        "commutation_residual": saint_venant.commutation_residual(grid, M),
        "energy_rate": saint_venant.round_trip_rate(trace) if t_final >= 2.0 * saint_venant.ROUND_TRIP else None,
        "expected_rate": 2.0 * decay,
        "energy_after_round_trip": _energy_at(trace, saint_venant.ROUND_TRIP),
        "energy_after_round_trip_expected": float(trace.energy[0]) * math.exp(-4.0 * decay),
        "transform_mismatch": saint_venant.transform_mismatch(h, v, decay, min(t_final, 1.0)),
        "gains": {"analytic_alpha2": analytic, "projection_error": {"M": projection_error[0], "2M": projection_error[1]}},
    }
    out = _output_dir(cfg)
    saint_venant.write_sv_trace_csv(trace, out / SV_TRACE_FILE)
    report_io.write_json(report, out / SV_REPORT_FILE)
    print_summary(
        f"Saint-Venant λ={decay:g} M={M}",
        [("energy rate", report["energy_rate"]), ("expected", 2.0 * decay), ("Ẽ error", weighted_error)],
    )
    return report


COMMAND_TABLE: Dict[str, Callable[[RunConfig], Dict[str, Any]]] = {
    "synth": cmd_synth,
    "simulate": cmd_simulate,
    "kernel": cmd_kernel,
    "finite-dim": cmd_finite_dim,
    "saint-venant": cmd_saint_venant,
}
