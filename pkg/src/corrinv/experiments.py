"""End-to-end stability experiments.

Noise sweeps probe the logarithmic stability of the recovered corrosion law,
flux-magnitude sweeps probe the lower bound on the trace oscillation, and a
quadrature check verifies the three-spheres log-convexity of harmonic
functions.  Fitted rate constants are empirical and reported with residuals;
they are not the worst-case constants of the estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from corrinv.continuation import (
    CauchyData,
    CornerSingularBasis,
    FundamentalSolutionBasis,
    HarmonicPolynomialBasis,
    choose_mu,
    evaluate_on_gamma1,
    fit,
)
from scipy.sparse.linalg import spsolve

from corrinv.forward import (
    FluxProfile,
    NonlinearityModel,
    assemble_boundary_load,
    assemble_stiffness,
    boundary_profile,
    extract_cauchy_data,
    solve_forward,
)
from corrinv.geometry import (
    BoundaryTag,
    DomainSpec,
    GeometryError,
    Mesh,
    build_rectangle_mesh,
    inner_portion,
    point_segment_distance,
    trace_sample,
)
from corrinv.reconstruction import (
    ReconstructedNonlinearity,
    extract_f,
    find_monotone_segment,
    overlap_and_error,
)

__all__ = [
    "ExperimentConfig",
    "StabilityCurve",
    "OscillationCurve",
    "RateFit",
    "run_noise_sweep",
    "run_oscillation_sweep",
    "three_spheres_check",
    "disk_integral",
    "fit_rate",
    "continue_data",
    "reconstruct_from_data",
    "truth_on_interval",
]


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainSpec
    mesh_n: int
    model: NonlinearityModel
    flux: FluxProfile
    eps_levels: tuple
    seeds_per_level: int
    basis_kind: str = "poly"
    basis_degree: int = 10
    mfs_charges: int = 64
    mfs_offset_factor: float = 0.5
    gamma1_samples: int = 101
    gamma2_samples: int | None = None
    gammad_samples: int = 129
    eta_factor: float = 0.25
    trim_factor: float = 2.0
    mu0: float = 1e-10
    tau: float = 1.2
    lift_passes: int = 1
    corner_terms: bool = True

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_levels)
        if len(eps) < 3:
            raise ValueError("need at least three noise levels")
        if not all(a > b for a, b in zip(eps, eps[1:])):
            raise ValueError("noise levels must be strictly decreasing")
        if any(e < 0 for e in eps):
            raise ValueError("noise levels must be nonnegative")
        if self.seeds_per_level < 5:
            raise ValueError("need at least five seeds per level")
        object.__setattr__(self, "eps_levels", eps)

    def make_basis(self):
        if self.basis_kind == "poly":
            inner = HarmonicPolynomialBasis(self.basis_degree,
                                            self.domain.centroid())
        elif self.basis_kind == "mfs":
            offset = self.mfs_offset_factor * self.domain.diameter()
            inner = FundamentalSolutionBasis.around_polygon(
                self.domain.vertices, self.mfs_charges, offset)
        else:
            raise ValueError(f"unknown basis kind {self.basis_kind!r}")
        if self.corner_terms:
            return CornerSingularBasis.around_gamma2(inner, self.domain)
        return inner


@dataclass(frozen=True)
class StabilityCurve:
    """Per-noise-level medians of the sup error of the recovered law, and
    the fitted log-power rate err = C * |log eps|^(-theta)."""

    records: tuple  # (eps, median_err, iqr, failures)
    c_fit: float
    theta_fit: float
    fit_residual: float
    eps0: float  # largest level at which most seeds still reconstruct


@dataclass(frozen=True)
class OscillationCurve:
    """Trace oscillation against the flux magnitude, and the fitted
    stretched-exponential envelope osc = exp(-(m/c)^(-gamma))."""

    records: tuple  # (m, g_sup, osc)
    c_fit: float
    gamma_fit: float
    fit_residual: float
    truncated_at: float | None = None


@dataclass(frozen=True)
class RateFit:
    model: str
    constants: dict
    residual: float


def fit_rate(xs, ys, model: str) -> RateFit:
    """Least-squares fit of a rate law in its linearizing coordinates.

    log_power:   y = C * |log x|^(-theta)   -> log y vs log|log x|
    exp_stretch: y = exp(-(x/c)^(-gamma))   -> log(-log y) vs log x
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3:
        raise ValueError("need at least three points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("rate fits need strictly positive inputs")
    if model == "log_power":
        X = np.log(np.abs(np.log(xs)))
        Y = np.log(ys)
        slope, intercept = np.polyfit(X, Y, 1)
        constants = {"C": float(np.exp(intercept)), "theta": float(-slope)}
    elif model == "exp_stretch":
        if np.any(ys >= 1):
            raise ValueError("stretched-exponential fit needs values in (0,1)")
        X = np.log(xs)
        Y = np.log(-np.log(ys))
        slope, intercept = np.polyfit(X, Y, 1)
        gamma = float(-slope)
        constants = {"c": float(np.exp(intercept / gamma)), "gamma": gamma}
    else:
        raise ValueError(f"unknown rate model {model!r}")
    resid = float(np.sqrt(np.mean((Y - (slope * X + intercept)) ** 2)))
    return RateFit(model=model, constants=constants, residual=resid)


def truth_on_interval(model: NonlinearityModel, interval,
                      grid: int = 1001) -> ReconstructedNonlinearity:
    """The true law sampled densely on an interval, for sup-error
    comparisons against a reconstruction."""
    a, b = interval
    u = np.linspace(a, b, grid)
    return ReconstructedNonlinearity(interval=(a, b), u_knots=u,
                                     f_knots=model(u))


def _lift_solve(mesh: Mesh, flux2: FluxProfile, flux1: FluxProfile | None):
    """Linear auxiliary field carrying the measured gamma2 flux, a prescribed
    gamma1 flux (zero when None) and a grounded gammaD.  Well posed, so noise
    in the data is not amplified."""
    K = assemble_stiffness(mesh)
    b = assemble_boundary_load(mesh, BoundaryTag.GAMMA2, flux2)
    if flux1 is not None:
        b = b + assemble_boundary_load(mesh, BoundaryTag.GAMMA1, flux1)
    dirichlet = mesh.nodes_with_tag(BoundaryTag.GAMMAD)
    free = np.setdiff1d(np.arange(mesh.nodes.shape[0]), dirichlet)
    z = np.zeros(mesh.nodes.shape[0])
    z[free] = spsolve(K[free][:, free].tocsc(), b[free])
    return z


def continue_data(mesh: Mesh, config: ExperimentConfig, data: CauchyData):
    """Regularized continuation of one Cauchy data realization to gamma1.

    The global expansion represents smooth harmonic remainders well but not
    the weak corner singularities of the mixed problem, so the continuation
    is wrapped in a defect-correction loop: each pass subtracts a well-posed
    auxiliary solve that carries the measured gamma2 flux and the current
    gamma1 flux estimate, fits the expansion to the smooth remainder, and
    updates the estimate.  The remainder's corner flux jump shrinks by an
    order of magnitude per pass.  lift_passes = 0 fits the raw data directly.

    Returns (profile, continuation_result, mu, under_resolved).
    """
    from corrinv.reconstruction import BoundaryProfile

    basis = config.make_basis()
    gammad = trace_sample(mesh, BoundaryTag.GAMMAD, config.gammad_samples)
    curve1 = trace_sample(mesh, BoundaryTag.GAMMA1, config.gamma1_samples)

    def solve_pass(data_fit):
        if data.eps > 0:
            mu, under = choose_mu(basis, data_fit, gammad, tau=config.tau)
        else:
            mu, under = config.mu0, False
        result = fit(basis, data_fit, mu, gammad)
        return result, mu, under, evaluate_on_gamma1(result, curve1)

    if config.lift_passes <= 0:
        result, mu, under, profile = solve_pass(data)
    else:
        flux2 = FluxProfile.tabulated(data.t, data.g)
        n2, t2 = mesh.tag_polyline(BoundaryTag.GAMMA2)
        n1, t1 = mesh.tag_polyline(BoundaryTag.GAMMA1)
        zero_g = np.zeros_like(data.g)
        flux1 = None
        for _ in range(config.lift_passes):
            z = _lift_solve(mesh, flux2, flux1)
            data_fit = CauchyData(
                t=data.t, psi=data.psi - np.interp(data.t, t2, z[n2]),
                g=zero_g, eps=data.eps, curve=data.curve)
            result, mu, under, rem = solve_pass(data_fit)
            z1 = np.interp(curve1.t, t1, z[n1])
            w1 = np.zeros_like(z1) if flux1 is None else flux1(curve1.t)
            profile = BoundaryProfile(
                t=curve1.t, v=rem.v + z1, w=rem.w + w1,
                dv=rem.dv + np.gradient(z1, curve1.t))
            flux1 = FluxProfile.tabulated(curve1.t, profile.w)
    return profile, result, mu, under


def reconstruct_from_data(mesh: Mesh, config: ExperimentConfig,
                          data: CauchyData):
    """Continuation + law recovery for one Cauchy data realization.

    Returns (reconstruction, profile, continuation_result, mu, under_resolved).
    """
    profile, result, mu, under = continue_data(mesh, config, data)
    threshold = config.eta_factor * float(np.max(np.abs(profile.dv)))
    if threshold <= 0:
        from corrinv.reconstruction import NoMonotoneSegmentError

        raise NoMonotoneSegmentError("flat reconstructed trace")
    seg = find_monotone_segment(profile, threshold)
    # the recovery interval shrinks with the data misfit and may come out
    # empty when the noise swamps the trace oscillation
    trim = config.trim_factor * result.discrepancy
    rec = extract_f(profile, seg, trim=trim)
    return rec, profile, result, mu, under


def run_noise_sweep(config: ExperimentConfig) -> StabilityCurve:
    """Full pipeline under perturbed data, per (noise level, seed) cell.

    The forward solve is done once and shared; per-cell reconstruction
    failures are recorded and excluded from the medians.
    """
    mesh = build_rectangle_mesh(config.domain, config.mesh_n)
    u, _ = solve_forward(mesh, config.flux, config.model)
    cells = {}
    for eps in config.eps_levels:
        for seed in range(config.seeds_per_level):
            data = extract_cauchy_data(u, mesh, noise_eps=eps, seed=seed,
                                       m=config.gamma2_samples)
            try:
                rec, _, _, _, under = reconstruct_from_data(mesh, config, data)
                truth = truth_on_interval(config.model, rec.interval)
                _, err = overlap_and_error(rec, truth)
                cells[(eps, seed)] = err
            except Exception:
                cells[(eps, seed)] = None
    records = []
    eps0 = None
    for eps in config.eps_levels:
        errs = sorted(cells[(eps, s)] for s in range(config.seeds_per_level)
                      if cells[(eps, s)] is not None)
        fails = config.seeds_per_level - len(errs)
        if errs:
            median = float(np.median(errs))
            iqr = float(np.percentile(errs, 75) - np.percentile(errs, 25))
        else:
            median, iqr = float("nan"), float("nan")
        if eps0 is None and len(errs) * 2 >= config.seeds_per_level and eps > 0:
            eps0 = eps
        records.append((eps, median, iqr, fails))
    fit_pts = [(e, m) for e, m, _, _ in records if e > 0 and m > 0 and np.isfinite(m)]
    if len(fit_pts) >= 3:
        rf = fit_rate([p[0] for p in fit_pts], [p[1] for p in fit_pts],
                      "log_power")
        c_fit, theta_fit, resid = rf.constants["C"], rf.constants["theta"], rf.residual
    else:
        c_fit = theta_fit = resid = float("nan")
    return StabilityCurve(records=tuple(records), c_fit=c_fit,
                          theta_fit=theta_fit, fit_residual=resid,
                          eps0=eps0 if eps0 is not None else 0.0)


def run_oscillation_sweep(config: ExperimentConfig,
                          magnitudes) -> OscillationCurve:
    """Scale the base flux so its sup on the inner gamma2 portion hits each
    target magnitude, solve, and record the gamma1 trace oscillation."""
    mags = [float(m) for m in magnitudes]
    if not all(a < b for a, b in zip(mags, mags[1:])):
        raise ValueError("magnitudes must be strictly increasing")
    mesh = build_rectangle_mesh(config.domain, config.mesh_n)
    gamma2 = trace_sample(mesh, BoundaryTag.GAMMA2, 201)
    inner = inner_portion(gamma2, 2.0 * config.domain.r0)
    base_sup = config.flux.sup_on(inner.t)
    if base_sup <= 0:
        raise ValueError("base flux vanishes on the inner gamma2 portion")
    records = []
    truncated_at = None
    for m in mags:
        flux = config.flux.scaled(m / base_sup)
        try:
            u, _ = solve_forward(mesh, flux, config.model)
        except Exception:
            truncated_at = m
            break
        profile, _ = boundary_profile(u, mesh, BoundaryTag.GAMMA1)
        osc = float(np.max(profile.v) - np.min(profile.v))
        if m > 0 and osc <= 0:
            raise RuntimeError(f"zero oscillation at magnitude {m:g}")
        records.append((m, flux.sup_on(inner.t), osc))
    fit_pts = [(m, o) for m, _, o in records if m > 0 and 0 < o < 1]
    if len(fit_pts) >= 3:
        rf = fit_rate([p[0] for p in fit_pts], [p[1] for p in fit_pts],
                      "exp_stretch")
        c_fit, gamma_fit, resid = rf.constants["c"], rf.constants["gamma"], rf.residual
    else:
        c_fit = gamma_fit = resid = float("nan")
    return OscillationCurve(records=tuple(records), c_fit=c_fit,
                            gamma_fit=gamma_fit, fit_residual=resid,
                            truncated_at=truncated_at)


def disk_integral(basis, coefficients, center, radius: float,
                  nr: int = 96, ntheta: int = 256) -> float:
    """Integral of the squared expansion over a disk, by Gauss-Legendre in
    radius and periodic trapezoid in angle."""
    center = np.asarray(center, dtype=float)
    xg, wg = np.polynomial.legendre.leggauss(nr)
    s = 0.5 * radius * (xg + 1.0)
    ws = 0.5 * radius * wg
    theta = 2.0 * np.pi * np.arange(ntheta) / ntheta
    cs = np.column_stack([np.cos(theta), np.sin(theta)])
    total = 0.0
    for si, wi in zip(s, ws):
        pts = center[None, :] + si * cs
        vals = basis.eval(pts) @ coefficients
        total += wi * si * np.sum(vals**2) * (2.0 * np.pi / ntheta)
    return float(total)


def three_spheres_check(basis, trials: int, rho0: float, center,
                        domain: DomainSpec | None = None, seed: int = 0,
                        nr: int = 96, ntheta: int = 256) -> np.ndarray:
    """Maximal admissible exponent of the three-spheres inequality for
    random-coefficient harmonic expansions.

    For each trial returns tau_max = (log I4 - log I3) / (log I4 - log I1)
    clipped to [0, 1], where I_r is the squared L2 norm over the ball of
    radius r*rho0.  Values > 0 mean the inequality holds.
    """
    if trials < 10:
        raise ValueError("need at least ten trials")
    if rho0 <= 0:
        raise ValueError("rho0 must be positive")
    center = np.asarray(center, dtype=float)
    if domain is not None:
        if not domain.contains(center):
            raise GeometryError("ball center lies outside the domain")
        nv = domain.n_sides()
        dmin = min(
            point_segment_distance(center, *domain.side(i)) for i in range(nv)
        )
        if dmin < 4.0 * rho0 - 1e-12:
            raise GeometryError(
                f"ball of radius {4 * rho0:g} does not fit inside the domain")
    rng = np.random.default_rng(seed)
    taus = np.empty(trials)
    for k in range(trials):
        c = rng.standard_normal(basis.size)
        i1 = disk_integral(basis, c, center, rho0, nr, ntheta)
        i3 = disk_integral(basis, c, center, 3.0 * rho0, nr, ntheta)
        i4 = disk_integral(basis, c, center, 4.0 * rho0, nr, ntheta)
        taus[k] = np.clip(
            (np.log(i4) - np.log(i3)) / (np.log(i4) - np.log(i1)), 0.0, 1.0)
    return taus
