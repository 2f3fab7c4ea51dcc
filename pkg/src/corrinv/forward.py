"""P1 finite element solver for the nonlinear corrosion boundary value problem.

The potential is harmonic in the domain, grounded on gammaD, driven by a
prescribed current flux on gamma2 and coupled to the corrosion law through
the flux condition on gamma1.  The nonlinear boundary term is handled by a
damped Newton iteration on the weak-form residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from corrinv.geometry import (
    BoundaryCurve,
    BoundaryTag,
    GeometryError,
    Mesh,
    quadrature_weights,
)

__all__ = [
    "ForwardSolveError",
    "NonlinearityModel",
    "ExponentialLaw",
    "LinearLaw",
    "TabulatedLaw",
    "FluxProfile",
    "PotentialField",
    "SolveReport",
    "assemble_stiffness",
    "assemble_boundary_load",
    "solve_forward",
    "solve_forward_picard",
    "energy",
    "neumann_trace",
    "boundary_profile",
    "extract_cauchy_data",
]

# 2-point Gauss rule on [0, 1]
_GAUSS_S = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS_W = np.array([0.5, 0.5])


class ForwardSolveError(RuntimeError):
    """Newton failed to reach the residual tolerance."""

    def __init__(self, message, last_iterate=None, residual_history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_history = residual_history or []


class NonlinearityModel:
    """Corrosion law f with f(0) = 0 and a finite Lipschitz constant."""

    lipschitz: float

    def __call__(self, u):
        raise NotImplementedError

    def derivative(self, u):
        raise NotImplementedError


class ExponentialLaw(NonlinearityModel):
    """Butler-Volmer-type exchange law lam*(exp(a*u) - exp(-(1-a)*u)),
    extended linearly outside [-u_max, u_max] so it stays globally Lipschitz
    with constant lam*(a*exp(a*u_max) + (1-a)*exp((1-a)*u_max))."""

    def __init__(self, lam: float, a: float, u_max: float = 5.0):
        if not 0.0 < a < 1.0:
            raise ValueError("transfer coefficient must lie in (0,1)")
        if u_max <= 0:
            raise ValueError("truncation potential must be positive")
        self.lam = float(lam)
        self.a = float(a)
        self.u_max = float(u_max)
        self.lipschitz = self.lam * (
            self.a * np.exp(self.a * self.u_max)
            + (1.0 - self.a) * np.exp((1.0 - self.a) * self.u_max)
        )

    def _core(self, u):
        return self.lam * (np.exp(self.a * u) - np.exp(-(1.0 - self.a) * u))

    def _core_deriv(self, u):
        return self.lam * (
            self.a * np.exp(self.a * u)
            + (1.0 - self.a) * np.exp(-(1.0 - self.a) * u)
        )

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        uc = np.clip(u, -self.u_max, self.u_max)
        out = self._core(uc) + self._core_deriv(uc) * (u - uc)
        return out if out.ndim else float(out)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        uc = np.clip(u, -self.u_max, self.u_max)
        out = self._core_deriv(uc)
        return out if out.ndim else float(out)


class LinearLaw(NonlinearityModel):
    def __init__(self, slope: float):
        self.slope = float(slope)
        self.lipschitz = abs(self.slope)

    def __call__(self, u):
        return self.slope * np.asarray(u, dtype=float)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        return np.full_like(u, self.slope) if u.ndim else self.slope


class TabulatedLaw(NonlinearityModel):
    """Piecewise-linear law through sorted knots; the end slopes continue
    outside the knot range.  A knot at (0, 0) is required."""

    def __init__(self, u_knots, f_knots):
        u = np.asarray(u_knots, dtype=float)
        f = np.asarray(f_knots, dtype=float)
        if u.size < 2 or u.size != f.size:
            raise ValueError("need matching knot arrays with >= 2 knots")
        if not np.all(np.diff(u) > 0):
            raise ValueError("knot abscissae must be strictly increasing")
        at_zero = np.isclose(u, 0.0, atol=1e-14)
        if not np.any(at_zero) or not np.allclose(f[at_zero], 0.0, atol=1e-14):
            raise ValueError("tabulated law must contain the knot (0, 0)")
        self.u_knots = u
        self.f_knots = f
        self._slopes = np.diff(f) / np.diff(u)
        self.lipschitz = float(np.max(np.abs(self._slopes)))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.interp(u, self.u_knots, self.f_knots)
        lo, hi = self.u_knots[0], self.u_knots[-1]
        out = np.where(u < lo, self.f_knots[0] + self._slopes[0] * (u - lo), out)
        out = np.where(u > hi, self.f_knots[-1] + self._slopes[-1] * (u - hi), out)
        return out if out.ndim else float(out)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.clip(np.searchsorted(self.u_knots, u, side="right") - 1,
                      0, self._slopes.size - 1)
        out = self._slopes[idx]
        return out if out.ndim else float(out)


class FluxProfile:
    """Prescribed current density on gamma2 as a function of arc length."""

    def __init__(self, kind: str, *, value=None, coeffs=None,
                 t_knots=None, g_knots=None, holder_bound=None):
        if kind not in ("constant", "polynomial", "tabulated"):
            raise ValueError(f"unknown flux kind {kind!r}")
        self.kind = kind
        self.holder_bound = holder_bound
        if kind == "constant":
            self.value = float(value)
        elif kind == "polynomial":
            self.coeffs = np.asarray(coeffs, dtype=float)  # low to high degree
        else:
            self.t_knots = np.asarray(t_knots, dtype=float)
            self.g_knots = np.asarray(g_knots, dtype=float)
            if not np.all(np.diff(self.t_knots) > 0):
                raise ValueError("tabulated flux knots must be increasing")

    @classmethod
    def constant(cls, value, holder_bound=None):
        return cls("constant", value=value, holder_bound=holder_bound)

    @classmethod
    def polynomial(cls, coeffs, holder_bound=None):
        return cls("polynomial", coeffs=coeffs, holder_bound=holder_bound)

    @classmethod
    def tabulated(cls, t_knots, g_knots, holder_bound=None):
        return cls("tabulated", t_knots=t_knots, g_knots=g_knots,
                   holder_bound=holder_bound)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full_like(t, self.value)
        elif self.kind == "polynomial":
            out = np.polynomial.polynomial.polyval(t, self.coeffs)
        else:
            out = np.interp(t, self.t_knots, self.g_knots)
        return out if out.ndim else float(out)

    def scaled(self, factor: float) -> "FluxProfile":
        hb = None if self.holder_bound is None else abs(factor) * self.holder_bound
        if self.kind == "constant":
            return FluxProfile.constant(factor * self.value, hb)
        if self.kind == "polynomial":
            return FluxProfile.polynomial(factor * self.coeffs, hb)
        return FluxProfile.tabulated(self.t_knots, factor * self.g_knots, hb)

    def sup_on(self, ts) -> float:
        return float(np.max(np.abs(self(np.asarray(ts)))))

    def holder_quotient(self, ts, alpha: float = 1.0) -> float:
        ts = np.asarray(ts, dtype=float)
        vals = self(ts)
        dt = np.abs(ts[:, None] - ts[None, :])
        dv = np.abs(vals[:, None] - vals[None, :])
        mask = dt > 0
        return float(np.max(dv[mask] / dt[mask] ** alpha))


@dataclass(frozen=True)
class PotentialField:
    """Nodal P1 solution with its grounded node set and Dirichlet energy."""

    values: np.ndarray
    dirichlet_nodes: np.ndarray
    energy: float


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    energy: float
    converged: bool
    energy_flag: bool = False
    residual_history: tuple = field(default_factory=tuple)


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """P1 stiffness matrix of the Laplacian (no boundary conditions applied)."""
    pts = mesh.nodes
    tris = mesh.triangles
    p = pts[tris]  # (T, 3, 2)
    b = np.stack([p[:, 1, 1] - p[:, 2, 1],
                  p[:, 2, 1] - p[:, 0, 1],
                  p[:, 0, 1] - p[:, 1, 1]], axis=1)
    c = np.stack([p[:, 2, 0] - p[:, 1, 0],
                  p[:, 0, 0] - p[:, 2, 0],
                  p[:, 1, 0] - p[:, 0, 0]], axis=1)
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    if np.any(area <= 1e-14):
        raise GeometryError(f"degenerate triangle {int(np.argmin(area))}")
    local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])
    local /= (4.0 * area)[:, None, None]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    n = pts.shape[0]
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_boundary_load(mesh: Mesh, tag: BoundaryTag, density) -> np.ndarray:
    """Load vector of the density tested against P1 boundary basis functions,
    integrated edge-wise with 2-point Gauss quadrature.  The density is a
    function of the tag-local arc length."""
    load = np.zeros(mesh.nodes.shape[0])
    idx = mesh.boundary_edges_with_tag(tag)
    for i in idx:
        n0, n1 = mesh.edge_nodes[i]
        t0, t1 = mesh.edge_t[i]
        le = float(np.hypot(*(mesh.nodes[n1] - mesh.nodes[n0])))
        for s, w in zip(_GAUSS_S, _GAUSS_W):
            g = density(t0 + s * (t1 - t0))
            load[n0] += w * le * g * (1.0 - s)
            load[n1] += w * le * g * s
    return load


def _nonlinear_load(mesh: Mesh, u: np.ndarray, model: NonlinearityModel) -> np.ndarray:
    """Boundary load of f(u_h) on gamma1, with u_h interpolated linearly
    along each edge."""
    load = np.zeros(mesh.nodes.shape[0])
    idx = mesh.boundary_edges_with_tag(BoundaryTag.GAMMA1)
    for i in idx:
        n0, n1 = mesh.edge_nodes[i]
        le = float(np.hypot(*(mesh.nodes[n1] - mesh.nodes[n0])))
        for s, w in zip(_GAUSS_S, _GAUSS_W):
            fg = model(u[n0] * (1.0 - s) + u[n1] * s)
            load[n0] += w * le * fg * (1.0 - s)
            load[n1] += w * le * fg * s
    return load


def _nonlinear_jacobian(mesh: Mesh, u: np.ndarray, model: NonlinearityModel) -> sp.csr_matrix:
    """Derivative of the gamma1 load with respect to the nodal values:
    a boundary mass matrix weighted by f'(u_h) at the Gauss points."""
    n = mesh.nodes.shape[0]
    rows, cols, vals = [], [], []
    idx = mesh.boundary_edges_with_tag(BoundaryTag.GAMMA1)
    for i in idx:
        n0, n1 = mesh.edge_nodes[i]
        le = float(np.hypot(*(mesh.nodes[n1] - mesh.nodes[n0])))
        for s, w in zip(_GAUSS_S, _GAUSS_W):
            fp = model.derivative(u[n0] * (1.0 - s) + u[n1] * s)
            phi = np.array([1.0 - s, s])
            for a, na in enumerate((n0, n1)):
                for b, nb in enumerate((n0, n1)):
                    rows.append(na)
                    cols.append(nb)
                    vals.append(w * le * fp * phi[a] * phi[b])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def energy(u: PotentialField, mesh: Mesh) -> float:
    """Dirichlet energy of the discrete field (exact for P1)."""
    K = assemble_stiffness(mesh)
    v = u.values if isinstance(u, PotentialField) else np.asarray(u, dtype=float)
    return float(v @ (K @ v))


def _solve_sparse(A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    return spla.spsolve(A.tocsc(), b)


def solve_forward(
    mesh: Mesh,
    g: FluxProfile,
    f: NonlinearityModel,
    tol: float = 1e-12,
    max_iter: int = 50,
    energy_bound: float | None = None,
):
    """Damped Newton iteration on the weak-form residual, starting from zero.

    Returns (PotentialField, SolveReport); raises ForwardSolveError when the
    residual tolerance is not met within max_iter iterations (the direct
    problem has no solvability guarantee for fast-growing laws).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    dirichlet = mesh.nodes_with_tag(BoundaryTag.GAMMAD)
    if dirichlet.size == 0:
        raise GeometryError("gammaD is empty: the problem is not grounded")
    n = mesh.nodes.shape[0]
    free = np.setdiff1d(np.arange(n), dirichlet)
    K = assemble_stiffness(mesh)
    b_g = assemble_boundary_load(mesh, BoundaryTag.GAMMA2, g)

    def residual(u):
        return (K @ u) - b_g - _nonlinear_load(mesh, u, f)

    u = np.zeros(n)
    history = []
    converged = False
    iterations = 0
    F = residual(u)
    res = float(np.linalg.norm(F[free]))
    for it in range(1, max_iter + 1):
        iterations = it
        history.append(res)
        if res <= tol:
            converged = True
            break
        J = K - _nonlinear_jacobian(mesh, u, f)
        Jff = J[free][:, free]
        try:
            d = _solve_sparse(Jff, -F[free])
        except Exception as exc:  # singular Jacobian
            raise ForwardSolveError(
                f"Newton linear solve failed at iteration {it}: {exc}",
                last_iterate=u, residual_history=history) from exc
        step = 1.0
        accepted = False
        for _ in range(31):
            u_try = u.copy()
            u_try[free] += step * d
            F_try = residual(u_try)
            res_try = float(np.linalg.norm(F_try[free]))
            if res_try < res:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            raise ForwardSolveError(
                f"Newton stalled at iteration {it} with residual {res:.3e}",
                last_iterate=u, residual_history=history)
        u, F, res = u_try, F_try, res_try
    if not converged:
        raise ForwardSolveError(
            f"Newton did not converge in {max_iter} iterations "
            f"(residual {res:.3e})",
            last_iterate=u, residual_history=history)
    en = float(u @ (K @ u))
    flag = energy_bound is not None and en > energy_bound
    field_ = PotentialField(values=u, dirichlet_nodes=dirichlet, energy=en)
    report = SolveReport(iterations=iterations, residual=res, energy=en,
                         converged=True, energy_flag=flag,
                         residual_history=tuple(history))
    return field_, report


def solve_forward_picard(
    mesh: Mesh,
    g: FluxProfile,
    f: NonlinearityModel,
    tol: float = 1e-12,
    max_iter: int = 2000,
):
    """Fixed-point iteration: each step solves the linear problem with the
    corrosion load frozen at the previous iterate.  Slower than Newton but
    independent of the Jacobian; used as a cross-check oracle."""
    dirichlet = mesh.nodes_with_tag(BoundaryTag.GAMMAD)
    if dirichlet.size == 0:
        raise GeometryError("gammaD is empty: the problem is not grounded")
    n = mesh.nodes.shape[0]
    free = np.setdiff1d(np.arange(n), dirichlet)
    K = assemble_stiffness(mesh)
    Kff = K[free][:, free].tocsc()
    b_g = assemble_boundary_load(mesh, BoundaryTag.GAMMA2, g)
    u = np.zeros(n)
    for it in range(1, max_iter + 1):
        rhs = b_g + _nonlinear_load(mesh, u, f)
        u_new = np.zeros(n)
        u_new[free] = spla.spsolve(Kff, rhs[free])
        F = (K @ u_new) - b_g - _nonlinear_load(mesh, u_new, f)
        res = float(np.linalg.norm(F[free]))
        delta = float(np.max(np.abs(u_new - u)))
        u = u_new
        if res <= tol and delta <= tol:
            en = float(u @ (K @ u))
            return (PotentialField(values=u, dirichlet_nodes=dirichlet, energy=en),
                    SolveReport(iterations=it, residual=res, energy=en,
                                converged=True))
    raise ForwardSolveError(
        f"Picard did not converge in {max_iter} iterations", last_iterate=u)


def _tag_side_chains(mesh: Mesh, tag: BoundaryTag):
    """Node chains of a tagged portion, one per polygon side, in order.
    Yields (side_index, node_ids, tag_local_t)."""
    idx = mesh.boundary_edges_with_tag(tag)
    if idx.size == 0:
        raise GeometryError(f"tag {tag.value} absent from mesh boundary")
    chains = []
    cur_side = None
    for i in idx:
        s = int(mesh.edge_sides[i])
        if s != cur_side:
            chains.append((s, [int(mesh.edge_nodes[i, 0])], [float(mesh.edge_t[i, 0])]))
            cur_side = s
        chains[-1][1].append(int(mesh.edge_nodes[i, 1]))
        chains[-1][2].append(float(mesh.edge_t[i, 1]))
    return [(s, np.asarray(ns, dtype=int), np.asarray(ts, dtype=float))
            for s, ns, ts in chains]


def _side_mass(mesh: Mesh, node_ids: np.ndarray) -> np.ndarray:
    k = node_ids.size - 1
    M = np.zeros((k + 1, k + 1))
    for j in range(k):
        le = float(np.hypot(*(mesh.nodes[node_ids[j + 1]] - mesh.nodes[node_ids[j]])))
        M[j, j] += le / 3.0
        M[j + 1, j + 1] += le / 3.0
        M[j, j + 1] += le / 6.0
        M[j + 1, j] += le / 6.0
    return M


def neumann_trace(u: PotentialField, mesh: Mesh, tag: BoundaryTag):
    """Variational flux recovery on a tagged boundary portion.

    Per straight side, the flux is the Riesz representative of the stiffness
    residual against the boundary mass matrix, tested only at nodes interior
    to the side (their basis functions see no other boundary portion); the
    two end values are closed by quadratic extrapolation.  This avoids the
    corner contamination of the naive consistent-flux solve and keeps the
    superconvergence of the variational approach.

    Returns (BoundaryCurve over the portion's nodes, flux value per node).
    """
    K = assemble_stiffness(mesh)
    r = K @ u.values
    chains = _tag_side_chains(mesh, tag)
    all_nodes = []
    all_t = []
    all_flux = []
    all_side = []
    for side, node_ids, ts in chains:
        k = node_ids.size - 1
        M = _side_mass(mesh, node_ids)
        if M[0, 0] == 0.0:
            raise GeometryError("singular boundary mass: empty side")
        if k >= 3:
            # unknowns lam_1..lam_{k-1}; lam_0, lam_k by extrapolation
            T = np.zeros((k + 1, k - 1))
            for j in range(1, k):
                T[j, j - 1] = 1.0
            T[0, 0] = 2.0
            T[0, 1] = -1.0
            T[k, k - 2] = 2.0
            T[k, k - 3] = -1.0
            A = M[1:k, :] @ T
            lam_int = np.linalg.solve(A, r[node_ids[1:k]])
            lam = T @ lam_int
        else:
            lam = np.linalg.solve(M, r[node_ids])
        all_nodes.append(node_ids)
        all_t.append(ts)
        all_flux.append(lam)
        all_side.append(side)

    # concatenate sides, averaging the duplicated node at same-tag corners
    nodes = [all_nodes[0]]
    ts = [all_t[0]]
    flux = [all_flux[0]]
    normals = [np.tile(mesh.domain.side_normal(all_side[0]), (all_nodes[0].size, 1))]
    for c in range(1, len(chains)):
        nid, tt, fl = all_nodes[c], all_t[c], all_flux[c]
        nrm = np.tile(mesh.domain.side_normal(all_side[c]), (nid.size, 1))
        if nid[0] == nodes[-1][-1]:
            flux[-1][-1] = 0.5 * (flux[-1][-1] + fl[0])
            # corner keeps the following side's normal
            normals[-1][-1] = nrm[0]
            nid, tt, fl, nrm = nid[1:], tt[1:], fl[1:], nrm[1:]
        nodes.append(nid)
        ts.append(tt)
        flux.append(fl)
        normals.append(nrm)
    node_ids = np.concatenate(nodes)
    t = np.concatenate(ts)
    lam = np.concatenate(flux)
    nrm = np.vstack(normals)
    comp = tuple((a.copy(), b.copy()) for a, b in mesh.domain.complement_segments(tag))
    curve = BoundaryCurve(tag=tag, t=t, points=mesh.nodes[node_ids],
                          normals=nrm, complement=comp)
    return curve, lam


def boundary_profile(u: PotentialField, mesh: Mesh, tag: BoundaryTag):
    """Direct boundary profile (trace, recovered flux, tangential derivative)
    of a solved field on a tagged portion."""
    from corrinv.reconstruction import BoundaryProfile

    curve, w = neumann_trace(u, mesh, tag)
    node_ids, ts = mesh.tag_polyline(tag)
    v = u.values[node_ids]
    dv = np.gradient(v, ts)
    return BoundaryProfile(t=ts, v=v, w=w, dv=dv), curve


def extract_cauchy_data(
    u: PotentialField,
    mesh: Mesh,
    noise_eps: float = 0.0,
    seed: int = 0,
    m: int | None = None,
):
    """Sample the Cauchy pair (trace, flux) on gamma2 and perturb each with
    Gaussian noise rescaled to an exact discrete L2 norm of noise_eps."""
    from corrinv.continuation import CauchyData

    if noise_eps < 0:
        raise ValueError("noise level must be nonnegative")
    node_ids, ts = mesh.tag_polyline(BoundaryTag.GAMMA2)
    if m is None:
        m = ts.size
    from corrinv.geometry import trace_sample

    curve = trace_sample(mesh, BoundaryTag.GAMMA2, m)
    psi = np.interp(curve.t, ts, u.values[node_ids])
    flux_curve, lam = neumann_trace(u, mesh, BoundaryTag.GAMMA2)
    gvals = np.interp(curve.t, flux_curve.t, lam)
    if noise_eps > 0:
        rng = np.random.default_rng(seed)
        w = quadrature_weights(curve.t)
        for arr in (psi, gvals):
            pert = rng.standard_normal(m)
            norm = float(np.sqrt(np.sum(w * pert**2)))
            arr += pert * (noise_eps / norm)
    return CauchyData(t=curve.t, psi=psi, g=gvals, eps=noise_eps, curve=curve)
