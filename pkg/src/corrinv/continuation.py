"""Regularized continuation of Cauchy data from gamma2 to gamma1.

The potential difference between two admissible states is harmonic, so the
completion problem is linear: fit a global harmonic expansion (harmonic
polynomials or fundamental solutions) to the measured trace and flux on
gamma2 and the zero trace on gammaD, with Tikhonov regularization and a
Morozov rule for the weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from corrinv.geometry import (
    BoundaryCurve,
    GeometryError,
    point_segment_distance,
    quadrature_weights,
)

__all__ = [
    "CauchyData",
    "HarmonicPolynomialBasis",
    "FundamentalSolutionBasis",
    "CornerSingularBasis",
    "ContinuationResult",
    "design_matrix",
    "fit",
    "choose_mu",
    "evaluate_on_gamma1",
]


@dataclass(frozen=True)
class CauchyData:
    """Sampled Dirichlet/Neumann pair on gamma2 with its declared noise level.

    curve carries the sample points and outward normals needed to evaluate
    basis functions at the samples.
    """

    t: np.ndarray
    psi: np.ndarray
    g: np.ndarray
    eps: float
    curve: BoundaryCurve

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if not (t.size == psi.size == g.size):
            raise ValueError("Cauchy data arrays must have equal lengths")
        if not np.all(np.diff(t) > 0):
            raise ValueError("sample parameters must be strictly increasing")
        if self.eps < 0:
            raise ValueError("noise level must be nonnegative")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "g", g)


class HarmonicPolynomialBasis:
    """{1, Re z^k, Im z^k : k = 1..N} about a fixed center; every member is
    exactly harmonic."""

    def __init__(self, degree: int, center):
        if degree < 1:
            raise ValueError("degree must be >= 1")
        self.degree = int(degree)
        self.center = np.asarray(center, dtype=float)

    @property
    def size(self) -> int:
        return 2 * self.degree + 1

    def _z(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return (p[:, 0] - self.center[0]) + 1j * (p[:, 1] - self.center[1])

    def eval(self, points) -> np.ndarray:
        z = self._z(points)
        cols = [np.ones_like(z.real)]
        zk = np.ones_like(z)
        for _ in range(self.degree):
            zk = zk * z
            cols.append(zk.real)
            cols.append(zk.imag)
        return np.column_stack(cols)

    def grad(self, points) -> np.ndarray:
        """Gradients, shape (P, size, 2).  For holomorphic w = z^k:
        grad Re w = (Re w', -Im w'), grad Im w = (Im w', Re w')."""
        z = self._z(points)
        out = np.zeros((z.size, self.size, 2))
        zk = np.ones_like(z)
        for k in range(1, self.degree + 1):
            dw = k * zk  # derivative of z^k
            zk = zk * z
            out[:, 2 * k - 1, 0] = dw.real
            out[:, 2 * k - 1, 1] = -dw.imag
            out[:, 2 * k, 0] = dw.imag
            out[:, 2 * k, 1] = dw.real
        return out


class FundamentalSolutionBasis:
    """log|x - y_m| for charge points y_m strictly outside the domain."""

    def __init__(self, charges):
        c = np.asarray(charges, dtype=float)
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 1:
            raise ValueError("charges must be an (M, 2) array")
        self.charges = c

    @classmethod
    def around_polygon(cls, vertices, m_charges: int, offset: float):
        """Charges on a circle about the centroid, radius = circumradius +
        offset; verifies every charge is at distance >= offset/2 from all
        polygon edges."""
        verts = np.asarray(vertices, dtype=float)
        center = verts.mean(axis=0)
        circum = float(np.max(np.hypot(*(verts - center).T)))
        radius = circum + offset
        ang = 2.0 * np.pi * np.arange(m_charges) / m_charges
        charges = center + radius * np.column_stack([np.cos(ang), np.sin(ang)])
        nv = verts.shape[0]
        for q in charges:
            d = min(
                point_segment_distance(q, verts[i], verts[(i + 1) % nv])
                for i in range(nv)
            )
            if d < 0.5 * offset:
                raise GeometryError(
                    "charge point too close to the domain boundary")
        return cls(charges)

    @property
    def size(self) -> int:
        return self.charges.shape[0]

    def eval(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        d = p[:, None, :] - self.charges[None, :, :]
        return np.log(np.hypot(d[:, :, 0], d[:, :, 1]))

    def grad(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        d = p[:, None, :] - self.charges[None, :, :]
        r2 = d[:, :, 0] ** 2 + d[:, :, 1] ** 2
        return d / r2[:, :, None]


class CornerSingularBasis:
    """A smooth expansion augmented with z^2 log z corner terms.

    Mixed flux boundary conditions put r^2 log r singularities at the
    corners where the flux jumps; a smooth global expansion stalls at a few
    percent relative error there.  Adding Re/Im of z^2 log z centered at the
    offending vertices (branch cut along the outward corner bisector, so the
    terms are harmonic throughout the domain) restores fast convergence, and
    the least squares drives the amplitudes to zero when the data is smooth.
    """

    def __init__(self, inner, corners, cut_angles):
        corners = np.atleast_2d(np.asarray(corners, dtype=float))
        cut_angles = np.atleast_1d(np.asarray(cut_angles, dtype=float))
        if corners.shape[0] != cut_angles.size:
            raise ValueError("one cut angle per corner required")
        self.inner = inner
        self.corners = corners
        self.cut_angles = cut_angles

    @classmethod
    def around_gamma2(cls, inner, domain):
        """Augment at the vertices incident to a gamma2 side, where the
        measured flux meets a different boundary condition."""
        from corrinv.geometry import BoundaryTag

        verts = np.asarray(domain.vertices, dtype=float)
        nv = verts.shape[0]
        picked = sorted({
            j for i in domain.sides_with_tag(BoundaryTag.GAMMA2)
            for j in (i, (i + 1) % nv)
        })
        corners, angles = [], []
        for i in picked:
            d_prev = verts[i - 1] - verts[i]
            d_next = verts[(i + 1) % nv] - verts[i]
            inward = d_prev / np.hypot(*d_prev) + d_next / np.hypot(*d_next)
            corners.append(verts[i])
            angles.append(np.arctan2(-inward[1], -inward[0]))
        return cls(inner, corners, angles)

    @property
    def size(self) -> int:
        return self.inner.size + 2 * self.corners.shape[0]

    def _singular(self, points):
        """z^k log z per corner with the log branch rotated onto the cut."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        z = ((p[:, 0, None] - self.corners[None, :, 0])
             + 1j * (p[:, 1, None] - self.corners[None, :, 1]))
        # standard log cuts along the negative real axis; rotate so the cut
        # lies along the outward bisector instead
        shift = self.cut_angles + np.pi
        safe = np.where(z == 0, 1.0, z)
        logz = np.log(safe * np.exp(-1j * shift)[None, :]) + 1j * shift[None, :]
        # z^2 log z and its derivative both vanish at the corner itself
        logz = np.where(z == 0, 0.0, logz)
        return z, logz

    def eval(self, points) -> np.ndarray:
        z, logz = self._singular(points)
        w = z**2 * logz
        cols = [self.inner.eval(points)]
        for j in range(self.corners.shape[0]):
            cols.append(w[:, j].real[:, None])
            cols.append(w[:, j].imag[:, None])
        return np.hstack(cols)

    def grad(self, points) -> np.ndarray:
        z, logz = self._singular(points)
        dw = z * (2.0 * logz + 1.0)
        gi = self.inner.grad(points)
        out = np.zeros((gi.shape[0], self.size, 2))
        out[:, : self.inner.size, :] = gi
        k = self.inner.size
        for j in range(self.corners.shape[0]):
            d = dw[:, j]
            out[:, k, 0] = d.real
            out[:, k, 1] = -d.imag
            out[:, k + 1, 0] = d.imag
            out[:, k + 1, 1] = d.real
            k += 2
        return out


@dataclass(frozen=True)
class ContinuationResult:
    basis: object
    coefficients: np.ndarray
    mu: float
    discrepancy_psi: float
    discrepancy_g: float
    discrepancy_dirichlet: float
    discrepancy: float  # RMS over the three blocks
    condition_number: float
    under_resolved: bool = False


def design_matrix(basis, data: CauchyData, dirichlet_curve: BoundaryCurve):
    """Stacked constraint system [trace on gamma2; flux on gamma2; trace on
    gammaD], each block row-weighted by the square roots of its arc-length
    quadrature weights so the normal equations approximate the continuous
    L2 misfits.

    Returns (A, b, blocks) with blocks a dict of row slices.
    """
    if len(data.t) < 1 or len(dirichlet_curve) < 1:
        raise ValueError("every constraint block needs at least one sample")
    pts2 = data.curve.points
    w2 = np.sqrt(quadrature_weights(data.t))
    V2 = basis.eval(pts2)
    G2 = basis.grad(pts2)
    dn2 = np.einsum("pkd,pd->pk", G2, data.curve.normals)
    wD = np.sqrt(quadrature_weights(dirichlet_curve.t))
    VD = basis.eval(dirichlet_curve.points)

    A = np.vstack([
        w2[:, None] * V2,
        w2[:, None] * dn2,
        wD[:, None] * VD,
    ])
    b = np.concatenate([w2 * data.psi, w2 * data.g, np.zeros(len(dirichlet_curve))])
    n2 = len(data.t)
    blocks = {
        "psi": slice(0, n2),
        "g": slice(n2, 2 * n2),
        "dirichlet": slice(2 * n2, 2 * n2 + len(dirichlet_curve)),
    }
    return A, b, blocks


def _tikhonov_coefficients(U, s, Vt, b, mu):
    ub = U.T @ b
    if mu == 0.0:
        cutoff = s.max() * 1e-14 if s.size else 0.0
        filt = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
        return Vt.T @ (filt * ub)
    return Vt.T @ ((s / (s**2 + mu)) * ub)


def _block_discrepancies(A, b, blocks, c):
    r = A @ c - b
    d = {k: float(np.linalg.norm(r[sl])) for k, sl in blocks.items()}
    rms = float(np.sqrt(np.mean([d[k] ** 2 for k in d])))
    return d, rms


def fit(basis, data: CauchyData, mu: float,
        dirichlet_curve: BoundaryCurve) -> ContinuationResult:
    """Tikhonov-regularized least squares via SVD; mu = 0 yields the
    minimum-norm least-squares solution."""
    if mu < 0:
        raise ValueError("regularization weight must be nonnegative")
    A, b, blocks = design_matrix(basis, data, dirichlet_curve)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    c = _tikhonov_coefficients(U, s, Vt, b, mu)
    d, rms = _block_discrepancies(A, b, blocks, c)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    return ContinuationResult(
        basis=basis, coefficients=c, mu=mu,
        discrepancy_psi=d["psi"], discrepancy_g=d["g"],
        discrepancy_dirichlet=d["dirichlet"], discrepancy=rms,
        condition_number=cond)


def choose_mu(basis, data: CauchyData, dirichlet_curve: BoundaryCurve,
              tau: float = 1.2, mu_lo: float = 1e-16, mu_hi: float = 1e2,
              iters: int = 60):
    """Morozov discrepancy principle: the largest mu whose RMS block
    discrepancy stays within tau * eps, found by bisection on log mu.

    Returns (mu, under_resolved).  under_resolved is set when even mu_lo
    overshoots the target.
    """
    if data.eps <= 0:
        raise ValueError("Morozov rule needs a positive noise level")
    A, b, blocks = design_matrix(basis, data, dirichlet_curve)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    target = tau * data.eps

    trace = []

    def disc(mu):
        c = _tikhonov_coefficients(U, s, Vt, b, mu)
        _, rms = _block_discrepancies(A, b, blocks, c)
        trace.append((mu, rms))
        return rms

    if disc(mu_lo) > target:
        return mu_lo, True
    if disc(mu_hi) <= target:
        return mu_hi, False
    lo, hi = np.log(mu_lo), np.log(mu_hi)  # disc(lo) <= target < disc(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if disc(np.exp(mid)) <= target:
            lo = mid
        else:
            hi = mid
    # discrepancy must be nondecreasing in mu along the evaluated path
    path = sorted(trace)
    for (m1, d1), (m2, d2) in zip(path, path[1:]):
        if d2 < d1 - 1e-9 * max(1.0, d1):
            raise RuntimeError(
                f"discrepancy not monotone in mu ({m1:g}->{m2:g})")
    return float(np.exp(lo)), False


def evaluate_on_gamma1(result: ContinuationResult, curve: BoundaryCurve):
    """Reconstructed trace, normal derivative and tangential derivative on a
    gamma1 sample curve, all evaluated analytically from the expansion."""
    from corrinv.reconstruction import BoundaryProfile

    c = result.coefficients
    V = result.basis.eval(curve.points) @ c
    G = np.einsum("pkd,k->pd", result.basis.grad(curve.points), c)
    w = np.einsum("pd,pd->p", G, curve.normals)
    dv = np.einsum("pd,pd->p", G, curve.tangents())
    return BoundaryProfile(t=curve.t, v=V, w=w, dv=dv)
