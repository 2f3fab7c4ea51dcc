import numpy as np
import pytest
from scipy.integrate import simpson

from corrinv.continuation import (
    CauchyData,
    CornerSingularBasis,
    FundamentalSolutionBasis,
    HarmonicPolynomialBasis,
    choose_mu,
    design_matrix,
    evaluate_on_gamma1,
    fit,
)
from corrinv.forward import FluxProfile, LinearLaw, extract_cauchy_data, solve_forward
from corrinv.geometry import BoundaryTag, GeometryError, build_rectangle_mesh, trace_sample

D, G1, G2 = BoundaryTag.GAMMAD, BoundaryTag.GAMMA1, BoundaryTag.GAMMA2


def interior_points(rng, n=40):
    # keep a margin from the corners where derivatives of the singular
    # terms grow
    return rng.uniform(0.05, 0.95, size=(n, 2))


def fd_laplacian(basis, points, h=1e-4):
    p = np.asarray(points, float)
    acc = -4.0 * basis.eval(p)
    for d in ((h, 0), (-h, 0), (0, h), (0, -h)):
        acc = acc + basis.eval(p + np.array(d))
    return acc / h**2


def fd_gradient(basis, points, h=1e-6):
    p = np.asarray(points, float)
    gx = (basis.eval(p + [h, 0.0]) - basis.eval(p - [h, 0.0])) / (2 * h)
    gy = (basis.eval(p + [0.0, h]) - basis.eval(p - [0.0, h])) / (2 * h)
    return np.stack([gx, gy], axis=-1)


def all_bases(square):
    poly = HarmonicPolynomialBasis(5, square.centroid())
    mfs = FundamentalSolutionBasis.around_polygon(square.vertices, 16, 0.5)
    corner = CornerSingularBasis.around_gamma2(poly, square)
    return [poly, mfs, corner]


class TestBases:
    def test_members_are_harmonic(self, square):
        rng = np.random.default_rng(0)
        pts = interior_points(rng)
        for basis in all_bases(square):
            lap = fd_laplacian(basis, pts)
            assert np.max(np.abs(lap)) < 1e-3, type(basis).__name__

    def test_gradients_match_finite_differences(self, square):
        rng = np.random.default_rng(1)
        pts = interior_points(rng, n=20)
        for basis in all_bases(square):
            g = basis.grad(pts)
            gfd = fd_gradient(basis, pts)
            assert np.max(np.abs(g - gfd)) < 1e-6, type(basis).__name__

    def test_polynomial_size_and_constant(self):
        basis = HarmonicPolynomialBasis(4, (0.5, 0.5))
        assert basis.size == 9
        V = basis.eval([(0.1, 0.2), (0.9, 0.4)])
        np.testing.assert_allclose(V[:, 0], 1.0)

    def test_polynomial_rejects_degree_zero(self):
        with pytest.raises(ValueError):
            HarmonicPolynomialBasis(0, (0.0, 0.0))

    def test_charge_placement_outside(self, square):
        basis = FundamentalSolutionBasis.around_polygon(
            square.vertices, 12, 0.3)
        for q in basis.charges:
            assert not square.contains(q)

    def test_charges_respect_offset(self):
        from corrinv.geometry import point_segment_distance

        verts = np.array([(0.0, 0.0), (10.0, 0.0), (10.0, 0.1), (0.0, 0.1)])
        offset = 0.05
        basis = FundamentalSolutionBasis.around_polygon(verts, 32, offset)
        for q in basis.charges:
            d = min(point_segment_distance(q, verts[i], verts[(i + 1) % 4])
                    for i in range(4))
            assert d >= 0.5 * offset

    def test_corner_terms_continuous_inside(self, square):
        # the branch cut must lie outside the domain: walking a small arc
        # around each augmented corner inside the square never jumps
        basis = CornerSingularBasis.around_gamma2(
            HarmonicPolynomialBasis(2, square.centroid()), square)
        assert basis.corners.shape[0] == 2  # (1, 0) and (1, 1)
        for corner in basis.corners:
            ang = np.linspace(0.0, 2.0 * np.pi, 400)
            pts = corner + 0.05 * np.column_stack([np.cos(ang), np.sin(ang)])
            keep = np.array([square.contains(p) for p in pts])
            vals = basis.eval(pts[keep])
            assert np.max(np.abs(np.diff(vals, axis=0))) < 0.05

    def test_corner_terms_vanish_at_corner(self, square):
        basis = CornerSingularBasis.around_gamma2(
            HarmonicPolynomialBasis(2, square.centroid()), square)
        # each pair of singular columns vanishes at its own corner
        V = basis.eval(basis.corners)
        k = basis.inner.size
        for j in range(basis.corners.shape[0]):
            np.testing.assert_allclose(V[j, k + 2 * j:k + 2 * j + 2], 0.0,
                                       atol=1e-14)

    def test_corner_count_mismatch(self):
        with pytest.raises(ValueError):
            CornerSingularBasis(HarmonicPolynomialBasis(2, (0, 0)),
                                [(1.0, 0.0), (1.0, 1.0)], [0.0])


class TestCauchyData:
    def curve(self, square):
        mesh = build_rectangle_mesh(square, 8)
        return trace_sample(mesh, G2, 9)

    def test_length_mismatch(self, square):
        c = self.curve(square)
        with pytest.raises(ValueError):
            CauchyData(t=c.t, psi=c.t[:-1], g=c.t, eps=0.0, curve=c)

    def test_nonincreasing_parameters(self, square):
        c = self.curve(square)
        t = c.t.copy()
        t[3] = t[2]
        with pytest.raises(ValueError):
            CauchyData(t=t, psi=c.t, g=c.t, eps=0.0, curve=c)

    def test_negative_noise(self, square):
        c = self.curve(square)
        with pytest.raises(ValueError):
            CauchyData(t=c.t, psi=c.t, g=c.t, eps=-1.0, curve=c)


def harmonic_cauchy_data(square, m=65, eps=0.0):
    """Samples of u = 2xy on the right side of the unit square: u is
    harmonic, vanishes on the grounded bottom/left, and has flux du/dx = 2y
    there."""
    mesh = build_rectangle_mesh(square, 8)
    curve = trace_sample(mesh, G2, m)
    y = curve.points[:, 1]
    return CauchyData(t=curve.t, psi=2.0 * y, g=2.0 * y, eps=eps,
                      curve=curve), trace_sample(mesh, D, 2 * m - 1)


class TestDesignMatrix:
    def test_normal_equations_match_dense_quadrature(self, square):
        # oracle: entries of A^T A are sums of curve integrals of products
        # of basis functions (and their normal derivatives), computed here
        # with an independent composite-Simpson integrator
        data, dcurve = harmonic_cauchy_data(square)
        basis = HarmonicPolynomialBasis(3, square.centroid())
        A, b, blocks = design_matrix(basis, data, dcurve)
        gram = A.T @ A

        V2 = basis.eval(data.curve.points)
        dn2 = np.einsum("pkd,pd->pk", basis.grad(data.curve.points),
                        data.curve.normals)
        VD = basis.eval(dcurve.points)
        oracle = np.zeros_like(gram)
        for i in range(basis.size):
            for j in range(basis.size):
                oracle[i, j] = (
                    simpson(V2[:, i] * V2[:, j], x=data.t)
                    + simpson(dn2[:, i] * dn2[:, j], x=data.t)
                    + simpson(VD[:, i] * VD[:, j], x=dcurve.t)
                )
        np.testing.assert_allclose(gram, oracle, atol=1e-6)

    def test_blocks_partition_rows(self, square):
        data, dcurve = harmonic_cauchy_data(square, m=33)
        basis = HarmonicPolynomialBasis(2, square.centroid())
        A, b, blocks = design_matrix(basis, data, dcurve)
        n = sum(sl.stop - sl.start for sl in blocks.values())
        assert n == A.shape[0] == b.size
        np.testing.assert_allclose(b[blocks["dirichlet"]], 0.0)

    def test_empty_block_rejected(self, square):
        from corrinv.geometry import BoundaryCurve

        data, _ = harmonic_cauchy_data(square)
        basis = HarmonicPolynomialBasis(2, square.centroid())
        empty = BoundaryCurve(tag=D, t=np.empty(0),
                              points=np.empty((0, 2)),
                              normals=np.empty((0, 2)))
        with pytest.raises(ValueError):
            design_matrix(basis, data, empty)


class TestFit:
    def test_exact_recovery_of_harmonic_data(self, square):
        # u = 2xy lies in the span of the degree-2 polynomial basis, so the
        # unregularized fit reproduces it to round-off on gamma1
        data, dcurve = harmonic_cauchy_data(square)
        basis = HarmonicPolynomialBasis(4, square.centroid())
        result = fit(basis, data, 0.0, dcurve)
        assert result.discrepancy < 1e-10

        mesh = build_rectangle_mesh(square, 8)
        curve1 = trace_sample(mesh, G1, 101)
        prof = evaluate_on_gamma1(result, curve1)
        x = curve1.points[:, 0]
        np.testing.assert_allclose(prof.v, 2.0 * x, atol=1e-9)
        np.testing.assert_allclose(prof.w, 2.0 * x, atol=1e-9)  # du/dy = 2x
        np.testing.assert_allclose(prof.dv, -2.0, atol=1e-9)

    def test_negative_mu_rejected(self, square):
        data, dcurve = harmonic_cauchy_data(square)
        basis = HarmonicPolynomialBasis(2, square.centroid())
        with pytest.raises(ValueError):
            fit(basis, data, -1.0, dcurve)

    def test_regularization_shrinks_coefficients(self, square):
        data, dcurve = harmonic_cauchy_data(square)
        basis = HarmonicPolynomialBasis(8, square.centroid())
        free = fit(basis, data, 0.0, dcurve)
        heavy = fit(basis, data, 1.0, dcurve)
        assert np.linalg.norm(heavy.coefficients) < np.linalg.norm(
            free.coefficients)
        assert heavy.discrepancy > free.discrepancy

    def test_discrepancy_blocks_consistent(self, square):
        data, dcurve = harmonic_cauchy_data(square)
        basis = HarmonicPolynomialBasis(3, square.centroid())
        r = fit(basis, data, 1e-6, dcurve)
        rms = np.sqrt((r.discrepancy_psi**2 + r.discrepancy_g**2
                       + r.discrepancy_dirichlet**2) / 3.0)
        assert r.discrepancy == pytest.approx(rms, rel=1e-12)


class TestChooseMu:
    def noisy_data(self, square, eps, seed=0):
        mesh = build_rectangle_mesh(square, 32)
        u, _ = solve_forward(mesh, FluxProfile.polynomial([0.0, 1.0]),
                             LinearLaw(1.0))
        data = extract_cauchy_data(u, mesh, noise_eps=eps, seed=seed)
        dcurve = trace_sample(mesh, D, 129)
        return data, dcurve

    def test_discrepancy_meets_target(self, square):
        eps = 1e-3
        data, dcurve = self.noisy_data(square, eps)
        basis = HarmonicPolynomialBasis(8, square.centroid())
        mu, under = choose_mu(basis, data, dcurve)
        assert not under
        result = fit(basis, data, mu, dcurve)
        assert result.discrepancy <= 1.2 * eps + 1e-12
        # mu is (nearly) the largest such weight: a modest increase breaks it
        worse = fit(basis, data, 4.0 * mu, dcurve)
        assert worse.discrepancy > 1.2 * eps

    def test_mu_decreases_with_noise(self, square):
        basis = HarmonicPolynomialBasis(8, (0.5, 0.5))
        mus = []
        for eps in (1e-2, 1e-3, 1e-4):
            data, dcurve = self.noisy_data(square, eps)
            mu, _ = choose_mu(basis, data, dcurve)
            mus.append(mu)
        assert mus[0] > mus[1] > mus[2]

    def test_under_resolved_flag(self, square):
        # declared noise far below the discretization error: no mu reaches
        # the Morozov target
        data, dcurve = self.noisy_data(square, 1e-12)
        basis = HarmonicPolynomialBasis(6, (0.5, 0.5))
        mu, under = choose_mu(basis, data, dcurve)
        assert under

    def test_requires_positive_eps(self, square):
        data, dcurve = harmonic_cauchy_data(square, eps=0.0)
        basis = HarmonicPolynomialBasis(4, (0.5, 0.5))
        with pytest.raises(ValueError):
            choose_mu(basis, data, dcurve)


class TestEvaluateOnGamma1:
    def test_tangential_derivative_matches_fd(self, square):
        data, dcurve = harmonic_cauchy_data(square)
        basis = HarmonicPolynomialBasis(5, square.centroid())
        result = fit(basis, data, 0.0, dcurve)
        mesh = build_rectangle_mesh(square, 8)
        curve = trace_sample(mesh, G1, 401)
        prof = evaluate_on_gamma1(result, curve)
        dv_fd = np.gradient(prof.v, prof.t)
        np.testing.assert_allclose(prof.dv[1:-1], dv_fd[1:-1], atol=1e-4)
