"""Tests for the spherical grid, quadrature, and metric-aware operators.

Expected values are closed forms computed by hand in the docstrings; no
value below was copied from a run of the code under test.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from quasisphere import (
    MetricField,
    ScalarField,
    gradient_squared,
    integrate,
    laplace_beltrami,
    make_grid,
    real_sph_harm,
    round_metric,
)

FOUR_PI = 4.0 * math.pi


# ---------------------------------------------------------------------------
# grid construction and quadrature


def test_weights_sum_to_sphere_area():
    for nt, nph in [(4, 8), (16, 31), (16, 32), (24, 48)]:
        g = make_grid(nt, nph)
        assert abs(math.fsum(g.weights.tolist()) - FOUR_PI) <= 1e-12 * FOUR_PI


def test_nodes_avoid_poles():
    g = make_grid(8, 16)
    assert np.all(g.sin_theta > 0.0)
    assert np.all((g.theta > 0.0) & (g.theta < math.pi))


def test_make_grid_rejections():
    with pytest.raises(ValueError):
        make_grid(3, 16)
    with pytest.raises(ValueError):
        make_grid(8, 3)
    with pytest.raises(ValueError):
        make_grid(8, 15, "fd")  # pole extension needs even n_phi
    with pytest.raises(ValueError):
        make_grid(8, 16, "chebyshev")


def test_mode_alias():
    assert make_grid(8, 16, "finite-difference").mode == "fd"


def test_quadrature_kills_single_harmonics():
    """int Y_lm dS = 0 for l >= 1, exactly within quadrature roundoff,
    up to l = 2*L_max - 1."""
    g = make_grid(8, 30)  # L_max = 7
    for l in range(1, 2 * g.L_max):
        for m in (0, 1, -1, min(l, 5)):
            if abs(m) > l:
                continue
            val = integrate(g.scalar(real_sph_harm(l, m, g.theta, g.phi)))
            assert abs(val) <= 1e-11, (l, m, val)


def test_quadrature_orthonormality():
    """int Y_lm Y_l'm' = delta for l, l' <= 8 on the production grid size."""
    g = make_grid(16, 33)
    pairs = [(0, 0), (1, 0), (2, 2), (3, -1), (5, 4), (8, 0), (8, -8)]
    fields = {p: real_sph_harm(p[0], p[1], g.theta, g.phi) for p in pairs}
    for i, p in enumerate(pairs):
        for q in pairs[i:]:
            want = 1.0 if p == q else 0.0
            got = integrate(g.scalar(fields[p] * fields[q]))
            assert abs(got - want) <= 1e-11, (p, q, got)


def test_integrate_y20_squared_is_one():
    g = make_grid(16, 32)
    y20 = real_sph_harm(2, 0, g.theta, g.phi)
    assert abs(integrate(g.scalar(y20 * y20)) - 1.0) <= 1e-12


def test_integrate_with_area_element():
    """Unit sphere pushed out by r = 2: area element (1+2)^2 = 9 relative to
    the standard sphere, so int 1 dsigma = 36*pi."""
    g = make_grid(8, 16)
    val = integrate(g.constant(1.0), g.constant(9.0))
    assert abs(val - 36.0 * math.pi) <= 1e-12 * 36.0 * math.pi


def test_integrate_grid_mismatch():
    g1 = make_grid(8, 16)
    g2 = make_grid(12, 24)
    with pytest.raises(ValueError):
        integrate(g1.constant(1.0), g2.constant(1.0))


def test_scalar_field_validation():
    g = make_grid(8, 16)
    with pytest.raises(ValueError):
        ScalarField(g, np.ones(5))
    bad = np.ones(g.n_nodes)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        ScalarField(g, bad)


# ---------------------------------------------------------------------------
# Laplace-Beltrami


def test_laplacian_of_constant_vanishes():
    g = make_grid(16, 32)
    lap = laplace_beltrami(round_metric(g), g.constant(3.7))
    assert np.max(np.abs(lap.values)) <= 1e-10


def test_laplacian_cos_theta():
    """cos(theta) = sqrt(4pi/3) Y_10, so lap cos = -2 cos on the unit sphere."""
    g = make_grid(16, 32)
    f = g.scalar(np.cos(g.theta))
    lap = laplace_beltrami(round_metric(g), f)
    assert_allclose(lap.values, -2.0 * f.values, atol=1e-10)


def test_laplacian_y20_on_radius_rho():
    """On the round metric of radius rho the eigenvalue scales by rho^-2:
    lap Y20 = -6 Y20 / rho^2."""
    g = make_grid(16, 32)
    rho = 2.5
    y = g.scalar(real_sph_harm(2, 0, g.theta, g.phi))
    lap = laplace_beltrami(round_metric(g, rho), y)
    assert_allclose(lap.values, -6.0 / rho**2 * y.values, atol=1e-10)


@pytest.mark.parametrize("l,m", [(1, 0), (2, -2), (3, 1), (5, 5), (7, -4)])
def test_round_eigenvalues_spectral(l, m):
    """Spectral mode reproduces -l(l+1) to 1e-10 for l <= L_max/2."""
    g = make_grid(16, 32)
    assert l <= g.L_max / 2
    y = g.scalar(real_sph_harm(l, m, g.theta, g.phi))
    lap = laplace_beltrami(round_metric(g), y)
    assert np.max(np.abs(lap.values + l * (l + 1) * y.values)) <= 1e-10


def test_fd_mode_fourth_order():
    """FD-mode Laplacian error on a fixed harmonic drops ~16x per theta
    refinement (4th order)."""
    errs = []
    for nt in (16, 32, 64):
        g = make_grid(nt, 2 * nt, "fd")
        y = g.scalar(real_sph_harm(3, 2, g.theta, g.phi))
        lap = laplace_beltrami(round_metric(g), y)
        errs.append(np.max(np.abs(lap.values + 12.0 * y.values)))
    order = math.log2(errs[0] / errs[1])
    assert order >= 3.5, errs
    order = math.log2(errs[1] / errs[2])
    assert order >= 3.5, errs


def test_fd_matches_spectral_on_smooth_field():
    """Mode cross-check: agreement within FD truncation.  The composed
    divergence-form operator is ~3rd order (the outer derivative acts on
    the inner truncation error), measured ~2.8e-4 relative at n_theta=48."""
    gs = make_grid(48, 96)
    gf = make_grid(48, 96, "fd")
    rng = np.random.default_rng(7)
    vals = sum(c * real_sph_harm(l, m, gs.theta, gs.phi)
               for (l, m), c in zip([(1, 1), (2, 0), (3, -2), (4, 3)],
                                    rng.normal(size=4)))
    m_s = round_metric(gs, 1.3)
    m_f = round_metric(gf, 1.3)
    a = laplace_beltrami(m_s, gs.scalar(vals)).values
    b = laplace_beltrami(m_f, gf.scalar(vals)).values
    assert np.max(np.abs(a - b)) <= 1e-3 * np.max(np.abs(a))


def test_fd_theta_derivative_fourth_order():
    """The raw theta derivative itself carries the advertised 4th order."""
    errs = []
    for nt in (16, 32, 64):
        g = make_grid(nt, 2 * nt, "fd")
        # f = z(x^2 - y^2) = cos(theta) sin^2(theta) cos(2 phi), a polynomial
        # restricted to the sphere, hence a smooth scalar
        f = np.cos(g.theta) * np.sin(g.theta) ** 2 * np.cos(2.0 * g.phi)
        want = (np.sin(g.theta) * (2.0 * np.cos(g.theta) ** 2
                                   - np.sin(g.theta) ** 2)
                * np.cos(2.0 * g.phi))
        ft, _ = g.grad_frame(f)
        errs.append(np.max(np.abs(ft - want)))
    assert math.log2(errs[0] / errs[1]) >= 3.5, errs
    assert math.log2(errs[1] / errs[2]) >= 3.5, errs


def _smooth_random_field(g, seed, lmax=5):
    rng = np.random.default_rng(seed)
    vals = np.zeros(g.n_nodes)
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            vals += rng.normal() / (1.0 + l * l) * real_sph_harm(
                l, m, g.theta, g.phi)
    return g.scalar(vals)


def _ellipsoidal_test_metric(g):
    """A smooth non-round SPD metric for operator identities: conformally
    round with a low-degree factor, plus a mild off-diagonal piece built
    from frame products (kept SPD by construction)."""
    w = 1.0 + 0.3 * np.cos(g.theta) ** 2
    comps = np.zeros((g.n_nodes, 2, 2))
    comps[:, 0, 0] = w
    comps[:, 1, 1] = w * g.sin_theta**2
    off = 0.05 * np.sin(g.theta) ** 2 * np.cos(g.theta)
    comps[:, 0, 1] = off * g.sin_theta
    comps[:, 1, 0] = comps[:, 0, 1]
    return MetricField(g, comps)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_self_adjointness(seed):
    """int f lap h dsigma = int h lap f dsigma for the metric measure."""
    g = make_grid(24, 48)
    metric = _ellipsoidal_test_metric(g)
    gf = metric.frame_components()
    area = np.sqrt(gf[:, 0, 0] * gf[:, 1, 1] - gf[:, 0, 1] ** 2)
    f = _smooth_random_field(g, seed)
    h = _smooth_random_field(g, seed + 100)
    lhs = integrate(g.scalar(f.values * laplace_beltrami(metric, h).values), area)
    rhs = integrate(g.scalar(h.values * laplace_beltrami(metric, f).values), area)
    nf = math.sqrt(integrate(g.scalar(f.values**2), area))
    nh = math.sqrt(integrate(g.scalar(h.values**2), area))
    assert abs(lhs - rhs) <= 1e-8 * nf * nh


@pytest.mark.parametrize("seed", [3, 4])
def test_negativity(seed):
    """int f lap f dsigma <= 0 up to quadrature error (= -int |grad f|^2)."""
    g = make_grid(24, 48)
    for metric in (round_metric(g, 1.7), _ellipsoidal_test_metric(g)):
        gf = metric.frame_components()
        area = np.sqrt(gf[:, 0, 0] * gf[:, 1, 1] - gf[:, 0, 1] ** 2)
        f = _smooth_random_field(g, seed)
        val = integrate(
            g.scalar(f.values * laplace_beltrami(metric, f).values), area)
        assert val <= 1e-10


def test_laplacian_rejects_non_spd():
    g = make_grid(8, 16)
    comps = np.zeros((g.n_nodes, 2, 2))
    comps[:, 0, 0] = 1.0
    comps[:, 1, 1] = -g.sin_theta**2
    bad = MetricField(g, comps)
    with pytest.raises(ValueError, match="positive definite"):
        laplace_beltrami(bad, g.constant(1.0))


# ---------------------------------------------------------------------------
# gradient_squared


def test_gradient_squared_cos_theta():
    """|grad cos(theta)|^2 = sin^2(theta) on the unit sphere."""
    g = make_grid(16, 32)
    f = g.scalar(np.cos(g.theta))
    gs = gradient_squared(round_metric(g), f)
    assert_allclose(gs.values, np.sin(g.theta) ** 2, atol=1e-11)


def test_gradient_squared_scales_with_radius():
    """On radius 2 the inverse metric scales by 1/4."""
    g = make_grid(16, 32)
    f = g.scalar(np.cos(g.theta))
    gs = gradient_squared(round_metric(g, 2.0), f)
    assert_allclose(gs.values, np.sin(g.theta) ** 2 / 4.0, atol=1e-11)


def test_gradient_squared_nonnegative():
    g = make_grid(16, 32)
    f = _smooth_random_field(g, 11)
    gs = gradient_squared(_ellipsoidal_test_metric(g), f)
    assert np.all(gs.values >= -1e-13)


# ---------------------------------------------------------------------------
# interpolation / resampling


def test_interpolation_reproduces_bandlimited():
    g = make_grid(12, 24)
    vals = (real_sph_harm(4, 2, g.theta, g.phi)
            + 0.5 * real_sph_harm(1, -1, g.theta, g.phi) + 2.0)
    th = np.array([0.3, 1.2, 2.9])
    ph = np.array([0.1, 3.0, 5.5])
    want = (real_sph_harm(4, 2, th, ph)
            + 0.5 * real_sph_harm(1, -1, th, ph) + 2.0)
    got = g.interpolate(vals, th, ph)
    assert_allclose(got, want, atol=1e-12)


def test_resample_between_grids():
    g1 = make_grid(12, 24)
    g2 = make_grid(20, 40)
    vals = real_sph_harm(3, 1, g1.theta, g1.phi)
    out = g1.resample_to(g2, vals)
    assert_allclose(out, real_sph_harm(3, 1, g2.theta, g2.phi), atol=1e-12)
