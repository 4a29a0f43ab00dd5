"""Tests for support-function shapes and parallel-surface geometry.

Closed-form oracles used below:

* sphere radius R: principal radii both R, so at distance r
  H0 = 2/(R+r), Rscal = 2/(R+r)^2, area factor (R+r)^2.
* ellipsoid of revolution (a, a, c), support h = sqrt(a^2 sin^2 + c^2 cos^2):
  azimuthal radius a^2/h, meridian radius a^2 c^2/h^3 (equal a^2/c at the
  poles: 1/1.2 for the (1, 1, 1.2) body).
* Steiner: area(r) = A0 + c1 r + 4 pi r^2 for any convex body.
* Gauss identity: H0^2 - |A|^2 = Rscal pointwise.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from quasisphere import ScalarField, integrate, make_grid
from quasisphere.convex import (
    SupportShape,
    asymptotic_rates,
    ellipsoid_shape,
    load_support_table,
    parallel_geometry,
    save_support_table,
    shape_from_support,
    sphere_shape,
)

FOUR_PI = 4.0 * math.pi


@pytest.fixture(scope="module")
def grid():
    return make_grid(24, 48)


@pytest.fixture(scope="module")
def ell(grid):
    return ellipsoid_shape(grid, 1.0, 1.0, 1.2)


# ---------------------------------------------------------------------------
# shapes


def test_sphere_radii_exact(grid):
    sh = sphere_shape(grid, 2.5)
    assert np.max(np.abs(sh.radii - 2.5)) == 0.0
    assert np.max(np.abs(sh.h - 2.5)) == 0.0
    assert abs(sh.mean_radius - 2.5) <= 1e-12
    assert_allclose(sh.embedding, 2.5 * grid.nu, atol=0)


def test_ellipsoid_radii_closed_form(grid, ell):
    h = np.sqrt(np.sin(grid.theta) ** 2 + 1.44 * np.cos(grid.theta) ** 2)
    want = np.sort(np.stack([1.0 / h, 1.44 / h**3], axis=1), axis=1)
    assert_allclose(ell.radii, want, atol=1e-12)


def test_ellipsoid_pole_radii(grid, ell):
    """Both principal radii tend to a^2/c = 1/1.2 at the poles; nearest-node
    values agree at grid-interpolation level."""
    i = int(np.argmin(grid.theta))
    assert_allclose(ell.radii[i], 1.0 / 1.2, atol=5e-3)


def test_numerical_support_matches_analytic(grid, ell):
    num = shape_from_support(ScalarField(grid, ell.h))
    assert np.max(np.abs(num.radii_frame - ell.radii_frame)) <= 1e-9
    assert np.max(np.abs(num.embedding - ell.embedding)) <= 1e-10


def test_convexity_rejection(grid):
    """A strongly oscillating 'support function' has Hess h + h id with
    negative eigenvalues and must be rejected with node diagnostics."""
    h = ScalarField(grid, 1.0 + 0.8 * np.cos(4.0 * grid.theta))
    with pytest.raises(ValueError, match="not strictly convex"):
        shape_from_support(h)


def test_scaled_shape(grid, ell):
    lam = 2.0
    big = ell.scaled(lam)
    assert_allclose(big.radii, lam * ell.radii, rtol=1e-14)
    assert abs(big.mean_radius - lam * ell.mean_radius) <= 1e-12


# ---------------------------------------------------------------------------
# parallel geometry


def test_unit_sphere_at_r1(grid):
    geo = parallel_geometry(sphere_shape(grid, 1.0), 1.0)
    for fieldvals, want in [(geo.H0, 1.0), (geo.Rscal, 0.5),
                            (geo.area_element, 4.0)]:
        assert np.max(np.abs(fieldvals - want)) <= 1e-12 * want


def test_unit_sphere_at_r0(grid):
    geo = parallel_geometry(sphere_shape(grid, 1.0), 0.0)
    assert np.max(np.abs(geo.H0 - 2.0)) <= 1e-12
    assert np.max(np.abs(geo.Rscal - 2.0)) <= 1e-12
    assert np.max(np.abs(geo.area_element - 1.0)) <= 1e-12


def test_constant_radii_pair(grid):
    """Synthetic radii matrix diag(1, 2) at every node: at r = 2 the closed
    forms give H0 = 1/3 + 1/4 = 7/12 and Rscal = 2/(3*4) = 1/6."""
    n = grid.n_nodes
    w = np.zeros((n, 2, 2))
    w[:, 0, 0] = 1.0
    w[:, 1, 1] = 2.0
    shape = SupportShape(grid, np.full(n, 1.5), w, 1.5 * grid.nu,
                         kind="synthetic")
    geo = parallel_geometry(shape, 2.0)
    assert np.max(np.abs(geo.H0 - 7.0 / 12.0)) <= 1e-14
    assert np.max(np.abs(geo.Rscal - 1.0 / 6.0)) <= 1e-14
    assert np.max(np.abs(geo.area_element - 12.0)) <= 1e-13


def test_negative_r_rejected(grid):
    with pytest.raises(ValueError):
        parallel_geometry(sphere_shape(grid, 1.0), -0.1)


def test_gauss_identity(grid, ell):
    for r in (0.0, 0.7, 3.0):
        geo = parallel_geometry(ell, r)
        rel = np.max(np.abs(geo.H0**2 - geo.h0_norm_sq - geo.Rscal))
        assert rel <= 1e-10 * np.max(geo.Rscal)


def test_dH0_dr_is_minus_h0_norm_sq(grid, ell):
    """Radial flow identity dH0/dr = -|A|^2, checked by central difference
    (O(dr^2) truncation ~ 2e-6 at dr = 1e-3)."""
    d = 1e-3
    for r in (0.3, 1.0, 4.0):
        dh = (parallel_geometry(ell, r + d).H0
              - parallel_geometry(ell, r - d).H0) / (2.0 * d)
        assert np.max(np.abs(dh + parallel_geometry(ell, r).h0_norm_sq)) <= 1e-5


def test_steiner_quadratic(grid, ell):
    rs = [0.0, 0.5, 1.0, 2.0, 3.0]
    areas = [integrate(ScalarField(grid, np.ones(grid.n_nodes)),
                       parallel_geometry(ell, r).area_element) for r in rs]
    coeff = np.polyfit(rs, areas, 2)
    assert abs(coeff[0] - FOUR_PI) <= 1e-8


def test_gauss_bonnet(grid, ell):
    """int (Rscal/2) dsigma = 4 pi for every shape and r (the area factor
    cancels the curvature exactly, so this holds to quadrature roundoff)."""
    shapes = [sphere_shape(grid, 1.0), ell,
              shape_from_support(ScalarField(grid, ell.h))]
    for shape in shapes:
        for r in (0.0, 1.0, 10.0):
            geo = parallel_geometry(shape, r)
            val = integrate(ScalarField(grid, geo.Rscal / 2.0),
                            geo.area_element)
            assert abs(val - FOUR_PI) <= 1e-8


def test_metric_matches_round_for_sphere(grid):
    geo = parallel_geometry(sphere_shape(grid, 1.0), 1.5)
    want_tt = 2.5**2
    assert np.max(np.abs(geo.metric.components[:, 0, 0] - want_tt)) <= 1e-12
    want_pp = 2.5**2 * grid.sin_theta**2
    assert np.max(np.abs(geo.metric.components[:, 1, 1] - want_pp)) <= 1e-12
    assert np.max(np.abs(geo.metric.components[:, 0, 1])) <= 1e-14


def test_scale_covariance_of_curvatures(grid, ell):
    """h -> lam h sends H0(r) to H0(lam r)/lam and area to lam^2 area."""
    lam = 2.0
    big = ell.scaled(lam)
    r = 0.8
    geo = parallel_geometry(ell, r)
    geo_big = parallel_geometry(big, lam * r)
    assert_allclose(geo_big.H0, geo.H0 / lam, rtol=1e-13)
    assert_allclose(geo_big.Rscal, geo.Rscal / lam**2, rtol=1e-13)
    assert_allclose(geo_big.area_element, lam**2 * geo.area_element,
                    rtol=1e-13)


# ---------------------------------------------------------------------------
# support tables


def test_support_table_roundtrip(tmp_path, grid, ell):
    path = tmp_path / "table.csv"
    save_support_table(path, ell)
    with open(path) as fh:
        assert fh.readline().strip() == "theta,phi,h"
    h = load_support_table(grid, path)
    assert np.max(np.abs(h.values - ell.h)) == 0.0
    shape = shape_from_support(h)
    assert np.max(np.abs(shape.radii - ell.radii)) <= 1e-9


def test_support_table_node_mismatch(tmp_path, grid):
    other = make_grid(12, 24)
    path = tmp_path / "table.csv"
    save_support_table(path, sphere_shape(other, 1.0))
    with pytest.raises(ValueError):
        load_support_table(grid, path)


def test_support_table_bad_header(tmp_path, grid):
    path = tmp_path / "table.csv"
    path.write_text("a,b,c\n0,0,1\n")
    with pytest.raises(ValueError, match="header"):
        load_support_table(grid, path)


# ---------------------------------------------------------------------------
# asymptotic rates


def test_asymptotic_rates_sphere(grid):
    """Unit sphere: r^2|H0 - 2/r| = 2r/(1+r) (= 8/5 at r = 4) and
    r^3|Rscal - 2/r^2| = 2r(2r+1)/(1+r)^2; the latter has doubling ratio
    1.296 between r = 2 and r = 4, dropping below 1.25 from r = 4 on."""
    sph = sphere_shape(grid, 1.0)
    rep = asymptotic_rates(sph, [4, 8, 16, 32, 64])
    assert abs(rep["rows"][0]["h0_rate"] - 8.0 / 5.0) <= 1e-12
    assert rep["h0_bounded"] and rep["rscal_bounded"] and rep["metric_bounded"]
    early = asymptotic_rates(sph, [2, 4, 8, 16, 32])
    assert early["h0_bounded"] and not early["rscal_bounded"]


def test_asymptotic_rates_ellipsoid(grid, ell):
    rep = asymptotic_rates(ell, [8, 16, 32, 64, 128])
    assert rep["h0_bounded"] and rep["rscal_bounded"] and rep["metric_bounded"]


def test_asymptotic_rates_requires_span(grid):
    with pytest.raises(ValueError, match="octave"):
        asymptotic_rates(sphere_shape(grid, 1.0), [2, 4])
