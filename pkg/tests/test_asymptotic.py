"""Tests for large-sphere analysis of Cartesian metric evaluators.

Conformally flat oracle, psi = 1 + m/(2 rho), metric psi^4 delta:

* induced sphere area element psi^4 rho^2, so area = 4 pi rho^2 psi^4
  plus the exact integral identities (theta-independent psi):
  integral of H over the sphere   = 8 pi rho - 2 pi m^2 / rho,
  integral of 2 sqrt(K)           = 8 pi (rho + m) + 2 pi m^2 / rho,
  so the gap over 8 pi is exactly m + m^2 / (2 rho): affine in 1/rho,
  and the two-shell extrapolation returns m exactly.
* pointwise: H = 2/(rho psi^2) - 2m/(rho^2 psi^3), K = 1/(psi^4 rho^2),
  |grad r| = 1/psi^2.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from quasisphere.asymptotic import (
    AsymptoticMetric,
    conformal_schwarzschild,
    coordinate_sphere,
    euclidean,
    mass_from_spheres,
    mean_curvature_variants,
    quadrupole_perturbation,
    weyl_h0_bounds,
)
from quasisphere.sphere import integrate, make_grid

EIGHT_PI = 8.0 * math.pi


@pytest.fixture(scope="module")
def grid():
    return make_grid(24, 48)


@pytest.fixture(scope="module")
def cs_sphere(grid):
    return coordinate_sphere(conformal_schwarzschild(1.0), 10.0, grid)


# ---------------------------------------------------------------------------
# flat sanity


def test_flat_sphere_geometry(grid):
    sph = coordinate_sphere(euclidean(), 3.0, grid)
    assert abs(sph.area() - 4.0 * math.pi * 9.0) <= 1e-10
    assert np.max(np.abs(sph.mean_curvature - 2.0 / 3.0)) <= 1e-7
    assert np.max(np.abs(sph.gauss_curvature - 1.0 / 9.0)) <= 1e-7
    assert np.max(np.abs(sph.grad_r_norm - 1.0)) <= 1e-12
    assert np.max(np.abs(sph.radial_identity - 1.0)) <= 1e-12


def test_flat_mass_is_tiny(grid):
    rep = mass_from_spheres(euclidean(), [5.0, 10.0], grid)
    assert abs(rep["mass_estimate"]) <= 1e-4
    assert all(rep["bracket_valid"])


# ---------------------------------------------------------------------------
# conformally flat closed forms


def test_cs_pointwise_fields(cs_sphere):
    rho, m = 10.0, 1.0
    psi = 1.0 + m / (2.0 * rho)
    want_h = 2.0 / (rho * psi**2) - 2.0 * m / (rho**2 * psi**3)
    want_k = 1.0 / (psi**4 * rho**2)
    assert np.max(np.abs(cs_sphere.mean_curvature - want_h)) <= 1e-7
    assert np.max(np.abs(cs_sphere.gauss_curvature - want_k)) <= 1e-8
    assert np.max(np.abs(cs_sphere.grad_r_norm - 1.0 / psi**2)) <= 1e-10
    assert np.max(np.abs(cs_sphere.radial_identity - 1.0)) <= 1e-12


def test_cs_integral_identities(grid, cs_sphere):
    rho, m = 10.0, 1.0
    total_h = integrate(grid.scalar(cs_sphere.mean_curvature),
                        cs_sphere.area_element)
    assert abs(total_h - (EIGHT_PI * rho - 2.0 * math.pi * m**2 / rho)) <= 1e-5
    total_2k = integrate(
        grid.scalar(2.0 * np.sqrt(cs_sphere.gauss_curvature)),
        cs_sphere.area_element)
    want = EIGHT_PI * (rho + m) + 2.0 * math.pi * m**2 / rho
    assert abs(total_2k - want) <= 1e-5


def test_cs_weyl_bracket_tight(cs_sphere):
    wb = weyl_h0_bounds(cs_sphere)
    assert wb.valid is True
    assert wb.rel_width <= 1e-4
    # psi is spherically symmetric: H0 = 2 sqrt(K) exactly
    rho, m = 10.0, 1.0
    psi = 1.0 + m / (2.0 * rho)
    h0 = 2.0 / (rho * psi**2)
    assert np.max(np.abs(wb.lower.values - h0)) <= 1e-7
    assert abs(wb.upper - h0) <= 1e-5


def test_cs_mass_extrapolates_exactly(grid):
    rep = mass_from_spheres(conformal_schwarzschild(1.0),
                            [50.0, 100.0, 200.0, 400.0], grid)
    for i, rho in enumerate(rep["radii"]):
        want = 1.0 + 1.0 / (2.0 * rho)
        # curvature-integral bias is relative, so absolute drift grows
        # linearly with the shell radius
        assert abs(rep["gap_over_8pi"][i] - want) <= 1e-6 * rho
    assert abs(rep["mass_estimate"] - 1.0) <= 0.02
    assert all(rep["bracket_valid"])
    assert all(w <= 1e-3 for w in rep["bracket_rel_width"])
    assert rep["in_annulus"] == [True, True, True, True]
    lo, hi = rep["annulus"]
    assert lo < 50.0 and hi > 400.0


def test_cs_h0_mid_integral(grid):
    # the midpoint-shell background integral tracks 8 pi (rho + m)
    rep = mass_from_spheres(conformal_schwarzschild(1.0), [50.0, 100.0], grid)
    for i, rho in enumerate(rep["radii"]):
        got = rep["h0_mid_integrals"][i]
        assert abs(got - EIGHT_PI * (rho + 1.0)) * rho <= 10.0


# ---------------------------------------------------------------------------
# derivatives and variants


def test_fd_matches_analytic_derivatives(grid):
    metric = quadrupole_perturbation(0.25)
    fd = AsymptoticMetric(name="fd-only", evaluate=metric.evaluate)
    pts = 3.0 * grid.nu[::7]
    assert_allclose(fd.first_derivatives(pts),
                    metric.first_derivatives(pts), atol=1e-11)


def test_mean_curvature_variants_agree(grid):
    variants = mean_curvature_variants(quadrupole_perturbation(0.25), 5.0,
                                       grid)
    a = variants["divergence"]
    b = variants["second_form_trace"]
    c = variants["area_derivative"]
    assert np.max(np.abs(a - b)) <= 1e-8
    assert np.max(np.abs(a - c)) <= 1e-8


def test_quadrupole_is_massless(grid):
    rep = mass_from_spheres(quadrupole_perturbation(0.25), [16.0, 32.0],
                            grid)
    assert abs(rep["mass_estimate"]) <= 1e-3
    assert all(rep["bracket_valid"])
    sph = coordinate_sphere(quadrupole_perturbation(0.5), 8.0, grid)
    wb = weyl_h0_bounds(sph)
    lo = float(np.min(wb.lower.values))
    assert lo <= 2.0 / 8.0 <= wb.upper


# ---------------------------------------------------------------------------
# invalid bracket branch


def test_weyl_bracket_invalid_on_distorted_sphere(grid):
    sph = coordinate_sphere(quadrupole_perturbation(2.0), 1.6, grid)
    assert float(np.min(sph.gauss_curvature)) < 0.0
    wb = weyl_h0_bounds(sph)
    assert wb.valid is False
    assert wb.upper is None
    assert "curvature" in wb.reason


def test_metric_evaluator_validation():
    metric = euclidean()
    with pytest.raises(ValueError):
        metric(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        mass_from_spheres(metric, [])
