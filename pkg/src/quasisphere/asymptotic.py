"""Geometry of large coordinate spheres in an asymptotically flat metric.

Given a 3-metric as a callable on Cartesian points, this module measures
coordinate spheres r = const: induced metric, Gauss curvature, mean
curvature (three independent discretizations), and the Weyl bracket

    4 K  <=  H0^2  <=  sup(4 K - ΔK / K)

pinning the mean curvature H0 of the isometric embedding of the sphere
into flat space between intrinsic quantities.  The bracket midpoint acts
as a computable stand-in for H0 in the mass gap

    mass ~ (1 / 8 pi) * integral of (H0 - H) over the sphere,

whose two-point extrapolation in 1/r is returned by mass_from_spheres.

All differentiation happens on smooth per-sphere scalars (spectral in
phi, high-order finite differences in theta and in the radius); no second
derivatives of the input metric are ever required.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sphere import (MetricField, ScalarField, SphereGrid, integrate,
                     laplace_beltrami, make_grid, phi_derivative_fft,
                     theta_derivative_fd)

EIGHT_PI = 8.0 * math.pi


def _fd4(plus2, plus1, minus1, minus2, h):
    return (-plus2 + 8.0 * plus1 - 8.0 * minus1 + minus2) / (12.0 * h)


@dataclass(frozen=True)
class AsymptoticMetric:
    """A 3-metric sampled at Cartesian points.

    evaluate maps points (n, 3) to components (n, 3, 3); d_evaluate, when
    analytic derivatives exist, maps points to (n, 3, 3, 3) indexed as
    dg[n, k, i, j] = d g_ij / d x_k.  Without it, first_derivatives falls
    back to fourth-order central differences with a relative step.
    """

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    d_evaluate: Callable[[np.ndarray], np.ndarray] | None = None
    fd_step_rel: float = 1e-3

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        out = self.evaluate(points)
        if out.shape != (len(points), 3, 3):
            raise ValueError("metric evaluator returned a wrong shape")
        return out

    def first_derivatives(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.d_evaluate is not None:
            return self.d_evaluate(points)
        n = len(points)
        h = self.fd_step_rel * np.maximum(
            np.linalg.norm(points, axis=1), 1.0)
        dg = np.empty((n, 3, 3, 3))
        for k in range(3):
            stencil = []
            for c in (2.0, 1.0, -1.0, -2.0):
                shifted = points.copy()
                shifted[:, k] += c * h
                stencil.append(self(shifted))
            dg[:, k] = _fd4(*stencil, h[:, None, None])
        return dg


def _wrap(metric) -> AsymptoticMetric:
    if isinstance(metric, AsymptoticMetric):
        return metric
    return AsymptoticMetric(name="callable", evaluate=metric)


# ---------------------------------------------------------------------------
# built-in families


def euclidean() -> AsymptoticMetric:
    def ev(points):
        return np.broadcast_to(np.eye(3), (len(points), 3, 3)).copy()

    def dev(points):
        return np.zeros((len(points), 3, 3, 3))

    return AsymptoticMetric(name="euclidean", evaluate=ev, d_evaluate=dev)


def conformal_schwarzschild(mass: float) -> AsymptoticMetric:
    """Time-symmetric slice in isotropic coordinates: (1 + m/2r)^4 delta."""

    def ev(points):
        rho = np.linalg.norm(points, axis=1)
        psi = 1.0 + mass / (2.0 * rho)
        return psi[:, None, None] ** 4 * np.eye(3)

    def dev(points):
        rho = np.linalg.norm(points, axis=1)
        psi = 1.0 + mass / (2.0 * rho)
        dpsi = (-mass / (2.0 * rho**3))[:, None] * points
        return (4.0 * psi[:, None] ** 3 * dpsi)[:, :, None, None] * np.eye(3)

    return AsymptoticMetric(name=f"conformal-schwarzschild(m={mass})",
                            evaluate=ev, d_evaluate=dev)


def quadrupole_perturbation(amplitude: float) -> AsymptoticMetric:
    """Flat metric plus a quadrupole-patterned conformal bump of order
    1/r^2, massless but angle-dependent; a stress test for the sphere
    analysis away from exact symmetry."""

    def _f_df(points):
        x, y, z = points[:, 0], points[:, 1], points[:, 2]
        r2 = x * x + y * y + z * z
        f = amplitude * (3.0 * z * z / r2**2 - 1.0 / r2)
        df = np.empty_like(points)
        common = (-12.0 * z * z / r2**3 + 2.0 / r2**2)
        df[:, 0] = amplitude * common * x
        df[:, 1] = amplitude * common * y
        df[:, 2] = amplitude * (common * z + 6.0 * z / r2**2)
        return f, df

    def ev(points):
        f, _ = _f_df(points)
        return (1.0 + f)[:, None, None] * np.eye(3)

    def dev(points):
        _, df = _f_df(points)
        return df[:, :, None, None] * np.eye(3)

    return AsymptoticMetric(name=f"quadrupole-perturbation(a={amplitude})",
                            evaluate=ev, d_evaluate=dev)


# ---------------------------------------------------------------------------
# per-sphere geometry


@dataclass(frozen=True)
class CoordinateSphere:
    """Measured geometry of the coordinate sphere |x| = rho in the metric.

    radial_identity is the numerically computed pairing of the coordinate
    radial direction with the gradient of r, identically 1 in exact
    arithmetic for any metric; its deviation gauges the linear algebra."""

    rho: float
    grid: SphereGrid
    tau: np.ndarray
    area_element: np.ndarray
    gauss_curvature: np.ndarray
    mean_curvature: np.ndarray
    grad_r_norm: np.ndarray
    radial_identity: np.ndarray

    def area(self) -> float:
        return integrate(self.grid.constant(1.0), self.area_element)


def _induced_components(metric: AsymptoticMetric, rho: float,
                        grid: SphereGrid) -> np.ndarray:
    points = rho * grid.nu
    g = metric(points)
    t_theta = rho * grid.e_theta
    t_phi = rho * grid.sin_theta[:, None] * grid.e_phi
    tau = np.empty((grid.n_nodes, 2, 2))
    tau[:, 0, 0] = np.einsum("ni,nij,nj->n", t_theta, g, t_theta)
    tau[:, 0, 1] = np.einsum("ni,nij,nj->n", t_theta, g, t_phi)
    tau[:, 1, 0] = tau[:, 0, 1]
    tau[:, 1, 1] = np.einsum("ni,nij,nj->n", t_phi, g, t_phi)
    return tau


def _gauss_curvature(grid: SphereGrid, tau: np.ndarray) -> np.ndarray:
    """Brioschi formula from first and second chart derivatives of the
    induced metric; components extend across the poles with parity
    (-1)^(number of theta indices).

    The components are rescaled to unit size first (the formula is
    homogeneous of degree -1) so the determinant cancellations near the
    poles happen between order-one numbers.
    """
    scale = float(np.mean(tau[:, 0, 0]))
    E, F, G = tau[:, 0, 0] / scale, tau[:, 0, 1] / scale, tau[:, 1, 1] / scale
    width = 11 if grid.n_theta >= 6 else 5

    E_t = theta_derivative_fd(grid, E, parity=1, width=width)
    E_p = phi_derivative_fft(grid, E)
    E_pp = phi_derivative_fft(grid, E, order=2)
    G_t = theta_derivative_fd(grid, G, parity=1, width=width)
    G_tt = theta_derivative_fd(grid, G, parity=1, order=2, width=width)
    G_p = phi_derivative_fft(grid, G)
    F_t = theta_derivative_fd(grid, F, parity=-1, width=width)
    F_p = phi_derivative_fft(grid, F)
    F_tp = theta_derivative_fd(grid, F_p, parity=-1, width=width)

    n = grid.n_nodes
    M1 = np.empty((n, 3, 3))
    M1[:, 0, 0] = -0.5 * E_pp + F_tp - 0.5 * G_tt
    M1[:, 0, 1] = 0.5 * E_t
    M1[:, 0, 2] = F_t - 0.5 * E_p
    M1[:, 1, 0] = F_p - 0.5 * G_t
    M1[:, 1, 1] = E
    M1[:, 1, 2] = F
    M1[:, 2, 0] = 0.5 * G_p
    M1[:, 2, 1] = F
    M1[:, 2, 2] = G

    M2 = np.empty((n, 3, 3))
    M2[:, 0, 0] = 0.0
    M2[:, 0, 1] = 0.5 * E_p
    M2[:, 0, 2] = 0.5 * G_t
    M2[:, 1, 0] = 0.5 * E_p
    M2[:, 1, 1] = E
    M2[:, 1, 2] = F
    M2[:, 2, 0] = 0.5 * G_t
    M2[:, 2, 1] = F
    M2[:, 2, 2] = G

    det_tau = E * G - F * F
    return (np.linalg.det(M1) - np.linalg.det(M2)) / det_tau**2 / scale


def _divergence_mean_curvature(metric: AsymptoticMetric, rho: float,
                               grid: SphereGrid) -> np.ndarray:
    """H = div of the unit normal of the r-level sets, evaluated by
    fourth-order differencing of sqrt(det g) * nu^k across the sphere."""
    base = rho * grid.nu
    h = rho * 1e-3

    def flux(points):
        g = metric(points)
        ginv = np.linalg.inv(g)
        sqrtg = np.sqrt(np.linalg.det(g))
        r = np.linalg.norm(points, axis=1)
        dr = points / r[:, None]
        grad = np.einsum("nij,nj->ni", ginv, dr)
        norm = np.sqrt(np.einsum("ni,ni->n", grad, dr))
        return sqrtg[:, None] * grad / norm[:, None]

    div = np.zeros(grid.n_nodes)
    for k in range(3):
        cols = []
        for c in (2.0, 1.0, -1.0, -2.0):
            shifted = base.copy()
            shifted[:, k] += c * h
            cols.append(flux(shifted)[:, k])
        div += _fd4(*cols, h)
    g0 = metric(base)
    return div / np.sqrt(np.linalg.det(g0))


def coordinate_sphere(metric, rho: float,
                      grid: SphereGrid | None = None) -> CoordinateSphere:
    """Measure the coordinate sphere |x| = rho in the given metric."""
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    metric = _wrap(metric)
    if grid is None:
        grid = make_grid(24, 48)

    tau = _induced_components(metric, rho, grid)
    det_tau = tau[:, 0, 0] * tau[:, 1, 1] - tau[:, 0, 1] ** 2
    if np.min(det_tau) <= 0.0:
        raise ValueError("induced metric is degenerate")
    area_element = np.sqrt(det_tau) / grid.sin_theta

    K = _gauss_curvature(grid, tau)
    H = _divergence_mean_curvature(metric, rho, grid)

    g0 = metric(rho * grid.nu)
    ginv = np.linalg.inv(g0)
    grad = np.einsum("nij,nj->ni", ginv, grid.nu)
    grad_r_norm = np.sqrt(np.einsum("ni,ni->n", grad, grid.nu))
    radial_identity = np.einsum("ni,nij,nj->n", grid.nu, g0, grad)

    return CoordinateSphere(
        rho=float(rho), grid=grid, tau=tau, area_element=area_element,
        gauss_curvature=K, mean_curvature=H, grad_r_norm=grad_r_norm,
        radial_identity=radial_identity)


def mean_curvature_variants(metric, rho: float,
                            grid: SphereGrid | None = None) -> dict:
    """Three independent readings of the mean curvature of |x| = rho.

    divergence: flux differencing of the unit normal (fully general).
    second_form_trace: trace of the second fundamental form built from
    the metric's first derivatives and the sphere embedding.
    area_derivative: |grad r| d/drho log sqrt(det tau), valid when the
    radial direction is g-orthogonal to the spheres, as it is for every
    built-in family.  Mutual agreement is a discretization check.
    """
    metric = _wrap(metric)
    if grid is None:
        grid = make_grid(24, 48)
    base = rho * grid.nu

    h_div = _divergence_mean_curvature(metric, rho, grid)

    # trace of the second fundamental form
    g = metric(base)
    ginv = np.linalg.inv(g)
    dg = metric.first_derivatives(base)
    # d_i g_jl + d_j g_il - d_l g_ij, laid out as [n, i, j, l]
    sym = dg + dg.transpose(0, 2, 1, 3) - dg.transpose(0, 2, 3, 1)
    gamma = 0.5 * np.einsum("nkl,nijl->nkij", ginv, sym)
    grad = np.einsum("nij,nj->ni", ginv, grid.nu)
    norm = np.sqrt(np.einsum("ni,ni->n", grad, grid.nu))
    nu_cov = grid.nu / norm[:, None]

    sin_t = grid.sin_theta[:, None]
    cos_t = grid.cos_theta[:, None]
    t_theta = rho * grid.e_theta
    t_phi = rho * sin_t * grid.e_phi
    x_tt = -rho * grid.nu
    x_tp = rho * cos_t * grid.e_phi
    horiz = grid.nu - cos_t * np.array([0.0, 0.0, 1.0])
    x_pp = -rho * horiz

    def second_form(x_ab, t_a, t_b):
        curve = x_ab + np.einsum("nkij,ni,nj->nk", gamma, t_a, t_b)
        return -np.einsum("nk,nk->n", nu_cov, curve)

    II = np.empty((grid.n_nodes, 2, 2))
    II[:, 0, 0] = second_form(x_tt, t_theta, t_theta)
    II[:, 0, 1] = second_form(x_tp, t_theta, t_phi)
    II[:, 1, 0] = II[:, 0, 1]
    II[:, 1, 1] = second_form(x_pp, t_phi, t_phi)
    tau = _induced_components(metric, rho, grid)
    tau_inv = np.linalg.inv(tau)
    h_trace = np.einsum("nab,nab->n", tau_inv, II)

    # logarithmic area derivative
    dr = rho * 1e-3
    taus = [_induced_components(metric, rho + c * dr, grid)
            for c in (2.0, 1.0, -1.0, -2.0)]
    tau_r = _fd4(*taus, dr)
    h_area = norm * 0.5 * np.einsum("nab,nba->n", tau_inv, tau_r)

    return {"divergence": h_div, "second_form_trace": h_trace,
            "area_derivative": h_area}


# ---------------------------------------------------------------------------
# Weyl bracket and mass extraction


@dataclass(frozen=True)
class WeylBracket:
    """Intrinsic bracket on the embedding mean curvature H0."""

    lower: ScalarField
    upper: float | None
    mid: ScalarField | None
    valid: bool
    reason: str
    rel_width: float | None


def weyl_h0_bounds(sph: CoordinateSphere) -> WeylBracket:
    """Bracket 2 sqrt(K) <= H0 <= sqrt(sup(4K - ΔK/K)) from the induced
    geometry alone; invalid when the Gauss curvature is not positive."""
    grid = sph.grid
    K = sph.gauss_curvature
    if np.min(K) <= 0.0:
        empty = grid.constant(0.0)
        return WeylBracket(lower=empty, upper=None, mid=None, valid=False,
                           reason="Gauss curvature is not positive",
                           rel_width=None)
    lower = 2.0 * np.sqrt(K)
    lap = laplace_beltrami(MetricField(grid, sph.tau), grid.scalar(K)).values
    arg = 4.0 * K - lap / K
    sup = float(np.max(arg))
    if sup <= 0.0:
        return WeylBracket(lower=grid.scalar(lower), upper=None, mid=None,
                           valid=False,
                           reason="upper-bound argument is not positive",
                           rel_width=None)
    upper = math.sqrt(sup)
    mid = 0.5 * (lower + upper)
    lo_min = float(np.min(lower))
    rel_width = (upper - lo_min) / (0.5 * (upper + lo_min))
    return WeylBracket(lower=grid.scalar(lower), upper=upper,
                       mid=grid.scalar(mid), valid=True, reason="",
                       rel_width=rel_width)


def mass_from_spheres(metric, radii, grid: SphereGrid | None = None) -> dict:
    """Mass gap integrals over a family of coordinate spheres and their
    two-point extrapolation in 1/r.

    Per radius: integral of H, integral of the Weyl midpoint standing in
    for H0, their gap over 8 pi, and the bracket's relative width.  The
    mass estimate eliminates the 1/r term from the two largest radii with
    a valid bracket.  Radii are flagged against the working annulus
    [10 m, 10^4 m] once the mass estimate is in hand.
    """
    metric = _wrap(metric)
    if grid is None:
        grid = make_grid(24, 48)
    radii = sorted(float(r) for r in radii)
    if len(radii) < 2:
        raise ValueError("need at least two radii to extrapolate")

    h_ints, h0_ints, gaps, widths, valids = [], [], [], [], []
    for rho in radii:
        sph = coordinate_sphere(metric, rho, grid)
        wb = weyl_h0_bounds(sph)
        h_int = integrate(grid.scalar(sph.mean_curvature), sph.area_element)
        h_ints.append(h_int)
        valids.append(wb.valid)
        if wb.valid:
            h0_int = integrate(wb.mid, sph.area_element)
            h0_ints.append(h0_int)
            gaps.append((h0_int - h_int) / EIGHT_PI)
            widths.append(wb.rel_width)
        else:
            h0_ints.append(None)
            gaps.append(None)
            widths.append(None)

    usable = [(r, g) for r, g, ok in zip(radii, gaps, valids) if ok]
    if len(usable) < 2:
        mass = None
    else:
        (r1, g1), (r2, g2) = usable[-2], usable[-1]
        mass = (r2 * g2 - r1 * g1) / (r2 - r1)

    if mass is not None and mass > 0.0:
        annulus = (10.0 * mass, 1e4 * mass)
        in_annulus = [annulus[0] <= r <= annulus[1] for r in radii]
    else:
        annulus = None
        in_annulus = [False] * len(radii)

    return {
        "radii": radii,
        "h_integrals": h_ints,
        "h0_mid_integrals": h0_ints,
        "gap_over_8pi": gaps,
        "bracket_rel_width": widths,
        "bracket_valid": valids,
        "mass_estimate": mass,
        "annulus": annulus,
        "in_annulus": in_annulus,
    }
