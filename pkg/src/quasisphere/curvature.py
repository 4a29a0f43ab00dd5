"""Independent curvature checks on shell metrics u^2 drho^2 + g_rho.

The deliverables elsewhere in this package integrate a parabolic equation
for the radial lapse u and claim the resulting 3-metric has a prescribed
scalar curvature.  This module re-measures that claim from sampled data
alone: given u on a small stack of leaves around a test radius, it
differentiates the assembled metric components with finite differences
in rho and chart derivatives on the sphere, builds the full Riemann
tensor without ever differencing Christoffel symbols (second metric
derivatives enter directly), and contracts to the scalar curvature.

Three leaf backgrounds are supported: parallel surfaces of a convex body,
round spheres in flat space, and geodesic spheres in hyperbolic space
(scalar curvature -6), the latter giving a nonzero target that pins the
sign conventions.

The cheaper pointwise residual check evaluates the radial equation

    H0 u_rho - u^2 Lap u - (u - u^3) Rscal / 2
        + u R0 / 2 - u^3 R_target / 2 = 0

at the center shell, and second_form_check compares the differenced
second fundamental form against its analytic value together with the
Gauss relation tying the 3D curvature to the leaf curvature.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from .convex import SupportShape, parallel_geometry, shape_from_support
from .sphere import (MetricField, ScalarField, SphereGrid, fornberg_weights,
                     laplace_beltrami, make_grid, phi_derivative_fft,
                     round_metric, theta_derivative_fd)

_BACKGROUNDS = ("convex", "round", "hyperbolic")
_FD_WIDTH = 11


@dataclass(frozen=True)
class ShellMetric:
    """Samples of the lapse on a stack of leaves around a test radius.

    rho_samples must be strictly increasing with an odd count (the center
    entry is the verification radius); u_samples holds one row per shell.
    The convex background carries its base shape; the round and
    hyperbolic backgrounds need none.
    """

    background: str
    grid: SphereGrid
    rho_samples: np.ndarray
    u_samples: np.ndarray
    shape: SupportShape | None = None
    target_scalar: float = 0.0

    def __post_init__(self):
        if self.background not in _BACKGROUNDS:
            raise ValueError(f"unknown background {self.background!r}")
        rho = np.asarray(self.rho_samples, dtype=float)
        u = np.asarray(self.u_samples, dtype=float)
        if rho.ndim != 1 or len(rho) < 5 or len(rho) % 2 == 0:
            raise ValueError("need an odd number of shells, at least 5")
        if np.any(np.diff(rho) <= 0.0):
            raise ValueError("shell radii must be strictly increasing")
        if u.shape != (len(rho), self.grid.n_nodes):
            raise ValueError("lapse samples do not match shells and grid")
        if np.min(u) <= 0.0:
            raise ValueError("lapse samples must be positive")
        if self.background == "convex":
            if self.shape is None:
                raise ValueError("convex background needs a shape")
            if not self.shape.grid.same_layout(self.grid):
                raise ValueError("shape lives on a different grid")
            if rho[0] < 0.0:
                raise ValueError("convex offsets must be nonnegative")
        elif self.shape is not None:
            raise ValueError("only the convex background takes a shape")
        if self.background in ("round", "hyperbolic") and rho[0] <= 0.0:
            raise ValueError("shell radii must be positive")
        object.__setattr__(self, "rho_samples", rho)
        object.__setattr__(self, "u_samples", u)

    @property
    def center_index(self) -> int:
        return len(self.rho_samples) // 2

    @property
    def rho_center(self) -> float:
        return float(self.rho_samples[self.center_index])

    def radial_weights(self, order: int) -> np.ndarray:
        """Differentiation weights at the center across all shells."""
        return fornberg_weights(self.rho_center, self.rho_samples,
                                order)[order]


def shell_metric_from_function(background: str, rho_center: float, u_fn,
                               grid: SphereGrid | None = None,
                               shape: SupportShape | None = None,
                               n_shells: int = 7, delta: float | None = None,
                               target_scalar: float = 0.0) -> ShellMetric:
    """Sample an analytic lapse u_fn(rho, grid) -> (N,) on a shell stack."""
    if grid is None:
        grid = shape.grid if shape is not None else make_grid(24, 48)
    if n_shells < 5 or n_shells % 2 == 0:
        raise ValueError("need an odd number of shells, at least 5")
    if delta is None:
        delta = min(1e-2, max(abs(rho_center), 1.0) * 1e-3)
    half = n_shells // 2
    lo = rho_center - half * delta
    if background == "convex" and lo < 0.0:
        raise ValueError("stencil extends below the base surface")
    if background in ("round", "hyperbolic") and lo <= 0.0:
        raise ValueError("stencil extends to the origin")
    rho = rho_center + delta * np.arange(-half, half + 1)
    u = np.stack([np.broadcast_to(np.asarray(u_fn(r, grid), dtype=float),
                                  (grid.n_nodes,)) for r in rho])
    return ShellMetric(background=background, grid=grid, rho_samples=rho,
                       u_samples=u, shape=shape, target_scalar=target_scalar)


def shell_metric_from_snapshots(snapshots, rho_center: float,
                                n_shells: int = 7,
                                analysis_grid: SphereGrid | None = None
                                ) -> ShellMetric:
    """Assemble a shell stack from solver snapshots around a test radius.

    The n_shells snapshots nearest rho_center are used; the lapse and the
    base shape move to the analysis grid (finer by default) by spectral
    resampling, so the angular differentiation error is controlled by the
    analysis resolution rather than the evolution resolution.
    """
    if n_shells < 5 or n_shells % 2 == 0:
        raise ValueError("need an odd number of shells, at least 5")
    if len(snapshots) < n_shells:
        raise ValueError("not enough snapshots for the stencil")
    ordered = sorted(snapshots, key=lambda s: abs(s.r - rho_center))
    picked = sorted(ordered[:n_shells], key=lambda s: s.r)
    if not picked[0].r <= rho_center <= picked[-1].r:
        raise ValueError("snapshots do not bracket the test radius")

    shape = picked[0].geometry.shape
    src = shape.grid
    if analysis_grid is None:
        analysis_grid = make_grid(48, 96)
    if analysis_grid.same_layout(src):
        u = np.stack([s.u.values for s in picked])
        new_shape = shape
    else:
        u = np.stack([src.resample_to(analysis_grid, s.u.values)
                      for s in picked])
        h = src.resample_to(analysis_grid, shape.h)
        new_shape = shape_from_support(analysis_grid.scalar(h),
                                       kind=shape.kind)
    rho = np.array([s.r for s in picked])
    return ShellMetric(background="convex", grid=analysis_grid,
                       rho_samples=rho, u_samples=u, shape=new_shape,
                       target_scalar=0.0)


# ---------------------------------------------------------------------------
# background leaf data


def _leaf_family(sm: ShellMetric):
    """Chart components of the leaf metric at the center radius together
    with their first and second rho-derivatives (all analytic)."""
    grid = sm.grid
    rho = sm.rho_center
    unit = round_metric(grid, 1.0).components
    if sm.background == "convex":
        geom = parallel_geometry(sm.shape, rho)
        L0 = geom.metric.components
        dL = 2.0 * geom.second_form_chart()
        d2L = 2.0 * unit
    elif sm.background == "round":
        L0 = rho**2 * unit
        dL = 2.0 * rho * unit
        d2L = 2.0 * unit
    else:
        s, c = math.sinh(rho), math.cosh(rho)
        L0 = s * s * unit
        dL = 2.0 * s * c * unit
        d2L = math.cosh(2.0 * rho) * 2.0 * unit
    return L0, dL, d2L


def _leaf_at(sm: ShellMetric, rho: float) -> np.ndarray:
    grid = sm.grid
    unit = round_metric(grid, 1.0).components
    if sm.background == "convex":
        return parallel_geometry(sm.shape, rho).metric.components
    if sm.background == "round":
        return rho**2 * unit
    return math.sinh(rho) ** 2 * unit


def _background_data(sm: ShellMetric):
    """H0, Rscal of the center leaf, the ambient background scalar
    curvature, and the leaf metric for angular operators."""
    grid = sm.grid
    rho = sm.rho_center
    if sm.background == "convex":
        geom = parallel_geometry(sm.shape, rho)
        return geom.H0, geom.Rscal, 0.0, geom.metric
    if sm.background == "round":
        return (np.full(grid.n_nodes, 2.0 / rho),
                np.full(grid.n_nodes, 2.0 / rho**2),
                0.0, round_metric(grid, rho))
    s, c = math.sinh(rho), math.cosh(rho)
    return (np.full(grid.n_nodes, 2.0 * c / s),
            np.full(grid.n_nodes, 2.0 / s**2),
            -6.0, round_metric(grid, s))


# ---------------------------------------------------------------------------
# checks


def shell_scalar_residual(sm: ShellMetric) -> ScalarField:
    """Pointwise residual of the radial equation at the center shell."""
    grid = sm.grid
    w1 = sm.radial_weights(1)
    u = sm.u_samples[sm.center_index]
    u_rho = w1 @ sm.u_samples
    H0, Rscal, R0, leaf = _background_data(sm)
    lap = laplace_beltrami(leaf, grid.scalar(u)).values
    res = (H0 * u_rho - u * u * lap - 0.5 * (u - u**3) * Rscal
           + 0.5 * u * R0 - 0.5 * u**3 * sm.target_scalar)
    return ScalarField(grid, res)


def _chart_derivative_stack(grid: SphereGrid, comps: np.ndarray,
                            parities) -> np.ndarray:
    """First angular derivatives d_k of a (N, 2, 2) symmetric chart block;
    returns (N, 2, 2, 2) with k = theta, phi leading the pair axes last."""
    out = np.empty((grid.n_nodes, 2, comps.shape[1], comps.shape[2]))
    for a in range(comps.shape[1]):
        for b in range(comps.shape[2]):
            out[:, 0, a, b] = theta_derivative_fd(
                grid, comps[:, a, b], parity=parities[a][b], width=_FD_WIDTH)
            out[:, 1, a, b] = phi_derivative_fft(grid, comps[:, a, b])
    return out


def fd_scalar_curvature(sm: ShellMetric) -> ScalarField:
    """Scalar curvature of u^2 drho^2 + g_rho at the center shell by
    direct differencing.

    The Riemann tensor is assembled from second derivatives of the metric
    components plus a Gamma*Gamma correction built from first derivatives
    only, so no derivative of a derived quantity is ever differenced
    except the rho-line of the sampled lapse itself.
    """
    grid = sm.grid
    n = grid.n_nodes
    ci = sm.center_index
    u = sm.u_samples[ci]
    w1 = sm.radial_weights(1)
    w2 = sm.radial_weights(2)

    u2 = sm.u_samples**2
    u2_c = u2[ci]
    u2_r = w1 @ u2
    u2_rr = w2 @ u2

    L0, dL, d2L = _leaf_family(sm)

    # assembled metric and its first derivatives dG[n, k, i, j],
    # k in (rho, theta, phi); the off-block vanishes identically
    G = np.zeros((n, 3, 3))
    G[:, 0, 0] = u2_c
    G[:, 1:, 1:] = L0

    # chart parities: (-1)^(number of theta indices)
    lp = ((1, -1), (-1, 1))
    dG = np.zeros((n, 3, 3, 3))
    dG[:, 0, 0, 0] = u2_r
    dG[:, 1, 0, 0] = theta_derivative_fd(grid, u2_c, parity=1,
                                         width=_FD_WIDTH)
    dG[:, 2, 0, 0] = phi_derivative_fft(grid, u2_c)
    dG[:, 0, 1:, 1:] = dL
    ang_L = _chart_derivative_stack(grid, L0, lp)
    dG[:, 1:, 1:, 1:] = ang_L

    # second derivatives d2G[n, k, l, i, j], symmetric in (k, l)
    d2G = np.zeros((n, 3, 3, 3, 3))
    d2G[:, 0, 0, 0, 0] = u2_rr
    u2r_t = theta_derivative_fd(grid, u2_r, parity=1, width=_FD_WIDTH)
    u2r_p = phi_derivative_fft(grid, u2_r)
    d2G[:, 0, 1, 0, 0] = d2G[:, 1, 0, 0, 0] = u2r_t
    d2G[:, 0, 2, 0, 0] = d2G[:, 2, 0, 0, 0] = u2r_p
    d2G[:, 1, 1, 0, 0] = theta_derivative_fd(grid, u2_c, parity=1, order=2,
                                             width=_FD_WIDTH)
    u2_p = dG[:, 2, 0, 0]
    mixed = theta_derivative_fd(grid, u2_p, parity=1, width=_FD_WIDTH)
    d2G[:, 1, 2, 0, 0] = d2G[:, 2, 1, 0, 0] = mixed
    d2G[:, 2, 2, 0, 0] = phi_derivative_fft(grid, u2_c, order=2)

    d2G[:, 0, 0, 1:, 1:] = d2L
    ang_dL = _chart_derivative_stack(grid, dL, lp)
    d2G[:, 0, 1:, 1:, 1:] = ang_dL
    d2G[:, 1:, 0, 1:, 1:] = ang_dL
    for a in range(2):
        for b in range(2):
            comp = L0[:, a, b]
            par = lp[a][b]
            tt = theta_derivative_fd(grid, comp, parity=par, order=2,
                                     width=_FD_WIDTH)
            pp = phi_derivative_fft(grid, comp, order=2)
            p1 = ang_L[:, 1, a, b]
            tp = theta_derivative_fd(grid, p1, parity=par, width=_FD_WIDTH)
            d2G[:, 1, 1, 1 + a, 1 + b] = tt
            d2G[:, 2, 2, 1 + a, 1 + b] = pp
            d2G[:, 1, 2, 1 + a, 1 + b] = d2G[:, 2, 1, 1 + a, 1 + b] = tp

    Ginv = np.linalg.inv(G)
    sym = dG + dG.transpose(0, 2, 1, 3) - dG.transpose(0, 2, 3, 1)
    gamma = 0.5 * np.einsum("nkl,nijl->nkij", Ginv, sym)

    term2 = (np.einsum("nef,nebc,nfad->nabcd", G, gamma, gamma)
             - np.einsum("nef,nebd,nfac->nabcd", G, gamma, gamma))
    riemann = 0.5 * (d2G.transpose(0, 3, 1, 2, 4)    # d_b d_c g_ad
                     + d2G.transpose(0, 1, 3, 4, 2)  # d_a d_d g_bc
                     - d2G.transpose(0, 1, 3, 2, 4)  # d_a d_c g_bd
                     - d2G.transpose(0, 3, 1, 4, 2)  # d_b d_d g_ac
                     ) + term2
    scalar = np.einsum("nac,nbd,nabcd->n", Ginv, Ginv, riemann)
    return ScalarField(grid, scalar)


def second_form_check(sm: ShellMetric) -> dict:
    """Differenced second fundamental form against its analytic value,
    plus the Gauss relation between the 3D curvature component, the leaf
    curvature, and the lapse.  Both deviations are relative sups."""
    grid = sm.grid
    ci = sm.center_index
    u = sm.u_samples[ci]
    w1 = sm.radial_weights(1)

    leafs = np.stack([_leaf_at(sm, r) for r in sm.rho_samples])
    dL_fd = np.einsum("s,snab->nab", w1, leafs)
    _, dL, _ = _leaf_family(sm)
    ii_fd = dL_fd / (2.0 * u[:, None, None])
    ii_exact = dL / (2.0 * u[:, None, None])
    scale = float(np.max(np.abs(ii_exact)))
    ii_dev = float(np.max(np.abs(ii_fd - ii_exact))) / scale

    # Gauss relation: R3_tptp = (1 - u^-2) K_leaf det2 + u^-2 R0_tptp
    L0, _, _ = _leaf_family(sm)
    det2 = L0[:, 0, 0] * L0[:, 1, 1] - L0[:, 0, 1] ** 2
    H0, Rscal, _, _ = _background_data(sm)
    K_leaf = 0.5 * Rscal
    if sm.background == "hyperbolic":
        r0_tptp = -det2
    else:
        r0_tptp = np.zeros(grid.n_nodes)
    expected = (1.0 - u**-2) * K_leaf * det2 + u**-2 * r0_tptp

    riemann_tptp = _riemann_component_tptp(sm)
    gauss_dev = float(np.max(np.abs(riemann_tptp - expected))
                      / np.max(np.abs(expected)
                               + det2 / sm.rho_center**2))
    return {"ii_deviation": ii_dev, "gauss_deviation": gauss_dev}


def _riemann_component_tptp(sm: ShellMetric) -> np.ndarray:
    """R_{theta phi theta phi} of the assembled metric at the center,
    from the leaf block's angular derivatives and the radial lapse."""
    grid = sm.grid
    ci = sm.center_index
    u2_c = sm.u_samples[ci] ** 2
    L0, dL, _ = _leaf_family(sm)
    lp = ((1, -1), (-1, 1))

    # angular second derivatives of the leaf block
    a, b = 0, 1
    E, F, G2 = L0[:, 0, 0], L0[:, 0, 1], L0[:, 1, 1]
    E_pp = phi_derivative_fft(grid, E, order=2)
    G_tt = theta_derivative_fd(grid, G2, parity=1, order=2, width=_FD_WIDTH)
    F_p = phi_derivative_fft(grid, F)
    F_tp = theta_derivative_fd(grid, F_p, parity=-1, width=_FD_WIDTH)

    # 3D Christoffels restricted to the needed combinations
    n = grid.n_nodes
    G = np.zeros((n, 3, 3))
    G[:, 0, 0] = u2_c
    G[:, 1:, 1:] = L0
    dG = np.zeros((n, 3, 3, 3))
    dG[:, 0, 0, 0] = sm.radial_weights(1) @ sm.u_samples**2
    dG[:, 1, 0, 0] = theta_derivative_fd(grid, u2_c, parity=1,
                                         width=_FD_WIDTH)
    dG[:, 2, 0, 0] = phi_derivative_fft(grid, u2_c)
    dG[:, 0, 1:, 1:] = dL
    dG[:, 1:, 1:, 1:] = _chart_derivative_stack(grid, L0, lp)
    Ginv = np.linalg.inv(G)
    sym = dG + dG.transpose(0, 2, 1, 3) - dG.transpose(0, 2, 3, 1)
    gamma = 0.5 * np.einsum("nkl,nijl->nkij", Ginv, sym)

    # R_abcd with a,c = theta (index 1) and b,d = phi (index 2)
    dd = 0.5 * (F_tp + F_tp - G_tt - E_pp)
    quad = (np.einsum("nef,ne,nf->n", G, gamma[:, :, 2, 1], gamma[:, :, 1, 2])
            - np.einsum("nef,ne,nf->n", G, gamma[:, :, 2, 2],
                        gamma[:, :, 1, 1]))
    return dd + quad


def convergence_study(background: str, rho_center: float, u_fn,
                      deltas, grid: SphereGrid | None = None,
                      shape: SupportShape | None = None,
                      target_scalar: float = 0.0) -> list[float]:
    """Sup-norm scalar-curvature defect for a sequence of shell spacings;
    used to confirm the radial differencing order on analytic data."""
    errs = []
    for d in deltas:
        sm = shell_metric_from_function(
            background, rho_center, u_fn, grid=grid, shape=shape,
            delta=d, target_scalar=target_scalar)
        sc = fd_scalar_curvature(sm)
        errs.append(float(np.max(np.abs(sc.values - target_scalar))))
    return errs
