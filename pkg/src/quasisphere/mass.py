"""Mass functionals of a quasi-spherical solution.

Solution snapshots carry the lapse u and the parallel-surface geometry;
this module reduces them to scalar mass data: the Brown-York series
(integral of H0(1 - 1/u), nonincreasing in r), the Bartnik series
(integral of H0(1 - 1/u^2), nondecreasing, limit 16 pi m0), pointwise
mass-aspect statistics with their extrapolated limit, decay-rate fits,
and the ADM flux integral of the constructed Cartesian metric.

Conventions in three dimensions: the quasi-local mass of the boundary
data is the series value at r = 0 divided by 8 pi; the ADM normalization
divides the flux by 16 pi.  The series store the raw integrals and
consumers apply the constants, so the numbers stay commensurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .convex import ParallelGeometry, SupportShape
from .sphere import ScalarField, SphereGrid, integrate, make_grid

if TYPE_CHECKING:
    from .solver import QSState

FOUR_PI = 4.0 * math.pi
EIGHT_PI = 8.0 * math.pi
SIXTEEN_PI = 16.0 * math.pi


@dataclass(frozen=True)
class MassRecord:
    """Mass integrals of one snapshot.  Field names match the CSV columns."""

    r: float
    m_by: float
    m_bartnik: float
    m_aspect_mean: float
    m_aspect_min: float
    m_aspect_max: float
    sup_u_minus_1: float
    dt_last: float


@dataclass(frozen=True)
class MassSeries:
    """Per-snapshot mass records plus the extracted limits and flags.

    ``m0_estimate`` is the limit of the mass-aspect mean, obtained by
    two-point extrapolation linear in inverse radius over the last
    snapshot octave; ``m0_bracket`` pairs it with the unextrapolated tail
    value as a sanity interval.  Monotonicity flags allow a slack of
    ``10 * step_tolerance * n_steps``: the continuum statements are
    exact, all slack is numerical.
    """

    records: tuple[MassRecord, ...]
    mean_radius: float
    m0_estimate: float | None
    m0_bracket: tuple[float, float] | None
    decay_exponent_u: float | None
    decay_exponent_m: float | None
    monotone_m_by: bool
    monotone_m_bartnik: bool
    monotonicity_tolerance: float
    limits_available: bool
    step_tolerance: float
    n_steps: int
    crosscheck: dict | None = None

    def record_at(self, r: float) -> MassRecord:
        """The record closest to radius r (exact matches expected)."""
        return min(self.records, key=lambda rec: abs(rec.r - r))


def brown_york_integrand(geom: ParallelGeometry, u: ScalarField) -> ScalarField:
    """Pointwise H0 (1 - 1/u), the difference between the background mean
    curvature and the one measured in the constructed metric."""
    if u.grid is not geom.grid and not u.grid.same_layout(geom.grid):
        raise ValueError("lapse field lives on a different grid")
    uv = u.values
    if np.min(uv) <= 0.0:
        raise ValueError("lapse must be positive")
    return ScalarField(u.grid, geom.H0 * (1.0 - 1.0 / uv))


def bartnik_integrand(geom: ParallelGeometry, u: ScalarField) -> ScalarField:
    """Pointwise H0 (1 - 1/u^2), integrand of the nondecreasing series."""
    if u.grid is not geom.grid and not u.grid.same_layout(geom.grid):
        raise ValueError("lapse field lives on a different grid")
    uv = u.values
    if np.min(uv) <= 0.0:
        raise ValueError("lapse must be positive")
    return ScalarField(u.grid, geom.H0 * (1.0 - 1.0 / uv**2))


def _fit_exponent(rho: np.ndarray, vals: np.ndarray) -> float | None:
    """Decay exponent p from vals ~ rho^{-p} by log-log least squares.

    None when the data is degenerate (fewer than three usable points or
    values at round-off level, as on an identically-flat run)."""
    mask = np.isfinite(vals) & (vals > 0.0)
    if np.count_nonzero(mask) < 3 or np.max(vals[mask]) <= 1e-13:
        return None
    slope = np.polyfit(np.log(rho[mask]), np.log(vals[mask]), 1)[0]
    return float(-slope)


def mass_series(snapshots: Sequence["QSState"], step_tolerance: float = 1e-9,
                n_steps: int | None = None) -> MassSeries:
    """Reduce solution snapshots to the mass series and its limits.

    Limits require at least three positive-radius snapshots spanning a
    factor of four; otherwise they are flagged unavailable and left None.
    """
    snaps = sorted(snapshots, key=lambda s: s.r)
    if not snaps:
        raise ValueError("no snapshots given")
    if n_steps is None:
        n_steps = len(snaps)
    rho_bar = snaps[0].geometry.shape.mean_radius

    records = []
    for s in snaps:
        geom = s.geometry
        uv = s.u.values
        m = s.m_aspect.values
        records.append(MassRecord(
            r=s.r,
            m_by=integrate(brown_york_integrand(geom, s.u), geom.area_element),
            m_bartnik=integrate(bartnik_integrand(geom, s.u), geom.area_element),
            m_aspect_mean=integrate(s.m_aspect) / FOUR_PI,
            m_aspect_min=float(np.min(m)),
            m_aspect_max=float(np.max(m)),
            sup_u_minus_1=float(np.max(np.abs(uv - 1.0))),
            dt_last=s.dt_last,
        ))

    tol_mono = 10.0 * step_tolerance * max(n_steps, 1)
    by = np.array([rec.m_by for rec in records])
    bk = np.array([rec.m_bartnik for rec in records])
    monotone_by = bool(np.all(np.diff(by) <= tol_mono))
    monotone_bk = bool(np.all(np.diff(bk) >= -tol_mono))

    pos = [rec for rec in records if rec.r > 0.0]
    available = len(pos) >= 3 and pos[-1].r >= 4.0 * pos[0].r

    m0 = bracket = exp_u = exp_m = None
    if available:
        rho = np.array([rho_bar + rec.r for rec in pos])
        mean = np.array([rec.m_aspect_mean for rec in pos])
        last = len(pos) - 1
        half = int(np.argmin(np.abs(rho - rho[last] / 2.0)))
        if half == last:
            half = last - 1
        r2, r1 = rho[last], rho[half]
        m0 = float((r2 * mean[last] - r1 * mean[half]) / (r2 - r1))
        bracket = (min(m0, float(mean[last])), max(m0, float(mean[last])))

        window = rho >= rho[last] / 4.0
        sup_u = np.array([rec.sup_u_minus_1 for rec in pos])
        exp_u = _fit_exponent(rho[window], sup_u[window])
        sup_m = np.array([max(abs(rec.m_aspect_max - m0),
                              abs(rec.m_aspect_min - m0)) for rec in pos])
        exp_m = _fit_exponent(rho[window], sup_m[window])

    return MassSeries(
        records=tuple(records), mean_radius=rho_bar,
        m0_estimate=m0, m0_bracket=bracket,
        decay_exponent_u=exp_u, decay_exponent_m=exp_m,
        monotone_m_by=monotone_by, monotone_m_bartnik=monotone_bk,
        monotonicity_tolerance=tol_mono, limits_available=available,
        step_tolerance=step_tolerance, n_steps=n_steps)


def with_crosscheck(series: MassSeries, report: dict) -> MassSeries:
    """Copy of the series carrying a form-consistency report."""
    return replace(series, crosscheck=report)


def shi_tam_gap(geom0: ParallelGeometry, H_boundary: ScalarField,
                series: MassSeries) -> dict:
    """Report for data prescribed by a boundary mean curvature.

    Verifies the chain: the boundary integral of (H0 - H_boundary) equals
    the series start, its 1/8pi value dominates the asymptotic mass by
    monotonicity, and the sign of that mass is recorded (a negative value
    signals boundary data that no nonnegatively-curved interior can fill).
    """
    if geom0.r != 0.0:
        raise ValueError("boundary geometry must be the r = 0 surface")
    hb = H_boundary.values
    if np.min(hb) <= 0.0:
        raise ValueError("boundary mean curvature must be positive")
    # u0 = H0/H_boundary makes the integrand H0(1 - 1/u0) = H0 - H_boundary
    grid = geom0.grid
    gap = integrate(ScalarField(grid, geom0.H0 - hb), geom0.area_element)
    rec0 = series.records[0]
    if rec0.r != 0.0 or abs(rec0.m_by - gap) > 1e-8 * (1.0 + abs(gap)):
        raise ValueError(
            "series was not produced from the given boundary data "
            f"(series start {rec0.m_by!r}, boundary integral {gap!r})")

    bym = gap / EIGHT_PI
    m0 = series.m0_estimate
    slack = series.monotonicity_tolerance / EIGHT_PI
    chain = None
    if m0 is not None:
        slack += 1e-6 * (1.0 + abs(m0))
        chain = bool(bym >= m0 - slack)
    sign = None
    if m0 is not None:
        sign = 0 if abs(m0) < 1e-7 else (1 if m0 > 0 else -1)
    return {
        "gap_integral": gap,
        "brown_york_mass": bym,
        "m0_estimate": m0,
        "chain_holds": chain,
        "m0_sign": sign,
        "boundary_h0_integral": integrate(ScalarField(grid, geom0.H0),
                                          geom0.area_element),
    }


# ---------------------------------------------------------------------------
# ADM flux of a Cartesian metric evaluator


def adm_surface_integral(evaluator: Callable[[np.ndarray], np.ndarray],
                         rho: float, grid: SphereGrid | None = None,
                         fd_step_rel: float = 1e-3) -> float:
    """Raw ADM flux of a metric given as a batched Cartesian evaluator.

    ``evaluator`` maps points (M, 3) to metric components (M, 3, 3).  The
    flux sums (d_i g_ij - d_j g_ii) nu_j over the coordinate sphere of
    radius rho; the normalized ADM mass is the returned value / 16 pi.
    First derivatives are fourth-order central differences with step
    rho * fd_step_rel, so the evaluator must cover that shell.
    """
    if grid is None:
        grid = make_grid(24, 48)
    z0 = rho * grid.nu
    h = rho * fd_step_rel
    n = grid.n_nodes

    dg = np.empty((n, 3, 3, 3))
    for k in range(3):
        probes = []
        for off in (-2.0, -1.0, 1.0, 2.0):
            p = z0.copy()
            p[:, k] += off * h
            probes.append(p)
        gm2, gm1, gp1, gp2 = (np.asarray(evaluator(p), dtype=float)
                              for p in probes)
        for g in (gm2, gm1, gp1, gp2):
            if g.shape != (n, 3, 3):
                raise ValueError("evaluator must return (M, 3, 3) components")
        dg[:, k] = (gm2 - 8.0 * gm1 + 8.0 * gp1 - gp2) / (12.0 * h)

    term1 = np.einsum("niij->nj", dg)
    term2 = np.einsum("njii->nj", dg)
    f = np.einsum("nj,nj->n", term1 - term2, grid.nu)
    return integrate(ScalarField(grid, f)) * rho**2


def solution_metric_evaluator(shape: SupportShape,
                              snapshots: Sequence["QSState"]
                              ) -> Callable[[np.ndarray], np.ndarray]:
    """Batched Cartesian evaluator of the constructed metric over a round
    base shape: g = delta + (u^2 - 1) nu nu^T with nu the radial direction.

    Between stored shells u is a cubic Hermite interpolant in inverse
    radius (slopes from the evolution equation), band-limited in angle.
    Queries outside the stored radial range raise ValueError.
    """
    if shape.kind.partition(":")[0] != "sphere":
        raise ValueError("Cartesian assembly needs a round base shape")
    from .solver import rhs_u

    snaps = sorted(snapshots, key=lambda s: s.r)
    if len(snaps) < 2:
        raise ValueError("need at least two snapshots to interpolate")
    grid = shape.grid
    R = shape.mean_radius
    rho_knots = np.array([R + s.r for s in snaps])
    s_knots = 1.0 / rho_knots
    u_knots = [np.array(s.u.values) for s in snaps]
    du_ds = [-rho_knots[i] ** 2 * rhs_u(s, s.geometry).values
             for i, s in enumerate(snaps)]

    def evaluator(z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        rho = np.linalg.norm(z, axis=1)
        if np.min(rho) < rho_knots[0] * (1 - 1e-12) or \
           np.max(rho) > rho_knots[-1] * (1 + 1e-12):
            raise ValueError(
                f"radius outside stored range "
                f"[{rho_knots[0]:g}, {rho_knots[-1]:g}]")
        theta = np.arccos(np.clip(z[:, 2] / rho, -1.0, 1.0))
        phi = np.mod(np.arctan2(z[:, 1], z[:, 0]), 2.0 * math.pi)

        idx = np.clip(np.searchsorted(rho_knots, rho), 1, len(rho_knots) - 1)
        u = np.empty(len(rho))
        for j in np.unique(idx):
            sel = idx == j
            a, b = j - 1, j
            ua = grid.interpolate(u_knots[a], theta[sel], phi[sel])
            ub = grid.interpolate(u_knots[b], theta[sel], phi[sel])
            da = grid.interpolate(du_ds[a], theta[sel], phi[sel])
            db = grid.interpolate(du_ds[b], theta[sel], phi[sel])
            ds = s_knots[b] - s_knots[a]
            t = (1.0 / rho[sel] - s_knots[a]) / ds
            t2, t3 = t * t, t * t * t
            u[sel] = ((2 * t3 - 3 * t2 + 1) * ua + (t3 - 2 * t2 + t) * ds * da
                      + (-2 * t3 + 3 * t2) * ub + (t3 - t2) * ds * db)

        nu = z / rho[:, None]
        g = np.tile(np.eye(3), (len(rho), 1, 1))
        g += (u**2 - 1.0)[:, None, None] * np.einsum("ni,nj->nij", nu, nu)
        return g

    return evaluator
