"""Outward integration of the radial lapse equation on parallel leaves.

The exterior metric ansatz u^2 dr^2 + g_r is scalar-flat exactly when the
lapse u solves, leaf by leaf,

    du/dr = (2 u^2 Lap_r u + (u - u^3) Rscal_r) / (2 H0_r),

a parabolic equation on the sphere of leaves with coefficients supplied by
the parallel-surface geometry.  This module integrates it outward with an
embedded 5(4) Runge-Kutta pair in the stretched variable

    tau = log(1 + r / rho_bar),    rho_bar = mean support radius,

which keeps the diffusive stability limit independent of r.  Comparison
envelopes for u are maintained as runtime invariants; a violated envelope
is a discretization failure (the continuum solution cannot cross it) and
is retried at a smaller step before aborting.

Two evolution forms are available: the lapse itself (ground truth, valid
from r = 0) and the mass aspect m = rho (1 - u^{-2}) / 2 with
rho = rho_bar + r (activated at r >= 1, where its 1/rho coefficients are
tame).  The two are algebraically equivalent; integrating both and
comparing is a self-check, see ``form="both_crosscheck"``.

The minimal-boundary datum (1/u0 = 0) is reached by continuation: solve
with u0 = k for a ladder of k values and extrapolate in 1/k^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .convex import ParallelGeometry, SupportShape, parallel_geometry
from .mass import MassSeries, mass_series, with_crosscheck
from .sphere import ScalarField, gradient_squared, laplace_beltrami

R_SWITCH = 1.0
U_FORM = "u_form"
MASS_FORM = "mass_form"
BOTH_FORMS = "both_crosscheck"

# Dormand-Prince 5(4) pair; the last stage row equals the 5th-order weights,
# so the final stage derivative is reused as the first of the next step.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200,
      22 / 525, -1 / 40)

_FAC_MIN = 0.2
_FAC_MAX = 2.0


class SolverAbort(RuntimeError):
    """Integration could not continue; carries position diagnostics."""

    def __init__(self, message: str, r: float, dt: float, detail: str = ""):
        self.r = r
        self.dt = dt
        self.detail = detail
        text = f"{message} (r={r:.6g}, dt={dt:.3e})"
        if detail:
            text += f": {detail}"
        super().__init__(text)


@dataclass(frozen=True)
class InitialData:
    """One of three ways to prescribe the starting lapse.

    Either the field itself, or the minimal-surface flag (1/u0 = 0, handled
    by continuation in solve_minimal), or a prescribed boundary mean
    curvature from which u0 = H0 / H_boundary.
    """

    u0: ScalarField | None = None
    minimal: bool = False
    boundary_h: ScalarField | None = None

    def __post_init__(self):
        given = (self.u0 is not None) + self.minimal + \
            (self.boundary_h is not None)
        if given != 1:
            raise ValueError("specify exactly one of u0, minimal, boundary_h")
        if self.u0 is not None and np.min(self.u0.values) <= 0.0:
            raise ValueError("initial lapse must be positive")
        if self.boundary_h is not None and np.min(self.boundary_h.values) <= 0.0:
            raise ValueError("boundary mean curvature must be positive")

    @classmethod
    def constant(cls, grid, k: float) -> "InitialData":
        return cls(u0=grid.constant(float(k)))

    @classmethod
    def minimal_surface(cls) -> "InitialData":
        return cls(minimal=True)

    @classmethod
    def from_boundary_mean_curvature(cls, H_boundary: ScalarField
                                     ) -> "InitialData":
        return cls(boundary_h=H_boundary)


@dataclass(frozen=True)
class SolverConfig:
    """Integration control; dt values live in the tau variable."""

    r_max: float
    tol: float = 1e-9
    dt_initial: float = 1e-3
    safety: float = 0.9
    max_steps: int = 200_000
    form: str = U_FORM
    ladder: tuple = (2, 4, 8, 16, 32)
    r_switch: float = R_SWITCH
    envelope_tol: float = 1e-6
    dt_min: float = 1e-14
    fixed_dt: float | None = None
    extra_snapshot_rs: tuple = ()

    def __post_init__(self):
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")
        if self.tol <= 0:
            raise ValueError("step tolerance must be positive")
        if not 0.0 < self.safety <= 1.0:
            raise ValueError("safety factor must lie in (0, 1]")
        if self.form not in (U_FORM, MASS_FORM, BOTH_FORMS):
            raise ValueError(f"unknown form {self.form!r}")
        if self.fixed_dt is not None and self.fixed_dt <= 0:
            raise ValueError("fixed_dt must be positive")
        if self.dt_initial <= 0:
            raise ValueError("dt_initial must be positive")


@dataclass(frozen=True)
class QSState:
    """Solution snapshot at one leaf: lapse, its inverse square, the mass
    aspect, the leaf geometry, and the envelope data at this radius."""

    r: float
    u: ScalarField
    v: ScalarField
    m_aspect: ScalarField
    geometry: ParallelGeometry
    envelope_lower: float
    envelope_upper: float
    envelope_I_phi: float
    envelope_I_psi: float
    dt_last: float

    def __post_init__(self):
        uv, vv, mv = self.u.values, self.v.values, self.m_aspect.values
        if np.min(uv) <= 0.0:
            raise ValueError("lapse must be positive")
        if np.max(np.abs(vv - uv**-2)) > 1e-13:
            raise ValueError("v is not synchronized with u^-2")
        rho = self.geometry.shape.mean_radius + self.r
        if np.max(np.abs(mv - 0.5 * rho * (1.0 - vv))) > 1e-12 * (
                1.0 + np.max(np.abs(mv))):
            raise ValueError("mass aspect is not synchronized with u")
        if abs(self.geometry.r - self.r) > 1e-12 * (1.0 + abs(self.r)):
            raise ValueError("geometry and state are at different radii")


# ---------------------------------------------------------------------------
# right sides


def _rhs_u_values(u: np.ndarray, geom: ParallelGeometry) -> np.ndarray | None:
    if np.min(u) <= 0.0:
        return None
    lap = laplace_beltrami(geom.metric, geom.grid.scalar(u)).values
    out = (2.0 * u * u * lap + (u - u**3) * geom.Rscal) / (2.0 * geom.H0)
    return out if np.all(np.isfinite(out)) else None


def _rhs_mass_values(m: np.ndarray, rho: float,
                     geom: ParallelGeometry) -> np.ndarray | None:
    v = 1.0 - 2.0 * m / rho
    if np.min(v) <= 1e-13:
        return None
    u2 = 1.0 / v
    f = geom.grid.scalar(m)
    lap = laplace_beltrami(geom.metric, f).values
    gsq = gradient_squared(geom.metric, f).values
    out = (u2 / geom.H0 * lap + 3.0 * u2 * u2 / (rho * geom.H0) * gsq
           + (1.0 / rho - geom.Rscal / geom.H0) * m)
    return out if np.all(np.isfinite(out)) else None


def _check_aligned(state: QSState, geom: ParallelGeometry):
    if abs(state.r - geom.r) > 1e-12 * (1.0 + abs(state.r)):
        raise ValueError("geometry is not at the state's radius")


def rhs_u(state: QSState, geom: ParallelGeometry) -> ScalarField:
    """du/dr of the lapse form at the state's leaf."""
    _check_aligned(state, geom)
    out = _rhs_u_values(state.u.values, geom)
    if out is None:
        raise ValueError("lapse out of domain")
    return ScalarField(geom.grid, out)


def rhs_mass(state: QSState, geom: ParallelGeometry) -> ScalarField:
    """dm/dr of the mass-aspect form; valid only at r >= 1 where its
    inverse-radius coefficients are tame."""
    _check_aligned(state, geom)
    if state.r < R_SWITCH:
        raise ValueError(f"mass form is only integrated for r >= {R_SWITCH}")
    rho = geom.shape.mean_radius + state.r
    out = _rhs_mass_values(state.m_aspect.values, rho, geom)
    if out is None:
        raise ValueError("mass aspect out of domain")
    return ScalarField(geom.grid, out)


# ---------------------------------------------------------------------------
# envelopes


def _phi_psi(geom: ParallelGeometry) -> tuple[float, float]:
    ratio = geom.Rscal / geom.H0
    return float(np.min(ratio)), float(np.max(ratio))


class _Envelope:
    """Comparison bounds for the lapse, seeded from the starting field.

    upper(r) = [1 - C1 exp(-int phi)]^{-1/2},  C1 = 1 - (max u0 + 1)^{-2}
    lower(r) = [1 + C2 exp(-int xi)]^{-1/2},   C2 = (min u0)^{-2} - 1

    with phi/psi the min/max of Rscal/H0 over the leaf and xi = phi when
    min u0 <= 1, else psi (the branch that keeps the bound on the safe
    side for data above the flat fixed point).
    """

    def __init__(self, u0: np.ndarray, tol: float):
        umax = float(np.max(u0))
        umin = float(np.min(u0))
        self.C1 = 1.0 - 1.0 / (umax + 1.0) ** 2
        self.C2 = 1.0 / umin**2 - 1.0
        self.xi_is_phi = umin <= 1.0
        self.tol = tol

    def bounds(self, I_phi: float, I_psi: float) -> tuple[float, float]:
        upper = (1.0 - self.C1 * math.exp(-I_phi)) ** -0.5
        I_xi = I_phi if self.xi_is_phi else I_psi
        lower = (1.0 + self.C2 * math.exp(-I_xi)) ** -0.5
        return lower, upper

    def violated(self, u: np.ndarray, lower: float, upper: float) -> bool:
        return bool(np.max(u) > upper * (1.0 + self.tol)
                    or np.min(u) < lower * (1.0 - self.tol))


# ---------------------------------------------------------------------------
# integration core


def _snapshot_targets(rho_bar: float, r0: float, config: SolverConfig,
                      want_switch: bool) -> list[tuple[float, bool, bool]]:
    """Sorted (r, is_snapshot, is_switch) targets strictly after r0.

    Snapshots follow a geometric schedule of ratio 2^{1/4} from rho_bar/2,
    plus r_max and any explicitly requested radii."""
    r_max = config.r_max
    snaps = [r_max]
    g = rho_bar / 2.0
    while g < r_max * (1.0 - 1e-9):
        if g > r0 * (1.0 + 1e-12):
            snaps.append(g)
        g *= 2.0 ** 0.25
    for e in config.extra_snapshot_rs:
        e = float(e)
        if r0 < e < r_max * (1.0 + 1e-12):
            snaps.append(min(e, r_max))

    entries: list[tuple[float, bool, bool]] = [(s, True, False) for s in snaps]
    if want_switch and r0 < config.r_switch < r_max:
        entries.append((config.r_switch, False, True))
    entries.sort()
    merged: list[tuple[float, bool, bool]] = []
    for r, is_snap, is_switch in entries:
        if merged and abs(r - merged[-1][0]) <= 1e-10 * (1.0 + r):
            pr, ps, pw = merged[-1]
            merged[-1] = (pr, ps or is_snap, pw or is_switch)
        else:
            merged.append((r, is_snap, is_switch))
    if want_switch and config.r_switch >= r_max:
        # the whole run stays in u-form; nothing to mark
        pass
    return merged


def _build_state(shape: SupportShape, r: float, y: np.ndarray,
                 mass_active: bool, geom: ParallelGeometry, dt_last: float,
                 lower: float, upper: float, I_phi: float,
                 I_psi: float) -> QSState:
    rho = shape.mean_radius + r
    if mass_active:
        m = y.copy()
        v = 1.0 - 2.0 * m / rho
        u = v ** -0.5
    else:
        u = y.copy()
        v = u ** -2.0
        m = 0.5 * rho * (1.0 - v)
    grid = shape.grid
    return QSState(
        r=r, u=ScalarField(grid, u), v=ScalarField(grid, v),
        m_aspect=ScalarField(grid, m), geometry=geom,
        envelope_lower=lower, envelope_upper=upper,
        envelope_I_phi=I_phi, envelope_I_psi=I_psi, dt_last=dt_last)


def _u_of(y: np.ndarray, mass_active: bool, rho: float) -> np.ndarray | None:
    if not mass_active:
        return y if np.min(y) > 0.0 else None
    v = 1.0 - 2.0 * y / rho
    return v ** -0.5 if np.min(v) > 1e-13 else None


def _integrate(shape: SupportShape, u_start: np.ndarray, r0: float,
               config: SolverConfig) -> tuple[list[QSState], int]:
    """Advance from r0 to r_max, returning snapshots and the accepted-step
    count.  config.form here is u_form or mass_form only."""
    grid = shape.grid
    rho_bar = shape.mean_radius
    fixed = config.fixed_dt

    mass_active = False
    y = np.array(u_start, dtype=float)
    if config.form == MASS_FORM and r0 >= config.r_switch:
        rho = rho_bar + r0
        y = 0.5 * rho * (1.0 - y ** -2.0)
        mass_active = True

    targets = _snapshot_targets(
        rho_bar, r0, config, want_switch=(config.form == MASS_FORM))
    t_tau = [math.log1p(r / rho_bar) for r, _, _ in targets]

    def rhs_tau(tau_val: float, y_val: np.ndarray, geom: ParallelGeometry,
                is_mass: bool) -> np.ndarray | None:
        if not np.all(np.isfinite(y_val)):
            return None
        r_val = rho_bar * math.expm1(tau_val)
        if is_mass:
            out = _rhs_mass_values(y_val, rho_bar + r_val, geom)
        else:
            out = _rhs_u_values(y_val, geom)
        return None if out is None else (rho_bar + r_val) * out

    tau = math.log1p(r0 / rho_bar)
    r_now = r0
    geom_now = parallel_geometry(shape, r_now)
    env = _Envelope(u_start, config.envelope_tol)
    phi_now, psi_now = _phi_psi(geom_now)
    I_phi = I_psi = 0.0
    lower, upper = env.bounds(I_phi, I_psi)
    if env.violated(u_start, lower, upper):
        raise SolverAbort("initial data violates its own envelope", r0, 0.0)

    snapshots = [_build_state(shape, r0, y, mass_active, geom_now, 0.0,
                              lower, upper, I_phi, I_psi)]
    k1 = rhs_tau(tau, y, geom_now, mass_active)
    if k1 is None:
        raise SolverAbort("initial data is outside the domain", r0, 0.0)

    dt_free = fixed if fixed is not None else config.dt_initial
    err_prev = 1.0
    just_rejected = False
    n_accepted = 0
    n_attempts = 0
    target_idx = 0

    while target_idx < len(targets):
        n_attempts += 1
        if n_attempts > config.max_steps:
            raise SolverAbort("step budget exhausted", r_now, dt_free,
                              f"max_steps={config.max_steps}")
        dt_cap = t_tau[target_idx] - tau
        dt = min(dt_free, dt_cap)
        clipped = dt < dt_free * (1.0 - 1e-12)

        # embedded pair stages
        ks = [k1]
        geom_end = None
        failed = False
        for i in range(1, 7):
            yi = y + dt * sum(a * k for a, k in zip(_A[i], ks))
            tau_i = tau + _C[i] * dt
            geom_i = parallel_geometry(shape, rho_bar * math.expm1(tau_i))
            ki = rhs_tau(tau_i, yi, geom_i, mass_active)
            if ki is None:
                failed = True
                break
            ks.append(ki)
            if i == 6:
                geom_end = geom_i
                y_new = yi

        violated = False
        err = math.inf
        if not failed:
            e = dt * sum(w * k for w, k in zip(_E, ks))
            sc = config.tol * (1.0 + np.maximum(np.abs(y), np.abs(y_new)))
            err = float(np.sqrt(np.mean((e / sc) ** 2)))

            r_end = rho_bar * math.expm1(tau + dt)
            phi_end, psi_end = _phi_psi(geom_end)
            I_phi_c = I_phi + 0.5 * (r_end - r_now) * (phi_now + phi_end)
            I_psi_c = I_psi + 0.5 * (r_end - r_now) * (psi_now + psi_end)
            lo_c, up_c = env.bounds(I_phi_c, I_psi_c)
            u_end = _u_of(y_new, mass_active, rho_bar + r_end)
            violated = u_end is None or env.violated(u_end, lo_c, up_c)

        if fixed is not None:
            if failed or violated:
                raise SolverAbort(
                    "fixed-step run left the solution domain", r_now, dt,
                    "envelope or positivity failure")
            accepted = True
        else:
            accepted = not failed and not violated and err <= 1.0

        if not accepted:
            shrink = 0.5 if (failed or violated) else \
                min(0.5, max(0.1, config.safety * err ** -0.2))
            dt_free = dt * shrink
            just_rejected = True
            if dt_free < config.dt_min:
                raise SolverAbort(
                    "step size underflow", r_now, dt_free,
                    "envelope violation" if violated else
                    f"error estimate {err:.3e}")
            continue

        # commit
        tau += dt
        n_accepted += 1
        landing = abs(tau - t_tau[target_idx]) <= 1e-12 * (1.0 + abs(tau))
        I_phi, I_psi = I_phi_c, I_psi_c
        lower, upper = lo_c, up_c
        y = y_new

        if fixed is None:
            if err == 0.0:
                fac = _FAC_MAX
            else:
                fac = config.safety * err ** -0.14 * err_prev ** 0.08
                fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            if just_rejected:
                fac = min(fac, 1.0)
                just_rejected = False
            new_free = dt * fac
            dt_free = max(dt_free, new_free) if (clipped and fac >= 1.0) \
                else new_free
            err_prev = max(err, 1e-10)

        if landing:
            r_now, is_snap, is_switch = targets[target_idx]
            tau = t_tau[target_idx]
            geom_now = parallel_geometry(shape, r_now)
            if is_switch and not mass_active:
                rho = rho_bar + r_now
                y = 0.5 * rho * (1.0 - y ** -2.0)
                mass_active = True
            if is_snap:
                snapshots.append(_build_state(
                    shape, r_now, y, mass_active, geom_now, dt,
                    lower, upper, I_phi, I_psi))
            k1 = rhs_tau(tau, y, geom_now, mass_active)
            if k1 is None:
                raise SolverAbort("solution left the domain", r_now, dt)
            target_idx += 1
        else:
            r_now = rho_bar * math.expm1(tau)
            geom_now = geom_end
            k1 = ks[6] if len(ks) == 7 else rhs_tau(tau, y, geom_now,
                                                    mass_active)
        phi_now, psi_now = _phi_psi(geom_now)

    return snapshots, n_accepted


# ---------------------------------------------------------------------------
# public drivers


def _resolve_initial(data: InitialData, geom0: ParallelGeometry
                     ) -> np.ndarray:
    grid = geom0.grid
    if data.minimal:
        raise ValueError(
            "the minimal-boundary datum needs continuation; use solve_minimal")
    if data.u0 is not None:
        if not grid.same_layout(data.u0.grid):
            raise ValueError("initial lapse lives on a different grid")
        return np.array(data.u0.values, dtype=float)
    if not grid.same_layout(data.boundary_h.grid):
        raise ValueError("boundary curvature lives on a different grid")
    return geom0.H0 / data.boundary_h.values


def solve(shape: SupportShape, data: InitialData, config: SolverConfig
          ) -> tuple[list[QSState], MassSeries]:
    """Integrate from the base surface to r_max and reduce to mass series.

    With form="both_crosscheck" the run is repeated in the mass-aspect
    form from the first leaf at r >= r_switch and the final lapses are
    compared; the report lands in series.crosscheck.
    """
    geom0 = parallel_geometry(shape, 0.0)
    u0 = _resolve_initial(data, geom0)

    if config.form != BOTH_FORMS:
        snapshots, n_acc = _integrate(shape, u0, 0.0, config)
        return snapshots, mass_series(snapshots, step_tolerance=config.tol,
                                      n_steps=n_acc)

    base_cfg = replace(config, form=U_FORM,
                       extra_snapshot_rs=tuple(config.extra_snapshot_rs)
                       + (config.r_switch,))
    snapshots, n_acc = _integrate(shape, u0, 0.0, base_cfg)
    series = mass_series(snapshots, step_tolerance=config.tol, n_steps=n_acc)
    if config.r_max <= config.r_switch:
        return snapshots, series

    start = min((s for s in snapshots if s.r >= config.r_switch
                 * (1.0 - 1e-12)), key=lambda s: s.r)
    mass_cfg = replace(config, form=MASS_FORM)
    m_snaps, n_acc_m = _integrate(shape, np.array(start.u.values),
                                  start.r, mass_cfg)
    diff = float(np.max(np.abs(snapshots[-1].u.values
                               - m_snaps[-1].u.values)))
    budget = 10.0 * config.tol * max(n_acc, n_acc_m)
    series = with_crosscheck(series, {
        "r_start": start.r,
        "r_compare": config.r_max,
        "sup_u_difference": diff,
        "budget": budget,
        "within_budget": diff <= budget,
    })
    return snapshots, series


def solve_from_state(shape: SupportShape, state: QSState,
                     config: SolverConfig) -> tuple[list[QSState], MassSeries]:
    """Continue a run from a stored snapshot to config.r_max.

    Envelope constants are re-seeded from the snapshot's lapse (the
    comparison argument applies from any starting leaf)."""
    if not shape.grid.same_layout(state.u.grid):
        raise ValueError("state lives on a different grid")
    if np.max(np.abs(shape.h - state.geometry.shape.h)) > 1e-12 * \
            np.max(np.abs(shape.h)):
        raise ValueError("state belongs to a different base shape")
    if config.r_max <= state.r:
        raise ValueError("r_max must exceed the state's radius")
    if config.form == BOTH_FORMS:
        raise ValueError("cross-checking starts from r = 0; use solve")
    snapshots, n_acc = _integrate(shape, np.array(state.u.values),
                                  state.r, config)
    return snapshots, mass_series(snapshots, step_tolerance=config.tol,
                                  n_steps=n_acc)


def step(state: QSState, config: SolverConfig) -> QSState:
    """One accepted adaptive step from the given state.

    Stateless convenience wrapper: envelope constants are seeded from the
    state's own lapse.  The step lands on r_max exactly when reached."""
    shape = state.geometry.shape
    rho_bar = shape.mean_radius
    tau = math.log1p(state.r / rho_bar)
    tau_max = math.log1p(config.r_max / rho_bar)
    if tau_max <= tau:
        raise ValueError("state is already at r_max")

    one_cfg = replace(config, extra_snapshot_rs=())
    # a sub-run whose only target is r_max; stop after the first acceptance
    u0 = np.array(state.u.values)
    mass_active = config.form == MASS_FORM and state.r >= config.r_switch
    y = 0.5 * (rho_bar + state.r) * (1.0 - u0 ** -2.0) if mass_active else u0
    env = _Envelope(u0, one_cfg.envelope_tol)
    geom_now = state.geometry
    phi_now, psi_now = _phi_psi(geom_now)
    I_phi = I_psi = 0.0

    def rhs_here(tau_val, y_val, geom):
        r_val = rho_bar * math.expm1(tau_val)
        if mass_active:
            out = _rhs_mass_values(y_val, rho_bar + r_val, geom)
        else:
            out = _rhs_u_values(y_val, geom)
        return None if out is None else (rho_bar + r_val) * out

    k1 = rhs_here(tau, y, geom_now)
    if k1 is None:
        raise SolverAbort("state is outside the domain", state.r, 0.0)
    dt_free = one_cfg.fixed_dt if one_cfg.fixed_dt is not None \
        else one_cfg.dt_initial

    for _ in range(one_cfg.max_steps):
        dt = min(dt_free, tau_max - tau)
        ks = [k1]
        failed = False
        for i in range(1, 7):
            yi = y + dt * sum(a * k for a, k in zip(_A[i], ks))
            tau_i = tau + _C[i] * dt
            geom_i = parallel_geometry(shape, rho_bar * math.expm1(tau_i))
            ki = rhs_here(tau_i, yi, geom_i)
            if ki is None:
                failed = True
                break
            ks.append(ki)
            if i == 6:
                geom_end, y_new = geom_i, yi
        err = math.inf
        violated = False
        if not failed:
            e = dt * sum(w * k for w, k in zip(_E, ks))
            sc = one_cfg.tol * (1.0 + np.maximum(np.abs(y), np.abs(y_new)))
            err = float(np.sqrt(np.mean((e / sc) ** 2)))
            r_end = rho_bar * math.expm1(tau + dt)
            phi_e, psi_e = _phi_psi(geom_end)
            I_phi_c = I_phi + 0.5 * (r_end - state.r) * (phi_now + phi_e)
            I_psi_c = I_psi + 0.5 * (r_end - state.r) * (psi_now + psi_e)
            lo, up = env.bounds(I_phi_c, I_psi_c)
            u_end = _u_of(y_new, mass_active, rho_bar + r_end)
            violated = u_end is None or env.violated(u_end, lo, up)
        ok = one_cfg.fixed_dt is not None or (
            not failed and not violated and err <= 1.0)
        if one_cfg.fixed_dt is not None and (failed or violated):
            raise SolverAbort("fixed-step run left the solution domain",
                              state.r, dt)
        if ok:
            return _build_state(shape, r_end, y_new, mass_active, geom_end,
                                dt, lo, up, I_phi_c, I_psi_c)
        dt_free = dt * (0.5 if (failed or violated)
                        else min(0.5, max(0.1, one_cfg.safety * err ** -0.2)))
        if dt_free < one_cfg.dt_min:
            raise SolverAbort("step size underflow", state.r, dt_free)
    raise SolverAbort("step budget exhausted", state.r, dt_free)


def solve_minimal(shape: SupportShape, config: SolverConfig
                  ) -> tuple[list[QSState], MassSeries, dict]:
    """Continuation scheme for the minimal-boundary datum 1/u0 = 0.

    Runs the ladder u0 = k, extrapolates the mass limit in 1/k^2, and
    reports the per-k constants together with the limiting lower envelope
    [1 - exp(-int psi)]^{-1/2} sampled along the largest-k run.  Returns
    that run's snapshots and series plus the report.
    """
    ladder = tuple(sorted(float(k) for k in config.ladder))
    if len(ladder) < 2 or ladder[0] <= 1.0:
        raise ValueError("continuation ladder needs at least two values > 1")
    run_cfg = replace(config, form=U_FORM)

    m0s: list[float] = []
    consts: list[tuple[float, float]] = []
    last: tuple[list[QSState], MassSeries] | None = None
    for k in ladder:
        data = InitialData.constant(shape.grid, k)
        snapshots, series = solve(shape, data, run_cfg)
        if series.m0_estimate is None:
            raise ValueError(
                "r_max too small to extract the mass limit on the ladder")
        m0s.append(series.m0_estimate)
        env = _Envelope(np.full(shape.grid.n_nodes, k), config.envelope_tol)
        consts.append((env.C1, env.C2))
        last = (snapshots, series)

    k1, k2 = ladder[-2], ladder[-1]
    ma, mb = m0s[-2], m0s[-1]
    m0 = (k2**2 * mb - k1**2 * ma) / (k2**2 - k1**2)
    tol_mono = 1e-6 * (1.0 + abs(m0))
    monotone = bool(np.all(np.diff(m0s) >= -tol_mono))

    snapshots, series = last
    geom0 = parallel_geometry(shape, 0.0)
    h0_integral = float(np.dot(shape.grid.weights,
                               geom0.H0 * geom0.area_element))
    bound_r = [s.r for s in snapshots if s.r > 0.0]
    bound_v = [(1.0 - math.exp(-s.envelope_I_psi)) ** -0.5
               for s in snapshots if s.r > 0.0]
    report = {
        "k_values": list(ladder),
        "m0_per_k": m0s,
        "m0_extrapolated": float(m0),
        "monotone": monotone,
        "reliable": monotone,
        "envelope_constants": consts,
        "boundary_h0_integral": h0_integral,
        "penrose_ratio": 16.0 * math.pi * float(m0) / h0_integral,
        "minimal_lower_bound": {"r": bound_r, "value": bound_v},
    }
    return snapshots, series, report
