"""Strictly convex surfaces via support functions, and their parallel
surfaces.

A convex surface is carried in Gauss-map parametrization: the node at
direction nu holds the support value h(nu), the embedding point
X = grad h + h nu, and the radii matrix W = Hess h + h id (inverse shape
operator) whose eigenvalues are the principal curvature radii.  W is stored
as a per-node 2x2 symmetric matrix in the orthonormal frame
(normalized d_theta, its complement).

All parallel-surface quantities are closed-form in W:

    H0(r)        = 1/(R1+r) + 1/(R2+r)
    Rscal(r)     = 2/((R1+r)(R2+r))          (intrinsic scalar curvature)
    area factor  = (R1+r)(R2+r)              (relative to the unit sphere)
    g_r          = (W + r id) b (W + r id)   (chart components via frame)

W is computed analytically for the built-in sphere/ellipsoid kinds and by
spectral differentiation of h for tabulated support functions.  The ambient
Hessian of the 1-homogeneous extension of h is tangent (its row i is the
tangential gradient of the embedding component X_i), which is how the
numerical path stays in smooth sphere scalars.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from quasisphere.sphere import (
    MetricField,
    ScalarField,
    SphereGrid,
    integrate,
)

__all__ = [
    "SupportShape",
    "ParallelGeometry",
    "sphere_shape",
    "ellipsoid_shape",
    "shape_from_support",
    "load_support_table",
    "save_support_table",
    "parallel_geometry",
    "asymptotic_rates",
]

CONVEXITY_FLOOR = 1e-6  # relative to mean(h)


@dataclass
class SupportShape:
    """Strictly convex surface in Gauss-map parametrization."""

    grid: SphereGrid
    h: np.ndarray
    radii_frame: np.ndarray  # (N, 2, 2) symmetric, orthonormal frame
    embedding: np.ndarray    # (N, 3) Cartesian
    kind: str = "support-table"
    radii: np.ndarray = field(init=False)        # (N, 2) sorted ascending
    mean_radius: float = field(init=False)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.radii_frame = np.asarray(self.radii_frame, dtype=float)
        n = self.grid.n_nodes
        if self.h.shape != (n,):
            raise ValueError("support values must be per-node")
        if self.radii_frame.shape != (n, 2, 2):
            raise ValueError("radii matrix must have shape (N, 2, 2)")
        if np.any(self.h <= 0.0):
            raise ValueError("support function must be positive")
        asym = np.max(np.abs(self.radii_frame[:, 0, 1]
                             - self.radii_frame[:, 1, 0]))
        if asym > 1e-10 * max(1.0, np.max(np.abs(self.radii_frame))):
            raise ValueError("radii matrix must be symmetric")
        a = self.radii_frame[:, 0, 0]
        b = self.radii_frame[:, 0, 1]
        d = self.radii_frame[:, 1, 1]
        mid = 0.5 * (a + d)
        rad = np.sqrt(0.25 * (a - d) ** 2 + b * b)
        self.radii = np.stack([mid - rad, mid + rad], axis=1)
        self.mean_radius = integrate(
            ScalarField(self.grid, self.h)) / (4.0 * math.pi)
        floor = CONVEXITY_FLOOR * self.mean_radius
        rmin = self.radii[:, 0]
        if np.any(rmin < floor):
            i = int(np.argmin(rmin))
            raise ValueError(
                "surface is not strictly convex: smallest principal radius "
                f"{rmin[i]:.3e} at node {i} (theta={self.grid.theta[i]:.4f}, "
                f"phi={self.grid.phi[i]:.4f}) is below the floor {floor:.3e}")

    def scaled(self, lam: float) -> "SupportShape":
        """Homothety h -> lam h (radii and embedding scale with lam)."""
        if lam <= 0:
            raise ValueError("scale factor must be positive")
        return SupportShape(self.grid, lam * self.h, lam * self.radii_frame,
                            lam * self.embedding, kind=self.kind)


@dataclass
class ParallelGeometry:
    """Closed-form geometry of the parallel surface at distance r >= 0."""

    shape: SupportShape
    r: float
    H0: np.ndarray           # mean curvature
    Rscal: np.ndarray        # intrinsic scalar curvature
    metric: MetricField      # induced metric, chart components
    area_element: np.ndarray  # dsigma_r relative to the standard sphere
    h0_norm_sq: np.ndarray   # |second form|^2 = sum (R_i+r)^{-2}

    def __post_init__(self):
        gauss = self.H0**2 - self.h0_norm_sq
        rel = np.max(np.abs(gauss - self.Rscal)) / np.max(np.abs(self.Rscal))
        if rel > 1e-10:
            raise ValueError(
                f"Gauss identity H0^2 - |A|^2 = Rscal violated ({rel:.3e})")

    @property
    def grid(self) -> SphereGrid:
        return self.shape.grid

    def second_form_chart(self) -> np.ndarray:
        """Chart components of the second fundamental form (W+r as a
        bilinear form on the round sphere)."""
        s = self.grid.sin_theta
        m = self.shape.radii_frame.copy()
        m[:, 0, 0] += self.r
        m[:, 1, 1] += self.r
        out = m.copy()
        out[:, 0, 1] *= s
        out[:, 1, 0] *= s
        out[:, 1, 1] *= s * s
        return out


# ---------------------------------------------------------------------------
# constructors


def _frame_from_cartesian(grid: SphereGrid, w_cart: np.ndarray) -> np.ndarray:
    et, ep = grid.e_theta, grid.e_phi
    w = np.empty((grid.n_nodes, 2, 2))
    w[:, 0, 0] = np.einsum("ni,nij,nj->n", et, w_cart, et)
    w[:, 0, 1] = np.einsum("ni,nij,nj->n", et, w_cart, ep)
    w[:, 1, 0] = w[:, 0, 1]
    w[:, 1, 1] = np.einsum("ni,nij,nj->n", ep, w_cart, ep)
    return w


def sphere_shape(grid: SphereGrid, radius: float) -> SupportShape:
    """Round sphere of the given radius: h = R, W = R id exactly."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = grid.n_nodes
    w = np.zeros((n, 2, 2))
    w[:, 0, 0] = radius
    w[:, 1, 1] = radius
    return SupportShape(grid, np.full(n, float(radius)), w,
                        radius * grid.nu, kind=f"sphere:{radius:g}")


def ellipsoid_shape(grid: SphereGrid, a: float, b: float, c: float) -> SupportShape:
    """Solid ellipsoid with semi-axes (a, b, c).

    Support function h(nu) = |A nu| with A = diag(a, b, c); the ambient
    Hessian of the 1-homogeneous extension is
    A^2/|A nu| - (A^2 nu)(A^2 nu)^T/|A nu|^3, evaluated exactly per node.
    """
    if min(a, b, c) <= 0:
        raise ValueError("semi-axes must be positive")
    A2 = np.array([a * a, b * b, c * c])
    nu = grid.nu
    h = np.sqrt(np.einsum("ni,i,ni->n", nu, A2, nu))
    A2nu = nu * A2[None, :]
    w_cart = (np.einsum("i,ij->ij", A2, np.eye(3))[None, :, :] / h[:, None, None]
              - np.einsum("ni,nj->nij", A2nu, A2nu) / h[:, None, None] ** 3)
    x = A2nu / h[:, None]
    return SupportShape(grid, h, _frame_from_cartesian(grid, w_cart), x,
                        kind=f"ellipsoid:{a:g},{b:g},{c:g}")


def shape_from_support(h: ScalarField, kind: str = "support-table") -> SupportShape:
    """Build a shape from tabulated support values by spectral
    differentiation (requires a spectral-mode grid).

    The embedding is X = grad h + h nu and the radii matrix rows are the
    tangential gradients of X's Cartesian components; the result is
    symmetrized and projected tangentially before the convexity check.
    """
    grid = h.grid
    hv = h.values
    gh = grid.surface_gradient(hv)
    x = gh + hv[:, None] * grid.nu
    gt, gp = grid.grad_frame(x)
    # w_cart[i, j] = D_i X_j (ambient Hessian of the 1-homogeneous h);
    # symmetrize and remove any numerical normal part
    w_cart = (np.einsum("ni,nj->nij", grid.e_theta, gt)
              + np.einsum("ni,nj->nij", grid.e_phi, gp))
    w_cart = 0.5 * (w_cart + np.swapaxes(w_cart, 1, 2))
    proj = np.eye(3)[None, :, :] - np.einsum("ni,nj->nij", grid.nu, grid.nu)
    w_cart = np.einsum("nij,njk,nkl->nil", proj, w_cart, proj)
    return SupportShape(grid, hv, _frame_from_cartesian(grid, w_cart), x,
                        kind=kind)


# ---------------------------------------------------------------------------
# support tables


def save_support_table(path, shape_or_field):
    """Write a `theta,phi,h` table matching the grid's nodes."""
    if isinstance(shape_or_field, SupportShape):
        grid, hv = shape_or_field.grid, shape_or_field.h
    else:
        grid, hv = shape_or_field.grid, shape_or_field.values
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "phi", "h"])
        for t, p, v in zip(grid.theta, grid.phi, hv):
            writer.writerow([f"{t:.17g}", f"{p:.17g}", f"{v:.17g}"])


def load_support_table(grid: SphereGrid, path) -> ScalarField:
    """Read a `theta,phi,h` table; nodes must match the grid to 1e-12."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [c.strip() for c in header] != ["theta", "phi", "h"]:
            raise ValueError(
                f"support table must have header 'theta,phi,h', got {header}")
        rows = np.array([[float(v) for v in row] for row in reader])
    if rows.shape != (grid.n_nodes, 3):
        raise ValueError(
            f"support table has {rows.shape[0]} rows, grid has "
            f"{grid.n_nodes} nodes")
    if (np.max(np.abs(rows[:, 0] - grid.theta)) > 1e-12
            or np.max(np.abs(rows[:, 1] - grid.phi)) > 1e-12):
        raise ValueError("support table nodes do not match the grid")
    return ScalarField(grid, rows[:, 2])


# ---------------------------------------------------------------------------
# parallel surfaces


def parallel_geometry(shape: SupportShape, r: float) -> ParallelGeometry:
    """Geometry of the parallel surface at distance r >= 0 from the shape."""
    if r < 0:
        raise ValueError("parallel distance r must be nonnegative")
    grid = shape.grid
    s1 = shape.radii[:, 0] + r
    s2 = shape.radii[:, 1] + r
    h0 = 1.0 / s1 + 1.0 / s2
    rscal = 2.0 / (s1 * s2)
    area = s1 * s2
    h0sq = 1.0 / s1**2 + 1.0 / s2**2

    m = shape.radii_frame.copy()
    m[:, 0, 0] += r
    m[:, 1, 1] += r
    m2 = np.einsum("nij,njk->nik", m, m)
    s = grid.sin_theta
    chart = m2.copy()
    chart[:, 0, 1] *= s
    chart[:, 1, 0] *= s
    chart[:, 1, 1] *= s * s
    return ParallelGeometry(
        shape=shape, r=float(r), H0=h0, Rscal=rscal,
        metric=MetricField(grid, chart), area_element=area, h0_norm_sq=h0sq)


def asymptotic_rates(shape: SupportShape, r_list) -> dict:
    """Measure approach to the round model: sup r^2|H0 - 2/r|,
    sup r^3|Rscal - 2/r^2|, and sup r|g_r/r^2 - b| (frame deviation) over
    the given radii, with boundedness flags (value at doubled r within a
    factor 1.25 of the value at r).  r_list must span three octaves or
    more so the rates have room to settle.
    """
    r_list = sorted(float(r) for r in r_list)
    if len(r_list) < 2 or r_list[-1] < 8.0 * r_list[0]:
        raise ValueError("r_list must span at least three octaves")
    rows = []
    for r in r_list:
        geo = parallel_geometry(shape, r)
        m = shape.radii_frame.copy()
        m[:, 0, 0] += r
        m[:, 1, 1] += r
        dev = np.einsum("nij,njk->nik", m, m) / r**2
        dev[:, 0, 0] -= 1.0
        dev[:, 1, 1] -= 1.0
        rows.append({
            "r": r,
            "h0_rate": r**2 * np.max(np.abs(geo.H0 - 2.0 / r)),
            "rscal_rate": r**3 * np.max(np.abs(geo.Rscal - 2.0 / r**2)),
            "metric_rate": r * np.max(np.abs(dev)),
        })

    def bounded(key):
        for lo in rows:
            for hi in rows:
                if abs(hi["r"] - 2.0 * lo["r"]) <= 1e-9 * hi["r"]:
                    if hi[key] > 1.25 * lo[key] + 1e-14:
                        return False
        return True

    return {
        "rows": rows,
        "h0_bounded": bounded("h0_rate"),
        "rscal_bounded": bounded("rscal_rate"),
        "metric_bounded": bounded("metric_rate"),
    }
