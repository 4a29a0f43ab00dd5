"""Spherical grids, fields, and metric-aware surface operators.

The grid is Gauss-Legendre in cos(theta) crossed with a uniform phi circle,
so no node sits on a pole and quadrature of polynomial integrands in
cos(theta) is exact up to degree 2*n_theta - 1.  Two differentiation modes
are supported:

* ``spectral``: per-azimuthal-order transforms in a normalized associated
  Legendre basis (FFT in phi).  Analysis of a field band-limited at the
  grid's ``L_max`` is exact, so round-sphere Laplacian eigenvalues come out
  at machine precision.
* ``fd``: 4th-order finite differences in theta on pole-extended columns,
  spectral in phi.  Kept as an independent cross-check of the spectral mode.

Variable-metric operators take the metric as per-node 2x2 components in the
coordinate basis (d_theta, d_phi).  The Laplace-Beltrami operator is the
divergence form (1/sqrt g) d_a (sqrt g g^{ab} d_b f), evaluated as

    lap f = (1/J) div_round(V),   V = J g^{-1} df,   J = sqrt(det g/det b),

where the round divergence of the tangent field V is computed through V's
Cartesian components.  Each differentiation then acts on a smooth scalar on
the sphere, which is what keeps the pole-free chart honest: raw tensor
components in (theta, phi) are not smooth scalars and would spoil spectral
accuracy if differentiated directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SphereGrid",
    "ScalarField",
    "MetricField",
    "make_grid",
    "integrate",
    "laplace_beltrami",
    "gradient_squared",
    "round_metric",
    "real_sph_harm",
]

FOUR_PI = 4.0 * math.pi


# ---------------------------------------------------------------------------
# normalized associated Legendre tables


def _norm_legendre(l_max: int, x: np.ndarray):
    """Normalized associated Legendre tables on x = cos(theta).

    Returns (P, D, Q), each of shape (l_max+1, l_max+1, len(x)), indexed
    [l, m].  P holds Pbar_l^m with int_{-1}^1 Pbar_l^m Pbar_l'^m dx =
    delta_{ll'}, D holds d(Pbar_l^m)/dtheta, and Q holds Pbar_l^m/sin(theta)
    (filled for m >= 1 only; the m = 0 column of Q is zero).  The
    Condon-Shortley phase is included.  Entries with l < m are zero.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(1.0 - x * x)
    if np.any(s == 0.0):
        raise ValueError("Legendre tables require off-pole nodes (|x| < 1)")
    L = int(l_max)
    n = x.shape[0]
    P = np.zeros((L + 1, L + 1, n))
    Q = np.zeros((L + 1, L + 1, n))
    D = np.zeros((L + 1, L + 1, n))

    P[0, 0] = 1.0 / math.sqrt(2.0)
    for m in range(1, L + 1):
        c = math.sqrt((2.0 * m + 1.0) / (2.0 * m))
        P[m, m] = -c * s * P[m - 1, m - 1]
        Q[m, m] = -c * P[m - 1, m - 1]
    for m in range(L + 1):
        if m + 1 <= L:
            c = math.sqrt(2.0 * m + 3.0)
            P[m + 1, m] = c * x * P[m, m]
            if m >= 1:
                Q[m + 1, m] = c * x * Q[m, m]
        for l in range(m + 2, L + 1):
            a_l = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            a_p = math.sqrt(
                (4.0 * (l - 1.0) ** 2 - 1.0) / ((l - 1.0) ** 2 - m * m)
            )
            P[l, m] = a_l * (x * P[l - 1, m] - P[l - 2, m] / a_p)
            if m >= 1:
                Q[l, m] = a_l * (x * Q[l - 1, m] - Q[l - 2, m] / a_p)

    # dP/dtheta = (l x P_l^m - eps_l^m P_{l-1}^m)/sin(theta); for m >= 1 the
    # division is absorbed by the Q table, for m = 0 dividing by s is safe
    # because the grid never touches the poles.
    for m in range(L + 1):
        for l in range(m, L + 1):
            if l == 0:
                continue
            eps = math.sqrt((l * l - m * m) * (2.0 * l + 1.0) / (2.0 * l - 1.0))
            if m >= 1:
                D[l, m] = l * x * Q[l, m] - eps * Q[l - 1, m]
            else:
                D[l, m] = (l * x * P[l, m] - eps * P[l - 1, m]) / s
    return P, D, Q


def real_sph_harm(l: int, m: int, theta, phi):
    """Real orthonormal spherical harmonic Y_{lm} (cosine for m > 0, sine
    for m < 0), normalized so the surface integral of Y^2 is 1."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    am = abs(m)
    if am > l:
        raise ValueError("|m| must not exceed l")
    P, _, _ = _norm_legendre(l, np.atleast_1d(np.cos(theta)).ravel())
    pl = P[l, am].reshape(theta.shape)
    if m == 0:
        return pl / math.sqrt(2.0 * math.pi)
    if m > 0:
        return pl * np.cos(m * phi) / math.sqrt(math.pi)
    return pl * np.sin(am * phi) / math.sqrt(math.pi)


# ---------------------------------------------------------------------------
# finite-difference helpers (shared with the chart-based curvature oracle)


def fornberg_weights(z: float, x: np.ndarray, max_order: int) -> np.ndarray:
    """Finite-difference weights on arbitrary nodes (Fornberg's algorithm).

    Returns array of shape (max_order+1, len(x)): row k holds the weights of
    the k-th derivative at z.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    w = np.zeros((max_order + 1, n))
    c1 = 1.0
    c4 = x[0] - z
    w[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, max_order)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    w[k, i] = c1 * (k * w[k - 1, i - 1] - c5 * w[k, i - 1]) / c2
                w[0, i] = -c1 * c5 * w[0, i - 1] / c2
            for k in range(mn, 0, -1):
                w[k, j] = ((x[i] - z) * w[k, j] - k * w[k - 1, j]) / c3
            w[0, j] = (x[i] - z) * w[0, j] / c3
        c1 = c2
    return w


def _extend_columns(v2: np.ndarray, parity: int, depth: int = 2) -> np.ndarray:
    """Continue a (n_theta, n_phi, ...) chart field across both poles.

    A coordinate line crossing a pole re-enters on the antipodal meridian,
    so ghost rows are phi-rolled by half a period; ``parity`` is +1 for
    fields even under theta -> -theta (scalars, components with an even
    number of theta indices) and -1 otherwise.  Requires even n_phi and
    depth <= n_theta.
    """
    nt, nph = v2.shape[0], v2.shape[1]
    if nph % 2 != 0:
        raise ValueError("pole extension requires an even n_phi")
    if depth > nt:
        raise ValueError("extension depth exceeds the grid")
    ext = np.empty((nt + 2 * depth,) + v2.shape[1:], dtype=v2.dtype)
    ext[depth:nt + depth] = v2
    rolled = np.roll(v2, nph // 2, axis=1)
    for j in range(depth):
        ext[j] = parity * rolled[depth - 1 - j]
        ext[nt + depth + j] = parity * rolled[nt - 1 - j]
    return ext


def _extended_theta(theta_1d: np.ndarray, depth: int = 2) -> np.ndarray:
    t = theta_1d
    return np.concatenate(
        [-t[depth - 1::-1], t, 2.0 * math.pi - t[:len(t) - depth - 1:-1]]
    )


def theta_derivative_fd(grid: "SphereGrid", values: np.ndarray, parity: int = 1,
                        order: int = 1, width: int = 5) -> np.ndarray:
    """Theta derivative of a chart field on pole-extended columns.

    ``values`` is flat (N,) or (N, k); ``parity`` follows _extend_columns.
    ``order`` is the derivative order (1 or 2); ``width`` is the odd stencil
    size, giving accuracy of order width - order on smooth fields.
    """
    if width % 2 != 1 or width < order + 2:
        raise ValueError("stencil width must be odd and exceed the order")
    flat = values.reshape(grid.n_theta, grid.n_phi, -1)
    ext = _extend_columns(flat, parity, depth=(width - 1) // 2)
    w = grid._fornberg(order, width)
    out = np.empty_like(flat)
    for i in range(grid.n_theta):
        out[i] = np.tensordot(w[i], ext[i:i + width], axes=(0, 0))
    return out.reshape(values.shape)


def phi_derivative_fft(grid: "SphereGrid", values: np.ndarray,
                       order: int = 1) -> np.ndarray:
    """Spectral phi derivative; modes above the alias-safe cap are dropped."""
    flat = values.reshape(grid.n_theta, grid.n_phi, -1)
    spec = np.fft.rfft(flat, axis=1)
    m = np.arange(spec.shape[1])
    fac = (1j * m) ** order
    fac[m > grid._m_max] = 0.0
    spec *= fac[None, :, None]
    out = np.fft.irfft(spec, n=grid.n_phi, axis=1)
    return out.reshape(values.shape)


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class SphereGrid:
    """Quadrature grid on the unit sphere with differentiation machinery.

    Nodes are ordered theta-major: node index = i*n_phi + j for theta_i,
    phi_j.  ``weights`` sum to 4*pi.  ``L_max = n_theta - 1`` is the nominal
    spherical-harmonic bandwidth of the spectral transforms.
    """

    n_theta: int
    n_phi: int
    mode: str
    L_max: int
    theta_1d: np.ndarray
    phi_1d: np.ndarray
    glw: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    sin_theta: np.ndarray
    cos_theta: np.ndarray
    nu: np.ndarray
    e_theta: np.ndarray
    e_phi: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- basic helpers ------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return self.n_theta * self.n_phi

    def scalar(self, values) -> "ScalarField":
        if callable(values):
            values = values(self.theta, self.phi)
        values = np.broadcast_to(np.asarray(values, dtype=float),
                                 (self.n_nodes,)).copy()
        return ScalarField(self, values)

    def constant(self, c: float) -> "ScalarField":
        return ScalarField(self, np.full(self.n_nodes, float(c)))

    def same_layout(self, other: "SphereGrid") -> bool:
        return (self.n_theta, self.n_phi, self.mode) == (
            other.n_theta, other.n_phi, other.mode)

    # -- spectral engine ----------------------------------------------------

    @property
    def _m_max(self) -> int:
        return min(self.L_max, (self.n_phi - 1) // 2)

    def _tables(self):
        tab = self._cache.get("legendre")
        if tab is None:
            P, D, Q = _norm_legendre(self.L_max, np.cos(self.theta_1d))
            # per-m synthesis matrices (n_theta, K_m) and analysis matrices
            # (K_m, n_theta); analysis is GL quadrature against Pbar.
            syn_P, syn_D, syn_Q, ana = [], [], [], []
            for m in range(self._m_max + 1):
                Pm = P[m:, m, :].T
                syn_P.append(Pm)
                syn_D.append(D[m:, m, :].T)
                syn_Q.append(Q[m:, m, :].T)
                ana.append((self.glw[:, None] * Pm).T)
            tab = (syn_P, syn_D, syn_Q, ana)
            self._cache["legendre"] = tab
        return tab

    def _fornberg(self, order: int, width: int = 5) -> np.ndarray:
        key = f"fornberg{order}w{width}"
        w = self._cache.get(key)
        if w is None:
            text = _extended_theta(self.theta_1d, depth=(width - 1) // 2)
            w = np.empty((self.n_theta, width))
            for i in range(self.n_theta):
                w[i] = fornberg_weights(self.theta_1d[i],
                                        text[i:i + width], order)[order]
            self._cache[key] = w
        return w

    def _analyze(self, values: np.ndarray):
        """Azimuthal FFT + Legendre analysis.  Returns list over m of
        complex coefficient arrays (K_m, k)."""
        flat = values.reshape(self.n_theta, self.n_phi, -1)
        spec = np.fft.rfft(flat, axis=1)
        _, _, _, ana = self._tables()
        return [ana[m] @ spec[:, m, :] for m in range(self._m_max + 1)]

    def _synthesize(self, coeffs, which: str = "P", k: int = 1) -> np.ndarray:
        """Inverse of _analyze; ``which`` picks the basis table: 'P' values,
        'D' theta-derivative, 'Qdphi' (1/sin)d_phi."""
        syn_P, syn_D, syn_Q, _ = self._tables()
        spec = np.zeros((self.n_theta, self.n_phi // 2 + 1, k), dtype=complex)
        for m in range(self._m_max + 1):
            if which == "P":
                spec[:, m, :] = syn_P[m] @ coeffs[m]
            elif which == "D":
                spec[:, m, :] = syn_D[m] @ coeffs[m]
            elif which == "Qdphi":
                spec[:, m, :] = (1j * m) * (syn_Q[m] @ coeffs[m])
            else:
                raise ValueError(which)
        return np.fft.irfft(spec, n=self.n_phi, axis=1).reshape(-1, k)

    def grad_frame(self, values: np.ndarray):
        """Orthonormal-frame components of the round gradient of a smooth
        scalar: (d_theta f, (1/sin theta) d_phi f).  Accepts (N,) or (N, k)."""
        squeeze = values.ndim == 1
        vals = values if not squeeze else values[:, None]
        k = vals.shape[1]
        if self.mode == "spectral":
            coeffs = self._analyze(vals)
            ft = self._synthesize(coeffs, "D", k)
            fp = self._synthesize(coeffs, "Qdphi", k)
        else:
            ft = theta_derivative_fd(self, vals, parity=1)
            fp = phi_derivative_fft(self, vals) / self.sin_theta[:, None]
        if squeeze:
            return ft[:, 0], fp[:, 0]
        return ft, fp

    def surface_gradient(self, values: np.ndarray) -> np.ndarray:
        """Cartesian components of the round-sphere tangential gradient."""
        ft, fp = self.grad_frame(values)
        if values.ndim == 1:
            return ft[:, None] * self.e_theta + fp[:, None] * self.e_phi
        raise ValueError("surface_gradient takes a single field")

    def interpolate(self, values: np.ndarray, theta_t, phi_t) -> np.ndarray:
        """Evaluate the band-limited representation at arbitrary points
        (spectral analysis, pointwise synthesis)."""
        theta_t = np.atleast_1d(np.asarray(theta_t, dtype=float))
        phi_t = np.atleast_1d(np.asarray(phi_t, dtype=float))
        coeffs = self._analyze(values[:, None])
        P, _, _ = _norm_legendre(self.L_max, np.cos(theta_t))
        acc = np.zeros(theta_t.shape, dtype=float)
        for m in range(self._m_max + 1):
            Pm = P[m:, m, :].T            # (npts, K_m)
            Gm = (Pm @ coeffs[m])[:, 0]   # complex
            if m == 0:
                acc += Gm.real
            else:
                acc += 2.0 * (Gm * np.exp(1j * m * phi_t)).real
        return acc / self.n_phi

    def resample_to(self, other: "SphereGrid", values: np.ndarray) -> np.ndarray:
        return other.scalar(self.interpolate(values, other.theta, other.phi)).values


def make_grid(n_theta: int, n_phi: int, mode: str = "spectral") -> SphereGrid:
    """Build a Gauss-Legendre x uniform-phi sphere grid.

    ``mode`` is 'spectral' or 'fd' (alias 'finite-difference').  n_theta < 4
    is rejected; fd mode needs an even n_phi for the pole extension.
    """
    n_theta = int(n_theta)
    n_phi = int(n_phi)
    if n_theta < 4:
        raise ValueError(f"n_theta must be at least 4, got {n_theta}")
    if n_phi < 4:
        raise ValueError(f"n_phi must be at least 4, got {n_phi}")
    mode = {"spectral": "spectral", "fd": "fd", "finite-difference": "fd"}.get(mode)
    if mode is None:
        raise ValueError("mode must be 'spectral' or 'fd'")
    if mode == "fd" and n_phi % 2 != 0:
        raise ValueError("fd mode requires even n_phi")

    x, glw = np.polynomial.legendre.leggauss(n_theta)
    order = np.argsort(-x)  # theta ascending
    x, glw = x[order], glw[order]
    theta_1d = np.arccos(x)
    phi_1d = 2.0 * math.pi * np.arange(n_phi) / n_phi

    theta = np.repeat(theta_1d, n_phi)
    phi = np.tile(phi_1d, n_theta)
    weights = np.repeat(glw * (2.0 * math.pi / n_phi), n_phi)
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    nu = np.stack([st * cp, st * sp, ct], axis=1)
    e_theta = np.stack([ct * cp, ct * sp, -st], axis=1)
    e_phi = np.stack([-sp, cp, np.zeros_like(sp)], axis=1)

    return SphereGrid(
        n_theta=n_theta, n_phi=n_phi, mode=mode, L_max=n_theta - 1,
        theta_1d=theta_1d, phi_1d=phi_1d, glw=glw,
        theta=theta, phi=phi, weights=weights,
        sin_theta=st, cos_theta=ct, nu=nu, e_theta=e_theta, e_phi=e_phi,
    )


# ---------------------------------------------------------------------------
# fields


@dataclass
class ScalarField:
    """Per-node values of a function on the grid's sphere."""

    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"field shape {self.values.shape} does not match grid "
                f"({self.grid.n_nodes} nodes)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def __array__(self, dtype=None, copy=None):
        return np.array(self.values, dtype=dtype, copy=bool(copy))


@dataclass
class MetricField:
    """Per-node 2x2 symmetric metric components in the (d_theta, d_phi)
    coordinate basis."""

    grid: SphereGrid
    components: np.ndarray

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        if self.components.shape != (self.grid.n_nodes, 2, 2):
            raise ValueError("metric components must have shape (N, 2, 2)")
        if not np.all(np.isfinite(self.components)):
            raise ValueError("metric contains non-finite values")
        asym = np.max(np.abs(self.components[:, 0, 1] - self.components[:, 1, 0]))
        scale = np.max(np.abs(self.components))
        if asym > 1e-12 * max(scale, 1.0):
            raise ValueError("metric components must be symmetric")

    def frame_components(self) -> np.ndarray:
        """Components in the orthonormal round frame (e_theta, e_phi/sin):
        divide out the sin(theta) factors of the coordinate basis."""
        s = self.grid.sin_theta
        out = self.components.copy()
        out[:, 0, 1] /= s
        out[:, 1, 0] /= s
        out[:, 1, 1] /= s * s
        return out

    def check_spd(self, where: str = "metric"):
        f = self.frame_components()
        det = f[:, 0, 0] * f[:, 1, 1] - f[:, 0, 1] * f[:, 1, 0]
        bad = (f[:, 0, 0] <= 0.0) | (det <= 0.0)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ValueError(
                f"{where} is not positive definite at node {i} "
                f"(theta={self.grid.theta[i]:.6f}, phi={self.grid.phi[i]:.6f})")


def round_metric(grid: SphereGrid, radius: float = 1.0) -> MetricField:
    """Chart components of the round metric of the given radius."""
    comps = np.zeros((grid.n_nodes, 2, 2))
    comps[:, 0, 0] = radius ** 2
    comps[:, 1, 1] = (radius * grid.sin_theta) ** 2
    return MetricField(grid, comps)


# ---------------------------------------------------------------------------
# operators


def _check_same_grid(a, b):
    if a.grid is not b.grid and not a.grid.same_layout(b.grid):
        raise ValueError("fields live on mismatched grids")


def integrate(field: ScalarField, area_element=None) -> float:
    """Quadrature integral sum(w_i * f_i * ae_i).

    ``area_element`` is the measure factor relative to the standard sphere
    (1 if omitted).  Summation uses math.fsum, which is correctly rounded
    and hence independent of summation order; reruns are bit-stable.
    """
    vals = field.values * field.grid.weights
    if area_element is not None:
        if isinstance(area_element, ScalarField):
            _check_same_grid(field, area_element)
            ae = area_element.values
        else:
            ae = np.broadcast_to(np.asarray(area_element, dtype=float),
                                 vals.shape)
        vals = vals * ae
    return math.fsum(vals.tolist())


def laplace_beltrami(metric: MetricField, f: ScalarField) -> ScalarField:
    """Laplace-Beltrami operator of the given metric applied to f.

    Divergence form in the chart, evaluated as (1/J) div_round(J g^{-1} df)
    with the round divergence taken through Cartesian components of the
    tangent vector field (see module docstring).
    """
    _check_same_grid(metric, f)
    metric.check_spd()
    grid = f.grid
    gf = metric.frame_components()
    a, b, d = gf[:, 0, 0], gf[:, 0, 1], gf[:, 1, 1]
    J = np.sqrt(a * d - b * b)
    ft, fp = grid.grad_frame(f.values)
    v1 = (d * ft - b * fp) / J
    v2 = (a * fp - b * ft) / J
    vc = v1[:, None] * grid.e_theta + v2[:, None] * grid.e_phi
    gt, gp = grid.grad_frame(vc)
    div = np.einsum("ni,ni->n", gt, grid.e_theta) + np.einsum(
        "ni,ni->n", gp, grid.e_phi)
    return ScalarField(grid, div / J)


def gradient_squared(metric: MetricField, f: ScalarField) -> ScalarField:
    """Pointwise squared gradient g^{ab} d_a f d_b f."""
    _check_same_grid(metric, f)
    metric.check_spd()
    gf = metric.frame_components()
    a, b, d = gf[:, 0, 0], gf[:, 0, 1], gf[:, 1, 1]
    det = a * d - b * b
    ft, fp = f.grid.grad_frame(f.values)
    out = (d * ft * ft - 2.0 * b * ft * fp + a * fp * fp) / det
    return ScalarField(f.grid, out)
