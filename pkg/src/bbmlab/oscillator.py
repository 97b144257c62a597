"""Self-similar frame: change of variables, Hermite-type spectral basis, and
evolution of the transformed solution.

Variables: tau = log(1+t), y = x (1+t)^{-1/2}.  The working unknown is

    W(tau, y) = e^{-tau/2} e^{y^2/8} e^{x} v(t, x),

which satisfies W_tau + M W = a(tau) (W_y - (y/4) W) + b(tau) W with

    M = -d^2/dy^2 + (y^2/16 - 3/4)

and (a, b) from drift.selfsimilar_forcing.  The -tau/2 exponent in the weight
is forced by requiring the constant -3/4 in the potential; see
docs/selfsimilar_derivation.md for the full substitution (re-derived
symbolically; the companion test test_oscillator.py::test_transform_exponent
repeats it with sympy).  Two consequences used throughout:

* W_y(tau, 0) = v_x(t, 0) exactly, so boundary slopes can be read in either
  frame (slope_correspondence);
* the kernel direction of M is y e^{-y^2/8}, whose coefficient is the limit
  of both the boundary slope and the total mass.

Eigenfunctions on the half-line with a Dirichlet condition at 0 are the odd
Hermite modes e_n(y) = H_{2n+1}(y/2) e^{-y^2/8} / sqrt(2^{2n+1} (2n+1)! sqrt(pi)),
with eigenvalue exactly n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .drift import DriftExpansion, selfsimilar_forcing
from .pde import Field, NumericalFailure, SpatialGrid

SQRT_PI = math.sqrt(math.pi)

#: L2 norm of the unnormalized kernel mode y e^{-y^2/8} on (0, inf).
KERNEL_NORM = math.sqrt(2.0 * SQRT_PI)


class LossOfSupport(RuntimeError):
    """Transform would need field values beyond the physical grid."""


# ---------------------------------------------------------------------------
# types

@dataclass
class SelfSimilarField:
    """W at one time tau on a uniform grid {0, dy, ..., Y}."""

    tau: float
    y: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.y.shape != self.values.shape:
            raise ValueError("y and values must have the same shape")
        if not np.all(np.isfinite(self.values)):
            raise NumericalFailure("W contains non-finite values")

    @property
    def dy(self) -> float:
        return float(self.y[1] - self.y[0])


def default_y_grid(y_max: float = 25.0, dy: float = 0.01) -> np.ndarray:
    if y_max < 20.0:
        raise ValueError("y_max must be >= 20 so the Gaussian weight is negligible at the boundary")
    n = int(round(y_max / dy))
    return np.linspace(0.0, n * dy, n + 1)


def hermite_functions(u: np.ndarray, k_max: int) -> np.ndarray:
    """Full-line orthonormal Hermite functions h_0..h_k_max at nodes u.

    h_k(u) = H_k(u) e^{-u^2/2} / sqrt(2^k k! sqrt(pi)), generated by the
    weight-inside recurrence, which is overflow-free for any k.
    """
    h = np.zeros((k_max + 1, u.size))
    h[0] = np.pi ** -0.25 * np.exp(-0.5 * u * u)
    if k_max >= 1:
        h[1] = math.sqrt(2.0) * u * h[0]
    for k in range(1, k_max):
        h[k + 1] = math.sqrt(2.0 / (k + 1)) * u * h[k] - math.sqrt(k / (k + 1)) * h[k - 1]
    return h


def eigenfunction(n: int, y: np.ndarray) -> np.ndarray:
    """Node values of e_n, the n-th Dirichlet eigenfunction of M (eigenvalue n)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    y = np.asarray(y, dtype=float)
    return hermite_functions(y / 2.0, 2 * n + 1)[2 * n + 1]


def eigenvalue(n: int) -> float:
    if n < 0:
        raise ValueError("n must be >= 0")
    return float(n)


@dataclass
class SpectralBasis:
    """First n_modes eigenfunctions sampled on a grid, with trapezoid weights."""

    y: np.ndarray
    n_modes: int

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        dy = self.y[1] - self.y[0]
        self.weights = np.full_like(self.y, dy)
        self.weights[0] = self.weights[-1] = dy / 2.0
        self.modes = hermite_functions(self.y / 2.0, 2 * self.n_modes - 1)[1::2]

    def project(self, values: np.ndarray) -> np.ndarray:
        """Coefficients <values, e_n> for n < n_modes."""
        return self.modes @ (self.weights * values)

    def gram(self) -> np.ndarray:
        return (self.modes * self.weights) @ self.modes.T

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.sum(self.weights * f * g))

    def norm(self, f: np.ndarray) -> float:
        return math.sqrt(max(self.inner(f, f), 0.0))


@dataclass
class Decomposition:
    """W split into alpha * y e^{-y^2/8} + e^{-tau/2} g + R."""

    alpha: float
    g_part: np.ndarray
    remainder: np.ndarray
    r_norm: float
    r_slope0: float


# ---------------------------------------------------------------------------
# discrete operator

def _potential(y: np.ndarray) -> np.ndarray:
    return y * y / 16.0 - 0.75


def apply_M(phi: np.ndarray, dy: float) -> np.ndarray:
    """Discrete M phi for phi vanishing at both ends.

    Fourth-order 5-point Laplacian on the interior, 3-point at the nodes next
    to the boundary (where the wider stencil would leave the grid).
    """
    phi = np.asarray(phi, dtype=float)
    scale = np.abs(phi).max()
    if scale > 0 and max(abs(phi[0]), abs(phi[-1])) > 1e-8 * scale:
        raise ValueError("phi must vanish at both ends")
    n = phi.size
    y = np.arange(n) * dy
    out = np.zeros_like(phi)
    out[2:-2] = -(-phi[:-4] + 16 * phi[1:-3] - 30 * phi[2:-2] + 16 * phi[3:-1] - phi[4:]) / (12 * dy * dy)
    out[1] = -(phi[0] - 2 * phi[1] + phi[2]) / (dy * dy)
    out[-2] = -(phi[-3] - 2 * phi[-2] + phi[-1]) / (dy * dy)
    out += _potential(y) * phi
    out[0] = out[-1] = 0.0
    return out


def _derivative(phi: np.ndarray, dy: float) -> np.ndarray:
    """First derivative: 6th order inside, lower order near and at the ends."""
    phi = np.asarray(phi, dtype=float)
    d = np.empty_like(phi)
    d[3:-3] = (-phi[:-6] + 9 * phi[1:-5] - 45 * phi[2:-4]
               + 45 * phi[4:-2] - 9 * phi[5:-1] + phi[6:]) / (60 * dy)
    d[1] = (-3 * phi[0] - 10 * phi[1] + 18 * phi[2] - 6 * phi[3] + phi[4]) / (12 * dy)
    d[2] = (phi[0] - 8 * phi[1] + 8 * phi[3] - phi[4]) / (12 * dy)
    d[-3] = (phi[-5] - 8 * phi[-4] + 8 * phi[-2] - phi[-1]) / (12 * dy)
    d[-2] = (3 * phi[-1] + 10 * phi[-2] - 18 * phi[-3] + 6 * phi[-4] - phi[-5]) / (12 * dy)
    d[0] = (-25 * phi[0] + 48 * phi[1] - 36 * phi[2] + 16 * phi[3] - 3 * phi[4]) / (12 * dy)
    d[-1] = (25 * phi[-1] - 48 * phi[-2] + 36 * phi[-3] - 16 * phi[-4] + 3 * phi[-5]) / (12 * dy)
    return d


def quadratic_form_Q(phi: np.ndarray, dy: float) -> float:
    """Q(phi) = int (phi')^2 + (y^2/16 - 3/4) phi^2 dy by trapezoid quadrature."""
    phi = np.asarray(phi, dtype=float)
    y = np.arange(phi.size) * dy
    integrand = _derivative(phi, dy) ** 2 + _potential(y) * phi * phi
    w = np.full_like(phi, dy)
    w[0] = w[-1] = dy / 2.0
    return float(np.sum(w * integrand))


def slope_at_origin(values: np.ndarray, dy: float) -> float:
    """One-sided 4th-order first derivative at the first node."""
    v = values
    return float((-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * dy))


def slope_correspondence(W: SelfSimilarField) -> float:
    """W_y(tau, 0); equals v_x(t, 0) of the physical field at t = e^tau - 1."""
    return slope_at_origin(W.values, W.dy)


# ---------------------------------------------------------------------------
# frame changes

def to_selfsimilar(f: Field, y_grid: np.ndarray | None = None) -> SelfSimilarField:
    """Map a physical field to the self-similar frame.

    Raises LossOfSupport if the map needs values beyond x_max where the field
    is not numerically negligible; the dead tail beyond x_max is padded with
    zeros.
    """
    if y_grid is None:
        y_grid = default_y_grid()
    tau = math.log1p(f.time)
    scale = math.sqrt(1.0 + f.time)
    xs = y_grid * scale
    x_max = f.grid.x_max
    vmax = np.abs(f.values).max()
    if xs[-1] > x_max:
        # acceptable only if the field has genuinely died before the boundary
        edge = np.abs(f.values[-20:]).max()
        if vmax > 0 and edge > 1e-13 * vmax:
            raise LossOfSupport(
                f"need x up to {xs[-1]:.2f} > x_max={x_max:.2f} and the field "
                f"is not negligible at the boundary")
    spline = CubicSpline(f.grid.x, f.values)
    vals = np.where(xs <= x_max, spline(np.clip(xs, 0.0, x_max)), 0.0)
    W = np.zeros_like(vals)
    nz = vals != 0.0
    W[nz] = np.exp(-tau / 2.0 + y_grid[nz] ** 2 / 8.0 + xs[nz]) * vals[nz]
    W[0] = W[-1] = 0.0
    return SelfSimilarField(tau, y_grid, W)


def from_selfsimilar(W: SelfSimilarField, grid: SpatialGrid) -> Field:
    """Inverse map onto a physical grid at t = e^tau - 1."""
    t = math.expm1(W.tau)
    scale = math.exp(-W.tau / 2.0)
    x = grid.x
    ys = x * scale
    spline = CubicSpline(W.y, W.values)
    wvals = np.where(ys <= W.y[-1], spline(np.clip(ys, 0.0, W.y[-1])), 0.0)
    v = np.exp(W.tau / 2.0) * np.exp(-ys * ys / 8.0) * np.exp(-x) * wvals
    v[0] = v[-1] = 0.0
    return Field(grid, v, t)


def initial_mode_overlap(f: Field):
    """Both readings of the initial kernel-mode overlap.

    Returns (int y e^y v0 dy, int xi v0 dxi).  The first is exactly
    <W_0, y e^{-y^2/8}>; the second drops the e^y weight.  They differ for
    generic data and are both reported rather than reconciled.
    """
    x = f.grid.x
    weighted = float(np.trapezoid(x * np.exp(x) * f.values, x))
    plain = float(np.trapezoid(x * f.values, x))
    return weighted, plain


# ---------------------------------------------------------------------------
# evolution

@dataclass
class WTrajectory:
    """Sampled W states: taus (n_samples,), states (n_samples, n_nodes)."""

    y: np.ndarray
    taus: np.ndarray
    states: np.ndarray
    cbar: float | None = None

    def __len__(self):
        return len(self.taus)

    def field(self, i: int) -> SelfSimilarField:
        return SelfSimilarField(float(self.taus[i]), self.y, self.states[i])

    def final(self) -> SelfSimilarField:
        return self.field(len(self) - 1)


def _operator_bands_W(y, dy, a, b):
    """Bands (-2..+2) of A = M_h - a (D1 - y/4) - b, Dirichlet rows excluded."""
    n = y.size
    c2 = 1.0 / (12 * dy * dy)
    lap_m2 = np.full(n, -c2)
    lap_m1 = np.full(n, 16 * c2)
    lap_0 = np.full(n, -30 * c2)
    lap_p1 = np.full(n, 16 * c2)
    lap_p2 = np.full(n, -c2)
    # 3-point rows adjacent to the boundary
    for i in (1, n - 2):
        lap_m2[i] = lap_p2[i] = 0.0
        lap_m1[i] = lap_p1[i] = 1.0 / (dy * dy)
        lap_0[i] = -2.0 / (dy * dy)
    d1_m2 = np.full(n, 1.0 / (12 * dy))
    d1_m1 = np.full(n, -8.0 / (12 * dy))
    d1_p1 = np.full(n, 8.0 / (12 * dy))
    d1_p2 = np.full(n, -1.0 / (12 * dy))
    for i in (1, n - 2):
        d1_m2[i] = d1_p2[i] = 0.0
        d1_m1[i] = -1.0 / (2 * dy)
        d1_p1[i] = 1.0 / (2 * dy)
    A_m2 = -lap_m2 - a * d1_m2
    A_m1 = -lap_m1 - a * d1_m1
    A_0 = -lap_0 + _potential(y) + a * y / 4.0 - b
    A_p1 = -lap_p1 - a * d1_p1
    A_p2 = -lap_p2 - a * d1_p2
    return A_m2, A_m1, A_0, A_p1, A_p2


def evolve_W(W0: SelfSimilarField, tau_end: float, d: DriftExpansion | None,
             dtau: float = 0.002, sample_every: int = 10,
             startup_steps: int = 0) -> WTrajectory:
    """Crank-Nicolson march of the forced oscillator equation on the y grid.

    Forcing coefficients are evaluated at the half step; d=None switches the
    forcing off entirely (the kernel mode is then stationary).  Samples every
    sample_every steps, always including the initial and final states.
    """
    from scipy.linalg import solve_banded

    if tau_end < W0.tau - 1e-14:
        raise ValueError("tau_end must be >= W0.tau")
    y = W0.y
    dy = W0.dy
    n = y.size
    vals = W0.values.copy()
    tau = W0.tau
    taus = [tau]
    states = [vals.copy()]
    nsteps = max(int(math.ceil((tau_end - tau) / dtau - 1e-12)), 0)

    def one_step(vals, tau, h, theta):
        th = tau + 0.5 * h
        if d is None:
            a = b = 0.0
        else:
            a, b = selfsimilar_forcing(th, d)
        A_m2, A_m1, A_0, A_p1, A_p2 = _operator_bands_W(y, dy, a, b)
        rhs = vals.copy()
        if theta < 1.0:
            mu = (1.0 - theta) * h
            rhs[2:-2] = vals[2:-2] - mu * (A_m2[2:-2] * vals[:-4] + A_m1[2:-2] * vals[1:-3]
                                           + A_0[2:-2] * vals[2:-2] + A_p1[2:-2] * vals[3:-1]
                                           + A_p2[2:-2] * vals[4:])
            rhs[1] = vals[1] - mu * (A_m1[1] * vals[0] + A_0[1] * vals[1] + A_p1[1] * vals[2])
            rhs[-2] = vals[-2] - mu * (A_m1[-2] * vals[-3] + A_0[-2] * vals[-2] + A_p1[-2] * vals[-1])
        rhs[0] = rhs[-1] = 0.0
        lam = theta * h
        ab = np.zeros((5, n))
        ab[4, :-2] = lam * A_m2[2:]
        ab[3, :-1] = lam * A_m1[1:]
        ab[2, :] = 1.0 + lam * A_0
        ab[1, 1:] = lam * A_p1[:-1]
        ab[0, 2:] = lam * A_p2[:-2]
        ab[2, 0] = 1.0
        ab[1, 1] = 0.0
        ab[0, 2] = 0.0
        ab[2, -1] = 1.0
        ab[3, -2] = 0.0
        ab[4, -3] = 0.0
        out = solve_banded((2, 2), ab, rhs)
        if not np.all(np.isfinite(out)):
            raise NumericalFailure(f"evolve_W produced non-finite values at tau={tau + h:.4f}")
        out[0] = out[-1] = 0.0
        return out

    for _ in range(startup_steps):
        vals = one_step(vals, tau, dtau / 2.0, theta=1.0)
        tau += dtau / 2.0
    for k in range(nsteps):
        h = min(dtau, tau_end - tau)
        vals = one_step(vals, tau, h, theta=0.5)
        tau += h
        if (k + 1) % sample_every == 0 or k == nsteps - 1:
            taus.append(tau)
            states.append(vals.copy())
    cb = d.cbar if d is not None else None
    return WTrajectory(y, np.array(taus), np.array(states), cb)


# ---------------------------------------------------------------------------
# decomposition

def decompose(W: SelfSimilarField, alpha: float, g_values: np.ndarray) -> Decomposition:
    """R = W - alpha y e^{-y^2/8} - e^{-tau/2} g, with its norm and origin slope.

    alpha is the coefficient of the unnormalized kernel mode y e^{-y^2/8};
    g comes from the specfun module (either construction route).
    """
    y = W.y
    kernel = y * np.exp(-y * y / 8.0)
    g_part = math.exp(-W.tau / 2.0) * np.asarray(g_values, dtype=float)
    R = W.values - alpha * kernel - g_part
    w = np.full_like(y, W.dy)
    w[0] = w[-1] = W.dy / 2.0
    r_norm = math.sqrt(max(float(np.sum(w * R * R)), 0.0))
    return Decomposition(alpha, g_part, R, r_norm, slope_at_origin(R, W.dy))


def observables_from_trajectory(traj: WTrajectory, grid: SpatialGrid | None = None):
    """ObservableSeries (t, mass, slope0) read off a self-similar trajectory.

    The slope is exact in the transform (W_y(tau,0) = v_x(t,0)); the mass is
    the trapezoid of the inverse-mapped field on the physical grid.
    """
    from .pde import ObservableSeries, mass as field_mass

    if grid is None:
        grid = SpatialGrid()
    times, masses, slopes = [], [], []
    for i in range(len(traj)):
        Wf = traj.field(i)
        times.append(math.expm1(Wf.tau))
        slopes.append(slope_correspondence(Wf))
        masses.append(field_mass(from_selfsimilar(Wf, grid)))
    return ObservableSeries(np.array(times), np.array(masses), np.array(slopes))


def write_trajectory_csv(path, traj: WTrajectory, basis: SpectralBasis,
                         alpha: float, g_values: np.ndarray):
    """CSV per trajectory: tau, coef_e0..coef_e7, W_slope0, R_norm, R_slope0."""
    n_coef = min(8, basis.n_modes)
    header = ["tau"] + [f"coef_e{n}" for n in range(n_coef)] + ["W_slope0", "R_norm", "R_slope0"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(traj)):
            Wf = traj.field(i)
            coefs = basis.project(Wf.values)[:n_coef]
            dec = decompose(Wf, alpha, g_values)
            row = [Wf.tau, *coefs, slope_correspondence(Wf), dec.r_norm, dec.r_slope0]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
