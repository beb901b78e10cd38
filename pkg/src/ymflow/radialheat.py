"""Radial heat equation on an annulus: solver, comparison functions, bounds.

The operator of interest is

    L_{n,c} u = u'' + (n-1)/r u' - c/r^2 u

solved as  u_t = L u + eta  on [rho, R] x [0, T] with Dirichlet data.  The
case (n, c) = (2, 4) is the operator whose kernel is span{r^2, r^-2}; note
u solves that equation iff u / r^2 solves the 6-dimensional radial heat
equation, which is why the comparison machinery below runs in dimension 6.

Discretization: log-uniform radial grid (the estimates span decades in r),
second-order centered differences in the log coordinate, Crank-Nicolson in
time via a banded solve.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy import special
from scipy.linalg import solve_banded
from scipy.signal import fftconvolve


@dataclass(frozen=True)
class RadialGrid:
    """Radial grid on [rho, R] with uniform time step dt up to T.

    Spacing is log-uniform by default (the estimates span decades in r);
    uniform spacing is available for narrow annuli where the log grid's
    small inner cells would force a needlessly small dt.
    """

    rho: float
    R: float
    N: int
    dt: float
    T: float
    spacing: str = "log"

    def __post_init__(self):
        if not 0 < self.rho < self.R:
            raise ValueError("need 0 < rho < R")
        if self.N < 64:
            raise ValueError("need at least 64 grid points")
        if not 0 < self.dt <= self.T:
            raise ValueError("need 0 < dt <= T")
        if self.spacing not in ("log", "uniform"):
            raise ValueError(f"unknown spacing {self.spacing!r}")
        dr_min = self.r[1] - self.r[0]
        if self.dt > 10 * dr_min**2:
            raise ValueError("dt too large for spatial resolution")

    @property
    def coord(self) -> np.ndarray:
        """Coordinate in which the grid is uniform."""
        if self.spacing == "log":
            return np.linspace(np.log(self.rho), np.log(self.R), self.N)
        return np.linspace(self.rho, self.R, self.N)

    @property
    def r(self) -> np.ndarray:
        if self.spacing == "log":
            return np.exp(self.coord)
        return self.coord

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class RadialOperator:
    """u'' + (n-1)/r u' - c/r^2 u."""

    n: float
    c: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need n >= 1")
        if self.c < 0:
            raise ValueError("need c >= 0")


SQUARE_OPERATOR = RadialOperator(2.0, 4.0)


@dataclass
class RadialSolution:
    grid: RadialGrid
    op: RadialOperator
    u: np.ndarray  # (n_stored, N)
    times: np.ndarray  # stored time slices, subset of grid.times
    psi: np.ndarray
    xi: np.ndarray
    phi: np.ndarray

    def at(self, r, t):
        """Bilinear interpolation in (t, grid coordinate) over stored slices."""
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator(
            (self.times, self.grid.coord), self.u, bounds_error=True
        )
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        x = np.log(r) if self.grid.spacing == "log" else r
        pts = np.stack(np.broadcast_arrays(t, x), axis=-1)
        out = interp(pts)
        return float(out[0]) if pts.ndim == 1 else out

    def time_derivative(self) -> np.ndarray:
        """Centered-in-time derivative over stored slices, one-sided at ends."""
        return np.gradient(self.u, self.times, axis=0)


def _tridiag_coeffs(grid: RadialGrid, op: RadialOperator):
    """Sub/diag/super coefficients of L on the interior grid nodes.

    Log grid, in y = log r: L = e^{-2y} (d_yy + (n - 2) d_y - c).
    Uniform grid, directly in r: L = d_rr + (n - 1)/r d_r - c/r^2.
    """
    x = grid.coord
    dx = x[1] - x[0]
    if grid.spacing == "log":
        w = np.exp(-2 * x[1:-1])
        lo = w * (1.0 / dx**2 - (op.n - 2) / (2 * dx))
        di = w * (-2.0 / dx**2 - op.c)
        hi = w * (1.0 / dx**2 + (op.n - 2) / (2 * dx))
    else:
        r = x[1:-1]
        lo = 1.0 / dx**2 - (op.n - 1) / (2 * r * dx)
        di = -2.0 / dx**2 - op.c / r**2
        hi = 1.0 / dx**2 + (op.n - 1) / (2 * r * dx)
    return lo, di, hi


def _sample_time(f, times):
    if f is None:
        return np.zeros(len(times))
    if callable(f):
        return np.array([float(f(t)) for t in times])
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return np.full(len(times), float(arr))
    if arr.shape != times.shape:
        raise ValueError("boundary signal length mismatch")
    return arr


def _sample_space(f, r):
    if f is None:
        return np.zeros(len(r))
    if callable(f):
        return np.asarray(f(r), dtype=float) * np.ones(len(r))
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return np.full(len(r), float(arr))
    return arr


class _CrankNicolson:
    """Crank-Nicolson stepper with the implicit matrix factored once."""

    def __init__(self, grid: RadialGrid, op: RadialOperator):
        from scipy.sparse import diags
        from scipy.sparse.linalg import factorized

        self.grid = grid
        self.op = op
        lo, di, hi = _tridiag_coeffs(grid, op)
        self.lo, self.di, self.hi = lo, di, hi
        h = 0.5 * grid.dt
        m = len(di)
        matrix = diags(
            [-h * lo[1:], 1.0 - h * di, -h * hi[:-1]], [-1, 0, 1], format="csc"
        )
        self._solve = factorized(matrix)

    def apply_explicit(self, u_int, left, right):
        """u + (dt/2) L u on interior nodes, with given boundary values."""
        h = 0.5 * self.grid.dt
        out = u_int + h * self.di * u_int
        out[1:] += h * self.lo[1:] * u_int[:-1]
        out[:-1] += h * self.hi[:-1] * u_int[1:]
        out[0] += h * self.lo[0] * left
        out[-1] += h * self.hi[-1] * right
        return out

    def solve_implicit(self, rhs, left_new, right_new):
        h = 0.5 * self.grid.dt
        rhs = rhs.copy()
        rhs[0] += h * self.lo[0] * left_new
        rhs[-1] += h * self.hi[-1] * right_new
        return self._solve(rhs)


def fd_solve(
    grid: RadialGrid,
    op: RadialOperator,
    phi=None,
    psi=None,
    xi=None,
    eta=None,
    store_every: int = 1,
) -> RadialSolution:
    """Solve u_t = L u + eta with u(rho,t)=psi, u(R,t)=xi, u(r,0)=phi.

    phi / eta may be callables of r / (r, t) or arrays; psi / xi may be
    callables of t, scalars, or arrays on the time mesh.  With
    ``store_every`` > 1 only every k-th time slice (plus the first and last)
    is kept, which bounds memory on long runs.
    """
    if store_every < 1:
        raise ValueError("store_every must be >= 1")
    r = grid.r
    times = grid.times
    psi_s = _sample_time(psi, times)
    xi_s = _sample_time(xi, times)
    phi_s = _sample_space(phi, r)

    def eta_at(t):
        if eta is None:
            return None
        if callable(eta):
            return np.asarray(eta(r, t), dtype=float) * np.ones(len(r))
        return np.asarray(eta, dtype=float)

    keep = [
        m for m in range(grid.n_steps + 1)
        if m % store_every == 0 or m == grid.n_steps
    ]
    u = np.empty((len(keep), grid.N))
    row = {m: i for i, m in enumerate(keep)}

    full = phi_s.copy()
    full[0] = psi_s[0]
    full[-1] = xi_s[0]
    u[0] = full
    cur = full[1:-1].copy()
    stepper = _CrankNicolson(grid, op)
    eta_prev = eta_at(times[0])
    for m in range(grid.n_steps):
        rhs = stepper.apply_explicit(cur, psi_s[m], xi_s[m])
        if eta_prev is not None:
            eta_next = eta_at(times[m + 1])
            rhs += 0.5 * grid.dt * (eta_prev[1:-1] + eta_next[1:-1])
            eta_prev = eta_next
        cur = stepper.solve_implicit(rhs, psi_s[m + 1], xi_s[m + 1])
        if not np.all(np.isfinite(cur)):
            raise RuntimeError("solver produced non-finite values")
        if (m + 1) in row:
            i = row[m + 1]
            u[i, 0] = psi_s[m + 1]
            u[i, 1:-1] = cur
            u[i, -1] = xi_s[m + 1]
    return RadialSolution(
        grid, op, u, times[np.array(keep)], psi_s, xi_s, phi_s
    )


# -- weights and special functions --------------------------------------------

def weight_w(a: float, r, t):
    """w^a(r,t) = (r^2 / (r^2 + t))^(a/2)."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any((r == 0) & (t == 0)):
        raise ValueError("indeterminate weight")
    return (r**2 / (r**2 + t)) ** (a / 2.0)


def wintegral(a: float, r: float, t1: float, t2: float) -> float:
    """Closed form of int_{t1}^{t2} w^{2a}(r,t) dt; valid for a != 1."""
    if not 0 <= t1 <= t2:
        raise ValueError("need 0 <= t1 <= t2")
    if a == 1:
        return r**2 * np.log((r**2 + t2) / (r**2 + t1))
    return (r ** (2 * a) / (1 - a)) * (
        (r**2 + t2) ** (1 - a) - (r**2 + t1) ** (1 - a)
    )


def erf_pair(x):
    """(erf(x), erfc(x)) where erf integrates the Gaussian from -infinity.

    With this convention erf(x) = erfc(-x) in the standard normalization, so
    erf ranges over (0, 2) and is increasing; erfc is the standard
    complementary error function.
    """
    x = np.asarray(x, dtype=float)
    return special.erfc(-x), special.erfc(x)


def erfc_sandwich(x: float) -> tuple[float, float, float]:
    """(lower, erfc(x), upper) from the two-sided elementary bounds, x > 0."""
    if not x > 0:
        raise ValueError("sandwich stated for x > 0")
    g = np.exp(-(x**2)) / (np.sqrt(np.pi) * x)
    lower = max(1 - 2 * x / np.sqrt(np.pi), g * (1 - 1 / (2 * x**2)))
    upper = min(1.0, g)
    return lower, float(special.erfc(x)), upper


def comparison_h(r, n: float, kind: str, bound: float):
    """Harmonic comparison profiles h_R (outer) and h_rho (inner).

    outer: h_R(r) = (r^{2-n} - R^{2-n}) / (1 - R^{2-n}), 1 at r=1, 0 at r=R.
    inner: h_rho(r) = (rho^{2-n} - r^{2-n}) / (rho^{2-n} - 1), 0 at rho, 1 at 1.
    """
    if n < 3:
        raise ValueError("harmonic profile requires n >= 3")
    r = np.asarray(r, dtype=float)
    p = 2.0 - n
    if kind == "outer":
        return (r**p - bound**p) / (1.0 - bound**p)
    if kind == "inner":
        return (bound**p - r**p) / (bound**p - 1.0)
    raise ValueError(f"unknown profile kind {kind!r}")


# -- bound reports and calibration --------------------------------------------

@dataclass
class BoundReport:
    name: str
    params: dict
    worst_ratio: float
    calibrated_constant: float | None
    passed: bool | None
    fit_exponent: float | None = None
    expected_exponent: float | None = None
    notes: list = dataclass_field(default_factory=list)
    n_samples: int = 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "inputs": self.params,
            "terms": {"worst_ratio": self.worst_ratio, "n_samples": self.n_samples},
            "fit": {
                "exponent": self.fit_exponent,
                "expected_exponent": self.expected_exponent,
            },
            "margins": {
                "calibrated_constant": self.calibrated_constant,
                "passed": self.passed,
            },
            "notes": self.notes,
        }


CALIBRATION_VERSION = 1


class CalibrationStore:
    """Persisted constants, keyed by (check name, parameter cell)."""

    def __init__(self, path):
        self.path = path
        if os.path.exists(path):
            with open(path) as fh:
                self.data = json.load(fh)
        else:
            self.data = {"version": CALIBRATION_VERSION, "constants": {}}

    @staticmethod
    def key(name: str, cell) -> str:
        return name + "|" + json.dumps(cell, sort_keys=True)

    def get(self, name: str, cell):
        return self.data["constants"].get(self.key(name, cell))

    def set(self, name: str, cell, constant: float) -> None:
        self.data["constants"][self.key(name, cell)] = float(constant)

    def save(self) -> None:
        with open(self.path, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)


def _fit_exponent(r: np.ndarray, v: np.ndarray) -> float:
    """Least-squares slope of log v vs log r."""
    mask = v > 0
    if mask.sum() < 3:
        return float("nan")
    slope, _ = np.polyfit(np.log(r[mask]), np.log(v[mask]), 1)
    return float(slope)


# -- comparison-function lemmas ------------------------------------------------

def _fd_error_estimate(grid: RadialGrid, op: RadialOperator) -> float:
    """Manufactured-solution error estimate for fd_solve at this resolution.

    Measures the error of u* = r^2 e^{-t} on a coarse probe grid and scales
    it down by the square of the resolution ratio (the scheme is second
    order in both the log-radius spacing and dt, and dt is tied to the
    spacing by the accuracy guard).
    """

    def u_star(r, t):
        return r**2 * np.exp(-t)

    # L u* for u* = r^2 e^{-t}: (2 + 2(n-1) - c) e^{-t} = (2n - c) e^{-t}.
    coef = 2.0 * op.n - op.c

    def eta(r, t):
        return (-(r**2) - coef) * np.exp(-t)

    n_probe = max(64, grid.N // 8)
    if grid.spacing == "log":
        r_probe = np.exp(np.linspace(np.log(grid.rho), np.log(grid.R), n_probe))
    else:
        r_probe = np.linspace(grid.rho, grid.R, n_probe)
    dr_min = r_probe[1] - r_probe[0]
    T = min(grid.T, 1.0)
    steps = max(int(np.ceil(T / (8 * dr_min**2))), 4)
    probe = RadialGrid(grid.rho, grid.R, n_probe, T / steps, T, grid.spacing)
    sol = fd_solve(
        probe,
        op,
        phi=lambda r: u_star(r, 0.0),
        psi=lambda t: u_star(probe.rho, t),
        xi=lambda t: u_star(probe.R, t),
        eta=eta,
    )
    exact = u_star(probe.r[None, :], probe.times[:, None])
    err = float(np.max(np.abs(sol.u - exact)))
    return err * ((grid.N - 1) / (probe.N - 1)) ** -2


def _steady_state_error(grid: RadialGrid, n: float, kind: str) -> float:
    """Max-norm error of the discrete harmonic profile at this resolution.

    The heat-up solutions converge to the harmonic comparison profile from
    below with equality in the limit, so the binding discretization error is
    the gap between the discrete steady state (L u = 0 with the heat-up
    boundary values) and the exact profile.  The tridiagonal system is solved
    directly at the actual grid resolution.
    """
    from scipy.linalg import solve_banded

    lo, di, hi = _tridiag_coeffs(grid, RadialOperator(n, 0.0))
    left, right = (0.0, 1.0) if kind == "inner" else (1.0, 0.0)
    rhs = np.zeros(grid.N - 2)
    rhs[0] -= lo[0] * left
    rhs[-1] -= hi[-1] * right
    ab = np.zeros((3, grid.N - 2))
    ab[0, 1:] = hi[:-1]
    ab[1, :] = di
    ab[2, :-1] = lo[1:]
    u = solve_banded((1, 1), ab, rhs)
    param = grid.rho if kind == "inner" else grid.R
    exact = comparison_h(grid.r[1:-1], n, kind, param)
    return float(np.max(np.abs(u - exact)))


def u1_solution(
    n: float, R: float, grid: RadialGrid, store_every: int = 1
) -> RadialSolution:
    """Heat-up solution on U(1, R): u(1,t)=1, u(R,t)=0, u(r,0)=0."""
    if abs(grid.rho - 1.0) > 1e-12 or abs(grid.R - R) > 1e-12:
        raise ValueError("grid must cover [1, R]")
    return fd_solve(
        grid, RadialOperator(n, 0.0), psi=1.0, xi=0.0,
        store_every=store_every,
    )


def u1_verify(n: float, R: float, grid: RadialGrid) -> tuple:
    """Check the two-sided erfc sandwich and time-monotonicity of u1."""
    if n < 3 or R < 2:
        raise ValueError("need n >= 3 and R >= 2")
    op = RadialOperator(n, 0.0)
    stride = max(1, grid.n_steps // 400)
    sol = u1_solution(n, R, grid, store_every=stride)
    fd_err = max(
        _fd_error_estimate(grid, op), _steady_state_error(grid, n, "outer")
    )
    margin = 5.0 * fd_err

    r = grid.r[1:-1]
    t = sol.times[1:]
    rr, tt = r[None, :], t[:, None]
    hR = comparison_h(r, n, "outer", R)[None, :]
    x = (rr - 1.0) / (2.0 * np.sqrt(tt))
    gauss = np.exp(-((rr - 1.0) ** 2) / (4 * tt))
    lower = hR * np.maximum(
        1.0 - (rr - 1.0) / np.sqrt(np.pi * tt),
        (2.0 * np.sqrt(tt) / (np.sqrt(np.pi) * (rr - 1.0)))
        * (1.0 - 2.0 * tt / (rr - 1.0) ** 2)
        * gauss,
    )
    upper = np.minimum(
        hR, (2.0 * np.sqrt(tt) / (np.sqrt(np.pi) * (rr - 1.0))) * gauss
    )
    u = sol.u[1:, 1:-1]
    low_margin = float(np.min(u - lower))
    up_margin = float(np.min(upper - u))
    dtu = sol.time_derivative()[1:, 1:-1]
    mono_margin = float(np.min(dtu)) * grid.dt

    passed = (
        low_margin >= -margin and up_margin >= -margin and mono_margin >= -margin
    )
    report = BoundReport(
        name="u1-sandwich",
        params={"n": n, "R": R, "N": grid.N, "dt": grid.dt, "T": grid.T},
        worst_ratio=max(-low_margin, -up_margin, -mono_margin) / max(fd_err, 1e-300),
        calibrated_constant=5.0,
        passed=bool(passed),
        notes=[
            f"fd_error={fd_err:.3e}",
            f"lower_margin={low_margin:.3e}",
            f"upper_margin={up_margin:.3e}",
            f"monotonicity_margin={mono_margin:.3e}",
        ],
        n_samples=int(u.size),
    )
    return sol, report


def v1_solution(
    n: float, rho: float, grid: RadialGrid, store_every: int = 1
) -> RadialSolution:
    """Heat-up solution on U(rho, 1): v(rho,t)=0, v(1,t)=1, v(r,0)=0."""
    if abs(grid.rho - rho) > 1e-12 or abs(grid.R - 1.0) > 1e-12:
        raise ValueError("grid must cover [rho, 1]")
    return fd_solve(
        grid, RadialOperator(n, 0.0), psi=0.0, xi=1.0,
        store_every=store_every,
    )


def v1_verify(n: float, rho: float, grid: RadialGrid) -> tuple:
    """Check the v1 sandwich, positivity of d_t v1, and its decay envelopes."""
    if n < 3 or rho > 0.5:
        raise ValueError("need n >= 3 and rho <= 1/2")
    op = RadialOperator(n, 0.0)
    stride = max(1, grid.n_steps // 400)
    sol = v1_solution(n, rho, grid, store_every=stride)
    fd_err = max(
        _fd_error_estimate(grid, op), _steady_state_error(grid, n, "inner")
    )
    margin = 5.0 * fd_err

    r = grid.r[1:-1]
    t = sol.times[1:]
    rr, tt = r[None, :], t[:, None]
    hrho = comparison_h(r, n, "inner", rho)[None, :]
    gauss = np.exp(-((rr - 1.0) ** 2) / (4 * tt))
    lower = hrho * np.maximum(
        1.0 - (1.0 - rr) / np.sqrt(np.pi * tt),
        (2.0 * np.sqrt(tt) / (np.sqrt(np.pi) * (1.0 - rr)))
        * (1.0 - 2.0 * tt / (rr - 1.0) ** 2)
        * gauss,
    )
    upper = np.minimum(
        hrho,
        (2.0 * np.sqrt(tt) * rr ** (2.0 - n) / (np.sqrt(np.pi) * (1.0 - rr)))
        * gauss,
    )
    v = sol.u[1:, 1:-1]
    low_margin = float(np.min(v - lower))
    up_margin = float(np.min(upper - v))
    dtv = sol.time_derivative()[1:, 1:-1]
    mono_margin = float(np.min(dtv)) * grid.dt

    # Decay-envelope shape on the inner half: d_t v1 <= C e^{-(t + 1/t)/C}.
    inner = r <= 0.5
    shape_ok = True
    if inner.any():
        peak = np.max(dtv[:, inner], axis=1)
        # Calibrate C from the observed peak, then check the envelope shape.
        env = lambda C: C * np.exp(-(t + 1.0 / t) / C)
        C_cal = 1.0
        for _ in range(60):
            bad = peak > env(C_cal) + margin
            if not bad.any():
                break
            C_cal *= 1.3
        shape_ok = not (peak > env(C_cal) + margin).any()
    else:
        C_cal = float("nan")

    passed = (
        low_margin >= -margin
        and up_margin >= -margin
        and mono_margin >= -margin
        and shape_ok
    )
    report = BoundReport(
        name="v1-sandwich",
        params={"n": n, "rho": rho, "N": grid.N, "dt": grid.dt, "T": grid.T},
        worst_ratio=max(-low_margin, -up_margin, -mono_margin) / max(fd_err, 1e-300),
        calibrated_constant=C_cal,
        passed=bool(passed),
        notes=[
            f"fd_error={fd_err:.3e}",
            f"lower_margin={low_margin:.3e}",
            f"upper_margin={up_margin:.3e}",
            f"monotonicity_margin={mono_margin:.3e}",
            f"inner_envelope_C={C_cal:.3g}",
        ],
        n_samples=int(v.size),
    )
    return sol, report


# -- Duhamel constructions ------------------------------------------------------

@dataclass
class DuhamelKernels:
    """Step responses of the (n=2, c=4) annulus problem on U(rho, 1).

    inner_step(r, t): solution with unit inner boundary data, built from the
    6-dimensional u1 on U(1, 1/rho) by scaling; outer_step likewise from v1.
    The impulse-response kernels are their time derivatives.
    """

    grid: RadialGrid
    inner_step: np.ndarray | None = None  # (n_steps + 1, N)
    outer_step: np.ndarray | None = None


def precompute_kernels(grid: RadialGrid, kinds=("inner", "outer")) -> DuhamelKernels:
    if abs(grid.R - 1.0) > 1e-12:
        raise ValueError("Duhamel construction assumes outer radius 1")
    if grid.spacing != "log":
        raise ValueError("Duhamel kernels require a log-spaced grid")
    rho = grid.rho
    kernels = DuhamelKernels(grid)
    if "inner" in kinds:
        # u1 on U(1, 1/rho) in dimension 6, on the scaled copy of this grid:
        # same log spacing, time step dt / rho^2 covers t / rho^2.
        g1 = RadialGrid(1.0, 1.0 / rho, grid.N, grid.dt / rho**2, grid.T / rho**2)
        u1 = u1_solution(6.0, 1.0 / rho, g1)
        # inner step response: (r/rho)^2 u1(r/rho, t/rho^2); nodes align.
        kernels.inner_step = (grid.r[None, :] ** 2 / rho**2) * u1.u
    if "outer" in kinds:
        v1 = v1_solution(6.0, rho, grid)
        kernels.outer_step = (grid.r[None, :] ** 2) * v1.u
    return kernels


def _duhamel_convolve(step: np.ndarray, signal: np.ndarray, dt: float) -> np.ndarray:
    """u(t) = signal(0) step(t) + int_0^t signal'(tau) step(t - tau) dtau.

    Equivalent to convolving the signal with the impulse response (the step
    response's time derivative), integrated by parts for accuracy.
    """
    ds = np.gradient(signal, dt)
    conv = fftconvolve(ds[:, None], step, axes=0)[: len(signal)] * dt
    # Trapezoid endpoint correction: step(0) vanishes on interior nodes.
    conv -= 0.5 * dt * ds[0][None] * step
    conv -= 0.5 * dt * ds[:, None] * step[0][None, :]
    return signal[0] * step + conv


def duhamel_boundary(
    kind: str, grid: RadialGrid, signal, kernels: DuhamelKernels | None = None
) -> RadialSolution:
    """Boundary-driven solution of the (2, 4) problem by Duhamel superposition."""
    if kernels is None:
        raise ValueError("missing kernel")
    sig = _sample_time(signal, grid.times)
    if kind == "inner":
        step = kernels.inner_step
        psi, xi = sig, np.zeros_like(sig)
    elif kind == "outer":
        step = kernels.outer_step
        psi, xi = np.zeros_like(sig), sig
    else:
        raise ValueError(f"unknown boundary kind {kind!r}")
    if step is None:
        raise ValueError("missing kernel")
    u = _duhamel_convolve(step, sig, grid.dt)
    u[:, 0] = psi if kind == "inner" else 0.0
    u[:, -1] = xi if kind == "outer" else 0.0
    if kind == "inner":
        u[:, -1] = 0.0
    else:
        u[:, 0] = 0.0
    return RadialSolution(
        grid, SQUARE_OPERATOR, u, grid.times, psi, xi, np.zeros(grid.N)
    )


def duhamel_inhom(eta, grid: RadialGrid) -> RadialSolution:
    """Particular solution by symmetric-splitting propagation of eta slices."""
    r = grid.r
    times = grid.times
    stepper = _CrankNicolson(grid, SQUARE_OPERATOR)

    def eta_at(t):
        if callable(eta):
            return np.asarray(eta(r, t), dtype=float) * np.ones(len(r))
        return np.asarray(eta, dtype=float)

    u = np.zeros((grid.n_steps + 1, grid.N))
    cur = np.zeros(grid.N - 2)
    for m in range(grid.n_steps):
        cur = cur + 0.5 * grid.dt * eta_at(times[m])[1:-1]
        rhs = stepper.apply_explicit(cur, 0.0, 0.0)
        cur = stepper.solve_implicit(rhs, 0.0, 0.0)
        cur = cur + 0.5 * grid.dt * eta_at(times[m + 1])[1:-1]
        u[m + 1, 1:-1] = cur
    return RadialSolution(
        grid, SQUARE_OPERATOR, u, times, np.zeros(len(times)),
        np.zeros(len(times)), np.zeros(grid.N)
    )


def heat_kernel_column(
    n: float, rho: float, R: float, grid: RadialGrid, s: float
) -> RadialSolution:
    """H^n_(rho,R)(., s, .) by propagating a discrete delta at radius s.

    The kernel convention is u(r,t) = int phi(s) H(r,s,t) s^{n-1} ds, so the
    initial column is a normalized spike against the measure s^{n-1} ds.
    """
    r = grid.r
    j = int(np.argmin(np.abs(r - s)))
    if j == 0 or j == grid.N - 1:
        raise ValueError("delta radius too close to the boundary")
    # Trapezoid cell width around node j on the log grid.
    width = 0.5 * (r[min(j + 1, grid.N - 1)] - r[max(j - 1, 0)])
    phi = np.zeros(grid.N)
    phi[j] = 1.0 / (width * r[j] ** (n - 1))
    return fd_solve(grid, RadialOperator(n, 0.0), phi=phi)


def kernel_bound_check(
    n: float, rho: float, R: float, samples, grid: RadialGrid
) -> BoundReport:
    """Check H^n(r,s,t) <= C_n e^{-(r-s)^2/4t} / (t^{1/2} (rs+t)^{(n-1)/2})."""
    notes = []
    ratios = []
    by_s = {}
    used = 0
    for r_s, s_s, t_s in samples:
        if t_s < 2 * grid.dt:
            notes.append(f"skipped (r={r_s}, s={s_s}, t={t_s}): below dt resolution")
            continue
        if s_s not in by_s:
            by_s[s_s] = heat_kernel_column(n, rho, R, grid, s_s)
        sol = by_s[s_s]
        lhs = float(sol.at(r_s, t_s))
        rhs = np.exp(-((r_s - s_s) ** 2) / (4 * t_s)) / (
            np.sqrt(t_s) * (r_s * s_s + t_s) ** ((n - 1) / 2.0)
        )
        ratios.append(max(lhs, 0.0) / rhs)
        used += 1
    worst = float(np.max(ratios)) if ratios else 0.0
    return BoundReport(
        name="heat-kernel-envelope",
        params={"n": n, "rho": rho, "R": R},
        worst_ratio=worst,
        calibrated_constant=None,
        passed=None,
        notes=notes,
        n_samples=used,
    )


# -- integral lemma -------------------------------------------------------------

def _holder_integrand(r, s, t, a, b, c, d):
    return (
        np.exp(-((r - s) ** 2) / (4 * t))
        * s ** (2 * a)
        * r ** (2 * b)
        * (r**2 + t) ** c
        / (r * s + t) ** (a + b + c + d)
        / np.sqrt(t)
    )


def _holder_rhs_shape(s, r1, r2, t, a, b, c, d):
    """Case table of the single-time bound, without the constant."""
    if s <= r1:
        core = ((s**2 / (r1**2 + t)) ** a) * weight_w(2 * b, r2, t) * np.exp(
            -((r1 - s) ** 2) / (5 * t)
        )
    elif s <= r2:
        core = weight_w(2 * a, s, t) * weight_w(2 * b, r2, t)
    else:
        core = (
            weight_w(2 * a, s, t)
            * (r2**2 / (s**2 + t)) ** b
            * np.exp(-((s - r2) ** 2) / (5 * t))
        )
    return (r2 - r1) / (r2 - r1 + np.sqrt(t)) / (s**2 + t) ** d * core


def _holder_rhs_shape_time(s, r1, r2, t1, t2, a, b, c, d):
    """Case table of the time-integrated bound, without the constant."""
    if s <= r1:
        core = ((s**2 / (r1**2 + t1)) ** a) * weight_w(
            2 * b + 1, r2, t1
        ) * np.exp(-((r1 - s) ** 2) / (5 * t2))
    elif s <= r2:
        core = weight_w(2 * a, s, t1) * weight_w(2 * b + 1, r2, t1)
    else:
        core = (
            weight_w(2 * a, s, t1)
            * (r2**2 / (s**2 + t1)) ** (b + 0.5)
            * np.exp(-((s - r2) ** 2) / (5 * t2))
        )
    return (t2 - t1) / (t2 + s**2) / (s**2 + t1) ** (d - 1) * core


def holder_bound(
    a: float,
    b: float,
    c: float,
    d: float,
    s: float,
    r1: float,
    r2: float,
    t=None,
    t_pair=None,
    quad_limit: int = 200,
    epsrel: float = 1e-9,
) -> BoundReport:
    """LHS/RHS-shape ratio for the Gaussian-weighted integral bound.

    Single-time form with ``t``; time-integrated form with ``t_pair``
    (requires a + d > 1).  The constant is left to calibration; the report
    carries the ratio of the quadrature LHS to the closed-form case table.
    """
    from scipy.integrate import quad

    if min(a, b, c, d) < 0:
        raise ValueError("exponents must be nonnegative")
    if not 0 < r1 <= r2:
        raise ValueError("need 0 < r1 <= r2")
    if (t is None) == (t_pair is None):
        raise ValueError("provide exactly one of t, t_pair")

    if t is not None:
        lhs, _ = quad(
            _holder_integrand, r1, r2, args=(s, t, a, b, c, d),
            limit=quad_limit, epsrel=epsrel,
        )
        rhs = _holder_rhs_shape(s, r1, r2, t, a, b, c, d)
        params = {"a": a, "b": b, "c": c, "d": d, "s": s, "r1": r1, "r2": r2,
                  "t": t}
        name = "holder-single-time"
    else:
        if not a + d > 1:
            raise ValueError("lemma hypothesis violated")
        t1, t2 = t_pair
        if not 0 <= t1 < t2:
            raise ValueError("need 0 <= t1 < t2")

        def inner(tv):
            val, _ = quad(
                _holder_integrand, r1, r2, args=(s, tv, a, b, c, d),
                limit=quad_limit,
            )
            return val

        lhs, _ = quad(inner, t1, t2, limit=quad_limit)
        rhs = _holder_rhs_shape_time(s, r1, r2, t1, t2, a, b, c, d)
        params = {"a": a, "b": b, "c": c, "d": d, "s": s, "r1": r1, "r2": r2,
                  "t1": t1, "t2": t2}
        name = "holder-time-integrated"

    ratio = float(lhs / rhs) if rhs > 0 else (0.0 if lhs <= 1e-300 else float("inf"))
    return BoundReport(
        name=name,
        params=params,
        worst_ratio=ratio,
        calibrated_constant=None,
        passed=None,
        n_samples=1,
    )


def holder_sweep(
    cell: tuple,
    n_samples: int = 120,
    seed: int = 0,
    quad_limit: int = 200,
    epsrel: float = 1e-8,
    decades: float = 3.0,
    time_integrated: bool = False,
) -> BoundReport:
    """Calibrate one constant for an (a, b, c, d) cell over random tuples.

    Samples (s, r1, r2, t) log-uniformly over ``decades`` decades and returns
    the worst LHS / RHS-shape ratio, which is the calibrated constant for
    the cell.  The time-integrated form requires a + d > 1.
    """
    a, b, c, d = cell
    rng = np.random.default_rng(seed)
    half = decades / 2.0
    worst = 0.0
    used = 0
    while used < n_samples:
        s, r1, t = 10.0 ** rng.uniform(-half, half, size=3)
        r2 = r1 * 10.0 ** rng.uniform(0.05, half)
        if time_integrated:
            t2 = t * 10.0 ** rng.uniform(0.1, 1.0)
            rep = holder_bound(
                a, b, c, d, s, r1, r2, t_pair=(t, t2),
                quad_limit=quad_limit, epsrel=epsrel,
            )
        else:
            rep = holder_bound(
                a, b, c, d, s, r1, r2, t=t,
                quad_limit=quad_limit, epsrel=epsrel,
            )
        if not np.isfinite(rep.worst_ratio):
            continue
        worst = max(worst, rep.worst_ratio)
        used += 1
    return BoundReport(
        name="holder-sweep" + ("-time" if time_integrated else ""),
        params={"a": a, "b": b, "c": c, "d": d, "seed": seed,
                "decades": decades, "epsrel": epsrel},
        worst_ratio=worst,
        calibrated_constant=worst,
        passed=None,
        n_samples=used,
    )


# -- appendix proposition checks ----------------------------------------------

def _default_grid(rho: float, N: int = 64, T: float = 0.5) -> RadialGrid:
    """Smallest grid meeting the accuracy guard on [rho, 1] up to T."""
    r = np.exp(np.linspace(np.log(rho), 0.0, N))
    dr_min = r[1] - r[0]
    n_steps = max(int(np.ceil(T / (8 * dr_min**2))), 4)
    return RadialGrid(rho, 1.0, N, T / n_steps, T)


def appendix_prop_check(prop: str, params: dict) -> BoundReport:
    """Shape checks of the annulus heat estimates on extremal data.

    Each check builds extremal data for the named estimate, solves the
    annulus problem numerically, fits the radial exponent of the solution on
    a window where the stated bound is saturated, and reports the worst
    LHS/RHS-shape ratio for comparison against a calibrated constant.
    """
    if prop == "A.2-initial":
        return _check_initial_pointwise(params)
    if prop == "A.2'-initial-L2":
        return _check_initial_l2(params)
    if prop == "A.5-inner":
        return _check_inner(params)
    if prop == "A.6-outer":
        return _check_outer(params)
    if prop == "A.7-inhom-pointwise":
        return _check_inhom_pointwise(params)
    if prop == "A.8-inhom-L2":
        return _check_inhom_l2(params)
    raise ValueError(f"unknown proposition check {prop!r}")


def _check_initial_pointwise(params: dict) -> BoundReport:
    """|u_phi| <= C A r^k w^{2-k}(r,t) w^{4+k}(R,t) for -3 <= k <= 2.

    Extremal data phi = A r^k; on the window r << sqrt(t) the bound shape is
    r^k * r^{2-k} = r^2, which diffusion saturates.
    """
    k = float(params.get("k", 0.0))
    A = float(params.get("A", 1.0))
    rho = float(params.get("rho", 0.015))
    if not -3 <= k <= 2:
        raise ValueError("need -3 <= k <= 2")
    grid = params.get("grid") or _default_grid(rho, T=1.0)
    R = grid.R
    stride = max(1, grid.n_steps // 400)
    sol = fd_solve(
        grid, SQUARE_OPERATOR, phi=lambda r: A * r**k, store_every=stride
    )

    r = grid.r[1:-1]
    t_samp = [0.25 * grid.T, grid.T]
    ratios = []
    for t in t_samp:
        u = np.abs(sol.at(r, t))
        rhs = A * r**k * weight_w(2 - k, r, t) * weight_w(4 + k, R, t)
        ratios.append(np.max(u / rhs))
    t_fit = grid.T
    window = (r >= 4 * rho) & (r <= 0.5 * np.sqrt(t_fit))
    fit = _fit_exponent(r[window], np.abs(sol.at(r[window], t_fit)))
    return BoundReport(
        name="A.2-initial",
        params={"k": k, "A": A, "rho": rho, "R": R},
        worst_ratio=float(np.max(ratios)),
        calibrated_constant=None,
        passed=None,
        fit_exponent=fit,
        expected_exponent=2.0,
        n_samples=int(2 * len(r)),
    )


def _check_initial_l2(params: dict) -> BoundReport:
    """Weighted space-time L2 bound on u_phi against the two-piece data norm."""
    m = float(params.get("m", 0.0))
    k = float(params.get("k", 0.0))
    rho = float(params.get("rho", 0.04))
    rbar = float(params.get("rbar", 0.25))
    t1 = float(params.get("t1", 0.0))
    if not -4 <= m < 4:
        raise ValueError("need -4 <= m < 4")
    grid = params.get("grid") or _default_grid(rho, T=0.5)
    t2 = grid.T
    R = grid.R
    stride = max(1, grid.n_steps // 400)
    sol = fd_solve(
        grid, SQUARE_OPERATOR, phi=lambda r: r**k, store_every=stride
    )

    r = grid.r
    times = sol.times
    tmask = (times >= t1) & (times <= t2)
    rmask = (r >= rho) & (r <= rbar)
    usq = sol.u[np.ix_(tmask, rmask)] ** 2
    lhs = float(
        np.trapezoid(np.trapezoid(usq * r[rmask] ** m, r[rmask], axis=1),
                     times[tmask])
    )

    from scipy.integrate import quad

    phi2 = lambda s: s ** (2 * k)
    inner_int, _ = quad(lambda s: s ** (m + 2) * phi2(s), rho, rbar)
    outer_int, _ = quad(
        lambda s: weight_w(5, s, t1)
        * (rbar**2 / (s**2 + t1)) ** 1.5
        * phi2(s),
        rbar,
        R,
    )
    rhs = weight_w(m + 4, rbar, t1) * inner_int + rbar ** (m + 2) * outer_int
    return BoundReport(
        name="A.2'-initial-L2",
        params={"m": m, "k": k, "rho": rho, "rbar": rbar, "t1": t1, "t2": t2},
        worst_ratio=float(lhs / rhs),
        calibrated_constant=None,
        passed=None,
        n_samples=int(usq.size),
    )


def _check_inner(params: dict) -> BoundReport:
    """Inner boundary data: |u_psi| ~ (rho/r)^2 with Gaussian-in-1/t onset."""
    rho = float(params.get("rho", 0.02))
    grid = params.get("grid") or _default_grid(rho, T=0.5)
    kernels = precompute_kernels(grid, kinds=("inner",))
    sol = duhamel_boundary("inner", grid, lambda t: 1.0, kernels)

    r = grid.r
    t_end = grid.T
    window = (r >= 3 * rho) & (r <= 30 * rho)
    u_end = np.abs(sol.u[-1])
    fit = _fit_exponent(r[window], u_end[window])

    # Shape ratio of (a): |u_psi| vs (rho/r)^2 sup|psi| over the window.
    ratios = u_end[window] / (rho / r[window]) ** 2
    worst = float(np.max(ratios))

    # Onset behavior: at fixed r1, |u| grows like the Gaussian factor
    # exp(-(r1 - rho)^2 / 5t); the log should be linear in -1/t with
    # positive slope.
    j = int(np.argmin(np.abs(r - 6 * rho)))
    early = (sol.times > 0) & (sol.times < 0.2 * (r[j] - rho) ** 2)
    onset_slope = float("nan")
    if early.sum() >= 4:
        vals = np.abs(sol.u[early, j])
        pos = vals > 1e-300
        if pos.sum() >= 4:
            onset_slope, _ = np.polyfit(
                -1.0 / sol.times[early][pos], np.log(vals[pos]), 1
            )
    return BoundReport(
        name="A.5-inner",
        params={"rho": rho, "t_end": t_end, "r_probe": float(r[j])},
        worst_ratio=worst,
        calibrated_constant=None,
        passed=None,
        fit_exponent=fit,
        expected_exponent=-2.0,
        notes=[f"onset_gaussian_slope={onset_slope:.4g} "
               f"(positive means exp(-const/t) onset)"],
        n_samples=int(window.sum()),
    )


def _check_outer(params: dict) -> BoundReport:
    """Outer boundary data: u_xi^2 ~ (r/R)^4, so u_xi ~ r^2 on r << 1."""
    rho = float(params.get("rho", 0.02))
    grid = params.get("grid") or _default_grid(rho, T=0.5)
    kernels = precompute_kernels(grid, kinds=("outer",))
    sol = duhamel_boundary("outer", grid, lambda t: 1.0, kernels)

    r = grid.r
    window = (r >= 3 * rho) & (r <= 30 * rho)
    u_end = np.abs(sol.u[-1])
    fit = _fit_exponent(r[window], u_end[window])
    ratios = u_end[window] ** 2 / r[window] ** 4
    return BoundReport(
        name="A.6-outer",
        params={"rho": rho, "t_end": grid.T},
        worst_ratio=float(np.max(ratios)),
        calibrated_constant=None,
        passed=None,
        fit_exponent=fit,
        expected_exponent=2.0,
        n_samples=int(window.sum()),
    )


def _check_inhom_pointwise(params: dict) -> BoundReport:
    """|u_eta| <= C A w^beta(R,t) * case(k, alpha) for eta = A r^{k-2} w^a w^b.

    The middle regime -2-min(alpha,1) < k < 2-alpha saturates as r^k at long
    times, which is the fitted exponent.
    """
    k = float(params.get("k", 0.0))
    alpha = float(params.get("alpha", 0.0))
    beta = float(params.get("beta", 0.0))
    A = float(params.get("A", 1.0))
    rho = float(params.get("rho", 0.01))
    if alpha == 1 or not 0 <= alpha < 4:
        raise ValueError("excluded exponent")
    if not 0 <= beta < 4 - alpha:
        raise ValueError("need 0 <= beta < 4 - alpha")
    abar = min(alpha, 1.0)
    boundaries = (-2 - abar, 2 - alpha, 2.0)
    if any(abs(k - bdy) < 1e-9 for bdy in boundaries):
        raise ValueError("excluded exponent")
    grid = params.get("grid") or _default_grid(rho, T=0.5)
    R = grid.R

    def eta(r, t):
        return A * r ** (k - 2) * weight_w(alpha, r, t) * weight_w(beta, R, t)

    sol = duhamel_inhom(eta, grid)
    r = grid.r[1:-1]

    def rhs_shape(rv, t):
        if k < -2 - abar:
            core = rho ** (k + 2 + abar) / rv ** (2 + abar) * weight_w(alpha, rv, t)
        elif k < 2 - alpha:
            core = rv**k * weight_w(alpha, rv, t)
        elif k < 2:
            core = rv**k * weight_w(2 - k, rv, t)
        else:
            core = rv**2 * R ** (k - 2) * weight_w(alpha, R, t)
        return A * weight_w(beta, R, t) * core

    ratios = []
    for frac in (0.25, 0.5, 1.0):
        t = frac * grid.T
        u = np.abs(sol.at(r, t))
        ratios.append(np.max(u / rhs_shape(r, t)))
    window = (r >= 4 * rho) & (r <= 40 * rho)
    fit = _fit_exponent(r[window], np.abs(sol.at(r[window], grid.T)))
    if k < -2 - abar:
        expected = -(2 + abar)
    elif k < 2:
        expected = k
    else:
        expected = 2.0
    return BoundReport(
        name="A.7-inhom-pointwise",
        params={"k": k, "alpha": alpha, "beta": beta, "rho": rho},
        worst_ratio=float(np.max(ratios)),
        calibrated_constant=None,
        passed=None,
        fit_exponent=fit,
        expected_exponent=expected,
        n_samples=int(3 * len(r)),
    )


def _check_inhom_l2(params: dict) -> BoundReport:
    """Dyadic-annulus L2 source bounds: r^6 u^2 grows as r^10 when m > 10.

    Extremal data eta = A r^p with p = 2 gives m = 2p + 8 = 12, so the source
    mass sits at outer radii.  Below it, the solution is carried by the
    regular r^2 mode, so r^6 u^2 rises as r^10, the stated power of the
    steep-source case of the bound.
    """
    p = float(params.get("p", 2.0))
    A = float(params.get("A", 1.0))
    rho = float(params.get("rho", 0.02))
    m = 2 * p + 8
    if m <= 10:
        raise ValueError("extremal check implemented for m > 10 data")
    grid = params.get("grid") or _default_grid(rho, T=0.5)
    t1 = float(params.get("t1", 0.5 * grid.T))
    R = grid.R

    sol = duhamel_inhom(lambda r, t: A * r**p, grid)
    r = grid.r[1:-1]
    times = sol.times

    # Dyadic source norms B0 (up to t1) and B1 (t1 to t2), measured.
    from scipy.integrate import quad

    def dyadic(rv, ta, tb):
        val, _ = quad(lambda s: (s**2 * A * s**p) ** 2 * s**3, rv, min(2 * rv, R))
        return val * (tb - ta)

    probe_r = np.exp(np.linspace(np.log(2 * rho), np.log(R / 2), 12))
    B0 = max(dyadic(rv, 0.0, t1) / rv**m for rv in probe_r)
    B1 = max(dyadic(rv, t1, grid.T) / rv**m for rv in probe_r)
    B = B0 + B1

    # Window a decade below the dominant source radii, deep in the
    # long-time regime t >> r^2 where the profile is steady.
    window = (r >= 2 * rho) & (r <= 0.5 * np.sqrt(grid.T))
    lhs_a = r[window] ** 6 * sol.at(r[window], grid.T) ** 2
    rhs_a = B * r[window] ** 10 * R ** (m - 10)
    expected = 10.0
    fit = _fit_exponent(r[window], lhs_a)

    # (c): space-time integral over [t1, t2] x [r1, r2].
    r1, r2 = 2 * rho, 0.5 * np.sqrt(grid.T)
    tmask = times >= t1
    rmask = (grid.r >= r1) & (grid.r <= r2)
    integrand = sol.u[np.ix_(tmask, rmask)] ** 2 * grid.r[rmask] ** 3
    lhs_c = float(
        np.trapezoid(np.trapezoid(integrand, grid.r[rmask], axis=1), times[tmask])
    )
    rhs_c = B * r2**8 * R ** (m - 8)
    return BoundReport(
        name="A.8-inhom-L2",
        params={"p": p, "m": m, "rho": rho, "t1": t1},
        worst_ratio=float(max(np.max(lhs_a / rhs_a), lhs_c / rhs_c)),
        calibrated_constant=None,
        passed=None,
        fit_exponent=fit,
        expected_exponent=expected,
        n_samples=int(window.sum()),
    )
