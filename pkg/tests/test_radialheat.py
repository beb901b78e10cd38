"""Radial heat solver, comparison functions, and bound-shape tests."""

import json
import os

import numpy as np
import pytest
from scipy.integrate import quad

from ymflow import radialheat as rh


def make_grid(rho, R, N, T=0.25, spacing="log", safety=8.0):
    if spacing == "log":
        r = np.exp(np.linspace(np.log(rho), np.log(R), N))
    else:
        r = np.linspace(rho, R, N)
    dr = r[1] - r[0]
    steps = max(int(np.ceil(T / (safety * dr**2))), 4)
    return rh.RadialGrid(rho, R, N, T / steps, T, spacing)


# -- grid and operator validation ---------------------------------------------------

def test_grid_validation():
    with pytest.raises(ValueError):
        rh.RadialGrid(1.0, 0.5, 128, 1e-4, 0.1)
    with pytest.raises(ValueError):
        rh.RadialGrid(0.5, 1.0, 32, 1e-4, 0.1)
    with pytest.raises(ValueError):
        rh.RadialGrid(0.5, 1.0, 128, 0.2, 0.1)
    with pytest.raises(ValueError):
        rh.RadialGrid(0.5, 1.0, 128, 1e-4, 0.1, "chebyshev")
    with pytest.raises(ValueError):  # dt too large for the spacing
        rh.RadialGrid(0.5, 1.0, 128, 0.05, 0.1)


def test_operator_validation():
    with pytest.raises(ValueError):
        rh.RadialOperator(0.5, 0.0)
    with pytest.raises(ValueError):
        rh.RadialOperator(2.0, -1.0)
    assert rh.SQUARE_OPERATOR.n == 2.0 and rh.SQUARE_OPERATOR.c == 4.0


def test_grid_coordinates():
    g = make_grid(0.5, 2.0, 128)
    assert np.isclose(g.r[0], 0.5) and np.isclose(g.r[-1], 2.0)
    gu = make_grid(0.5, 2.0, 128, spacing="uniform")
    assert np.allclose(np.diff(gu.r), gu.r[1] - gu.r[0])


# -- solver accuracy -----------------------------------------------------------------

@pytest.mark.parametrize("spacing", ["log", "uniform"])
def test_manufactured_solution_second_order(spacing):
    """u* = r^2 e^{-t} with matching source; error drops ~4x per refinement."""
    op = rh.RadialOperator(3.0, 1.0)
    coef = 2.0 * op.n - op.c

    def u_star(r, t):
        return r**2 * np.exp(-t)

    errors = []
    for N in (96, 192):
        g = make_grid(0.5, 2.0, N, T=0.2, spacing=spacing)
        sol = rh.fd_solve(
            g,
            op,
            phi=lambda r: u_star(r, 0.0),
            psi=lambda t: u_star(g.rho, t),
            xi=lambda t: u_star(g.R, t),
            eta=lambda r, t: (-(r**2) - coef) * np.exp(-t),
        )
        exact = u_star(g.r[None, :], g.times[:, None])
        errors.append(np.max(np.abs(sol.u - exact)))
    assert errors[0] / errors[1] > 3.0


def test_square_operator_reduces_to_dimension_six():
    """u solves the (2,4) problem iff u / r^2 solves the 6-dim radial heat
    equation: check by transporting one solution to the other."""
    g = make_grid(0.5, 1.0, 192, T=0.05)
    sol6 = rh.fd_solve(
        g, rh.RadialOperator(6.0, 0.0), phi=lambda r: np.sin(np.pi * r),
        psi=lambda t: np.sin(np.pi * g.rho) * np.ones(np.shape(t)),
        xi=0.0,
    )
    sol24 = rh.fd_solve(
        g, rh.SQUARE_OPERATOR, phi=lambda r: r**2 * np.sin(np.pi * r),
        psi=lambda t: g.rho**2 * np.sin(np.pi * g.rho) * np.ones(np.shape(t)),
        xi=0.0,
    )
    assert np.max(np.abs(sol24.u - g.r[None, :] ** 2 * sol6.u)) < 2e-4


def test_solution_interpolation():
    g = make_grid(0.5, 1.0, 128, T=0.1)
    sol = rh.fd_solve(g, rh.RadialOperator(3.0, 0.0), phi=lambda r: r)
    val = sol.at(0.7, 0.05)
    assert np.isfinite(val)
    with pytest.raises(ValueError):
        sol.at(0.3, 0.05)  # outside the annulus


def test_steady_state_error_refines():
    errs = [
        rh._steady_state_error(make_grid(0.25, 1.0, N), 6.0, "inner")
        for N in (128, 256)
    ]
    assert errs[0] / errs[1] > 3.0


# -- special functions ----------------------------------------------------------------

def test_weight_w():
    assert rh.weight_w(2.0, 1.0, 0.0) == 1.0
    assert np.isclose(rh.weight_w(2.0, 1.0, 1.0), 0.5)
    with pytest.raises(ValueError):
        rh.weight_w(1.0, 0.0, 0.0)


def test_wintegral_matches_quadrature():
    for a, r, t1, t2 in [(0.5, 1.3, 0.1, 2.0), (2.0, 0.4, 0.0, 1.0),
                         (1.0, 2.0, 0.5, 3.0)]:
        exact = rh.wintegral(a, r, t1, t2)
        num, _ = quad(lambda t: rh.weight_w(2 * a, r, t), t1, t2,
                      epsabs=1e-14, epsrel=1e-13)
        assert abs(exact - num) <= 1e-10 * abs(num)
    with pytest.raises(ValueError):
        rh.wintegral(1.0, 1.0, 2.0, 1.0)


def test_erf_pair_conventions_and_accuracy():
    x = np.array([0.5, 1.0, 2.0, 5.0])
    erf, erfc = rh.erf_pair(x)
    assert np.allclose(erf + erfc, 2.0 - erfc + erfc)  # erf = erfc(-x)
    e0, _ = rh.erf_pair(0.0)
    assert np.isclose(e0, 1.0)
    # erfc against direct quadrature of the Gaussian tail.
    for xv in x:
        num, _ = quad(
            lambda s: 2 / np.sqrt(np.pi) * np.exp(-s * s), xv, np.inf,
            epsabs=1e-16,
        )
        assert abs(rh.erf_pair(xv)[1] - num) <= 1e-12 * max(num, 1e-12)


def test_erfc_sandwich():
    for x in (0.5, 1.0, 2.0, 5.0):
        lower, mid, upper = rh.erfc_sandwich(x)
        assert lower <= mid <= upper
    with pytest.raises(ValueError):
        rh.erfc_sandwich(0.0)


def test_comparison_h_boundary_values():
    assert np.isclose(rh.comparison_h(1.0, 6.0, "outer", 4.0), 1.0)
    assert np.isclose(rh.comparison_h(4.0, 6.0, "outer", 4.0), 0.0)
    assert np.isclose(rh.comparison_h(0.25, 6.0, "inner", 0.25), 0.0)
    assert np.isclose(rh.comparison_h(1.0, 6.0, "inner", 0.25), 1.0)
    with pytest.raises(ValueError):
        rh.comparison_h(1.0, 2.0, "outer", 4.0)
    with pytest.raises(ValueError):
        rh.comparison_h(1.0, 6.0, "radial", 4.0)


# -- heat-up sandwiches (coarse) -------------------------------------------------------

def test_u1_sandwich_coarse():
    g = make_grid(1.0, 4.0, 512, T=0.5)
    _, rep = rh.u1_verify(6.0, 4.0, g)
    assert rep.passed
    with pytest.raises(ValueError):
        rh.u1_verify(2.0, 4.0, g)


def test_v1_sandwich_coarse():
    g = make_grid(0.25, 1.0, 512, T=0.5, spacing="uniform", safety=10.0)
    _, rep = rh.v1_verify(6.0, 0.25, g)
    assert rep.passed
    with pytest.raises(ValueError):
        rh.v1_verify(6.0, 0.75, g)


def test_heatup_below_harmonic_profile():
    """Comparison principle: the heat-up solutions stay below the harmonic
    steady profile up to the discretization error."""
    g = make_grid(1.0, 4.0, 256, T=0.5)
    sol = rh.u1_solution(6.0, 4.0, g, store_every=50)
    h = rh.comparison_h(g.r, 6.0, "outer", 4.0)
    err = rh._steady_state_error(g, 6.0, "outer")
    assert np.max(sol.u - h[None, :]) <= 5 * err


def test_solution_grid_mismatch_raises():
    g = make_grid(0.5, 2.0, 128)
    with pytest.raises(ValueError):
        rh.u1_solution(6.0, 4.0, g)
    with pytest.raises(ValueError):
        rh.v1_solution(6.0, 0.25, g)


# -- Duhamel construction ---------------------------------------------------------------

def test_duhamel_requires_log_grid_and_kernels():
    g = make_grid(0.25, 1.0, 128, spacing="uniform")
    with pytest.raises(ValueError, match="log-spaced"):
        rh.precompute_kernels(g)
    gl = make_grid(0.25, 1.0, 128)
    with pytest.raises(ValueError, match="kernel"):
        rh.duhamel_boundary("inner", gl, lambda t: 1.0, None)
    with pytest.raises(ValueError, match="kernel"):
        rh.duhamel_boundary(
            "outer", gl, lambda t: 1.0, rh.precompute_kernels(gl, ("inner",))
        )


def test_duhamel_matches_direct_inner_boundary():
    g = make_grid(0.25, 1.0, 192, T=0.25)
    kernels = rh.precompute_kernels(g, ("inner",))
    signal = lambda t: 1.0 - np.exp(-8.0 * t)
    dh = rh.duhamel_boundary("inner", g, signal, kernels)
    direct = rh.fd_solve(g, rh.SQUARE_OPERATOR, psi=signal, xi=0.0)
    scale = np.max(np.abs(direct.u))
    assert np.max(np.abs(dh.u - direct.u)) <= 1e-3 * scale


def test_duhamel_inhomogeneous_matches_direct():
    g = make_grid(0.25, 1.0, 192, T=0.25)
    eta = lambda r, t: r * np.exp(-t)
    dh = rh.duhamel_inhom(eta, g)
    direct = rh.fd_solve(g, rh.SQUARE_OPERATOR, eta=eta)
    scale = np.max(np.abs(direct.u))
    assert np.max(np.abs(dh.u - direct.u)) <= 1e-3 * scale


# -- heat kernel -------------------------------------------------------------------------

def test_heat_kernel_mass_and_envelope():
    g = make_grid(0.05, 1.0, 128, T=0.1)
    sol = rh.heat_kernel_column(6.0, 0.05, 1.0, g, 0.3)
    # The delta column integrates to ~1 against r^{n-1} dr at t=0.
    mass0 = np.trapezoid(sol.phi * g.r**5, g.r)
    assert np.isclose(mass0, 1.0, rtol=0.05)
    rep = rh.kernel_bound_check(
        6.0, 0.05, 1.0, [(0.2, 0.3, 0.02), (0.4, 0.3, 0.05)], g
    )
    assert rep.worst_ratio < 10.0
    with pytest.raises(ValueError):
        rh.heat_kernel_column(6.0, 0.05, 1.0, g, 0.05)


# -- integral lemma -----------------------------------------------------------------------

def test_holder_wide_interval_limit():
    """a=b=c=d=0 with an interval much wider than sqrt(t): the Gaussian
    integral gives 2 sqrt(pi) while the case-table shape tends to 1."""
    rep = rh.holder_bound(0, 0, 0, 0, s=50.0, r1=30.0, r2=70.0, t=1.0)
    assert np.isclose(rep.worst_ratio, 2 * np.sqrt(np.pi), rtol=0.05)


def test_holder_validation():
    with pytest.raises(ValueError):
        rh.holder_bound(-1, 0, 0, 0, 1, 1, 2, t=1.0)
    with pytest.raises(ValueError):
        rh.holder_bound(0, 0, 0, 0, 1, 2, 1, t=1.0)
    with pytest.raises(ValueError):
        rh.holder_bound(0, 0, 0, 0, 1, 1, 2)
    with pytest.raises(ValueError):
        rh.holder_bound(0, 0, 0, 0, 1, 1, 2, t_pair=(0.0, 1.0))  # a+d <= 1
    with pytest.raises(ValueError):
        rh.holder_bound(1, 0, 0, 1, 1, 1, 2, t_pair=(1.0, 0.5))


def test_holder_sweep_deterministic():
    r1 = rh.holder_sweep((0, 0, 0, 0), n_samples=20, seed=7)
    r2 = rh.holder_sweep((0, 0, 0, 0), n_samples=20, seed=7)
    assert r1.worst_ratio == r2.worst_ratio
    assert r1.n_samples == 20


# -- proposition checks ---------------------------------------------------------------------

def test_appendix_prop_dispatch_and_validation():
    with pytest.raises(ValueError):
        rh.appendix_prop_check("A.9", {})
    with pytest.raises(ValueError):
        rh.appendix_prop_check("A.2-initial", {"k": 3.0})
    with pytest.raises(ValueError):
        rh.appendix_prop_check("A.7-inhom-pointwise", {"alpha": 1.0})
    with pytest.raises(ValueError):
        rh.appendix_prop_check("A.7-inhom-pointwise", {"k": 2.0, "alpha": 0.0})
    with pytest.raises(ValueError):
        rh.appendix_prop_check("A.8-inhom-L2", {"p": -1.0})


# -- calibration store -----------------------------------------------------------------------

def test_calibration_store_roundtrip(tmp_path):
    path = tmp_path / "cal.json"
    store = rh.CalibrationStore(path)
    store.set("check", {"n": 6}, 2.5)
    store.save()
    again = rh.CalibrationStore(path)
    assert again.get("check", {"n": 6}) == 2.5
    assert again.get("check", {"n": 7}) is None
    assert again.data["version"] == rh.CALIBRATION_VERSION


def test_shipped_calibrations_present():
    path = os.path.join(
        os.path.dirname(rh.__file__), "data", "calibrations.json"
    )
    store = rh.CalibrationStore(path)
    assert store.data["version"] == rh.CALIBRATION_VERSION
    proxy = store.get(
        "epsilon0-proxy", {"lattice": 16, "R": 4.0, "scale": 2.0}
    )
    assert proxy is not None and proxy > 0
    assert store.get(
        "holder-single-time", {"a": 0, "b": 0, "c": 0, "d": 0}
    ) >= 2 * np.sqrt(np.pi) * 0.9
