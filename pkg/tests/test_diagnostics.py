"""Stress-energy, weighted identity, and concentration diagnostics tests."""

import numpy as np
import pytest

from ymflow import diagnostics, flow, lattice, liealg


def random_field(L, seed, amplitude=0.2, a=1.0):
    geom = lattice.LatticeGeometry(L, a)
    rng = np.random.default_rng(seed)
    A = amplitude * rng.normal(size=(geom.n_sites, 4, 3))
    return lattice.GaugeField(geom, liealg.exp(A))


def bump_trajectory(L=8, t_end=0.5, stride=1, scale=2.0, amplitude=0.15):
    geom = lattice.LatticeGeometry(L, 1.0)
    center = (L // 2,) * 4
    U0 = flow.make_localized_bump(geom, center, scale=scale, amplitude=amplitude)
    traj = flow.run(
        flow.FlowState(U0, 0.0),
        t_end,
        flow.IntegratorConfig(dt=1 / 32),
        sample_stride=stride,
    )
    return traj, center


# -- stress-energy ----------------------------------------------------------------

def test_stress_energy_traceless_and_symmetric():
    U = random_field(4, seed=0, amplitude=0.5)
    S = diagnostics.stress_energy(lattice.clover_F(U))
    assert S.max_trace() <= 1e-12
    assert np.allclose(S.values, np.swapaxes(S.values, 1, 2), atol=1e-14)


def test_stress_energy_zero_on_flat():
    geom = lattice.LatticeGeometry(4, 1.0)
    S = diagnostics.stress_energy(
        lattice.clover_F(lattice.GaugeField.identity(geom))
    )
    assert np.allclose(S.values, 0.0)


def smooth_nonabelian_mode(L, a, eps=0.05):
    """Band-limited non-abelian connection used for refinement checks."""
    geom = lattice.LatticeGeometry(L, a)
    n = geom.site_coords
    A = np.zeros((geom.n_sites, 4, 3))
    A[:, 1, 0] = eps * np.sin(2 * np.pi * n[:, 0] / L)
    A[:, 2, 1] = eps * np.cos(2 * np.pi * n[:, 1] / L)
    A[:, 3, 2] = eps * np.sin(2 * np.pi * (n[:, 0] + n[:, 2]) / L)
    return lattice.GaugeField(geom, liealg.exp(a * A))


def test_divergence_identity_refines():
    norms = {}
    for L in (8, 16):
        U = smooth_nonabelian_mode(L, 8.0 / L)
        F = lattice.clover_F(U)
        S = diagnostics.stress_energy(F)
        _, norms[L] = diagnostics.divergence_residual(U, F, S)
    assert norms[8] / norms[16] > 1.8


# -- cutoff profile ----------------------------------------------------------------

def test_cutoff_profile_shape_and_bounds():
    prof = diagnostics.CutoffProfile(2.0)
    assert np.allclose(prof.phi([0.5, 1.0, 2.0]), 1.0)
    assert np.allclose(prof.phi([4.0, 5.0]), 0.0)
    r = np.linspace(1e-3, 5.0, 2001)
    assert np.max(np.abs(prof.dphi(r))) * prof.lam < 2.0
    assert np.max(np.abs(prof.laplacian(r))) * prof.lam**2 <= 8.0
    assert np.max(np.abs(r * prof.dphi(r))) <= 4.0
    with pytest.raises(ValueError):
        diagnostics.CutoffProfile(0.0)


# -- weighted identity --------------------------------------------------------------

def test_weighted_identity_report_fields():
    traj, center = bump_trajectory()
    rep = diagnostics.weighted_identity(traj, center, lam=1.0, tau1=0.0, tau2=0.5)
    assert rep.n_checkpoints == len(traj.checkpoints)
    assert rep.largest_term > 0
    d = rep.to_dict()
    assert d["margins"]["s_bound_satisfied"]
    assert np.isfinite(rep.relative_residual)


def test_weighted_identity_validation():
    traj, center = bump_trajectory(stride=4)
    with pytest.raises(ValueError, match="cutoff support"):
        diagnostics.weighted_identity(traj, center, lam=3.0, tau1=0.0, tau2=0.5)
    with pytest.raises(ValueError, match="insufficient sampling"):
        diagnostics.weighted_identity(traj, center, lam=1.0, tau1=0.01, tau2=0.49)


# -- curvature scale -----------------------------------------------------------------

def test_curvature_scale_nonincreasing_and_bounded():
    traj, center = bump_trajectory(t_end=1.0, stride=2)
    trace = diagnostics.curvature_scale_trace(traj, center, eps=0.05)
    lams = np.array([l for _, l in trace.samples])
    assert np.all(np.diff(lams) <= 1e-12)
    assert np.all(lams >= traj.geometry.a - 1e-12)
    assert np.all(lams <= traj.geometry.L * traj.geometry.a / 4 + 1e-12)
    with pytest.raises(ValueError):
        diagnostics.curvature_scale_trace(traj, center, eps=0.0)


def test_curvature_scale_at_time():
    traj, center = bump_trajectory(t_end=0.5, stride=2)
    lam0 = diagnostics.curvature_scale(traj, center, eps=0.05, tau=0.0)
    lam1 = diagnostics.curvature_scale(traj, center, eps=0.05, tau=0.5)
    assert lam1 <= lam0


# -- shell profiles -----------------------------------------------------------------

def test_shell_profiles_finite_and_flagged():
    traj, center = bump_trajectory()
    U = traj.checkpoints[-1][1]
    prof = diagnostics.shell_profiles(U, lattice.clover_F(U), center)
    assert prof.second_derivative_omitted
    for arr in (prof.e, prof.h, prof.f, prof.g):
        vals = arr[np.isfinite(arr)]
        assert np.all(vals >= 0)
    with pytest.raises(NotImplementedError):
        diagnostics.shell_profiles(
            U, lattice.clover_F(U), center, include_second_derivatives=True
        )


def test_shell_profiles_csv(tmp_path):
    traj, center = bump_trajectory()
    U = traj.checkpoints[0][1]
    prof = diagnostics.shell_profiles(U, lattice.clover_F(U), center)
    path = tmp_path / "shells.csv"
    prof.to_csv(path)
    assert path.read_text().splitlines()[0] == "r,e,h,f,g"


# -- local-energy comparison ----------------------------------------------------------

def test_antibubble_margins_on_dissipating_flow():
    traj, center = bump_trajectory(t_end=0.5, stride=2)
    rep = diagnostics.antibubble_check(traj, center, R=2.0, tau=0.5, t=0.25)
    assert rep.passed
    assert rep.E_sup > 0 and rep.delta_sq >= 0
    d = rep.to_dict()
    assert d["margins"]["passed"]
    with pytest.raises(ValueError):
        diagnostics.antibubble_check(traj, center, R=2.0, tau=0.25, t=0.5)


def test_antibubble_gamma_formula():
    assert diagnostics.antibubble_gamma(0.0, 1.0, 1.0, 1.0) == 0.0
    assert np.isclose(
        diagnostics.antibubble_gamma(0.5, 4.0, 1.0, 2.0),
        2 * 0.5 * (0.5 + 4 * 2.0 / 2.0),
    )


# -- decay fit -------------------------------------------------------------------------

def test_decay_fit_degenerate_on_flat():
    geom = lattice.LatticeGeometry(8, 1.0)
    traj = flow.run(
        flow.FlowState(flow.make_flat(geom), 0.0),
        1.0,
        flow.IntegratorConfig(dt=1 / 32),
        sample_stride=1,
    )
    rep = diagnostics.decay_fit(traj, (4, 4, 4, 4), R=2.0)
    assert rep.status == "degenerate"


def test_decay_fit_requires_enough_samples():
    traj, center = bump_trajectory(t_end=0.25, stride=4)
    with pytest.raises(ValueError, match="too short"):
        diagnostics.decay_fit(traj, center, R=2.0)


def test_decay_fit_finds_decay_on_bump():
    traj, center = bump_trajectory(L=16, t_end=1.5, stride=1)
    rep = diagnostics.decay_fit(traj, center, R=4.0, t_min=0.25)
    assert rep.status == "ok"
    assert rep.rate > 0
    assert rep.log_r2 > 0.9


def test_report_to_json(tmp_path):
    traj, center = bump_trajectory()
    rep = diagnostics.antibubble_check(traj, center, R=2.0, tau=0.5, t=0.0)
    path = tmp_path / "report.json"
    text = diagnostics.report_to_json(rep, path)
    assert path.read_text() == text
    assert '"margins"' in text
