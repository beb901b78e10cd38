"""Stress-energy, localized energy identities, and concentration diagnostics.

All quantities follow the both-orderings curvature norm
|F|^2 = sum_{mu,nu} |F_{mu nu}|^2 (twice the sum over ordered pairs), which
is the convention in which the stress-energy tensor is trace-free and the
weighted energy identity balances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .lattice import (
    FieldStrength,
    GaugeField,
    clover_F,
    covariant_forward_diff,
    dstar_F,
    region_energy,
)
from .flow import FlowTrajectory
from .util import pairwise_sum


def _full_field(F: FieldStrength) -> np.ndarray:
    """Antisymmetric (V, 4, 4, 3) array of clover components."""
    V = F.geometry.n_sites
    full = np.zeros((V, 4, 4, 3))
    for k, (mu, nu) in enumerate(
        [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    ):
        full[:, mu, nu, :] = F.values[:, k, :]
        full[:, nu, mu, :] = -F.values[:, k, :]
    return full


@dataclass
class StressEnergy:
    geometry: object
    values: np.ndarray  # (V, 4, 4), symmetric, trace-free

    def max_trace(self) -> float:
        return float(np.max(np.abs(np.trace(self.values, axis1=1, axis2=2))))


def stress_energy(F: FieldStrength) -> StressEnergy:
    """S_ij = sum_k <F_ik, F_jk> - (1/4) delta_ij |F|^2, per site."""
    full = _full_field(F)
    S = np.einsum("vika,vjka->vij", full, full)
    fsq = np.einsum("vkla,vkla->v", full, full)
    S -= 0.25 * fsq[:, None, None] * np.eye(4)
    return StressEnergy(F.geometry, S)


def divergence_residual(
    U: GaugeField, F: FieldStrength, S: StressEnergy
) -> tuple[np.ndarray, float]:
    """Residual of div S_j = <D*F_k, F_kj>, with central-difference div.

    Returns the per-site 4-vector field and its L^2 norm.
    """
    geom = U.geometry
    fwd, bwd = geom.neighbors
    G = dstar_F(U).values
    full = _full_field(F)
    div = np.zeros((geom.n_sites, 4))
    for i in range(4):
        div += (S.values[fwd[:, i], i, :] - S.values[bwd[:, i], i, :]) / (
            2 * geom.a
        )
    rhs = np.einsum("vka,vkja->vj", G, full)
    res = div - rhs
    norm = float(
        np.sqrt(geom.volume_element * pairwise_sum(np.sum(res**2, axis=1)))
    )
    return res, norm


class CutoffProfile:
    """Radial cutoff phi_lambda: 1 on B_lambda, 0 outside B_{2 lambda}.

    The unit profile is a raised cosine on [1, 2]; its derivative bounds
    |phi_1'| < 2, |Lap_{R^4} phi_1| <= 8, and |r phi_lambda'(r)| <= 4 are
    verified numerically at construction.
    """

    def __init__(self, lam: float):
        if not lam > 0:
            raise ValueError("cutoff scale must be positive")
        self.lam = lam
        r = np.linspace(1e-6, 2.5, 4001)
        if np.max(np.abs(self._dphi1(r))) >= 2:
            raise AssertionError("cutoff gradient bound violated")
        if np.max(np.abs(self._d2phi1(r) + 3 * self._dphi1(r) / r)) > 8:
            raise AssertionError("cutoff Laplacian bound violated")
        if np.max(np.abs(r * self._dphi1(r))) > 4:
            raise AssertionError("cutoff radial-derivative bound violated")

    @staticmethod
    def _phi1(r):
        r = np.asarray(r, dtype=float)
        u = np.clip(r - 1.0, 0.0, 1.0)
        return 0.5 * (1.0 + np.cos(np.pi * u))

    @staticmethod
    def _dphi1(r):
        r = np.asarray(r, dtype=float)
        u = r - 1.0
        inside = (u > 0) & (u < 1)
        out = np.zeros_like(r)
        out[inside] = -0.5 * np.pi * np.sin(np.pi * u[inside])
        return out

    @staticmethod
    def _d2phi1(r):
        r = np.asarray(r, dtype=float)
        u = r - 1.0
        inside = (u > 0) & (u < 1)
        out = np.zeros_like(r)
        out[inside] = -0.5 * np.pi**2 * np.cos(np.pi * u[inside])
        return out

    def phi(self, r):
        return self._phi1(np.asarray(r, dtype=float) / self.lam)

    def dphi(self, r):
        return self._dphi1(np.asarray(r, dtype=float) / self.lam) / self.lam

    def laplacian(self, r):
        """4D Laplacian phi'' + 3 phi'/r."""
        r = np.asarray(r, dtype=float)
        s = r / self.lam
        with np.errstate(divide="ignore", invalid="ignore"):
            lap = (
                self._d2phi1(s) + 3 * np.where(s > 0, self._dphi1(s) / np.where(s > 0, s, 1), 0.0)
            ) / self.lam**2
        return lap


@dataclass
class WeightedIdentityReport:
    lam: float
    tau1: float
    tau2: float
    lhs_energy: float
    dissipation_w: float
    rhs_energy: float
    s_quantity: float
    residual: float
    largest_term: float
    annulus_energy_t: float
    cutoff_constant: float
    n_checkpoints: int

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / self.largest_term if self.largest_term else 0.0

    def to_dict(self) -> dict:
        return {
            "inputs": {"lambda": self.lam, "tau1": self.tau1, "tau2": self.tau2,
                       "n_checkpoints": self.n_checkpoints},
            "terms": {
                "lhs_energy": self.lhs_energy,
                "dissipation_w": self.dissipation_w,
                "rhs_energy": self.rhs_energy,
                "s_quantity": self.s_quantity,
            },
            "residuals": {
                "residual": self.residual,
                "relative_residual": self.relative_residual,
            },
            "margins": {
                "annulus_energy_t": self.annulus_energy_t,
                "cutoff_constant": self.cutoff_constant,
                "s_bound_satisfied": abs(self.s_quantity)
                <= self.cutoff_constant * self.annulus_energy_t + 1e-12,
            },
        }


def weighted_identity(
    traj: FlowTrajectory, center, lam: float, tau1: float, tau2: float
) -> WeightedIdentityReport:
    """Evaluate the localized r^2-weighted energy identity on checkpoints.

    lhs(tau2) + 2 int int |D*F|^2 phi r^2 = rhs(tau1) + S(lam, tau1, tau2)
    with S = 2 int int X^i X^j S_ij Lap(phi_lambda).  Time integrals use the
    trapezoid rule over the stored checkpoints.
    """
    geom = traj.geometry
    if 2 * lam > geom.L * geom.a / 4 + 1e-12:
        raise ValueError("cutoff support exceeds L*a/4")
    points = traj.checkpoint_between(tau1, tau2)
    if len(points) < 2 or abs(points[0][0] - tau1) > 1e-9 or abs(
        points[-1][0] - tau2
    ) > 1e-9:
        raise ValueError("insufficient sampling")

    cutoff = CutoffProfile(lam)
    dist = geom.distances(center)
    disp = geom.displacements(center)
    phi = cutoff.phi(dist)
    lap = cutoff.laplacian(dist)
    w = phi * dist**2

    times, e_w, d_w, s_w, ann = [], [], [], [], []
    annulus = (dist >= lam) & (dist < 2 * lam)
    for t, U in points:
        F = clover_F(U)
        fsq = np.sum(F.values**2, axis=(1, 2))
        G = dstar_F(U)
        gsq = G.norm_sq_density()
        S = stress_energy(F)
        xxs = np.einsum("vi,vj,vij->v", disp, disp, S.values)
        ve = geom.volume_element
        times.append(t)
        e_w.append(ve * pairwise_sum(fsq * w))
        d_w.append(ve * pairwise_sum(gsq * w))
        s_w.append(ve * pairwise_sum(xxs * lap))
        ann.append(ve * pairwise_sum(np.where(annulus, fsq, 0.0)))

    times = np.array(times)
    dissipation_w = 2.0 * float(np.trapezoid(np.array(d_w), times))
    s_quantity = 2.0 * float(np.trapezoid(np.array(s_w), times))
    annulus_energy_t = float(np.trapezoid(np.array(ann), times))
    lhs, rhs = e_w[-1], e_w[0]
    residual = lhs + dissipation_w - rhs - s_quantity
    largest = max(abs(lhs), abs(rhs), abs(dissipation_w), abs(s_quantity))
    # |2 x_i x_j S_ij| <= 2 r^2 |S|_op <= 4 r^2 (energy density), so the
    # annulus bound on S uses 4 max |r^2 Lap(phi)|.
    rgrid = dist[annulus]
    cutoff_constant = 4.0 * float(
        np.max(np.abs(rgrid**2 * cutoff.laplacian(rgrid)), initial=0.0)
    )
    return WeightedIdentityReport(
        lam=lam,
        tau1=tau1,
        tau2=tau2,
        lhs_energy=lhs,
        dissipation_w=dissipation_w,
        rhs_energy=rhs,
        s_quantity=s_quantity,
        residual=residual,
        largest_term=largest,
        annulus_energy_t=annulus_energy_t,
        cutoff_constant=cutoff_constant,
        n_checkpoints=len(points),
    )


@dataclass
class CurvatureScaleTrace:
    """Curvature scale lambda(tau) evaluated retrospectively on checkpoints."""

    eps: float
    radii: np.ndarray
    samples: list  # [(tau, lambda(tau))]
    shell_table: np.ndarray  # (n_checkpoints, n_radii)
    times: np.ndarray

    def to_dict(self) -> dict:
        return {
            "inputs": {"eps": self.eps, "radii": self.radii.tolist()},
            "samples": [[t, l] for t, l in self.samples],
        }


def _shell_table(traj: FlowTrajectory, center, radii) -> np.ndarray:
    table = np.empty((len(traj.checkpoints), len(radii)))
    for i, (_, U) in enumerate(traj.checkpoints):
        F = clover_F(U)
        for j, rho in enumerate(radii):
            table[i, j] = 2.0 * region_energy(
                F, center, rho / 2, rho, warn_wrap=False
            )
    return table


def curvature_scale_trace(
    traj: FlowTrajectory, center, eps: float
) -> CurvatureScaleTrace:
    """lambda(tau) for every checkpoint time tau.

    lambda(tau) is the minimal grid radius such that every dyadic shell
    (rho/2, rho) with rho > lambda holds less than eps of both-orderings
    energy at every sampled t >= tau; the largest allowed radius L*a/4
    stands in for the vacuous case and the smallest grid radius for 0.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    geom = traj.geometry
    r_max = geom.L * geom.a / 4
    radii = geom.a * np.arange(1, int(np.floor(r_max / geom.a)) + 1)
    table = _shell_table(traj, center, radii)
    times = traj.checkpoint_times()
    samples = []
    # Suffix-max over time gives sup_{t >= tau} per shell in one pass.
    suffix = np.maximum.accumulate(table[::-1], axis=0)[::-1]
    for i, tau in enumerate(times):
        bad = suffix[i] >= eps
        if not bad.any():
            lam = float(radii[0])
        elif bad[-1]:
            lam = float(r_max)
        else:
            lam = float(radii[np.max(np.nonzero(bad)[0])])
        samples.append((float(tau), lam))
    return CurvatureScaleTrace(
        eps=eps, radii=radii, samples=samples, shell_table=table, times=times
    )


def curvature_scale(traj: FlowTrajectory, center, eps: float, tau: float) -> float:
    trace = curvature_scale_trace(traj, center, eps)
    for t, lam in trace.samples:
        if t >= tau - 1e-12:
            return lam
    return trace.samples[-1][1]


@dataclass
class ShellProfiles:
    radii: np.ndarray
    e: np.ndarray
    h: np.ndarray
    f: np.ndarray
    g: np.ndarray
    include_second_derivatives: bool
    second_derivative_omitted: bool = True

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["r", "e", "h", "f", "g"])
            for i in range(len(self.radii)):
                writer.writerow(
                    [self.radii[i], self.e[i], self.h[i], self.f[i], self.g[i]]
                )


def shell_profiles(
    U: GaugeField,
    F: FieldStrength,
    center,
    include_second_derivatives: bool = False,
) -> ShellProfiles:
    """Shell quantities e, h, f, g versus radius around ``center``.

    e = r^2 sup(|F| + r|grad F|),  h = r sup(|D*F| + r|grad D*F|),
    f^2 = r^4 int_{S^3_r} |F|^2 dTheta,  g^2 = r^2 int_{S^3_r} |D*F|^2 dTheta,
    with forward covariant differences for the gradients.  The second
    covariant derivative term in e is omitted by default (noise-dominated at
    desk resolution) and flagged in the result.
    """
    if include_second_derivatives:
        raise NotImplementedError("second covariant derivatives not implemented")
    geom = U.geometry
    dist = geom.distances(center)
    G = dstar_F(U)

    f_abs = np.sqrt(2.0 * np.sum(F.values**2, axis=(1, 2)))
    g_abs = np.sqrt(np.sum(G.values**2, axis=(1, 2)))

    gradF_sq = np.zeros(geom.n_sites)
    for mu in range(4):
        for k in range(6):
            d = covariant_forward_diff(U, F.values[:, k, :], mu)
            gradF_sq += 2.0 * np.sum(d**2, axis=1)
    gradG_sq = np.zeros(geom.n_sites)
    for mu in range(4):
        for nu in range(4):
            d = covariant_forward_diff(U, G.values[:, nu, :], mu)
            gradG_sq += np.sum(d**2, axis=1)
    gradF = np.sqrt(gradF_sq)
    gradG = np.sqrt(gradG_sq)

    r_max = geom.L * geom.a / 4
    radii = geom.a * np.arange(1, int(np.floor(r_max / geom.a)) + 1)
    e = np.full(len(radii), np.nan)
    h = np.full(len(radii), np.nan)
    f = np.full(len(radii), np.nan)
    g = np.full(len(radii), np.nan)
    for j, r in enumerate(radii):
        mask = (dist >= r - geom.a / 2) & (dist < r + geom.a / 2)
        if not mask.any():
            continue
        e[j] = r**2 * np.max(f_abs[mask] + r * gradF[mask])
        h[j] = r * np.max(g_abs[mask] + r * gradG[mask])
        # Surface integrals: dV ~ a * dS on a shell of width a.
        f[j] = np.sqrt(
            r**4 * geom.a**3 * pairwise_sum(np.where(mask, f_abs**2, 0.0)) / r**3
        )
        g[j] = np.sqrt(
            r**2 * geom.a**3 * pairwise_sum(np.where(mask, g_abs**2, 0.0)) / r**3
        )
    return ShellProfiles(
        radii=radii,
        e=e,
        h=h,
        f=f,
        g=g,
        include_second_derivatives=False,
    )


@dataclass
class AntibubbleReport:
    R: float
    tau: float
    t: float
    E_sup: float
    delta_sq: float
    gamma: float
    forward_margin: float
    backward_margin: float

    @property
    def passed(self) -> bool:
        return self.forward_margin >= 0 and self.backward_margin >= 0

    def to_dict(self) -> dict:
        return {
            "inputs": {"R": self.R, "tau": self.tau, "t": self.t},
            "terms": {
                "E_sup": self.E_sup,
                "delta_sq": self.delta_sq,
                "gamma": self.gamma,
            },
            "margins": {
                "forward": self.forward_margin,
                "backward": self.backward_margin,
                "passed": self.passed,
            },
        }


def antibubble_gamma(delta: float, tau: float, E: float, R: float) -> float:
    """gamma = 2 delta (delta + 4 sqrt(tau E) / R)."""
    return 2.0 * delta * (delta + 4.0 * np.sqrt(tau * E) / R)


def antibubble_check(
    traj: FlowTrajectory, center, R: float, tau: float, t: float
) -> AntibubbleReport:
    """Two-sided local-energy comparison between times t and tau <= tau.

    E is the sup of the B_R energy over sampled times in [0, tau]; delta^2 is
    the dissipation int int_{B_R} |D*F|^2 over [0, tau] (trapezoid on
    checkpoints); the inequalities compare B_{R/2} and B_R energies at t and
    tau with slack gamma.
    """
    if not 0 <= t <= tau + 1e-12:
        raise ValueError("need 0 <= t <= tau")
    geom = traj.geometry
    points = traj.checkpoint_between(0.0, tau)
    if not points:
        raise ValueError("no checkpoints in [0, tau]")
    dist = geom.distances(center)
    inside = dist < R

    ball_R, ball_half, diss = [], [], []
    times = []
    for tc, U in points:
        F = clover_F(U)
        ball_R.append(2.0 * region_energy(F, center, 0.0, R, warn_wrap=False))
        ball_half.append(
            2.0 * region_energy(F, center, 0.0, R / 2, warn_wrap=False)
        )
        G = dstar_F(U)
        diss.append(
            geom.volume_element
            * pairwise_sum(np.where(inside, G.norm_sq_density(), 0.0))
        )
        times.append(tc)
    times = np.array(times)
    E_sup = float(np.max(ball_R))
    delta_sq = float(np.trapezoid(np.array(diss), times))
    gamma = antibubble_gamma(np.sqrt(delta_sq), tau, E_sup, R)

    def at(arr, tt):
        i = int(np.argmin(np.abs(times - tt)))
        return arr[i]

    fwd_margin = at(ball_R, t) + gamma - at(ball_half, tau)
    bwd_margin = at(ball_R, tau) + gamma - at(ball_half, t)
    return AntibubbleReport(
        R=R,
        tau=tau,
        t=t,
        E_sup=E_sup,
        delta_sq=delta_sq,
        gamma=gamma,
        forward_margin=float(fwd_margin),
        backward_margin=float(bwd_margin),
    )


@dataclass
class DecayFitReport:
    R: float
    status: str  # "ok" | "no-decay" | "degenerate"
    rate: float
    floor: float
    amplitude: float
    log_r2: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "inputs": {"R": self.R, "n_samples": self.n_samples},
            "fit": {
                "status": self.status,
                "rate": self.rate,
                "floor": self.floor,
                "amplitude": self.amplitude,
                "log_r2": self.log_r2,
            },
        }


def decay_fit(
    traj: FlowTrajectory, center, R: float, t_min: float = 0.0
) -> DecayFitReport:
    """Fit the B_{R/2} energy to A exp(-c t / R^2) + B over checkpoints.

    ``t_min`` discards an initial transient, where higher modes make the
    single-exponential model a poor fit.
    """
    from scipy.optimize import curve_fit

    times = traj.checkpoint_times()
    y = np.array(
        [
            2.0 * region_energy(clover_F(U), center, 0.0, R / 2, warn_wrap=False)
            for _, U in traj.checkpoints
        ]
    )
    keep = times >= t_min - 1e-12
    times, y = times[keep], y[keep]
    n = len(y)
    if n < 20:
        raise ValueError("trajectory too short for decay fit")
    if np.max(y) < 1e-14:
        return DecayFitReport(R, "degenerate", 0.0, 0.0, 0.0, 1.0, n)
    if y[-1] > 0.99 * y[0]:
        return DecayFitReport(R, "no-decay", 0.0, float(y[-1]), 0.0, 0.0, n)

    def model(t, A, c, B):
        return A * np.exp(-c * t / R**2) + B

    try:
        p0 = (y[0] - y[-1], 1.0, y[-1])
        popt, _ = curve_fit(
            model,
            times,
            y,
            p0=p0,
            bounds=([0, 0, 0], [np.inf, np.inf, np.inf]),
            maxfev=20000,
        )
    except Exception:
        return DecayFitReport(R, "no-decay", 0.0, float(y[-1]), 0.0, 0.0, n)
    A, c, B = popt
    # Fit quality on the log of the decaying part, above the floor.
    mask = (y - B) > 0.02 * max(A, 1e-300)
    if mask.sum() >= 3 and A > 0 and c > 0:
        logy = np.log(y[mask] - B)
        pred = np.log(A) - c * times[mask] / R**2
        ss_res = float(np.sum((logy - pred) ** 2))
        ss_tot = float(np.sum((logy - np.mean(logy)) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    else:
        r2 = 0.0
    status = "ok" if c > 0 else "no-decay"
    return DecayFitReport(R, status, float(c), float(B), float(A), float(r2), n)


def report_to_json(report, path=None) -> str:
    text = json.dumps(report.to_dict(), indent=2)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
