"""Reproducible experiment runner.

Subcommands: flow-run, diagnose, radial-verify, convergence.  Every run reads
a key=value config file (optionally overridden on the command line), writes
plain CSV/JSON artifacts plus a manifest, and is bitwise deterministic for a
fixed config and seed.

Exit codes: 0 all checks pass, 1 check failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__, diagnostics, flow, lattice, radialheat


class ConfigError(Exception):
    pass


def parse_config_text(text: str) -> dict:
    """key = value lines; values parsed as JSON when possible, else strings."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        try:
            cfg[key] = json.loads(value)
        except json.JSONDecodeError:
            cfg[key] = value
    return cfg


def load_config(path, overrides) -> dict:
    cfg = {}
    if path:
        with open(path) as fh:
            cfg.update(parse_config_text(fh.read()))
    for item in overrides or []:
        cfg.update(parse_config_text(item))
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _require(cfg: dict, keys) -> list:
    return [k for k in keys if k not in cfg]


def _center(cfg: dict, L: int):
    c = cfg.get("center")
    if c is None:
        return (L // 2,) * 4
    if isinstance(c, str):
        return tuple(float(x) for x in c.split(","))
    return tuple(c)


class Manifest:
    def __init__(self, out_dir: str, command: str, cfg: dict):
        self.out_dir = out_dir
        self.data = {
            "command": command,
            "config": cfg,
            "config_hash": config_hash(cfg),
            "version": __version__,
            "calibration_version": radialheat.CALIBRATION_VERSION,
            "start": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "end": None,
            "files": [],
            "status": "running",
            "failure": None,
        }

    def emit(self, name: str, text: str) -> None:
        path = os.path.join(self.out_dir, name)
        with open(path, "w") as fh:
            fh.write(text)
        self.data["files"].append(name)

    def add_file(self, name: str) -> None:
        self.data["files"].append(name)

    def close(self, status: str, failure: str | None = None) -> None:
        self.data["status"] = status
        self.data["failure"] = failure
        self.data["end"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)


# -- subcommands ---------------------------------------------------------------

def cmd_flow_run(cfg: dict, manifest: Manifest) -> int:
    missing = _require(cfg, ["L", "a", "dt", "t_end", "initial"])
    if missing:
        raise ConfigError("missing keys: " + ", ".join(missing))
    geom = lattice.LatticeGeometry(int(cfg["L"]), float(cfg["a"]))
    kind = cfg["initial"]
    params = {}
    if kind == "random-smooth":
        if "seed" not in cfg:
            raise ConfigError("random-smooth initial data requires a seed")
        params = {
            "seed": int(cfg["seed"]),
            "amplitude": float(cfg.get("amplitude", 0.1)),
            "correlation_length": float(cfg.get("correlation_length", 2.0)),
        }
    elif kind == "localized-bump":
        params = {
            "center": _center(cfg, geom.L),
            "scale": float(cfg.get("scale", 2.0 * geom.a)),
            "amplitude": float(cfg.get("amplitude", 0.1)),
        }
    U0 = flow.make_initial(kind, geom, **params)
    icfg = flow.IntegratorConfig(
        scheme=cfg.get("scheme", "rk3-lie"), dt=float(cfg["dt"])
    )
    traj = flow.run(
        flow.FlowState(U0, 0.0),
        float(cfg["t_end"]),
        icfg,
        sample_stride=int(cfg.get("sample_stride", 1)),
    )
    traj.to_csv(os.path.join(manifest.out_dir, "trajectory.csv"))
    manifest.add_file("trajectory.csv")
    for i, (t, U) in enumerate(traj.checkpoints):
        name = f"checkpoint_{i:06d}.ymf"
        lattice.write_checkpoint(os.path.join(manifest.out_dir, name), U, t)
        manifest.add_file(name)
    return 0


def _load_trajectory(ckpt_dir: str) -> flow.FlowTrajectory:
    names = sorted(
        n for n in os.listdir(ckpt_dir) if n.endswith(".ymf")
    )
    if not names:
        raise ConfigError(f"no checkpoints in {ckpt_dir}")
    checkpoints = []
    for n in names:
        U, t = lattice.read_checkpoint(os.path.join(ckpt_dir, n))
        checkpoints.append((t, U))
    checkpoints.sort(key=lambda p: p[0])
    geom = checkpoints[0][1].geometry
    times = np.array([t for t, _ in checkpoints])
    energies = np.array([lattice.wilson_energy(U)[1] for _, U in checkpoints])
    return flow.FlowTrajectory(
        geometry=geom,
        times=times,
        energies=energies,
        dissipation_cum=np.zeros_like(times),
        checkpoints=checkpoints,
    )


def cmd_diagnose(cfg: dict, manifest: Manifest) -> int:
    missing = _require(cfg, ["checkpoints", "reports"])
    if missing:
        raise ConfigError("missing keys: " + ", ".join(missing))
    traj = _load_trajectory(cfg["checkpoints"])
    center = _center(cfg, traj.geometry.L)
    reports = cfg["reports"]
    if isinstance(reports, str):
        reports = [x.strip() for x in reports.split(",")]
    failed = False
    for name in reports:
        if name == "weighted-identity":
            rep = diagnostics.weighted_identity(
                traj,
                center,
                lam=float(cfg["lambda"]),
                tau1=float(cfg.get("tau1", traj.times[0])),
                tau2=float(cfg.get("tau2", traj.times[-1])),
            )
            tol = cfg.get("residual_tol")
            if tol is not None and rep.relative_residual > float(tol):
                failed = True
        elif name == "curvature-scale":
            rep = diagnostics.curvature_scale_trace(
                traj, center, eps=float(cfg.get("eps", 0.02 * traj.energies[0]))
            )
        elif name == "antibubble":
            rep = diagnostics.antibubble_check(
                traj,
                center,
                R=float(cfg["R"]),
                tau=float(cfg.get("tau", traj.times[-1])),
                t=float(cfg.get("t", traj.times[0])),
            )
            if not rep.passed:
                failed = True
        elif name == "decay-fit":
            rep = diagnostics.decay_fit(
                traj, center, R=float(cfg["R"]),
                t_min=float(cfg.get("t_min", 0.0)),
            )
            if rep.status != "ok":
                failed = True
        else:
            raise ConfigError(f"unknown report {name!r}")
        manifest.emit(name + ".json", diagnostics.report_to_json(rep))
    return 1 if failed else 0


def _make_grid(cfg: dict, rho: float, R: float) -> radialheat.RadialGrid:
    N = int(cfg.get("N", 512))
    T = float(cfg.get("T", 0.5))
    spacing = cfg.get("spacing", "log")
    if spacing == "log":
        coord = np.exp(np.linspace(np.log(rho), np.log(R), N))
    else:
        coord = np.linspace(rho, R, N)
    dr_min = coord[1] - coord[0]
    steps = max(int(np.ceil(T / (8 * dr_min**2))), 4)
    return radialheat.RadialGrid(rho, R, N, T / steps, T, spacing)


def cmd_radial_verify(cfg: dict, manifest: Manifest) -> int:
    lemma = cfg.get("lemma")
    if lemma is None:
        raise ConfigError("missing key: lemma")
    failed = False
    if lemma == "u1":
        n, R = float(cfg.get("n", 6.0)), float(cfg.get("R", 4.0))
        grid = _make_grid(cfg, 1.0, R)
        _, rep = radialheat.u1_verify(n, R, grid)
        failed = not rep.passed
    elif lemma == "v1":
        n, rho = float(cfg.get("n", 6.0)), float(cfg.get("rho", 0.125))
        grid = _make_grid({**cfg, "spacing": cfg.get("spacing", "uniform")},
                          rho, 1.0)
        _, rep = radialheat.v1_verify(n, rho, grid)
        failed = not rep.passed
    elif lemma == "holder":
        cell = tuple(
            float(cfg.get(k, 0.0)) for k in ("a", "b", "c", "d")
        )
        rep = radialheat.holder_sweep(
            cell,
            n_samples=int(cfg.get("n_samples", 120)),
            seed=int(cfg.get("seed", 0)),
            time_integrated=bool(cfg.get("time_integrated", False)),
        )
    elif lemma == "kernel":
        n = float(cfg.get("n", 6.0))
        rho, R = float(cfg.get("rho", 0.05)), float(cfg.get("R", 1.0))
        grid = _make_grid(cfg, rho, R)
        rng = np.random.default_rng(int(cfg.get("seed", 0)))
        samples = []
        for _ in range(int(cfg.get("n_samples", 18))):
            s = 10 ** rng.uniform(np.log10(2 * rho), np.log10(0.8 * R))
            r = 10 ** rng.uniform(np.log10(1.5 * rho), np.log10(0.9 * R))
            t = 10 ** rng.uniform(-2.0, np.log10(0.8 * grid.T))
            samples.append((float(r), float(s), float(t)))
        rep = radialheat.kernel_bound_check(n, rho, R, samples, grid)
    elif lemma == "prop":
        prop = cfg.get("prop")
        if prop is None:
            raise ConfigError("lemma=prop requires a prop key")
        params = {
            k: cfg[k]
            for k in ("k", "alpha", "beta", "A", "m", "rbar", "t1", "p", "rho")
            if k in cfg
        }
        rep = radialheat.appendix_prop_check(prop, params)
        if rep.expected_exponent is not None and rep.fit_exponent is not None:
            failed = abs(rep.fit_exponent - rep.expected_exponent) > float(
                cfg.get("exponent_tol", 0.3)
            )
    else:
        raise ConfigError(f"unknown lemma {lemma!r}")
    manifest.emit("bound_report.json", json.dumps(rep.to_dict(), indent=2))
    return 1 if failed else 0


def cmd_convergence(cfg: dict, manifest: Manifest) -> int:
    study = cfg.get("study")
    if study is None:
        raise ConfigError("missing key: study")
    result: dict = {"study": study}
    failed = False
    if study == "global-energy":
        L = int(cfg.get("L", 8))
        geom = lattice.LatticeGeometry(L, float(cfg.get("a", 1.0)))
        if "seed" not in cfg:
            raise ConfigError("global-energy study requires a seed")
        U0 = flow.make_random_smooth(
            geom,
            seed=int(cfg["seed"]),
            amplitude=float(cfg.get("amplitude", 0.2)),
            correlation_length=float(cfg.get("correlation_length", 2.0)),
        )
        t_end = float(cfg.get("t_end", 10.0 * geom.a**2))
        residuals = []
        divs = [int(x) for x in str(cfg.get("dt_divisors", "32,64")).split(",")]
        for div in divs:
            traj = flow.run(
                flow.FlowState(U0, 0.0),
                t_end,
                flow.IntegratorConfig(dt=geom.a**2 / div),
                sample_stride=10**9,
            )
            ym1, ym2 = traj.energies[0] / 2, traj.energies[-1] / 2
            residuals.append(
                abs(ym2 + traj.dissipation_cum[-1] - ym1) / ym1
            )
        orders = [
            float(np.log2(residuals[i] / residuals[i + 1]))
            for i in range(len(residuals) - 1)
        ]
        result.update(
            {"dt_divisors": divs, "residuals": residuals, "orders": orders}
        )
        min_order = cfg.get("min_order")
        if min_order is not None and min(orders) < float(min_order):
            failed = True
    elif study == "fd-manufactured":
        rho, R = float(cfg.get("rho", 0.25)), float(cfg.get("R", 1.0))
        op = radialheat.RadialOperator(
            float(cfg.get("n", 6.0)), float(cfg.get("c", 0.0))
        )
        errors = []
        sizes = [int(x) for x in str(cfg.get("sizes", "128,256")).split(",")]
        for N in sizes:
            grid = _make_grid({**cfg, "N": N}, rho, R)
            errors.append(radialheat._fd_error_estimate(grid, op))
        orders = [
            float(np.log2(errors[i] / errors[i + 1])
                  / np.log2(sizes[i + 1] / sizes[i]))
            for i in range(len(errors) - 1)
        ]
        result.update({"sizes": sizes, "errors": errors, "orders": orders})
        min_order = cfg.get("min_order")
        if min_order is not None and min(orders) < float(min_order):
            failed = True
    else:
        raise ConfigError(f"unknown study {study!r}")
    manifest.emit("convergence.json", json.dumps(result, indent=2))
    return 1 if failed else 0


COMMANDS = {
    "flow-run": cmd_flow_run,
    "diagnose": cmd_diagnose,
    "radial-verify": cmd_radial_verify,
    "convergence": cmd_convergence,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ymflow", description=__doc__.splitlines()[0]
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument(
            "--set",
            action="append",
            dest="overrides",
            metavar="KEY=VALUE",
            help="override a config entry (repeatable)",
        )
        if name == "radial-verify":
            p.add_argument("--lemma")
            p.add_argument("--n", type=float)
            p.add_argument("--R", type=float)
            p.add_argument("--rho", type=float)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        cfg = load_config(args.config, args.overrides)
        if args.seed is not None:
            cfg["seed"] = args.seed
        for key in ("lemma", "n", "R", "rho"):
            value = getattr(args, key, None)
            if value is not None:
                cfg[key] = value
        out_dir = args.out or cfg.get("out") or os.environ.get(
            "YMFLOW_OUT", "."
        )
        os.makedirs(out_dir, exist_ok=True)
        cfg["threads"] = args.threads
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    manifest = Manifest(out_dir, args.command, cfg)
    try:
        status = COMMANDS[args.command](cfg, manifest)
    except (ConfigError, ValueError, KeyError, FileNotFoundError) as exc:
        manifest.close("failed", f"{type(exc).__name__}: {exc}")
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # mid-run failure: keep the partial manifest
        manifest.close("failed", f"{type(exc).__name__}: {exc}")
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    manifest.close("ok" if status == 0 else "check-failed")
    return status


if __name__ == "__main__":
    sys.exit(main())
