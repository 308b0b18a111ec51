"""Command-line driver: simulate, verify, optimize, audit."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .audit import audit_all
from .config import ConfigError, RunConfig
from .control import (AdmissibleFamily, ControlError, SimSetup, Targets, cost_J, optimize,
                      synthesize_control, targets_from_csv, targets_from_ensemble)
from .domain import build_geometry
from .dynamics import GalerkinSystem, simulate_ensemble, stripe_initial
from .energy import (MonitorError, dissipation_report, estimate_check_L41, estimate_check_L42,
                     stability_check, stability_distance)
from .io import (TRACE_COLUMNS, write_csv, write_energy_csv, write_json, write_schema,
                 write_trajectory_csv)
from .lifting import LiftingError, LiftingField
from .noise import build_noise, h1_audit
from .phasefield import PotentialSpec
from .spaces import SpaceError, galerkin_basis

log = logging.getLogger("acns")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


# ---------------------------------------------------------------------------
# Builders


def build_system(cfg: RunConfig, n: int | None = None, with_noise: bool = True) -> GalerkinSystem:
    g = build_geometry(int(cfg["geometry"]["Nx"]), int(cfg["geometry"]["Ny"]))
    pot = cfg["potential"]
    spec = PotentialSpec(pot["c_f"], pot["theta"], pot["delta"], pot["xi"])
    alpha = float(cfg["slip"]["alpha"])
    basis = galerkin_basis(g, int(n or cfg["galerkin"]["n"]), spec.theta, alpha)
    nz = cfg["noise"]
    noise = None
    if with_noise and nz["sigma"]:
        noise = build_noise(g, nz["sigma"], nz["cutoff"], nz["h_amp"], nz["h_mode"], alpha, nz["K"])
    mon = cfg["monitor"]
    return GalerkinSystem(basis, spec, noise, C0=mon["C0"], p=mon["p"])


def free_family(cfg: RunConfig) -> AdmissibleFamily:
    """Unbounded box of the configured spline layout, used to build fixed controls."""
    c, mon = cfg["control"], cfg["monitor"]
    kc, nk = int(c["kc"]), int(c["knots"])
    dim = nk * (4 * kc + 2 * (2 * kc + 1))
    return AdmissibleFamily(kc, nk, float(cfg["time"]["T"]), np.full(dim, -np.inf),
                            np.full(dim, np.inf), mon["C0"], mon["delta"], mon["p"])


def search_family(cfg: RunConfig) -> AdmissibleFamily:
    c, f, mon = cfg["control"], cfg["family"], cfg["monitor"]
    return AdmissibleFamily.symmetric(int(c["kc"]), int(c["knots"]), float(cfg["time"]["T"]),
                                      f["bound_a"], f["bound_b"], C0=mon["C0"],
                                      delta=mon["delta"], p=mon["p"])


def build_lift(cfg: RunConfig, system: GalerkinSystem, params):
    if params is None:
        return None, None
    ctrl = synthesize_control(params, free_family(cfg))
    if ctrl.is_zero():
        return ctrl, None
    return ctrl, LiftingField(system.geom, ctrl, system.basis.alpha)


def initial_state(cfg: RunConfig, system: GalerkinSystem):
    ini = cfg["initial"]
    b = system.basis
    if ini["kind"] == "zero":
        return np.zeros(b.nu), np.zeros(b.nphi)
    return stripe_initial(b, ini["amplitude"], ini["width"])


def manifest(cfg: RunConfig, command: str, extra: dict | None = None) -> dict:
    M, seed = int(cfg["ensemble"]["M"]), int(cfg["ensemble"]["seed"])
    out = {
        "command": command,
        "version": {"acns": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                    "python": sys.version.split()[0]},
        "config": cfg.data,
        "config_sha256": cfg.digest(),
        "seeds": {"master": seed, "paths": list(range(M)),
                  "generator": "Philox(SeedSequence([master, path]))"},
    }
    out.update(extra or {})
    return out


def _mean_energy_csv(path, trace):
    ok = np.isfinite(trace.E_tilde).all(axis=1)
    cols = [trace.t] + [np.mean(getattr(trace, c)[ok], axis=0) for c in TRACE_COLUMNS]
    write_csv(path, ("t",) + TRACE_COLUMNS, np.column_stack(cols))


# ---------------------------------------------------------------------------
# Subcommands


def cmd_simulate(cfg: RunConfig, args) -> int:
    from .plotting import plot_energy, plot_phase

    out = Path(cfg["output"]["dir"])
    system = build_system(cfg)
    T, dt = float(cfg["time"]["T"]), float(cfg["time"]["dt"])
    M, seed = int(cfg["ensemble"]["M"]), int(cfg["ensemble"]["seed"])
    ctrl, lift = build_lift(cfg, system, cfg["control"]["params"])
    log.info("simulating %d paths, n=%d, %d steps", M, system.basis.n, int(round(T / dt)))
    ens = simulate_ensemble(system, T, dt, M, seed, initial_state(cfg, system), lift)
    for i in range(M):
        write_trajectory_csv(out / "trajectories" / f"path_{i:04d}.csv", ens.t, ens.beta[i], ens.chi[i])
        write_energy_csv(out / "energy" / f"path_{i:04d}.csv", ens.trace.path(i))
    write_schema(out)
    failures = [{"path": f.path, "t": f.t} for f in ens.failures]
    write_json(out / "manifest.json", manifest(cfg, "simulate", {
        "failures": failures, "basis": {"nu": system.basis.nu, "nphi": system.basis.nphi},
        "control": ctrl.to_dict() if ctrl is not None else None}))
    plot_energy(ens.trace, out / "figures" / "energy.png")
    if M and np.isfinite(ens.chi[0, -1]).all():
        phi = np.einsum("i,i...->...", ens.chi[0, -1], system.basis.phi)
        plot_phase(system.geom, phi, out / "figures" / "phase_final.png")
    log.info("wrote %s (%d failed paths)", out, len(failures))
    return EXIT_OK


def _dissipation_check(cfg: RunConfig, inject: bool) -> dict:
    system = build_system(cfg, with_noise=False)
    T, dt = float(cfg["time"]["T"]), float(cfg["time"]["dt"])
    init = initial_state(cfg, system)
    res = []
    for h in (dt, dt / 2):
        ens = simulate_ensemble(system, T, h, 1, 0, init)
        tr = ens.trace
        if inject:
            mid = tr.t.size // 2
            tr.residual[..., mid:] += 0.1 * max(abs(tr.E_tilde[0, 0]), 1.0)
        res.append(dissipation_report(tr))
    r0, r1 = res[0]["max_residual"], res[1]["max_residual"]
    tiny = r0 < 1e-12 and r1 < 1e-12
    order = float(np.log2(r0 / r1)) if r1 > 0 and r0 > 0 else float("nan")
    ok = res[1]["pass"] and (tiny or order > 0.5)
    return {"name": "dissipation", "pass": bool(ok), "dt": [dt, dt / 2], "reports": res,
            "observed_order": order}


def _estimate_checks(cfg: RunConfig) -> tuple[dict, object]:
    T, dt = float(cfg["time"]["T"]), float(cfg["time"]["dt"])
    M, seed = int(cfg["ensemble"]["M"]), int(cfg["ensemble"]["seed"])
    n = int(cfg["galerkin"]["n"])
    runs, base = [], None
    for nn, h in ((n, dt), (n, dt / 2), (2 * n, dt)):
        try:
            system = build_system(cfg, n=nn)
        except SpaceError:
            continue
        _, lift = build_lift(cfg, system, cfg["control"]["params"])
        ens = simulate_ensemble(system, T, h, M, seed, initial_state(cfg, system), lift)
        l41, l42 = estimate_check_L41(ens.trace), estimate_check_L42(ens.trace)
        runs.append({"n": nn, "dt": h, "L41": l41, "L42": l42})
        if base is None:
            base = ens
    s41 = stability_check([r["L41"]["C_hat"] for r in runs])
    s42 = stability_check([r["L42"]["C_hat"] for r in runs])
    jensen = all(r["L42"]["jensen_ok"] for r in runs)
    return ({"name": "moment_bounds", "pass": bool(s41["pass"] and s42["pass"] and jensen),
             "runs": runs, "L41_stability": s41, "L42_stability": s42, "jensen_ok": jensen}, base)


def _stability_checks(cfg: RunConfig) -> dict:
    T, dt = float(cfg["time"]["T"]), float(cfg["time"]["dt"])
    M, seed = int(cfg["ensemble"]["M"]), int(cfg["ensemble"]["seed"])
    eps = float(cfg["verify"]["epsilon"])
    system = build_system(cfg)
    _, lift = build_lift(cfg, system, cfg["control"]["params"])
    b0, c0 = initial_state(cfg, system)
    A = simulate_ensemble(system, T, dt, M, seed, (b0, c0), lift)
    B = simulate_ensemble(system, T, dt, M, seed, (b0, c0), lift)
    same = stability_distance(A, B, cfg["monitor"]["c_ledger"])["lhs"]
    d = np.random.default_rng(seed).standard_normal(c0.shape)
    d /= max(np.linalg.norm(d), 1e-300)
    epss = [10 * eps, eps, eps / 10]
    lhs = []
    for e in epss:
        C = simulate_ensemble(system, T, dt, M, seed, (b0, c0 + e * d), lift)
        lhs.append(stability_distance(A, C, cfg["monitor"]["c_ledger"])["lhs"])
    lhs = np.array(lhs)
    slope = float(np.polyfit(np.log(epss), np.log(lhs), 1)[0]) if np.all(lhs > 0) else float("nan")
    ok = same == 0.0 and abs(slope - 2.0) <= 0.2
    return {"name": "stability", "pass": bool(ok), "identical_distance": same,
            "epsilons": epss, "distances": lhs.tolist(), "slope": slope}


def cmd_verify(cfg: RunConfig, args) -> int:
    from .plotting import plot_audit, plot_energy, plot_weights

    out = Path(cfg["output"]["dir"])
    checks = [_dissipation_check(cfg, bool(cfg["verify"]["inject_violation"]))]
    log.info("dissipation: %s", "PASS" if checks[0]["pass"] else "FAIL")
    est, base = _estimate_checks(cfg)
    checks.append(est)
    log.info("moment bounds: %s", "PASS" if est["pass"] else "FAIL")
    checks.append(_stability_checks(cfg))
    log.info("stability: %s", "PASS" if checks[-1]["pass"] else "FAIL")
    system = build_system(cfg)
    if system.noise is not None:
        h1 = h1_audit(system.noise, int(cfg["audit"]["pairs"]), int(cfg["audit"]["seed"]))
        checks.append({"name": "noise_lipschitz", "pass": h1["violations"] == 0, **h1})
    a = cfg["audit"]
    reps = audit_all(int(a["samples"]), int(a["seed"]), Nx=int(cfg["geometry"]["Nx"]),
                     Ny=int(cfg["geometry"]["Ny"]), decay=a["decay"], alpha=cfg["slip"]["alpha"], q=a["q"])
    checks.append(_audit_check(reps))
    ok = all(c["pass"] for c in checks)
    write_json(out / "report.json", {"pass": ok, "checks": checks})
    _mean_energy_csv(out / "energy_mean.csv", base.trace)
    write_schema(out)
    write_json(out / "manifest.json", manifest(cfg, "verify"))
    plot_energy(base.trace, out / "figures" / "energy.png")
    plot_weights(base.trace, out / "figures" / "weights.png")
    plot_audit(reps, out / "figures" / "audit.png")
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']}")
    return EXIT_OK if ok else EXIT_FAIL


def _audit_check(reps) -> dict:
    finite = all(np.isfinite(r.max_ratio) and np.isfinite(r.fine_max_ratio) for r in reps)
    growing = [r.name for r in reps if r.trend != "stable"]
    return {"name": "inequalities", "pass": bool(finite and not growing), "growing": growing,
            "reports": [r.to_dict() for r in reps]}


def cmd_optimize(cfg: RunConfig, args) -> int:
    from .plotting import plot_sequence

    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    system = build_system(cfg)
    T, dt = float(cfg["time"]["T"]), float(cfg["time"]["dt"])
    M, seed = int(cfg["ensemble"]["M"]), int(cfg["ensemble"]["seed"])
    cost, opt = cfg["cost"], cfg["optimize"]
    setup = SimSetup(system, T, dt, M, seed, initial_state(cfg, system), cost["lambda1"],
                     cost["lambda2"], cost["variant"])
    family = search_family(cfg)
    tcfg = cfg["targets"]
    reference = None
    if tcfg["source"] == "control":
        tctrl, tlift = build_lift(cfg, system, tcfg["params"] if tcfg["params"] is not None
                                  else np.zeros(family.dim))
        ens = simulate_ensemble(system, T, dt, M, seed, setup.initial, tlift, setup.increments())
        targets = targets_from_ensemble(ens)
        reference = cost_J(ens, targets, tctrl, cost["lambda1"], cost["lambda2"], cost["variant"]).to_dict()
    elif tcfg["source"] == "csv":
        _, tlift = build_lift(cfg, system, tcfg["params"])
        targets = targets_from_csv(tcfg["files"], system.basis, tlift)
    else:
        targets = Targets.zero(np.linspace(0.0, T, int(round(T / dt)) + 1), system.geom)
    res = optimize(family, targets, setup, int(opt["budget"]), int(opt["restarts"]),
                   int(opt["seed"]), float(opt["step0"]), checkpoint=out / "checkpoint.json",
                   resume=args.resume)
    rec = res["record"]
    header = ["k", "J", "best_J", "admissible", "margin"] + [f"p_{i}" for i in range(family.dim)]
    write_csv(out / "sequence.csv", header,
              [[r["k"], r["J"], r["best_J"], int(r["admissible"]), r["margin"]] + r["params"]
               for r in rec])
    best = synthesize_control(res["best_params"], family)
    write_json(out / "best_control.json", best.to_dict())
    report = {"best_J": res["best_J"], "best_index": res["best_index"], "evaluations": len(rec),
              "all_admissible": all(r["admissible"] for r in rec),
              "monotone": all(b["best_J"] <= a["best_J"] for a, b in zip(rec, rec[1:])),
              "family": family.to_dict(), "reference": reference}
    ok = True
    if reference is not None:
        tol = 3.0 * reference["se"]
        report["recovery"] = {"J_star": reference["J"], "tolerance": tol,
                              "pass": bool(res["best_J"] <= reference["J"] + tol)}
        ok = report["recovery"]["pass"]
        print(f"{'PASS' if ok else 'FAIL'} recovery J_best={res['best_J']:.6g} "
              f"J*={reference['J']:.6g} tol={tol:.3g}")
    write_json(out / "report.json", report)
    write_schema(out)
    write_json(out / "manifest.json", manifest(cfg, "optimize"))
    plot_sequence(rec, out / "figures" / "sequence.png")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_audit(cfg: RunConfig, args) -> int:
    from .plotting import plot_audit

    out = Path(cfg["output"]["dir"])
    a = cfg["audit"]
    reps = audit_all(int(a["samples"]), int(a["seed"]), Nx=int(cfg["geometry"]["Nx"]),
                     Ny=int(cfg["geometry"]["Ny"]), decay=a["decay"], alpha=cfg["slip"]["alpha"], q=a["q"])
    checks = [_audit_check(reps)]
    system = build_system(cfg)
    if system.noise is not None:
        h1 = h1_audit(system.noise, int(a["pairs"]), int(a["seed"]))
        checks.append({"name": "noise_lipschitz", "pass": h1["violations"] == 0, **h1})
    ok = all(c["pass"] for c in checks)
    write_json(out / "report.json", {"pass": ok, "checks": checks})
    write_json(out / "manifest.json", manifest(cfg, "audit"))
    plot_audit(reps, out / "figures" / "audit.png")
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']}")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "optimize": cmd_optimize,
            "audit": cmd_audit}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acns", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="YAML run configuration")
        s.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
        s.add_argument("--seed", type=int, help="master seed (overrides ensemble.seed)")
        s.add_argument("--paths", type=int, help="ensemble size (overrides ensemble.M)")
        s.add_argument("--resume", type=Path, help="optimizer checkpoint to continue from")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        cfg = cfg.override(seed=args.seed, paths=args.paths, out=args.out)
        if args.resume is not None and not args.resume.exists():
            raise ConfigError(f"--resume: no checkpoint at {args.resume}")
        Path(cfg["output"]["dir"]).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ControlError, LiftingError, SpaceError, MonitorError, ValueError,
            OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
