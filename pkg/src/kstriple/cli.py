"""Command-line driver: ``verify``, ``simulate``, ``portrait``, ``average``
and ``torsion`` subcommands.

Configuration files hold flat ``key = value`` lines (``#`` starts a
comment).  Unknown keys are rejected.  Exit codes: 0 success, 1 a check
failed, 2 invalid configuration, 3 physical-domain error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Callable, Dict

import numpy as np

from .errors import ConfigInvalid, KSError, PhysicalDomainError


EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DOMAIN = 0, 1, 2, 3


# ---- configuration ---------------------------------------------------------

def _floats(text: str):
    return [float(v) for v in text.replace(",", " ").split()]


MASS_KEYS = {"m0": (float, 1.0), "m1": (float, 0.6), "m2": (float, 0.4)}

SCHEMAS: Dict[str, dict] = {
    "verify": {
        **MASS_KEYS,
        "nodes": (int, 128),
        "alphas": (_floats, [0.02, 0.01, 0.005]),
        "n_points": (int, 3),
        "n_samples": (int, 200),
        "torsion_fault": (float, 0.0),
    },
    "simulate": {
        **MASS_KEYS,
        "a1": (float, 1.0), "a2": (float, 20.0),
        "e1": (float, 0.5), "e2": (float, 0.2),
        "g1": (float, 0.0), "g2": (float, 0.3),
        "l1": (float, np.pi), "l2": (float, 0.5),
        "C": (float, None),
        "Q1": (_floats, None), "P1": (_floats, None),
        "Q2": (_floats, None), "P2": (_floats, None),
        "periods": (float, 50.0),
        "rtol": (float, 1e-12), "atol": (float, 1e-15),
        "chunks": (int, 20),
        "threshold": (float, None),
        "perturbation": (int, 1),
    },
    "portrait": {
        "L1": (float, 1.0), "L2": (float, 1.5), "G2": (float, 0.8), "C": (float, None),
        "mu_quad": (float, 1.0),
        "n_orbits": (int, 6),
        "max_amp": (float, 0.9),
        "s_max": (float, 0.05),
    },
    "average": {
        **MASS_KEYS,
        "G1": (float, 0.5), "g1": (float, 0.8), "G2": (float, 1.1), "g2": (float, 0.3),
        "L1": (float, 1.0), "L2": (float, 1.5), "C": (float, 1.3),
        "alphas": (_floats, [0.02, 0.01, 0.005]),
        "nodes": (int, 128),
    },
    "torsion": {
        "alphas": (_floats, [0.5, 1.0, 1.5, 2.0]),
        "betas": (_floats, [0.5, 1.0, 2.0]),
        "agree_tol": (float, 1e-10),
    },
}


def parse_config(text: str, command: str) -> dict:
    """Parse ``key = value`` text against the schema of ``command``."""
    schema = SCHEMAS[command]
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in schema:
            raise ConfigInvalid(f"unknown key '{key}' for '{command}'")
        if key in raw:
            raise ConfigInvalid(f"duplicate key '{key}'")
        raw[key] = val
    if any(k in raw for k in MASS_KEYS):
        missing = [k for k in MASS_KEYS if k not in raw]
        if missing:
            raise ConfigInvalid(f"missing mass field(s): {', '.join(missing)}")
    cfg = {}
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                cfg[key] = conv(raw[key])
            except ValueError as exc:
                raise ConfigInvalid(f"bad value for '{key}': {raw[key]!r}") from exc
        else:
            cfg[key] = default
    _validate(cfg, command)
    return cfg


def _validate(cfg: dict, command: str) -> None:
    for k in ("m0", "m1", "m2", "a1", "a2", "L1", "L2", "G2", "mu_quad", "nodes", "periods",
              "rtol", "atol", "chunks"):
        if k in cfg and cfg[k] is not None and not cfg[k] > 0:
            raise ConfigInvalid(f"'{k}' must be positive")
    if "alphas" in cfg and command in ("verify", "average"):
        a = cfg["alphas"]
        if len(a) < 2 or any(x <= 0 for x in a) or any(x <= y for x, y in zip(a, a[1:])):
            raise ConfigInvalid("'alphas' must be positive and strictly decreasing")
    if command == "portrait" and cfg["n_orbits"] < 1:
        raise ConfigInvalid("empty orbit grid")
    if command == "torsion":
        if not cfg["alphas"] or not cfg["betas"]:
            raise ConfigInvalid("empty torsion grid")
        if any(x <= 0 for x in cfg["alphas"] + cfg["betas"]):
            raise ConfigInvalid("alphas and betas must be positive")
    for k in ("Q1", "P1", "Q2", "P2"):
        if cfg.get(k) is not None and len(cfg[k]) != 3:
            raise ConfigInvalid(f"'{k}' needs three components")


def load_config(path, command: str) -> dict:
    if path is None:
        return parse_config("", command)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc}") from exc
    return parse_config(text, command)


def _masses(cfg):
    from .threebody import MassConfig
    return MassConfig(cfg["m0"], cfg["m1"], cfg["m2"])


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---- verify ------------------------------------------------------------------

def run_checks(cfg: dict, seed: int = 0) -> list:
    """Closed-form numeric checks; returns dicts with name/passed/values."""
    from . import quad_dynamics as qd
    from . import secular as sec
    from .legendre import pert_series, within_bound
    from .threebody import JacobiState, eval_regularized, pert_potential
    from .quat import CartesianPair, KSPoint, ks_inverse, ks_map

    rng = np.random.default_rng(seed)
    m = _masses(cfg)
    out = []

    def record(name, passed, **vals):
        out.append({"name": name, "passed": bool(passed),
                    **{k: (float(v) if isinstance(v, (float, np.floating, int)) else v)
                       for k, v in vals.items()}})

    fault = cfg["torsion_fault"]
    formula = None
    if fault:
        formula = lambda a, b: qd.frequency_coefficient(a, b) * (1.0 + fault * b)
    worst = 0.0
    for beta in (0.5, 1.0, 2.0):
        val = qd.torsion_extrapolated(beta, torsion_formula=formula)
        worst = max(worst, abs(val / qd.torsion_limit(beta) - 1.0))
    record("torsion_limit", worst < 1e-6, max_rel_err=worst)

    worst = 0.0
    for L1 in (0.8, 1.0, 1.3):
        for G2 in (0.7, 1.0, 1.4):
            num = qd.equilibrium_hessian(L1, 1.5, G2, m.mu_quad)
            worst = max(worst, abs(num / qd.morse_determinant(L1, 1.5, G2, m.mu_quad) - 1.0))
    record("morse_hessian", worst < 1e-8, max_rel_err=worst)

    worst = 0.0
    for g in (0.0, np.pi / 4, np.pi / 2):
        sp = sec.SecularPoint(0.0, g, 1.2, 0.0, 1.0, 1.5, 1.2)
        ref = -(15 * m.mu_quad * 1.5 ** 3 / (8 * 1.2 ** 4)) * (3 - 4 * np.cos(g) ** 2)
        worst = max(worst, abs(sec.nu_quad2(sp, m) - ref))
    record("nu_quad2_spot", worst < 1e-8, max_abs_err=worst)

    worst = 0.0
    for k in range(cfg["n_points"]):
        sp = _random_secular_point(rng, force_degenerate=(k == 0))
        ae = sec.alpha_expansion(sp, m, tuple(cfg["alphas"]), cfg["nodes"])
        ref = sec.f_quad(sp, m)
        worst = max(worst, abs(ae.c2 - ref) / abs(ref))
    record("quadrupolar_average", worst < 1e-6, max_rel_err=worst)

    amps_h, amps_r = [], []
    alphas = (0.02, 0.01, 0.005)
    for a in alphas:
        rc, f = sec.hierarchical_base_point(a, m)
        rep = sec.elimination_generator([rc], m, f)
        amps_h.append(rep.H_amplitude[0])
        amps_r.append(rep.residual_amplitude[0])
    la = np.log(alphas)
    ph = np.polyfit(la, np.log(amps_h), 1)[0]
    pr = np.polyfit(la, np.log(amps_r), 1)[0]
    record("elimination_scaling", abs(ph - 3.0) <= 0.2 and abs(pr - 4.5) <= 0.3,
           generator_exponent=ph, residual_exponent=pr)

    worst = 0.0
    for _ in range(cfg["n_samples"]):
        z = rng.normal(size=4)
        P = rng.normal(size=3)
        Q1 = ks_map(KSPoint(z, np.zeros(4))).Q
        ks = ks_inverse(CartesianPair(Q1, P))
        Q2 = rng.normal(size=3)
        Q2 *= 8.0 / np.linalg.norm(Q2)
        P2 = rng.normal(size=3)
        f = 2.0 + rng.random()
        from .threebody import RegularizedState, eval_F
        s = RegularizedState(ks, P2, Q2, f)
        reg = eval_regularized(s, m, check_f1=False).total
        phys = eval_F(JacobiState(P, Q1, P2, Q2), m).total
        ref = np.linalg.norm(Q1) * (phys + f)
        scale = np.linalg.norm(Q1) * (abs(phys) + f) + 1.0
        worst = max(worst, abs(reg - ref) / scale)
    record("regularization_identity", worst < 1e-12, max_rel_err=worst)

    ok = True
    for _ in range(cfg["n_samples"]):
        Q2 = rng.normal(size=3)
        Q2 *= 10.0 / np.linalg.norm(Q2)
        Q1 = rng.normal(size=3)
        Q1 *= rng.uniform(0.01, 0.5) / np.linalg.norm(Q1)
        s = JacobiState(np.zeros(3), Q1, np.zeros(3), Q2)
        series = pert_series(s, m, 12)
        direct = np.linalg.norm(Q1) * float(pert_potential(Q1, Q2, m))
        ok &= within_bound(direct, series)
    record("legendre_tail_bound", ok)
    return out


def _random_secular_point(rng, force_degenerate=False):
    from .secular import SecularPoint
    L1 = 1.0
    L2 = rng.uniform(1.2, 2.0)
    G2 = L2 * rng.uniform(0.6, 0.95)
    if force_degenerate:
        return SecularPoint(0.0, rng.uniform(0, 2 * np.pi), G2, rng.uniform(0, 2 * np.pi), L1, L2, G2)
    G1 = rng.uniform(0.2, 0.9)
    C = rng.uniform(abs(G1 - G2) + 0.05, G1 + G2 - 0.05)
    return SecularPoint(G1, rng.uniform(0, 2 * np.pi), G2, rng.uniform(0, 2 * np.pi), L1, L2, C)


def cmd_verify(cfg, out, seed) -> int:
    checks = run_checks(cfg, seed)
    report = {"checks": checks, "all_passed": all(c["passed"] for c in checks), "seed": seed}
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}")
    if out:
        _write_json(os.path.join(out, "verify.json"), report)
    else:
        print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if report["all_passed"] else EXIT_FAIL


# ---- simulate ----------------------------------------------------------------

def cmd_simulate(cfg, out, seed) -> int:
    from .flow import (integrate, inner_period_tau, near_collision_events, state_from_jacobi,
                       state_from_secular, write_csv, write_trajectory)
    from .threebody import JacobiState, outer_energy_factor

    m = _masses(cfg)
    raw = [cfg[k] for k in ("Q1", "P1", "Q2", "P2")]
    if any(v is not None for v in raw):
        if any(v is None for v in raw):
            raise ConfigInvalid("raw state needs all of Q1, P1, Q2, P2")
        s0 = state_from_jacobi(JacobiState(raw[1], raw[0], raw[3], raw[2]), m)
    else:
        s0 = state_from_secular(cfg["e1"], cfg["g1"], cfg["e2"], cfg["g2"], cfg["a1"], cfg["a2"],
                                cfg["l1"], cfg["l2"], m, cfg["C"])
    f1 = outer_energy_factor(s0.P2, s0.Q2, s0.f, m)
    if f1 <= 0:
        from .errors import HyperbolicOuter
        raise HyperbolicOuter(f"f1 = {f1} <= 0")
    tau_end = cfg["periods"] * inner_period_tau(f1, m)
    traj = integrate(s0, m, (0.0, tau_end), rtol=cfg["rtol"], atol=cfg["atol"],
                     chunks=cfg["chunks"], pert=bool(cfg["perturbation"]))
    report = near_collision_events(traj, cfg["threshold"])
    out = out or "."
    summary = write_trajectory(traj, os.path.join(out, "trajectory.csv"),
                               os.path.join(out, "summary.json"), report)
    write_csv(os.path.join(out, "events.csv"), ["tau", "min_r1"], ["fict_time", "length"],
              [[float(a), float(b)] for a, b in report.events])
    print(json.dumps({"drifts": summary["drifts"], "global_min_r1": report.global_min,
                      "events": len(report.events)}, sort_keys=True))
    return EXIT_OK


# ---- portrait ----------------------------------------------------------------

def cmd_portrait(cfg, out, seed) -> int:
    from . import quad_dynamics as qd
    from .flow import write_csv

    C = cfg["G2"] if cfg["C"] is None else cfg["C"]
    p = qd.QuadParams(cfg["L1"], cfg["L2"], cfg["G2"], C, cfg["mu_quad"])
    out = out or "."
    orbits = []
    summary = {"on_cover": p.on_cover}
    eq_rows = []
    if p.on_cover:
        port = qd.phase_portrait(p, cfg["n_orbits"], cfg["max_amp"])
        orbits = port.orbits
        summary["separatrix_g0"] = port.separatrix_g0
        for kind, pts in (("minimum", port.minima), ("maximum", port.maxima)):
            for pt in pts:
                det = qd.equilibrium_hessian(p.L1, p.L2, p.G2, p.mu_quad, g1=pt.g1)
                eq_rows.append([float(pt.G1), float(pt.g1), kind, det])
    else:
        for k in range(1, cfg["n_orbits"] + 1):
            s = cfg["s_max"] * p.L1 * k / cfg["n_orbits"]
            orbits.append(qd.trace_orbit(qd.CoverPoint(p.G1_min + s, 0.0), p))
        eq_rows = [[p.G1_min, float("nan"), "coplanar_boundary", float("nan")]]
    rows, srows = [], []
    for idx, o in enumerate(orbits):
        for t, G, g in zip(o.t, o.G1, o.g1):
            rows.append([idx, float(t), float(G), float(g)])
        min_ang = min((a for _, a in o.crossings), default=float("nan"))
        srows.append([idx, float(o.start.G1), float(o.start.g1), o.period, o.action,
                      o.energy, o.closure_gap, o.energy_drift, o.winding, min_ang])
    write_csv(os.path.join(out, "portrait_orbits.csv"), ["orbit", "t", "G1", "g1"],
              ["index", "time", "angular_momentum", "rad"], rows)
    write_csv(os.path.join(out, "portrait_summary.csv"),
              ["orbit", "G1_start", "g1_start", "period", "action", "energy", "closure_gap",
               "energy_drift", "winding", "min_crossing_angle"],
              ["index", "angular_momentum", "rad", "time", "angular_momentum", "energy",
               "dimensionless", "energy", "count", "rad"], srows)
    write_csv(os.path.join(out, "portrait_equilibria.csv"), ["G1", "g1", "kind", "hessian_det"],
              ["angular_momentum", "rad", "label", "energy^2/angular_momentum^2"], eq_rows)
    _write_json(os.path.join(out, "portrait.json"), summary)
    print(json.dumps({"orbits": len(orbits), **summary}, sort_keys=True))
    return EXIT_OK


# ---- average -----------------------------------------------------------------

def cmd_average(cfg, out, seed) -> int:
    from . import secular as sec
    from .flow import write_csv

    m = _masses(cfg)
    sp = sec.SecularPoint(cfg["G1"], cfg["g1"], cfg["G2"], cfg["g2"], cfg["L1"], cfg["L2"], cfg["C"])
    rows = [[a, sec.average_pert(sp, 1.0, a, m, cfg["nodes"])] for a in cfg["alphas"]]
    ae = sec.alpha_expansion(sp, m, tuple(cfg["alphas"]), cfg["nodes"])
    fq = sec.f_quad(sp, m)
    res = {"c2": ae.c2, "c3": ae.c3, "extrapolation_error": ae.residual, "f_quad": fq,
           "c2_rel_err": abs(ae.c2 - fq) / abs(fq)}
    out = out or "."
    write_csv(os.path.join(out, "average.csv"), ["alpha", "average"],
              ["dimensionless", "mass^2"], rows)
    _write_json(os.path.join(out, "average.json"), res)
    print(json.dumps(res, sort_keys=True))
    return EXIT_OK


# ---- torsion -----------------------------------------------------------------

def cmd_torsion(cfg, out, seed) -> int:
    from . import quad_dynamics as qd
    from .flow import write_csv

    rows = []
    for a in cfg["alphas"]:
        for b in cfg["betas"]:
            lim = qd.torsion_limit(b)
            if a == b:
                coef = qd.frequency_coefficient(a, b)
                rows.append([a, b, coef, float("nan"), "limit", lim, lim])
                continue
            try:
                coef = qd.frequency_coefficient(a, b)
                quad = qd.frequency_coefficient_quad(a, b)
                _, tor = qd.torsion(a, b)
                flag = "agree" if abs(quad / coef - 1) <= cfg["agree_tol"] else "disagree"
            except PhysicalDomainError as exc:
                coef = quad = tor = float("nan")
                flag = type(exc).__name__
            rows.append([a, b, coef, quad, flag, tor, lim])
    out = out or "."
    write_csv(os.path.join(out, "torsion.csv"),
              ["alpha", "beta", "coef_closed", "coef_quadrature", "flag", "torsion", "torsion_limit"],
              ["dimensionless"] * 4 + ["label"] + ["dimensionless"] * 2, rows)
    print(f"{len(rows)} rows written")
    return EXIT_OK


COMMANDS: Dict[str, Callable] = {
    "verify": cmd_verify, "simulate": cmd_simulate, "portrait": cmd_portrait,
    "average": cmd_average, "torsion": cmd_torsion,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kstriple", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="key = value configuration file")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="seed for sampled checks")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args.seed)
    except ConfigInvalid as exc:
        print(f"ConfigInvalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicalDomainError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except KSError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
