"""Command-line front end: ``isorel {riemann,evolve,kernel,verify}``.

Each run takes an optional JSON config; command-line flags override its
fields.  Outputs are written atomically into ``--out-dir``.  Floats are
written with the shortest representation that round-trips.

Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 CFL violation,
5 verification failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import kernel as K
from . import riemann as R
from . import scheme as S
from . import verify as V
from .core import FluidState, eps_value, invariants
from .errors import ConfigError, CflViolation, IsorelError

FORMAT_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CFL, EXIT_VERIFY = 0, 2, 3, 4, 5

DEFAULTS = {
    "riemann": {
        "eps": 0.5,
        "left": {"rho": 1.0, "v": 0.0},
        "right": {"rho": 0.5, "v": 0.0},
        "xi_min": -3.0,
        "xi_max": 3.0,
        "n_samples": 601,
    },
    "evolve": {
        "eps": 0.5,
        "grid": {"x_min": -2.0, "x_max": 2.0, "n_cells": 200, "ratio": 0.2, "boundary": "outflow", "averaging": "conservative"},
        "T": 0.5,
        "stride": 1,
        "adaptive": False,
        "scale": 1.0,
        "initial": {"kind": "riemann", "x0": 0.0, "left": {"rho": 1.0, "v": 0.3}, "right": {"rho": 0.2, "v": -0.2}},
    },
    "kernel": {
        "eps": 0.5,
        "half_width": 4.0,
        "delta": 1.0 / 64,
        "omega_w_min": -50.0,
        "omega_w_max": 8.0,
        "omega_step": 1.0 / 64,
        "eps0_compare": False,
    },
    "verify": {
        "eps": 0.5,
        "campaign": "tame-audit",
        "n_problems": 100,
        "lambda": 1000.0,
        "n_cells": 100,
    },
}

CAMPAIGNS = ("tame-audit", "scaling", "rh", "wave", "kernel-limit")


# ---------------------------------------------------------------------------
# formatting and files


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def columns_text(table: dict):
    cols = list(table)
    arrs = [np.asarray(table[c]).ravel() for c in cols]
    return csv_text(cols, zip(*arrs))


def json_text(obj):
    return json.dumps(obj, sort_keys=True, indent=2, default=V._jsonable) + "\n"


# ---------------------------------------------------------------------------
# configuration


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "initial":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(cfg, path, lo=None, hi=None, lo_open=False, integer=False):
    node = cfg
    for key in path[:-1]:
        node = node[key]
    name = ".".join(path)
    val = node.get(path[-1])
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{name} must be a number")
    if integer and int(val) != val:
        raise ConfigError(f"{name} must be an integer")
    if not np.isfinite(val):
        raise ConfigError(f"{name} must be finite")
    if lo is not None and (val <= lo if lo_open else val < lo):
        raise ConfigError(f"{name} must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and val > hi:
        raise ConfigError(f"{name} must be <= {hi}")
    node[path[-1]] = int(val) if integer else float(val)


def _state(cfg, key):
    st = cfg.get(key)
    if not isinstance(st, dict):
        raise ConfigError(f"{key} must be an object with rho and v")
    _num(cfg, (key, "rho"), lo=0.0)
    _num(cfg, (key, "v"))
    return st


def canonical_config(command, raw: dict) -> dict:
    """Fill defaults and range-check every field; raises :class:`ConfigError`."""
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command!r}")
    unknown = set(raw) - set(DEFAULTS[command])
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(sorted(unknown))}")
    cfg = _merge(DEFAULTS[command], raw)
    e = cfg.get("eps")
    if isinstance(e, bool) or not isinstance(e, (int, float)) or not (0.0 < e <= 1.0):
        raise ConfigError("eps must lie in (0, 1]")
    cfg["eps"] = float(e)
    if command == "riemann":
        _state(cfg, "left")
        _state(cfg, "right")
        _num(cfg, ("xi_min",))
        _num(cfg, ("xi_max",))
        if cfg["xi_max"] <= cfg["xi_min"]:
            raise ConfigError("xi_max must exceed xi_min")
        _num(cfg, ("n_samples",), lo=2, integer=True)
    elif command == "evolve":
        g = cfg["grid"]
        _num(cfg, ("grid", "x_min"))
        _num(cfg, ("grid", "x_max"))
        if g["x_max"] <= g["x_min"]:
            raise ConfigError("grid.x_max must exceed grid.x_min")
        _num(cfg, ("grid", "n_cells"), lo=1, integer=True)
        _num(cfg, ("grid", "ratio"), lo=0.0, lo_open=True)
        if g.get("boundary") not in S.BOUNDARIES:
            raise ConfigError(f"grid.boundary must be one of {S.BOUNDARIES}")
        if g.get("averaging") not in S.AVERAGING_MODES:
            raise ConfigError(f"grid.averaging must be one of {S.AVERAGING_MODES}")
        _num(cfg, ("T",), lo=0.0)
        _num(cfg, ("stride",), lo=1, integer=True)
        _num(cfg, ("scale",), lo=0.0, lo_open=True)
        if not isinstance(cfg["adaptive"], bool):
            raise ConfigError("adaptive must be true or false")
        init = cfg["initial"]
        kind = init.get("kind") if isinstance(init, dict) else None
        if kind == "riemann":
            init.setdefault("x0", 0.0)
            _num(cfg, ("initial", "x0"))
            _state(init, "left")
            _state(init, "right")
        elif kind == "smooth":
            for key in ("rho", "v"):
                prof = init.get(key)
                if not isinstance(prof, dict):
                    raise ConfigError(f"initial.{key} must be a profile object")
                prof.setdefault("profile", "sine")
                if prof["profile"] not in ("sine", "constant"):
                    raise ConfigError(f"initial.{key}.profile must be 'sine' or 'constant'")
                for p, dflt in (("mean", 1.0 if key == "rho" else 0.0), ("amp", 0.0), ("k", 1.0), ("phase", 0.0)):
                    prof.setdefault(p, dflt)
                    _num(cfg, ("initial", key, p))
        elif kind == "file":
            if not isinstance(init.get("path"), str):
                raise ConfigError("initial.path must be a string")
        else:
            raise ConfigError("initial.kind must be 'riemann', 'smooth' or 'file'")
    elif command == "kernel":
        _num(cfg, ("half_width",), lo=0.0, lo_open=True)
        _num(cfg, ("delta",), lo=0.0, lo_open=True)
        n = cfg["half_width"] / cfg["delta"]
        if abs(n - round(n)) > 1e-9 * n:
            raise ConfigError("half_width must be a multiple of delta")
        _num(cfg, ("omega_w_min",))
        _num(cfg, ("omega_w_max",))
        _num(cfg, ("omega_step",), lo=0.0, lo_open=True)
        if not isinstance(cfg["eps0_compare"], bool):
            raise ConfigError("eps0_compare must be true or false")
    elif command == "verify":
        if cfg["campaign"] not in CAMPAIGNS:
            raise ConfigError(f"campaign must be one of {CAMPAIGNS}")
        _num(cfg, ("n_problems",), lo=1, integer=True)
        _num(cfg, ("lambda",), lo=0.0, lo_open=True)
        _num(cfg, ("n_cells",), lo=8, integer=True)
    return cfg


def emit_config(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True)


def parse_config(text: str, command: str) -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return canonical_config(command, raw)


# ---------------------------------------------------------------------------
# commands


def _fan_json(fan: R.WaveFan):
    waves = []
    for fam, w in ((1, fan.wave1), (2, fan.wave2)):
        if isinstance(w, R.Shock):
            waves.append({"family": fam, "kind": "shock", "speed": w.speed})
        elif isinstance(w, R.Rarefaction):
            waves.append({"family": fam, "kind": "rarefaction", "xi_lo": w.xi_lo, "xi_hi": w.xi_hi})
    st = lambda s: {"rho": s.rho, "v": s.v}  # noqa: E731
    return {"eps": fan.eps, "left": st(fan.left), "middle": st(fan.middle), "right": st(fan.right), "waves": waves}


def cmd_riemann(cfg, out_dir):
    x = cfg["eps"]
    left = FluidState(cfg["left"]["rho"], cfg["left"]["v"])
    right = FluidState(cfg["right"]["rho"], cfg["right"]["v"])
    fan = R.solve_riemann(left, right, x)
    xi = np.linspace(cfg["xi_min"], cfg["xi_max"], cfg["n_samples"])
    rho, v = R.sample_batch(R._as_batch(fan), xi[None, :])
    rho, v = rho.ravel(), v.ravel()
    with np.errstate(divide="ignore"):
        w, z = invariants(rho, v, x)
    atomic_write(os.path.join(out_dir, "fan.json"), json_text(_fan_json(fan)))
    atomic_write(os.path.join(out_dir, "profile.csv"), columns_text({"xi": xi, "rho": rho, "v": v, "w": w, "z": z}))
    return ["fan.json", "profile.csv"]


def _initial_functions(init, eps):
    kind = init["kind"]
    if kind == "riemann":
        x0 = init["x0"]
        l, r = init["left"], init["right"]
        return (lambda xx: np.where(xx < x0, l["rho"], r["rho"]), lambda xx: np.where(xx < x0, l["v"], r["v"]))
    if kind == "smooth":
        def prof(p):
            if p["profile"] == "constant":
                return lambda xx: p["mean"] + 0.0 * xx
            return lambda xx: p["mean"] + p["amp"] * np.sin(2 * np.pi * p["k"] * xx + p["phase"])

        return prof(init["rho"]), prof(init["v"])
    # sampled file: columns x, rho, v; piecewise-linear interpolation
    try:
        data = np.genfromtxt(init["path"], delimiter=",", names=True)
        xs, rs, vs = data["x"], data["rho"], data["v"]
    except (OSError, ValueError) as exc:
        raise ConfigError(f"initial.path could not be read: {exc}") from exc
    return (lambda xx: np.interp(xx, xs, rs), lambda xx: np.interp(xx, xs, vs))


def build_evolve(cfg):
    g = cfg["grid"]
    gc = S.GridConfig.on_interval(
        g["x_min"], g["x_max"], g["n_cells"], g["ratio"],
        boundary=g["boundary"], averaging=g["averaging"], adaptive=cfg["adaptive"], stride=cfg["stride"],
    )
    rho0, v0 = _initial_functions(cfg["initial"], cfg["eps"])
    lam = cfg["scale"]
    return gc, (lambda xx: lam * rho0(xx)), v0


def cmd_evolve(cfg, out_dir):
    x = cfg["eps"]
    gc, rho0, v0 = build_evolve(cfg)
    s0, region = S.average_initial(rho0, v0, gc, x)
    traj = S.run(s0, cfg["T"], gc, x, region)
    rows = []
    for k, s in enumerate(traj.slices):
        tab = S.slice_table(s, x)
        n = len(s)
        for i in range(n):
            rows.append([k, s.t] + [tab[c][i] for c in ("x_center", "rho", "v", "w", "z", "G", "H")])
    cols = ["slice", "t", "x_center", "rho", "v", "w", "z", "G", "H"]
    header = {
        "format_version": FORMAT_VERSION,
        "columns": cols,
        "eps": x,
        "h": gc.h,
        "tau": gc.tau,
        "M": region.M,
        "boundary": gc.boundary,
        "averaging": gc.averaging,
        "adaptive": gc.adaptive,
        "steps": traj.diagnostics["steps"],
        "cfl_margins": traj.diagnostics["cfl_margin"],
        "min_tame_slack": min(traj.diagnostics["tame_slack"]),
        "config": cfg,
    }
    atomic_write(os.path.join(out_dir, "trajectory.csv"), csv_text(cols, rows))
    atomic_write(os.path.join(out_dir, "trajectory.json"), json_text(header))
    return ["trajectory.csv", "trajectory.json"]


def cmd_kernel(cfg, out_dir):
    x = cfg["eps"]
    f = K.build_kernel_field(x, cfg["delta"], cfg["half_width"])
    w, z, c, s = f.grid()
    grid = {"w": w, "z": z, "chi": c, "sigma_sharp": s}
    if cfg["eps0_compare"]:
        grid["chi0"] = K.chi0(w, z)
    atomic_write(os.path.join(out_dir, "kernel_grid.csv"), columns_text(grid))
    tw, aw, tz, bz = f.axis_traces()
    tt = K.chi_traces(x)
    A, B = tt.A(tw), tt.B(tz)
    err = np.maximum(np.abs(aw - A), np.abs(bz - B))
    traces = {
        "w": tw, "A": A, "B": B, "C1_w0": tt.C1_w0(tw), "C2_0z": tt.C2_0z(tw), "C1_0z": tt.C1_0z(tw), "C2_w0": tt.C2_w0(tw),
        "A_numeric": aw, "B_numeric": bz, "trace_error": err,
    }
    atomic_write(os.path.join(out_dir, "traces.csv"), columns_text(traces))
    n = int(round((cfg["omega_w_max"] - cfg["omega_w_min"]) / cfg["omega_step"]))
    ww = cfg["omega_w_min"] + cfg["omega_step"] * np.arange(n + 1)
    xi, om, qm, qp = K.xi_omega(ww, x)
    atomic_write(os.path.join(out_dir, "omega.csv"), columns_text({"w": ww, "Omega": om, "Xi": xi, "Q_minus": qm, "Q_plus": qp}))
    sign_changes = ww[:-1][np.sign(om[:-1]) != np.sign(om[1:])]
    report = {
        "eps": x,
        "delta": cfg["delta"],
        "half_width": cfg["half_width"],
        "trace_error_max": float(err.max()),
        "sigma_path_residual": f.path_residual,
        "omega_sign_changes": sign_changes.tolist(),
        "chi_min": float(c.min()),
    }
    if cfg["eps0_compare"]:
        report["chi_minus_chi0_max"] = float(np.abs(c - grid["chi0"]).max())
    atomic_write(os.path.join(out_dir, "report.json"), json_text(report))
    return ["kernel_grid.csv", "traces.csv", "omega.csv", "report.json"]


def _campaign(cfg, seed):
    """Run a verification campaign; returns ``[(report, blocking, expected_fail)]``."""
    x = cfg["eps"]
    rng = np.random.default_rng(seed)
    name = cfg["campaign"]
    out = []
    if name == "tame-audit":
        n = cfg["n_problems"]
        rl, vl = R.random_tame_states(rng, n, 1.0, x)
        rr, vr = R.random_tame_states(rng, n, 1.0, x)
        worst = None
        for i in range(n):
            fmax = float(S.speed_factor(max(abs(vl[i]), abs(vr[i])), x))
            gc = S.GridConfig.on_interval(-1.0, 1.0, cfg["n_cells"], 0.4 / fmax, adaptive=True)
            r0 = lambda xx, i=i: np.where(xx < 0, rl[i], rr[i])  # noqa: E731
            v0 = lambda xx, i=i: np.where(xx < 0, vl[i], vr[i])  # noqa: E731
            s0, region = S.average_initial(r0, v0, gc, x)
            tr = S.run(s0, 10 * gc.tau, gc, x, region, check_tame=False)
            rep = V.tame_audit(tr)
            if worst is None or rep.meta["min_slack"] < worst.meta["min_slack"]:
                worst = rep
        worst.name = "tame-audit"
        worst.meta["n_problems"] = n
        out.append((worst, True, False))
    elif name == "scaling":
        lam = cfg["lambda"]

        def runner(scale):
            gc = S.GridConfig.on_interval(-2.0, 2.0, cfg["n_cells"], 0.2)
            s0, region = S.average_initial(lambda xx: scale * np.where(xx < 0, 1.0, 0.2), lambda xx: np.where(xx < 0, 0.3, -0.2), gc, x)
            return S.run(s0, 0.25, gc, x, region)

        out.append((V.scaling_equivariance(runner, lam), True, False))
    elif name == "rh":
        n = cfg["n_problems"]
        rl, vl = R.random_tame_states(rng, n, 1.0, x)
        rr, vr = R.random_tame_states(rng, n, 1.0, x)
        fb = R.solve_batch(rl, vl, rr, vr, x)
        worst = 0.0
        for i in range(n):
            f = fb.fan(i)
            for w, a, b in ((f.wave1, f.left, f.middle), (f.wave2, f.middle, f.right)):
                if isinstance(w, R.Shock):
                    worst = max(worst, V.rh_residual(a, b, w.speed, x).max_abs)
        out.append((V.ResidualReport("rh", worst, worst, 1e-10, {"n_problems": n}), True, False))
        # negative control: a rarefaction endpoint pair with the mean speed
        i = int(np.flatnonzero(fb.kind1 == R.RAREFACTION)[0]) if np.any(fb.kind1 == R.RAREFACTION) else None
        if i is not None:
            f = fb.fan(i)
            ctl = V.rh_residual(f.left, f.middle, 0.5 * (f.wave1.xi_lo + f.wave1.xi_hi), x)
            ctl.name = "rh-negative-control"
            out.append((ctl, False, True))
    elif name == "wave":
        if x != 1.0:
            raise ConfigError("campaign 'wave' needs eps = 1")
        a0 = lambda xx: 1.0 + 0.1 * np.sin(2 * np.pi * xx)  # noqa: E731
        b0 = lambda xx: 0.0 * xx  # noqa: E731
        gc = S.GridConfig.on_interval(0.0, 1.0, cfg["n_cells"], 0.4, boundary="periodic")
        s0, region = S.average_initial(a0, b0, gc, 1.0)
        rep = V.wave_equation_limit(S.run(s0, 0.5, gc, 1.0, region), a0, b0, tolerance=2.0 * gc.h)
        out.append((rep, True, False))
    elif name == "kernel-limit":
        out.append((V.kernel_eps_limit([0.1, 0.05, 0.025], deltas=(1 / 64, 1 / 128)), True, False))
        out.append((V.omega_eps_limit([0.1, 0.05, 0.025, 0.0125]), True, False))
    return out


def cmd_verify(cfg, out_dir, seed):
    results = _campaign(cfg, seed)
    lines = []
    failing = []
    for rep, blocking, expected_fail in results:
        d = json.loads(rep.to_json())
        d["blocking"] = blocking
        d["expected_fail"] = expected_fail
        d["status"] = ("expected-fail" if not rep.passed else "unexpected-pass") if expected_fail else ("pass" if rep.passed else "fail")
        lines.append(json.dumps(d, sort_keys=True))
        if blocking and not rep.passed:
            failing.append(rep.name)
    atomic_write(os.path.join(out_dir, "report.jsonl"), "\n".join(lines) + "\n")
    return failing


# ---------------------------------------------------------------------------
# entry point


def make_parser():
    p = argparse.ArgumentParser(prog="isorel", description="Relativistic isothermal Euler toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--eps", type=float, help="sound speed over light speed, in (0, 1]")
    common.add_argument("--out-dir", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads (recorded; runs are single threaded)")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("riemann", parents=[common], help="solve one Riemann problem")
    ev = sub.add_parser("evolve", parents=[common], help="run the staggered scheme")
    ev.add_argument("--scale", type=float, help="multiply the initial density")
    ev.add_argument("--adaptive", action="store_true", help="adapt tau to keep a CFL margin of 0.05")
    kn = sub.add_parser("kernel", parents=[common], help="tabulate the kernels and traces")
    kn.add_argument("--eps0-compare", action="store_true", help="add the non-relativistic kernel column")
    vf = sub.add_parser("verify", parents=[common], help="run a verification campaign")
    vf.add_argument("--campaign", choices=CAMPAIGNS)
    vf.add_argument("--lambda", dest="lam", type=float, help="scale factor for the scaling campaign")
    return p


def load_config(args) -> dict:
    raw = {}
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"config file: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if args.eps is not None:
        raw["eps"] = args.eps
    if args.command == "evolve":
        if args.scale is not None:
            raw["scale"] = args.scale
        if args.adaptive:
            raw["adaptive"] = True
    if args.command == "kernel" and args.eps0_compare:
        raw["eps0_compare"] = True
    if args.command == "verify":
        if args.campaign:
            raw["campaign"] = args.campaign
        if args.lam is not None:
            raw["lambda"] = args.lam
    return canonical_config(args.command, raw)


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.threads < 1:
            raise ConfigError("threads must be at least 1")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out_dir
    try:
        if args.command == "riemann":
            cmd_riemann(cfg, out)
        elif args.command == "evolve":
            cmd_evolve(cfg, out)
        elif args.command == "kernel":
            cmd_kernel(cfg, out)
        else:
            failing = cmd_verify(cfg, out, args.seed)
            if failing:
                print("verification failed: " + ", ".join(failing), file=sys.stderr)
                return EXIT_VERIFY
    except CflViolation as exc:
        print(f"CFL violation: {exc}", file=sys.stderr)
        return EXIT_CFL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IsorelError, ValueError, FloatingPointError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
