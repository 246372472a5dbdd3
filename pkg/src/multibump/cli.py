"""Command line entry point.

Every subcommand reads an optional JSON config (--config), lets explicit
flags override it, writes its artifacts into --out and finishes with a
manifest echoing the resolved parameters.

Exit status: 0 on success, 1 on a numerical failure, 2 on bad input.
"""

import argparse
import json
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy

from . import __version__
from .errors import ConfigInvalid, MultibumpError

SCHEMA_VERSION = 1


# ----------------------------------------------------------------------------
# parsing helpers


def _float_list(field, text):
    if isinstance(text, (list, tuple)):
        items = text
    else:
        items = [t for t in str(text).split(",") if t.strip()]
    try:
        vals = [float(t) for t in items]
    except (TypeError, ValueError):
        raise ConfigInvalid(field, f"cannot parse {text!r} as a comma separated list of numbers")
    if not vals or not all(np.isfinite(vals)):
        raise ConfigInvalid(field, "expected a non-empty list of finite numbers")
    return vals


def _positive(cfg, field):
    v = cfg.get(field)
    if v is None:
        return
    if not isinstance(v, (int, float)) or not v > 0:
        raise ConfigInvalid(field, "must be a positive number")


def _threads():
    raw = os.environ.get("MULTIBUMP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigInvalid("MULTIBUMP_THREADS", f"not an integer: {raw!r}")
    if n < 1:
        raise ConfigInvalid("MULTIBUMP_THREADS", "must be at least 1")
    return n


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


# ----------------------------------------------------------------------------
# atomic output


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, kind, payload):
    doc = {"schema": f"multibump.{kind}/{SCHEMA_VERSION}"}
    doc.update(_jsonable(payload))
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_csv(path, kind, columns, data, meta=None):
    lines = [f"# schema: multibump.{kind}/{SCHEMA_VERSION}"]
    if meta:
        lines.append("# meta: " + json.dumps(_jsonable(meta), sort_keys=True))
    lines.append(",".join(columns))
    arr = np.column_stack([np.asarray(c, dtype=float) for c in data])
    lines.extend(",".join(repr(float(v)) for v in row) for row in arr)
    _atomic_write(path, "\n".join(lines) + "\n")


def write_field(path, kind, field, fmt):
    g = field.grid
    meta = dict(g.meta(), order="row-major", rows="z", cols="x")
    if fmt == "npy":
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".npy")
        os.close(fd)
        np.save(tmp, field.values)
        os.replace(tmp, path)
        write_json(path + ".json", kind, {"meta": meta})
        return
    lines = [f"# schema: multibump.{kind}/{SCHEMA_VERSION}",
             "# meta: " + json.dumps(_jsonable(meta), sort_keys=True)]
    lines.extend(",".join(repr(float(v)) for v in row) for row in field.values)
    _atomic_write(path, "\n".join(lines) + "\n")


# ----------------------------------------------------------------------------
# subcommands


def _params(cfg):
    from .pipeline import base_params
    a = _float_list("a", cfg["a"]) if cfg.get("a") is not None else None
    if a is not None and len(a) != cfg["k"]:
        raise ConfigInvalid("a", f"expected {cfg['k']} positions, got {len(a)}")
    return base_params(cfg["k"], cfg["p"], cfg["alpha"], a, T1=cfg["T1"], T2=cfg["T2"])


def cmd_profile(cfg, out):
    from .profile1d import HomoclinicProfile, numeric_lambda1
    from .pipeline import profile_constants
    p = cfg["p"]
    prof = HomoclinicProfile(p)
    if cfg["emit"] == "samples":
        h, xm = cfg["h"], cfg["xmax"]
        x = np.arange(-xm, xm + 0.5 * h, h)
        write_csv(os.path.join(out, "profile_samples.csv"), "profile-samples",
                  ["x", "w", "wp", "wpp", "Z"],
                  [x, prof.w(x), prof.wp(x), prof.wpp(x), prof.Z(x)], {"p": p})
        return {"samples": len(x)}
    c = profile_constants(p).as_dict()
    c["lambda1_numeric"] = numeric_lambda1(p)
    write_json(os.path.join(out, "profile_constants.json"), "profile-constants", c)
    return c


def cmd_toda(cfg, out):
    from .pipeline import default_positions, profile_constants
    from .toda import TodaConfig, integrate_toda
    k = cfg["k"]
    a = _float_list("a", cfg["a"]) if cfg.get("a") is not None else list(default_positions(k))
    cp = cfg["cp"] if cfg.get("cp") is not None else profile_constants(cfg["p"]).c_p
    tr = integrate_toda(TodaConfig(k, tuple(a), cp, cfg["alpha"], cfg["zmax"], cfg["step"]))
    if cfg["emit"] == "trajectory":
        cols = ["z"] + [f"f_{j + 1}" for j in range(k)] + [f"fp_{j + 1}" for j in range(k)]
        write_csv(os.path.join(out, "toda_trajectory.csv"), "toda-trajectory", cols,
                  [tr.z, *tr.f, *tr.fp], {"k": k, "a": a, "c_p": cp, "alpha": cfg["alpha"]})
    rec = dict(tr.asymptotics, energy_drift=tr.energy_drift, k=k, a=a, c_p=cp, alpha=cfg["alpha"])
    write_json(os.path.join(out, "toda_asymptotics.json"), "toda-asymptotics", rec)
    return rec


def cmd_dancer(cfg, out):
    from .dancer import continue_dancer_branch
    pts = continue_dancer_branch(cfg["p"], cfg["delta_target"], n_steps=cfg["steps"], hx=cfg["hx"])
    write_csv(os.path.join(out, "dancer_branch.csv"), "dancer-branch",
              ["delta", "T", "residual", "defect_norm"],
              [[q.delta for q in pts], [q.T for q in pts], [q.residual for q in pts],
               [q.defect_norm for q in pts]], {"p": cfg["p"]})
    lam = 0.25 * (cfg["p"] - 1) * (cfg["p"] + 3)
    rec = {"T_star": pts[0].T, "T_theory": 2 * np.pi / np.sqrt(lam), "points": len(pts)}
    write_json(os.path.join(out, "dancer_summary.json"), "dancer-summary", rec)
    return rec


def cmd_ansatz(cfg, out):
    from .ansatz import assemble_W, error_star, make_grid
    prm = _params(cfg)
    grid = make_grid(prm, hx=cfg["hx"], hz=cfg["hz"])
    E, S = error_star(prm, cfg["sigma"], grid=grid)
    rec = {"alpha": cfg["alpha"], "Estar": E, "grid": grid.meta()}
    if cfg["emit"] == "field":
        from .ansatz import Field2D
        ext = "npy" if cfg["format"] == "npy" else "csv"
        write_field(os.path.join(out, f"ansatz_W.{ext}"), "field-W",
                    Field2D(grid, assemble_W(prm, grid).W), cfg["format"])
        write_field(os.path.join(out, f"ansatz_S.{ext}"), "field-S", S, cfg["format"])
    write_json(os.path.join(out, "ansatz_report.json"), "ansatz-report", rec)
    return rec


def _sweep_entry(args):
    cfg, al = args
    from .ansatz import error_star, make_grid
    c = dict(cfg, alpha=al)
    prm = _params(c)
    grid = make_grid(prm, hx=cfg["hx"], hz=cfg["hz"])
    E, _ = error_star(prm, cfg["sigma"], grid=grid)
    row = {"alpha": al, "Estar": E, "phi_star": None, "delta": None,
           "newton_iterations": None, "final_residual": None}
    if cfg.get("reduce"):
        from .reduction import reduced_fixed_point_iterate
        st, _, _ = reduced_fixed_point_iterate(prm, max_iters=cfg["iters"], grid=grid)
        row["delta"] = st.delta.tolist()
    if cfg.get("solve"):
        from .corrector import newton_solve
        _, rep = newton_solve(prm, grid=grid, sigma=cfg["sigma"], tol=cfg["tol"])
        row.update(phi_star=rep.distance_star, newton_iterations=rep.iterations,
                   final_residual=rep.residual_sup[-1])
    return row


def _fit_with_ci(alphas, values):
    la, lv = np.log(alphas), np.log(values)
    if len(la) < 2:
        return None, None
    if len(la) == 2:
        return float((lv[1] - lv[0]) / (la[1] - la[0])), None
    coef, cov = np.polyfit(la, lv, 1, cov=True)
    se = float(np.sqrt(cov[0, 0]))
    from scipy.stats import t as student
    q = float(student.ppf(0.975, len(la) - 2))
    return float(coef[0]), [float(coef[0] - q * se), float(coef[0] + q * se)]


def cmd_residual_sweep(cfg, out):
    alphas = _float_list("alphas", cfg["alphas"])
    if any(not 0 < a < 1 for a in alphas):
        raise ConfigInvalid("alphas", "every alpha must lie in (0, 1)")
    if any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ConfigInvalid("alphas", "alpha list must be strictly decreasing")
    jobs = [(dict(cfg), al) for al in alphas]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_entry, jobs))
    else:
        rows = [_sweep_entry(j) for j in jobs]
    E = [r["Estar"] for r in rows]
    slope, ci = _fit_with_ci(alphas, E)
    bound = 2 - 2 * cfg["sigma"]
    Cs = [e / a ** bound for a, e in zip(alphas, E)]
    rep = {"k": cfg["k"], "p": cfg["p"], "sigma": cfg["sigma"], "table": rows,
           "slope": slope, "slope_ci95": ci, "bound_exponent": bound,
           "constant_spread": max(Cs) / min(Cs),
           "Estar_decreasing": bool(all(b < a for a, b in zip(E, E[1:])))}
    phis = [r["phi_star"] for r in rows]
    if all(v is not None for v in phis):
        rep["phi_star_slope"], rep["phi_star_slope_ci95"] = _fit_with_ci(alphas, phis)
        rep["phi_star_decreasing"] = bool(all(b < a for a, b in zip(phis, phis[1:])))
    write_json(os.path.join(out, "residual_sweep.json"), "sweep-report", rep)
    return rep


def cmd_linear_check(cfg, out):
    from .linear import kernel_convergence
    rec = {"p": cfg["p"], "residuals": kernel_convergence(cfg["p"], cfg["h_coarse"], cfg["h_fine"])}
    write_json(os.path.join(out, "linear_check.json"), "kernel-check", rec)
    return rec


def cmd_reduce(cfg, out):
    from .ansatz import make_grid
    from .reduction import project_error, reduced_fixed_point_iterate
    prm = _params(cfg)
    grid = make_grid(prm, hx=cfg["hx"], hz=cfg["hz"])
    rec0 = project_error(prm, grid=grid)
    st, prm2, hist = reduced_fixed_point_iterate(prm, max_iters=cfg["iters"], grid=grid)
    rec = project_error(prm2, grid=grid)
    k = prm.k
    cols = ["z"] + [f"Pi_f_{j + 1}" for j in range(k)] + [f"Pi_e_{j + 1}" for j in range(k)]
    write_csv(os.path.join(out, "reduce_projections.csv"), "projections", cols,
              [rec.z, *rec.Pi_f, *rec.Pi_e], {"alpha": cfg["alpha"], "state": "final"})
    doc = {"alpha": cfg["alpha"], "delta": st.delta.tolist(), "contraction_history": hist,
           "projection_discrepancy": {"initial_sup": rec0.discrepancy_f,
                                      "initial_over_alpha2": rec0.discrepancy_f / cfg["alpha"] ** 2,
                                      "final_sup": rec.discrepancy_f}}
    write_json(os.path.join(out, "reduce_report.json"), "reduce-report", doc)
    return doc


def cmd_solve(cfg, out):
    from .corrector import newton_solve, verify_solution_profile
    prm = _params(cfg)
    u, rep = newton_solve(prm, tol=cfg["tol"], max_iter=cfg["max_iter"], sigma=cfg["sigma"],
                          hx=cfg["hx"], hz=cfg["hz"])
    doc = rep.as_dict()
    doc["profile"] = verify_solution_profile(u, prm)
    doc["grid"] = u.grid.meta()
    if cfg["emit"] == "field":
        ext = "npy" if cfg["format"] == "npy" else "csv"
        write_field(os.path.join(out, f"solve_u.{ext}"), "field-u", u, cfg["format"])
    write_json(os.path.join(out, "solve_report.json"), "newton-report", doc)
    return doc


# ----------------------------------------------------------------------------
# argument wiring

_MODEL = {"k": 2, "p": 2.0, "alpha": 0.1, "a": None, "T1": 1.0, "T2": 2.0}

COMMANDS = {
    "profile": (cmd_profile, {"p": 2.0, "emit": "constants", "xmax": 20.0, "h": 0.01}),
    "toda": (cmd_toda, {"k": 2, "p": 2.0, "a": None, "cp": None, "alpha": 1.0, "zmax": 40.0,
                        "step": 1e-3, "emit": "asymptotics"}),
    "dancer": (cmd_dancer, {"p": 2.0, "delta_target": 0.1, "steps": 4, "hx": 0.05, "emit": "branch"}),
    "ansatz": (cmd_ansatz, dict(_MODEL, sigma=0.1, hx=0.05, hz=0.05, emit="report", format="csv")),
    "residual-sweep": (cmd_residual_sweep, dict(_MODEL, sigma=0.1, alphas="0.1,0.07,0.05", hx=0.05,
                                                hz=0.05, solve=False, reduce=False, iters=4, tol=1e-9)),
    "linear-check": (cmd_linear_check, {"p": 2.0, "h_coarse": 0.1, "h_fine": 0.05}),
    "reduce": (cmd_reduce, dict(_MODEL, hx=0.1, hz=0.1, iters=4)),
    "solve": (cmd_solve, dict(_MODEL, tol=1e-9, max_iter=8, sigma=0.1, hx=0.1, hz=0.1,
                              emit="report", format="csv")),
}

_CHOICES = {"emit": {"profile": ("constants", "samples"), "toda": ("trajectory", "asymptotics"),
                     "dancer": ("branch",), "ansatz": ("field", "report"), "solve": ("field", "report")},
            "format": ("csv", "npy")}

_TYPES = {"k": int, "steps": int, "iters": int, "max_iter": int, "emit": str, "format": str,
          "a": str, "alphas": str}


def build_parser():
    ap = argparse.ArgumentParser(prog="multibump", description="Multi-bump solutions toolkit")
    ap.add_argument("--version", action="version", version=f"multibump {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, defaults) in COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file with parameters; flags override it")
        sp.add_argument("--out", default=".", help="output directory")
        for key, val in defaults.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(val, bool):
                sp.add_argument(flag, action="store_const", const=True, default=None)
            else:
                sp.add_argument(flag, type=_TYPES.get(key, float), default=None)
    return ap


def resolve(command, ns):
    """defaults < config file < explicit flags."""
    defaults = COMMANDS[command][1]
    cfg = dict(defaults)
    if ns.config:
        try:
            with open(ns.config) as fh:
                filecfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid("config", str(exc))
        if not isinstance(filecfg, dict):
            raise ConfigInvalid("config", "top level must be an object")
        for key, val in filecfg.items():
            key = key.replace("-", "_")
            if key not in defaults:
                raise ConfigInvalid(key, f"unknown parameter for {command}")
            cfg[key] = val
    for key in defaults:
        val = getattr(ns, key, None)
        if val is not None:
            cfg[key] = val
    validate(command, cfg)
    return cfg


def validate(command, cfg):
    for key in ("p", "alpha", "sigma", "hx", "hz", "h", "xmax", "zmax", "step", "tol",
                "h_coarse", "h_fine", "delta_target"):
        _positive(cfg, key)
    if "p" in cfg and cfg["p"] <= 1:
        raise ConfigInvalid("p", "must exceed 1")
    if "k" in cfg and (not isinstance(cfg["k"], int) or cfg["k"] < 1):
        raise ConfigInvalid("k", "must be a positive integer")
    if "alpha" in cfg and command not in ("toda",) and not 0 < cfg["alpha"] < 1:
        raise ConfigInvalid("alpha", "must lie in (0, 1)")
    if "sigma" in cfg and not 0 < cfg["sigma"] < 1:
        raise ConfigInvalid("sigma", "must lie in (0, 1)")
    if "emit" in cfg and cfg["emit"] not in _CHOICES["emit"][command]:
        raise ConfigInvalid("emit", f"expected one of {_CHOICES['emit'][command]}")
    if "format" in cfg and cfg["format"] not in _CHOICES["format"]:
        raise ConfigInvalid("format", "expected csv or npy")
    if cfg.get("a") is not None:
        _float_list("a", cfg["a"])
    if "alphas" in cfg:
        _float_list("alphas", cfg["alphas"])
    for key in ("steps", "iters", "max_iter"):
        if key in cfg and (not isinstance(cfg[key], int) or cfg[key] < 1):
            raise ConfigInvalid(key, "must be a positive integer")


def _manifest(command, cfg, out, status, wall, error=None):
    doc = {"command": command, "parameters": cfg, "status": status, "wall_time_s": wall,
           "versions": {"multibump": __version__, "python": platform.python_version(),
                        "numpy": np.__version__, "scipy": scipy.__version__},
           "threads": os.environ.get("MULTIBUMP_THREADS", "1")}
    if error:
        doc["error"] = error
    write_json(os.path.join(out, f"manifest_{command}.json"), "manifest", doc)


def main(argv=None):
    ap = build_parser()
    ns = ap.parse_args(argv)
    command = ns.command
    out = ns.out
    try:
        cfg = resolve(command, ns)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        summary = COMMANDS[command][0](cfg, out)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MultibumpError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        _manifest(command, cfg, out, "failed", time.perf_counter() - t0,
                  error={"type": type(exc).__name__, "message": str(exc)})
        return 1
    _manifest(command, cfg, out, "ok", time.perf_counter() - t0)
    print(json.dumps(_jsonable(_short(summary)), sort_keys=True))
    return 0


def _short(summary):
    """A compact stdout echo of the main result."""
    if not isinstance(summary, dict):
        return summary
    keep = {}
    for key, val in summary.items():
        if isinstance(val, (int, float, str, bool)) or val is None:
            keep[key] = val
        elif isinstance(val, (list, tuple)) and len(val) <= 8 and all(
                isinstance(v, (int, float)) for v in val):
            keep[key] = list(val)
    return keep


if __name__ == "__main__":
    sys.exit(main())
