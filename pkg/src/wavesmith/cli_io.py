"""Command line front end: config handling, dispatch, CSV/JSON emission.

Data files are byte-deterministic: floats are written with 17 significant
digits through ``format`` (locale independent) and wall-clock timings live
only in the ``metadata`` block of the JSON report.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .kernel_constants import DomainError, as_eps

SCHEMA_VERSION = 1
PROFILE_COLUMNS = ("x", "G", "A", "B", "P", "Q", "regime", "residual")
LV_COLUMNS = ("E", "T", "D", "D/(4*pi*E)", "D/E^2")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INCONCLUSIVE = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


class Inconclusive(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


def fmt(v) -> str:
    """17 significant digits; nan/inf spelled the way float() reads them."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def _plain(obj):
    """Reduce dataclasses, numpy and complex values to JSON-ready types."""
    if is_dataclass(obj) and not isinstance(obj, type):
        obj = obj.as_dict() if hasattr(obj, "as_dict") else asdict(obj)
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        # JSON has no nan/inf literals
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if not obj:
        return "[]"
    if all(not isinstance(v, (dict, list)) for v in obj):
        return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
    return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"


def dumps(obj, indent: int = 2) -> str:
    return _encode(_plain(obj), indent, 0) + "\n"


def build_report(command, config, result, timings=None):
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "config": config,
           "result": result}
    meta = {"version": __version__}
    from .volterra_march import BACKEND
    meta["backend"] = BACKEND
    if timings is not None:
        meta["wall_clock_s"] = timings
    doc["metadata"] = meta
    return doc


def load_report(text):
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {doc.get('schema_version')!r}")
    return doc


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def profile_columns(history, regime=None, residual=None, start=None):
    """Column dict for a TrajectoryHistory (marched nodes only by default)."""
    n0 = history.n_seed if start is None else start
    n = history.n
    x, G, A, B, P, Q, res = history.values()
    labels = regime if regime is not None else history.regime
    if len(labels) < n:
        labels = list(labels) + [""] * (n - len(labels))
    cols = {"x": x[n0:], "G": G[n0:], "A": A[n0:], "B": B[n0:], "P": P[n0:], "Q": Q[n0:],
            "regime": list(labels[n0:n]),
            "residual": res[n0:] if residual is None else np.broadcast_to(residual, (n - n0,))}
    return cols


def write_table(columns, names, fh):
    rows = len(columns[names[0]])
    if rows == 0:
        raise PreconditionError("refusing to write a header-only table (no rows)")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(names)
    for i in range(rows):
        w.writerow([v[i] if isinstance(v[i], str) else fmt(v[i])
                    for v in (columns[k] for k in names)])


def profile_csv(columns) -> str:
    buf = io.StringIO()
    write_table(columns, PROFILE_COLUMNS, buf)
    return buf.getvalue()


def emit_profile(history, path, regime=None, residual=None):
    """Write the profile CSV; ``history`` is a TrajectoryHistory or a column dict."""
    cols = history if isinstance(history, dict) else profile_columns(history, regime, residual)
    text = profile_csv(cols)
    _write_text(path, text)
    return Path(path)


def read_profile(path):
    """Inverse of emit_profile: numeric columns as arrays, regime as a list."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != PROFILE_COLUMNS:
        raise PreconditionError(f"{path}: header is not {','.join(PROFILE_COLUMNS)}")
    body = rows[1:]
    if not body:
        raise PreconditionError(f"{path}: header only, no rows")
    out = {}
    for j, name in enumerate(PROFILE_COLUMNS):
        col = [r[j] for r in body]
        out[name] = col if name == "regime" else np.array([float(c) for c in col])
    return out


def _write_text(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def read_config(path):
    """Flat ``key = value`` lines; '#' starts a comment.  Returns
    {key: (value, line number)}."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    for k, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{k}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key in out:
            raise ConfigError(f"{path}:{k}: duplicate key '{key}'")
        out[key] = (val, k)
    return out


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def parse_window(s):
    try:
        a, b = (float(t) for t in str(s).split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must be LO:HI, got {s!r}") from None
    if not b > a:
        raise argparse.ArgumentTypeError("window must satisfy LO < HI")
    return a, b


def parse_floats(s):
    try:
        return [float(t) for t in str(s).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {s!r}") from None


def apply_config(sub: argparse.ArgumentParser, path):
    """Install config values as defaults of ``sub`` so that flags win."""
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    values = {}
    for key, (raw, line) in read_config(path).items():
        act = actions.get(key)
        if act is None:
            raise ConfigError(f"{path}:{line}: unknown key '{key}'")
        try:
            if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                values[key] = _bool(raw)
            else:
                values[key] = act.type(raw) if act.type else raw
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"{path}:{line}: bad value for '{key}': {exc}") from None
        if act.choices is not None and values[key] not in act.choices:
            raise ConfigError(f"{path}:{line}: '{key}' must be one of {sorted(act.choices)}")
    sub.set_defaults(**values)


def _eps(v):
    try:
        return as_eps(v)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

class Timer:
    def __init__(self):
        self.phases = {}

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - t0


def _echo(ns):
    skip = {"command", "func", "config", "no_timing", "out", "json"}
    return {k: v for k, v in sorted(vars(ns).items()) if k not in skip}


def cmd_roots(ns, timer):
    from .dispersion import find_roots, fundamental_interval, relative_residual
    e = _eps(ns.eps)
    with timer.phase("roots"):
        r = find_roots(e, radius=ns.radius, certify=not ns.no_certify)
    lo, hi = fundamental_interval(r)
    return {"eps": e, "mu_plus": r.mu_plus, "mu_minus": r.mu_minus, "mu_star": r.mu_star,
            "residuals": {"mu_plus": relative_residual(r.mu_plus, e),
                          "mu_minus": relative_residual(r.mu_minus, e),
                          "mu_star": relative_residual(r.mu_star, e)},
            "residual_norm": r.residual_norm, "certified_count": r.count,
            "period": 2.0 * math.pi / r.mu_plus.imag, "fundamental_interval": [lo, hi]}, None


def _boundaries(x, labels):
    return [{"x": float(x[i]), "from": labels[i - 1], "to": labels[i]}
            for i in range(1, len(labels)) if labels[i] != labels[i - 1]]


def cmd_march(ns, timer):
    from . import volterra_march as vm
    from .dispersion import find_roots
    from .kernel_constants import constant_state
    from .regime_asymptotics import mass_sequence
    e = _eps(ns.eps)
    roots = find_roots(e, certify=False)
    state = constant_state(e)
    spec = vm.SeedSpec(ns.L, ns.c_star)
    x0 = vm.default_x0(spec, roots, state)
    window = ns.window or (x0, x0 + ns.periods * 2.0 * math.pi / roots.mu_plus.imag)
    try:
        params = vm.MarchParams(e, ns.h, window, quad_tol=ns.quad_tol, control=not ns.no_control)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    with timer.phase("march"):
        hist = vm.march(spec, params, roots, state)
    if "failure" in hist.events:
        raise vm.MarchError(f"march failed at x = {hist.events['failure'][0]}")
    ms = mass_sequence(hist, e)
    n0 = hist.n_seed
    res = hist.residual[n0:hist.n]
    cols = profile_columns(hist)
    result = {"x0": hist.events.get("x0"), "window": list(window), "nodes": hist.n - n0,
              "events": {k: v for k, v in sorted(hist.events.items()) if k != "failure"},
              "residual_max": float(res.max()) if res.size else None,
              "residual_mean": float(res.mean()) if res.size else None,
              "mass_sequence": ms.as_dict(),
              "regime_boundaries": _boundaries(cols["x"], cols["regime"])}
    return result, cols


def cmd_shoot(ns, timer):
    from . import shooting as sh
    from .dispersion import find_roots
    from .kernel_constants import constant_state
    e = _eps(ns.eps)
    lo_win, hi_win = ns.window if ns.window else (None, None)
    try:
        cfg = sh.ShootConfig(e, ns.L_low, ns.L_high, ns.c_star, ns.tol, ns.h, hi_win, ns.grid)
        roots = find_roots(e, certify=False)
        cfg.bracket(roots)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    state = constant_state(e)
    tune_report = None
    try:
        with timer.phase("bisect"):
            L, rep = sh.bisect_L(cfg, roots, state)
        if ns.c_star_tune:
            for _ in range(ns.rounds - 1):
                with timer.phase("tune"):
                    c, tune_report = sh.tune_c_star(cfg, L, roots, state)
                cfg = sh.ShootConfig(**{**asdict(cfg), "c_star": c})
                with timer.phase("bisect"):
                    L_new, rep = sh.bisect_L(cfg, roots, state)
                done = abs(L_new - L) <= cfg.bisection_tol
                L = L_new
                if done:
                    break
    except sh.ShootError as exc:
        if exc.report is not None and exc.report.outcomes:
            raise Inconclusive(str(exc), exc.report.as_dict()) from None
        raise
    result = rep.as_dict()
    result["mu_plus"] = roots.mu_plus
    result["mu_star"] = roots.mu_star
    if tune_report is not None:
        result["tune"] = tune_report.as_dict()
    if rep.final_outcome is not None and rep.final_outcome.kind == "Inconclusive":
        raise Inconclusive("accepted trajectory is inconclusive", result)
    hist = rep.trajectory
    cols = profile_columns(hist)
    from .regime_asymptotics import classify
    cols["regime"] = classify(hist, e)[hist.n_seed:hist.n]
    if lo_win is not None:
        keep = (cols["x"] >= lo_win) & (cols["x"] <= hi_win)
        cols = {k: ([v[i] for i in np.nonzero(keep)[0]] if isinstance(v, list) else v[keep])
                for k, v in cols.items()}
    res = np.asarray(cols["residual"])
    result["residual_mean"] = float(res.mean()) if res.size else None
    result["regime_boundaries"] = _boundaries(cols["x"], cols["regime"])
    return result, cols


def cmd_lv_energy(ns, timer):
    from .lotka_volterra import d_table
    if ns.E:
        Es = ns.E
    else:
        if not (0 < ns.e_min < ns.e_max) or ns.n_e < 1:
            raise ConfigError("need 0 < e_min < e_max and n_e >= 1")
        Es = np.geomspace(ns.e_min, ns.e_max, ns.n_e).tolist()
    if any(not E > 0 for E in Es):
        raise ConfigError("energies must be positive")
    with timer.phase("trace"):
        orbits = d_table(Es, ns.tol, workers=ns.workers)
    cols = {"E": [o.energy for o in orbits], "T": [o.period for o in orbits],
            "D": [o.d_of_e for o in orbits],
            "D/(4*pi*E)": [o.d_of_e / (4 * math.pi * o.energy) for o in orbits],
            "D/E^2": [o.d_of_e / o.energy ** 2 for o in orbits]}
    result = {"rows": len(orbits), "max_drift": max(o.drift for o in orbits)}
    return result, cols


def cmd_kinetic(ns, timer):
    from .kinetic_additive import alpha_family, family_residual, sign_change_scan, solve_kinetic
    if not ns.rho > 0:
        raise ConfigError("rho must be positive")
    with timer.phase("kinetic"):
        prof = solve_kinetic(ns.rho, window=(ns.x_start, ns.x_end), h=ns.h)
    result = {"rho": prof.rho, "mass": prof.mass, "shift": prof.shift,
              "diagnostics": prof.diagnostics}
    if ns.alpha == 0.0:
        return result, profile_columns(prof.history)
    with timer.phase("alpha"):
        base = None if abs(ns.rho - 1.0) < 1e-3 else prof
        fam = alpha_family(base, ns.alpha, np.arange(ns.x_start, ns.x_end + 0.5 * ns.h, ns.h),
                           rho=prof.rho)
    sc = sign_change_scan(fam)
    # the family is built by quadrature, not marched; its defect is global
    res = family_residual(fam)
    result.update(alpha=ns.alpha, sign_change=asdict(sc), family_residual=res,
                  clipped=fam.clipped)
    cols = {"x": fam.x, "G": fam.G, "A": fam.A, "B": fam.B, "P": fam.P, "Q": fam.Q,
            "regime": ["Kinetic"] * fam.x.size,
            "residual": np.full(fam.x.size, res["identity"])}
    return result, cols


def cmd_mass_map(ns, timer):
    from .regime_asymptotics import RegimeDomainError, iterate_mass, steps_to_exceed
    try:
        seq = iterate_mass(ns.m0, ns.n)
        steps = steps_to_exceed(ns.m0, ns.level)
    except RegimeDomainError as exc:
        raise ConfigError(str(exc)) from None
    d = seq.as_dict()
    d["steps_to_exceed"] = steps
    d["level"] = ns.level
    return d, None


def cmd_predict(ns, timer):
    from .regime_asymptotics import RegimeDomainError, predict
    e = _eps(ns.eps)
    try:
        with timer.phase("predict"):
            pp = predict(e, ns.m0, n_cycles=ns.n_cycles, h=ns.h)
    except RegimeDomainError as exc:
        raise ConfigError(str(exc)) from None
    nan = np.full(pp.x.size, np.nan)
    cols = {"x": pp.x, "G": pp.G, "A": pp.A, "B": pp.B, "P": nan, "Q": nan,
            "regime": list(pp.regime), "residual": nan}
    return {"masses": pp.masses, "regime_boundaries": _boundaries(pp.x, pp.regime)}, cols


def cmd_instability(ns, timer):
    from . import instability as ins
    e = _eps(ns.eps)
    if not 0 < ns.a1 < 0.5:
        raise ConfigError("a1 must lie in (0, 1/2)")
    try:
        spec = ins.TriggerSpec(ns.x_star, ns.sign, ns.g_star, ns.a1, ns.b1)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    with timer.phase("fast_system"):
        hist, prof = ins.synthetic_history(spec, e, h=ns.h, T=ns.span)
    te = ins.t_eps(spec.A1)
    diag = {"t_eps": te, "t_eps_iterated_log": ins.t_eps_iterated_log(spec.A1),
            "b_hat_zero": prof.b_zero(), "x1": spec.x1,
            "a_hat_bound_constant": ins.a_hat_bound_constant(prof),
            "mollifier_delta": ins.mollifier_delta(spec.A1),
            "mollifier_gap": ins.mollifier_gap(spec.A1),
            "constant_state_ratio": ins.constant_state_ratio(e)}
    if ns.nonlocal_check:
        with timer.phase("nonlocal"):
            diag["nonlocal"] = ins.nonlocal_bound_check(hist, spec, e).as_dict()
    cols = profile_columns(hist, regime=["Fast"] * hist.n, residual=np.nan, start=0)
    return diag, cols


def cmd_report(ns, timer):
    """Residual statistics and regime boundaries of a profile CSV, merged
    into an existing report when one is given."""
    try:
        prof = read_profile(ns.csv)
    except PreconditionError as exc:
        raise ConfigError(str(exc)) from None
    except OSError as exc:
        raise ConfigError(f"{ns.csv}: {exc.strerror or exc}") from None
    res = prof["residual"]
    fin = res[np.isfinite(res)]
    stats = {"rows": int(prof["x"].size), "x_range": [float(prof["x"][0]), float(prof["x"][-1])],
             "residual_max": float(fin.max()) if fin.size else None,
             "residual_mean": float(fin.mean()) if fin.size else None,
             "min_g_ratio": float(prof["G"].min() / prof["G"].max()),
             "regime_boundaries": _boundaries(prof["x"], prof["regime"])}
    if ns.report:
        doc = load_report(Path(ns.report).read_text())
        return {"source": doc.get("command"), "source_result": doc.get("result"),
                "profile": stats}, None
    return {"profile": stats}, None


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p, csv_out=True):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--json", help="write the JSON report here (default: stdout)")
    if csv_out:
        p.add_argument("--out", help="CSV output path")
    p.add_argument("--no-timing", action="store_true",
                   help="omit wall-clock timings (fully byte-stable report)")


def build_parser():
    ap = argparse.ArgumentParser(prog="wavesmith", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sp = ap.add_subparsers(dest="command", required=True)

    p = sp.add_parser("roots", help="dispersion roots")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--radius", type=float, default=3.0)
    p.add_argument("--no-certify", action="store_true")
    _common(p, csv_out=False)
    p.set_defaults(func=cmd_roots)

    p = sp.add_parser("march", help="march one seeded trajectory")
    p.add_argument("--eps", type=float)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--c-star", dest="c_star", type=float, default=0.0)
    p.add_argument("--h", type=float, default=0.05)
    p.add_argument("--window", type=parse_window)
    p.add_argument("--periods", type=float, default=5.0)
    p.add_argument("--quad-tol", dest="quad_tol", type=float, default=1e-10)
    p.add_argument("--no-control", dest="no_control", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_march)

    p = sp.add_parser("shoot", help="bisect L (and tune C*)")
    p.add_argument("--eps", type=float)
    p.add_argument("--window", type=parse_window,
                   help="LO:HI; HI ends the march, LO:HI bounds the emitted CSV")
    p.add_argument("--c-star-tune", dest="c_star_tune", action="store_true")
    p.add_argument("--c-star", dest="c_star", type=float, default=0.0)
    p.add_argument("--L-low", dest="L_low", type=float)
    p.add_argument("--L-high", dest="L_high", type=float)
    p.add_argument("--grid", type=int, default=16)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--h", type=float, default=0.05)
    p.add_argument("--rounds", type=int, default=3)
    _common(p)
    p.set_defaults(func=cmd_shoot)

    p = sp.add_parser("lv-energy", help="LV cycle table E, T, D")
    p.add_argument("--E", type=parse_floats, help="comma separated energies")
    p.add_argument("--e-min", dest="e_min", type=float, default=1e-3)
    p.add_argument("--e-max", dest="e_max", type=float, default=100.0)
    p.add_argument("--n-e", dest="n_e", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--workers", type=int)
    _common(p)
    p.set_defaults(func=cmd_lv_energy)

    p = sp.add_parser("kinetic", help="eps = 0 profile G_rho or its alpha perturbation")
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--h", type=float, default=0.01)
    p.add_argument("--x-start", dest="x_start", type=float, default=-25.0)
    p.add_argument("--x-end", dest="x_end", type=float, default=6.0)
    _common(p)
    p.set_defaults(func=cmd_kinetic)

    p = sp.add_parser("mass-map", help="iterate M -> -ln(1 - M)")
    p.add_argument("--m0", type=float, required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--level", type=float, default=0.5)
    _common(p, csv_out=False)
    p.set_defaults(func=cmd_mass_map)

    p = sp.add_parser("predict", help="composite piecewise profile")
    p.add_argument("--eps", type=float)
    p.add_argument("--m0", type=float)
    p.add_argument("--n-cycles", dest="n_cycles", type=int, default=3)
    p.add_argument("--h", type=float, default=0.05)
    _common(p)
    p.set_defaults(func=cmd_predict)

    p = sp.add_parser("instability", help="fast trigger system")
    p.add_argument("--a1", type=float, required=True)
    p.add_argument("--b1", type=float, required=True)
    p.add_argument("--sign", choices=("plus", "minus"), required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--x-star", dest="x_star", type=float, default=0.0)
    p.add_argument("--g-star", dest="g_star", type=float, default=1e-4)
    p.add_argument("--h", type=float, default=0.01)
    p.add_argument("--span", type=float, default=30.0)
    p.add_argument("--nonlocal", dest="nonlocal_check", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_instability)

    p = sp.add_parser("report", help="summarise a profile CSV (and a JSON report)")
    p.add_argument("--csv", required=True)
    p.add_argument("--report")
    _common(p, csv_out=False)
    p.set_defaults(func=cmd_report)
    return ap


VALUE_FLAGS = ("--window", "--E")
REQUIRED = {"march": ("eps",), "shoot": ("eps",), "predict": ("eps", "m0")}


def _subparser(ap, name):
    for act in ap._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices.get(name)
    return None


def parse_config(argv, parser=None):
    """Parse argv, folding in the --config file.  Raises ConfigError."""
    ap = parser or build_parser()
    argv = list(argv)
    # "--window -200:400": argparse would take the value for an option
    for i in range(len(argv) - 1):
        if argv[i] in VALUE_FLAGS and argv[i + 1][:1] == "-" and argv[i + 1][1:2].isdigit():
            argv[i:i + 2] = [f"{argv[i]}={argv[i + 1]}", ""]
    argv = [a for a in argv if a != ""]
    cfg_path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            cfg_path = argv[i + 1]
        elif a.startswith("--config="):
            cfg_path = a.split("=", 1)[1]
    if cfg_path is not None:
        name = next((a for a in argv if not a.startswith("-")), None)
        sub = _subparser(ap, name)
        if sub is None:
            raise ConfigError("--config needs a subcommand")
        apply_config(sub, cfg_path)
        # argparse rejects a missing required flag even when the file sets it
        for act in sub._actions:
            if act.required and sub.get_default(act.dest) is not None:
                act.required = False
    ns = ap.parse_args(argv)
    for key in REQUIRED.get(ns.command, ()):
        if getattr(ns, key) is None:
            raise ConfigError(f"{ns.command}: '{key}' is required (flag or config)")
    return ns


def _emit_csv(ns, cols):
    names = LV_COLUMNS if ns.command == "lv-energy" else PROFILE_COLUMNS
    buf = io.StringIO()
    write_table(cols, names, buf)
    if ns.out:
        _write_text(ns.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def main(argv=None) -> int:
    from . import volterra_march as vm
    from .lotka_volterra import TraceError
    from .parallel import worker_count

    argv = sys.argv[1:] if argv is None else argv
    try:
        worker_count()
        ns = parse_config(argv)
    except SystemExit as exc:        # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    except (ConfigError, ValueError) as exc:
        print(f"wavesmith: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    timer = Timer()
    code = EXIT_OK
    try:
        with timer.phase("total"):
            result, cols = ns.func(ns, timer)
    except (ConfigError, DomainError) as exc:
        print(f"wavesmith: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Inconclusive as exc:
        print(f"wavesmith: inconclusive: {exc}", file=sys.stderr)
        result, cols, code = exc.report or {}, None, EXIT_INCONCLUSIVE
    except (vm.MarchError, TraceError, RuntimeError, FloatingPointError, ArithmeticError,
            PreconditionError) as exc:
        print(f"wavesmith: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    timings = None if ns.no_timing else dict(sorted(timer.phases.items()))
    doc = build_report(ns.command, _echo(ns), result, timings)
    try:
        if cols is not None:
            if ns.command == "lv-energy" and not ns.out:
                # the table is the primary output; the report goes to --json only
                _emit_csv(ns, cols)
                if ns.json:
                    _write_text(ns.json, dumps(doc))
                return code
            if getattr(ns, "out", None):
                _emit_csv(ns, cols)
        text = dumps(doc)
        if ns.json:
            _write_text(ns.json, text)
        else:
            sys.stdout.write(text)
    except PreconditionError as exc:
        print(f"wavesmith: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"wavesmith: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
