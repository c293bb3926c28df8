"""Command line interface.

Every flag can also be set through an environment variable ``NSSIM_<FLAG>``
(upper case, dashes as underscores); explicit flags win.  Tables are CSV
with a block of ``#`` metadata lines in front of the header.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .chanmodel import (ClassicalChannel, CqChannel, DimensionOverflowError, TypeClass,
                        ValidationError, load_channel, set_entry_cap, get_entry_cap)

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
ENV_PREFIX = "NSSIM_"
SANDWICH_TOL = 1e-6
LOG2 = math.log(2)


class VerificationFailure(RuntimeError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12g}"
    return str(v)


def _floats(text: str) -> list:
    return [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


class Table:
    def __init__(self, columns, rate_columns=()):
        self.columns = list(columns)
        self.rate_columns = set(rate_columns)
        self.rows = []

    def add(self, **kw):
        unknown = set(kw) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)}")
        self.rows.append(kw)

    def render(self, meta: dict, args) -> str:
        scale = 1 / LOG2 if args.bits else 1.0
        rows = [{c: (r.get(c) * scale if c in self.rate_columns and isinstance(r.get(c), float)
                     else r.get(c)) for c in self.columns} for r in self.rows]
        if args.json:
            return json.dumps({"meta": meta, "columns": self.columns, "rows": rows},
                              default=_json_default, indent=1) + "\n"
        buf = io.StringIO()
        for k, v in meta.items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in self.columns])
        return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _meta(args, **extra) -> dict:
    m = {"nssim": __version__, "command": args.command, "seed": args.seed, "tol": args.tol,
         "cap_entries": get_entry_cap(), "units": "bits" if args.bits else "nats"}
    m.update(extra)
    m["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    return m


def _emit(text: str, args) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _channel(args):
    if not args.channel:
        raise ValidationError("--channel is required")
    return load_channel(args.channel)


# ---------------------------------------------------------------------------
# commands

def cmd_info(args):
    from .exponents import max_mi_bracket, mi_bracket

    W = _channel(args)
    t = Table(["field", "value"])
    if isinstance(W, ClassicalChannel):
        t.add(field="kind", value="classical")
        t.add(field="inputs", value=W.nx)
        t.add(field="outputs", value=W.ny)
        t.add(field="w_min", value=W.w_min)
    else:
        t.add(field="kind", value="cq")
        t.add(field="inputs", value=W.nx)
        t.add(field="dim", value=W.dim)
        t.add(field="diagonal", value=W.is_classical())
    lo, up = mi_bracket(W, 1.0)
    t.add(field="mi_1_lower", value=lo)
    t.add(field="mi_1_upper", value=up)
    lo, up = max_mi_bracket(W)
    t.add(field="mi_max_lower", value=lo)
    t.add(field="mi_max_upper", value=up)
    return t, {}


def cmd_mi(args):
    from .exponents import mi_bracket

    W = _channel(args)
    t = Table(["alpha", "value", "lower", "upper"], rate_columns=("value", "lower", "upper"))
    for a in _floats(args.alpha):
        lo, up = mi_bracket(W, a, tol=min(args.tol, 1e-6))
        t.add(alpha=a, value=0.5 * (lo + up), lower=lo, upper=up)
    return t, {}


def _r_grid(args):
    if args.r_grid:
        return _floats(args.r_grid)
    if args.r is not None:
        return [args.r]
    raise ValidationError("give --r or --r-grid")


def cmd_exponent(args):
    from .exponents import error_exponent, sc_exponent

    W = _channel(args)
    t = Table(["r", "error_exponent", "sc_exponent", "alpha_star_e", "alpha_star_sc"],
              rate_columns=("r", "error_exponent", "sc_exponent"))
    for r in _r_grid(args):
        e = error_exponent(W, r)
        s = sc_exponent(W, r)
        t.add(r=r, error_exponent=e.value, sc_exponent=s.value, alpha_star_e=e.alpha_star,
              alpha_star_sc=s.alpha_star)
    return t, {}


def _bounds_row(W, n, r):
    from .exponents import (ee_achievability_bound, sc_achievability_bound_classical,
                            sc_achievability_bound_cq, sc_converse_best)

    conv = sc_converse_best(W, n, r)
    if isinstance(W, ClassicalChannel):
        ach = sc_achievability_bound_classical(W, n, r).value
    elif n >= W.dim:
        ach = sc_achievability_bound_cq(W, n, r).value
    else:
        ach = float("nan")
    ee = ee_achievability_bound(W, n, r).value
    return conv.value, conv.params["alpha"], ach, ee


def cmd_bounds(args):
    W = _channel(args)
    t = Table(["n", "r", "sc_converse", "alpha_converse", "sc_achievability", "ee_bound"],
              rate_columns=("r",))
    for n in range(args.n_min, args.n_max + 1):
        for r in _r_grid(args):
            conv, a, ach, ee = _bounds_row(W, n, r)
            t.add(n=n, r=r, sc_converse=conv, alpha_converse=a, sc_achievability=ach, ee_bound=ee)
    return t, {}


def cmd_oneshot(args):
    from .ns_solver import ns_error_classical, ns_error_cq

    W = _channel(args)
    t = Table(["M", "eps_lb", "eps_ub", "width", "fidelity_lb", "fidelity_ub"])
    for M in _floats(args.M):
        sol = ns_error_classical(W, M, args.tol) if isinstance(W, ClassicalChannel) \
            else ns_error_cq(W, M, args.tol)
        t.add(M=M, eps_lb=sol.eps_lb, eps_ub=sol.eps_ub, width=sol.width,
              fidelity_lb=sol.fidelity_lb, fidelity_ub=sol.fidelity_ub)
    return t, {}


CONVERGE_COLUMNS = ["n", "M", "eps_lb", "eps_ub", "one_minus_eps_lo", "one_minus_eps_hi",
                    "slope_lo", "slope_hi", "sc_exponent", "converse_bound",
                    "achievability_bound", "ee_bound", "sandwich_ok", "status"]


def _converge_row(job):
    path, n, r, tol, cap = job
    from .exponents import sc_exponent
    from .ns_solver import ns_error_blocklength

    set_entry_cap(cap)
    W = load_channel(path)
    try:
        sol = ns_error_blocklength(W, n, r, tol=tol, converse=False)
    except (ValidationError, DimensionOverflowError):
        raise
    except Exception as exc:  # solver failure is per row
        return {"n": n, "M": math.exp(n * r), "status": f"solver-error: {type(exc).__name__}"}
    lo, hi = sol.one_minus_eps
    conv, _, ach, ee = _bounds_row(W, n, r)
    width = max(sol.width, 0.0)
    ok = (hi <= conv + width + SANDWICH_TOL
          and (math.isnan(ach) or ach <= lo + SANDWICH_TOL)
          and sol.eps_ub <= ee + SANDWICH_TOL)

    def slope(v):
        return math.inf if v <= 0 else -math.log(v) / n

    return {"n": n, "M": sol.M, "eps_lb": sol.eps_lb, "eps_ub": sol.eps_ub,
            "one_minus_eps_lo": lo, "one_minus_eps_hi": hi,
            # smaller 1 - eps gives the larger slope
            "slope_lo": slope(hi), "slope_hi": slope(lo),
            "sc_exponent": sc_exponent(W, r).value, "converse_bound": conv,
            "achievability_bound": ach, "ee_bound": ee, "sandwich_ok": ok,
            "status": "ok" if ok else "sandwich-violated"}


def cmd_converge(args):
    if args.r is None:
        raise ValidationError("--r is required")
    W = _channel(args)
    if args.r < 0:
        raise ValidationError("rate must be nonnegative")
    del W
    jobs = [(args.channel, n, float(args.r), args.tol, get_entry_cap())
            for n in range(args.n_min, args.n_max + 1)]
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as ex:
            rows = list(ex.map(_converge_row, jobs))
    else:
        rows = [_converge_row(j) for j in jobs]
    t = Table(CONVERGE_COLUMNS, rate_columns=("slope_lo", "slope_hi", "sc_exponent"))
    for row in rows:
        t.add(**row)
    bad = [r["n"] for r in rows if r.get("status") != "ok"]
    return t, {"r": args.r, "failed_rows": bad}


def _load_matrix(path):
    """A density matrix or probability vector from JSON: a list, ``{"re","im"}``, or a channel file."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(obj, dict) and "kind" in obj:
        from .chanmodel import parse_channel
        W = parse_channel(obj)
        return W.as_cq().states[0] if isinstance(W, ClassicalChannel) else W.states[0]
    if isinstance(obj, dict):
        re = np.array(obj["re"], float)
        return re + 1j * np.array(obj.get("im", np.zeros_like(re)), float)
    a = np.array(obj, float)
    return a


def _params(items) -> dict:
    out = {}
    for it in items or []:
        if "=" not in it:
            raise ValidationError(f"parameter {it!r} is not key=value")
        k, v = it.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_construct(args):
    from . import constructions as C

    p = _params(args.param)
    W = _channel(args)
    if args.which == "ee":
        if not args.sigma:
            raise ValidationError("--sigma is required for ee")
        alphas = tuple(_floats(p.get("alphas", "0.25,0.5,1,2,4")))
        rep = C.build_ee_smoother(W, _load_matrix(args.sigma), float(p.get("M", 2.0)), alphas)
    elif args.which == "sc-cl":
        if not isinstance(W, ClassicalChannel):
            raise ValidationError("sc-cl needs a classical channel")
        V = load_channel(p["V"]) if "V" in p else W
        counts = tuple(int(c) for c in p.get("type", ",".join(["1"] * W.nx)).split(","))
        t = TypeClass(counts)
        q = _floats(p["q"]) if "q" in p else np.full(W.ny, 1.0 / W.ny)
        rep = C.build_sc_classical(t, V, q, W, t.n, float(p.get("r", 0.0)))
    elif args.which == "sc-q":
        if not args.sigma:
            raise ValidationError("--sigma (omega) is required for sc-q")
        states = W.as_cq().states if isinstance(W, ClassicalChannel) else W.states
        reps = [int(c) for c in p.get("repeat", ",".join(["1"] * len(states))).split(",")]
        V_list = [s for s, c in zip(states, reps) for _ in range(c)]
        omega = _load_matrix(args.sigma)
        if omega.ndim == 1:
            omega = np.diag(omega)
        rep = C.build_sc_quantum_block(V_list, omega, float(p.get("s", 0.0)))
    else:
        raise ValidationError(f"unknown construction {args.which!r}")
    return rep, {}


def cmd_verify(args):
    from . import lemma_lab as L

    runs = []
    suites = list(L.SUITES) if args.suite == "all" else [args.suite]
    for s in suites:
        if s == "sandwich":
            W = _channel(args)
            r_list = _floats(args.r_grid) if args.r_grid else [0.0, 0.5, 1.0]
            runs.append(L.verify_sandwich_suite(W, args.n_max, r_list, seed=args.seed))
        else:
            runs.append(L.run_suite(s, args.trials, args.seed, workers=args.threads))
    return runs, {}


# ---------------------------------------------------------------------------
# parser

def _global_flags(p):
    p.add_argument("--tol", type=float, default=1e-6, help="solver tolerance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker processes for independent cells")
    p.add_argument("--cap-entries", type=int, default=None, help="dense entry cap for tensor powers")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--json", action="store_true", help="JSON instead of CSV")
    p.add_argument("--bits", action="store_true", help="print rates and exponents in bits")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nssim", description="Non-signaling channel simulation toolkit")
    parser.add_argument("--version", action="version", version=f"nssim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp)
        sp.add_argument("--channel", default=None, help="channel JSON file")
        return sp

    add("info", "channel summary and key informations")
    sp = add("mi", "Renyi mutual information")
    sp.add_argument("--alpha", default="1", help="comma separated orders")
    for name in ("exponent", "bounds", "converge"):
        sp = add(name, {"exponent": "error and strong converse exponents",
                        "bounds": "finite blocklength bounds",
                        "converge": "simulation error versus blocklength"}[name])
        sp.add_argument("--r", type=float, default=None, help="rate in nats")
        sp.add_argument("--r-grid", default=None, help="comma separated rates in nats")
        if name != "exponent":
            sp.add_argument("--n-min", type=int, default=1)
            sp.add_argument("--n-max", type=int, default=4)
    sp = add("oneshot", "one-shot simulation error")
    sp.add_argument("--M", default="1", help="comma separated message counts")
    sp = add("construct", "build and certify an explicit construction")
    sp.add_argument("--which", choices=("ee", "sc-cl", "sc-q"), required=False, default=None)
    sp.add_argument("--sigma", default=None, help="reference state file")
    sp.add_argument("--param", action="append", default=None, help="key=value, repeatable")
    sp = add("verify", "randomized lemma suites")
    sp.add_argument("--suite", default="all",
                    choices=("all", "holder", "holder-boundary", "pinching", "varbound", "fidkl",
                             "multiblock", "sandwich"))
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--n-max", type=int, default=3)
    sp.add_argument("--r-grid", default=None)
    _apply_env(sub)
    return parser


def _apply_env(sub):
    """Defaults from ``NSSIM_<FLAG>``; argparse converts string defaults via ``type``."""
    for sp in sub.choices.values():
        over = {}
        for act in sp._actions:
            if not act.option_strings or act.dest in ("help", "version"):
                continue
            key = ENV_PREFIX + act.dest.upper()
            if key in os.environ:
                val = os.environ[key]
                if isinstance(act, argparse._StoreTrueAction):
                    val = val.strip().lower() in ("1", "true", "yes", "on")
                elif isinstance(act, argparse._AppendAction):
                    val = [v for v in val.split(";") if v]
                act.required = False
                over[act.dest] = val
        if over:
            sp.set_defaults(**over)


COMMANDS = {"info": cmd_info, "mi": cmd_mi, "exponent": cmd_exponent, "bounds": cmd_bounds,
            "oneshot": cmd_oneshot, "converge": cmd_converge, "construct": cmd_construct,
            "verify": cmd_verify}


def _run(args) -> int:
    if args.threads < 1:
        raise ValidationError("--threads must be positive")
    if not args.tol > 0:
        raise ValidationError("--tol must be positive")
    if args.cap_entries is not None:
        set_entry_cap(args.cap_entries)
    t0 = time.perf_counter()
    result, extra = COMMANDS[args.command](args)
    if args.command == "construct":
        if args.which is None:
            raise ValidationError("--which is required")
        text = result.to_text() + "\n"
        if args.json:
            text = json.dumps({"meta": _meta(args), "kind": result.kind, "passed": result.passed,
                               "achieved": result.achieved, "bound": result.bound,
                               "claims_bound": result.claims_bound,
                               "certificates": [{"name": c.name, "value": c.value, "bound": c.bound,
                                                 "slack": c.slack, "ok": c.ok}
                                                for c in result.certificates],
                               "diagnostics": result.diagnostics},
                              default=_json_default, indent=1) + "\n"
        else:
            text = "".join(f"# {k}: {v}\n" for k, v in _meta(args).items()) + text
        _emit(text, args)
        return EXIT_OK if result.passed else EXIT_VERIFY
    if args.command == "verify":
        if args.json:
            text = json.dumps({"meta": _meta(args), "runs": [r.to_dict() for r in result]},
                              default=_json_default, indent=1) + "\n"
        else:
            text = "".join(f"# {k}: {v}\n" for k, v in _meta(args).items())
            text += "\n".join(r.to_text() for r in result) + "\n"
        _emit(text, args)
        return EXIT_OK if all(r.passed for r in result) else EXIT_VERIFY
    meta = _meta(args, **extra, elapsed_s=f"{time.perf_counter() - t0:.3f}")
    # wall time is metadata, not data
    _emit(result.render(meta, args), args)
    if args.command == "converge" and extra.get("failed_rows"):
        errs = [r for r in result.rows if str(r.get("status", "")).startswith("solver-error")]
        return EXIT_SOLVER if errs else EXIT_VERIFY
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    from .renyi_capacity import NonConvergenceError

    try:
        return _run(args)
    except (ValidationError, DimensionOverflowError, ValueError, KeyError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"nssim: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NonConvergenceError as exc:
        print(f"nssim: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
