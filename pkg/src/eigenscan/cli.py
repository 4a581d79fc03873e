"""Command line experiment runner.

Subcommands ``prop1``, ``scan``, ``oracle`` and ``lemma1``.  Parameters come
from an optional JSON file (``--config``) with command line flags taking
precedence.  Grids are written as ``a,b,c`` or as an inclusive range
``start:stop:step``.

Exit codes: 0 success, 1 usage or configuration error, 2 failed internal
check, 3 dense capacity exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

import numpy as np

from . import dense
from .bloch import Family, from_bloch, layer_distance, project, random_bloch_vector
from .measurement import (
    CollectiveMeasurement,
    entanglement_fidelity,
    fidelity_lower_bound,
    p_yes,
    prop1_classify,
)
from .scanner import SCHEMA_VERSION, Mode, ScanConfig, run_protocol
from .typical import (
    TypicalSetSpec,
    lemma1_check,
    nesting_holds,
    required_n,
    to_fraction,
)

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_CAPACITY = 0, 1, 2, 3
ORACLE_TOL = 1e-10
QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


DEFAULTS = {
    "prop1": {
        "eps": 0.2, "delta": 0.01, "ns": "10:200:10", "family": "phi", "angle": 0.0,
        "inside": "0,0,0", "outside": "0.8,0,0", "format": "csv",
    },
    "scan": {
        "eps": 0.3, "n": 10, "mode": "dense", "state": "0.8,0,0", "trials": 10,
        "refine": False, "confirm": True, "cap": dense.DEFAULT_CAP, "format": "json",
    },
    "oracle": {"ns": "1:8:1", "cases": 20, "cap": dense.DEFAULT_CAP, "format": "csv"},
    "lemma1": {
        "q": 0.5, "eps": 0.2, "delta": 0.01, "qprimes": "0.40,0.45,0.50,0.55,0.60",
        "ns": "10,100,1000,10000,100000", "nesting_max": 100, "format": "csv",
    },
}
NEEDS_SEED = {"scan", "oracle"}


def parse_grid(value) -> list:
    """Integer or float grid from a list, ``a,b,c`` or ``start:stop:step``."""
    if isinstance(value, (list, tuple)):
        return list(value)
    if isinstance(value, (int, float)):
        return [value]
    text = str(value).strip()
    num = float if any(c in text for c in ".eE") else int
    try:
        if ":" in text:
            parts = [num(p) for p in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError
            start, stop, step = parts
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [start + i * step for i in range(max(count, 0))]
        return [num(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"bad grid {value!r}") from None


def parse_vector(value) -> np.ndarray:
    try:
        v = np.array(parse_grid(value), dtype=float)
    except (TypeError, ValueError):
        raise UsageError(f"bad Bloch vector {value!r}") from None
    if v.shape != (3,) or np.linalg.norm(v) > 1 + 1e-12:
        raise UsageError(f"Bloch vector must have 3 components and norm <= 1, got {value!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of parameters; flags override it")
    common.add_argument("--seed", type=int, help="root seed (required for stochastic runs)")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--workers", type=int, help="process pool size (default serial)")

    parser = _Parser(prog="eigenscan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prop1", parents=[common], help="yes-probabilities and bounds over n")
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--ns", help="grid of copy numbers")
    p.add_argument("--family", choices=["phi", "theta"])
    p.add_argument("--angle", type=float)
    p.add_argument("--inside", help="Bloch vector inside the layer")
    p.add_argument("--outside", help="Bloch vector outside the layer")

    p = sub.add_parser("scan", parents=[common], help="run the scan protocol over seeds")
    p.add_argument("--eps", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--state", help="Bloch vector, or 'random' for one uniform state per trial")
    p.add_argument("--trials", type=int)
    p.add_argument("--refine", action="store_true", default=None)
    p.add_argument("--confirm", dest="confirm", action="store_true", default=None,
                   help="probe the orthogonal layer after a first Yes (default)")
    p.add_argument("--no-confirm", dest="confirm", action="store_false",
                   help="stop each sweep at the first Yes")
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--cap", type=int, help="largest n allowed in dense mode")

    p = sub.add_parser("oracle", parents=[common], help="analytic vs dense yes-probabilities")
    p.add_argument("--ns", help="grid of copy numbers")
    p.add_argument("--cases", type=int, help="random cases per n")
    p.add_argument("--cap", type=int, help="largest n allowed")

    p = sub.add_parser("lemma1", parents=[common], help="typical-set mass under nearby q'")
    p.add_argument("--q", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--qprimes", help="grid of q' values")
    p.add_argument("--ns", help="grid of copy numbers")
    p.add_argument("--nesting-max", dest="nesting_max", type=int)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    params = dict(DEFAULTS[args.command])
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config must be a JSON object")
        params.update({k.replace("-", "_"): v for k, v in loaded.items()})
    skip = {"command", "config", "out"}
    params.update({k: v for k, v in vars(args).items() if v is not None and k not in skip})
    if args.command in NEEDS_SEED and params.get("seed") is None:
        raise UsageError(f"{args.command} is stochastic and needs --seed")
    return params


def _pool_map(fn, items: list, workers) -> list:
    if not workers or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _positive(name, value, strict=True):
    if not (value > 0 if strict else value >= 0):
        raise UsageError(f"{name} must be {'positive' if strict else 'non-negative'}")


# prop1

PROP1_COLUMNS = ["n", "p_yes_in", "p_yes_out", "bound_out", "fidelity_in", "fidelity_out",
                 "required_n_in", "required_n_out"]


def _required(eps, delta, dist):
    try:
        return required_n(eps, delta, dist)
    except ValueError:
        return None


def cmd_prop1(params: dict) -> tuple:
    eps, delta = float(params["eps"]), float(params["delta"])
    _positive("eps", eps)
    if not 0 < delta <= 1:
        raise UsageError("delta must lie in (0, 1]")
    ns = [int(n) for n in parse_grid(params["ns"])]
    if not ns or min(ns) < 1:
        raise UsageError("n grid must be non-empty and positive")
    family = Family(params["family"])
    angle = float(params["angle"])
    rho_in = from_bloch(parse_vector(params["inside"]))
    rho_out = from_bloch(parse_vector(params["outside"]))
    m0 = CollectiveMeasurement.make(family, angle, 1, eps)
    if layer_distance(rho_in, m0.basis) > eps:
        raise UsageError("inside state is not within the layer")
    if layer_distance(rho_out, m0.basis) <= eps:
        raise UsageError("outside state lies within the layer")

    need_in = _required(eps, delta, project(rho_in, m0.basis))
    need_out = _required(eps, delta, project(rho_out, m0.basis))
    rows, failures = [], []
    for n in ns:
        m = CollectiveMeasurement.make(family, angle, n, eps)
        inside, outside = prop1_classify(rho_in, m), prop1_classify(rho_out, m)
        if not (inside.bound_holds and outside.bound_holds):
            failures.append(f"certificate violated at n={n}")
        if need_in is not None and n >= need_in and inside.p_yes < 1 - delta:
            failures.append(f"p_yes_in={inside.p_yes} < 1-delta at n={n}")
        if need_out is not None and n >= need_out and outside.p_yes > delta:
            failures.append(f"p_yes_out={outside.p_yes} > delta at n={n}")
        for p in (inside.p_yes, outside.p_yes):
            if min(p, 1 - p) <= delta and entanglement_fidelity(p) < fidelity_lower_bound(delta):
                failures.append(f"fidelity bound violated at n={n}")
        rows.append({
            "n": n, "p_yes_in": inside.p_yes, "p_yes_out": outside.p_yes,
            "bound_out": outside.exponent_bound, "fidelity_in": inside.fidelity,
            "fidelity_out": outside.fidelity, "required_n_in": need_in,
            "required_n_out": need_out,
        })
    return {"columns": PROP1_COLUMNS, "rows": rows}, failures


# scan

SCAN_COLUMNS = ["trial", "seed", "angular_error", "steps", "final_fidelity",
                "ledger_fidelity", "degenerate"]


def _scan_trial(item: tuple) -> dict:
    trial, seed, state_seed, vector, cfg_kwargs = item
    if vector is None:
        vector = random_bloch_vector(np.random.default_rng(state_seed))
    cfg = ScanConfig(seed=seed, **cfg_kwargs)
    res = run_protocol(from_bloch(vector), cfg)
    problems = []
    if res.final_state is not None:
        try:
            res.final_state.validate()
        except AssertionError as exc:
            problems.append(f"trial {trial}: final state invalid ({exc})")
    running = 1.0
    for e in res.fidelity_ledger:
        running = max(0.0, running - (1.0 - entanglement_fidelity(e.p_yes)))
        if abs(running - e.cumulative_fidelity) > 1e-12:
            problems.append(f"trial {trial}: ledger inconsistent at step {e.step}")
            break
    return {
        "trial": trial,
        "seed": seed,
        "state": [float(v) for v in vector],
        "angular_error": res.angular_error,
        "steps": res.steps,
        "final_fidelity": res.final_state_fidelity,
        "ledger_fidelity": res.fidelity_ledger[-1].cumulative_fidelity if res.fidelity_ledger else 1.0,
        "degenerate": res.degenerate,
        "result": res.to_dict(),
        "problems": problems,
    }


def _quantiles(values) -> dict:
    vals = [v for v in values if v is not None]
    if not vals:
        return {}
    return {str(q): float(np.quantile(vals, q)) for q in QUANTILES}


def cmd_scan(params: dict) -> tuple:
    trials = int(params["trials"])
    _positive("trials", trials)
    mode = Mode(params["mode"])
    cap = int(params["cap"])
    cfg_kwargs = {
        "eps": float(params["eps"]), "n": int(params["n"]), "mode": mode,
        "refine": bool(params["refine"]), "confirm": bool(params["confirm"]),
        "max_steps": params.get("max_steps"), "dense_cap": cap,
    }
    try:
        ScanConfig(**cfg_kwargs)
    except dense.CapacityError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    vector = None if params["state"] == "random" else parse_vector(params["state"])

    children = np.random.SeedSequence(int(params["seed"])).spawn(trials)
    items = []
    for i, child in enumerate(children):
        run_seed, state_seed = (int(x) for x in child.generate_state(2, dtype=np.uint32))
        items.append((i, run_seed, state_seed, vector, cfg_kwargs))
    results = _pool_map(_scan_trial, items, params.get("workers"))

    failures = [p for r in results for p in r["problems"]]
    # a degenerate report on a non-degenerate state counts as the worst error
    errors = [math.pi / 2 if r["angular_error"] is None else r["angular_error"] for r in results]
    summary = {
        "angular_error": _quantiles(errors),
        "steps": _quantiles([r["steps"] for r in results]),
        "final_fidelity": _quantiles([r["final_fidelity"] for r in results]),
        "degenerate": sum(r["degenerate"] for r in results),
    }
    rows = [{k: r[k] for k in SCAN_COLUMNS} for r in results]
    return {"columns": SCAN_COLUMNS, "rows": rows, "trials": results, "summary": summary}, failures


# oracle

ORACLE_COLUMNS = ["n", "case", "kind", "family", "angle", "eps", "analytic", "dense", "deviation"]


def _oracle_case(item: tuple) -> dict:
    n, case, kind, family, angle, eps, vector, cap = item
    m = CollectiveMeasurement.make(Family(family), angle, n, eps)
    rho = from_bloch(vector)
    a = p_yes(rho, m)
    d = dense.dense_p_yes(rho, m, cap)
    return {"n": n, "case": case, "kind": kind, "family": family, "angle": angle,
            "eps": eps, "analytic": a, "dense": d, "deviation": abs(a - d)}


def oracle_cases(ns: list, cases: int, seed: int, cap: int) -> list:
    """Random cases per ``n`` plus fixed edge cases.

    The edge cases pick ``eps`` so that the window bounds land exactly on
    integers, where a floating-point membership test could go either way.
    """
    items = []
    for n, child in zip(ns, np.random.SeedSequence(seed).spawn(len(ns))):
        rng = np.random.default_rng(child)
        for c in range(cases):
            family = "phi" if rng.random() < 0.5 else "theta"
            eps = float(rng.choice([0.05, 0.1, 0.2, 0.3, 0.5, 1.0]))
            items.append((n, c, "random", family, float(rng.uniform(0, math.pi)), eps,
                          random_bloch_vector(rng), cap))
        for j, eps in enumerate([2 * j / n for j in (1, 2, 3)] + [0.2, 0.6]):
            spec = TypicalSetSpec(n, eps)
            edge = any(2 * abs(Fraction(k) - spec.q * n) == spec.eps * n for k in range(n + 1))
            if not edge:
                continue
            items.append((n, cases + j, "boundary", "theta", 0.7, eps,
                          random_bloch_vector(rng), cap))
    if 1 in ns:
        items.append((1, -1, "identity", "phi", 0.0, 2.0, np.array([0.3, -0.2, 0.5]), cap))
    return items


def cmd_oracle(params: dict) -> tuple:
    ns = [int(n) for n in parse_grid(params["ns"])]
    cases = int(params["cases"])
    cap = int(params["cap"])
    if not ns or min(ns) < 1:
        raise UsageError("n grid must be non-empty and positive")
    _positive("cases", cases, strict=False)
    dense.check_capacity(max(ns), cap)
    items = oracle_cases(ns, cases, int(params["seed"]), cap)
    rows = _pool_map(_oracle_case, items, params.get("workers"))
    worst = max((r["deviation"] for r in rows), default=0.0)
    failures = [] if worst <= ORACLE_TOL else [f"max deviation {worst:.3e} exceeds {ORACLE_TOL}"]
    return {"columns": ORACLE_COLUMNS, "rows": rows, "max_deviation": worst}, failures


# lemma1

LEMMA1_COLUMNS = ["q_prime", "n", "eps_prime", "mass", "nested_mass", "reaches"]


def cmd_lemma1(params: dict) -> tuple:
    q, eps, delta = params["q"], params["eps"], float(params["delta"])
    qf, ef = to_fraction(q), to_fraction(eps)
    if not 0 < qf < 1:
        raise UsageError("q must lie in (0, 1)")
    _positive("eps", ef)
    if not 0 < delta < 1:
        raise UsageError("delta must lie in (0, 1)")
    qprimes = parse_grid(params["qprimes"])
    ns = [int(n) for n in parse_grid(params["ns"])]
    if not ns or min(ns) < 1:
        raise UsageError("n grid must be non-empty and positive")
    for qp in qprimes:
        if 2 * abs(to_fraction(qp) - qf) > ef or not 0 <= to_fraction(qp) <= 1:
            raise UsageError(f"q'={qp} lies outside [q - eps/2, q + eps/2]")
    nesting_max = int(params["nesting_max"])

    rows, failures = [], []
    for qp in qprimes:
        for n in ns:
            r = lemma1_check(TypicalSetSpec(n, eps, q), qp, delta)
            rows.append({"q_prime": float(qp), "n": n, "eps_prime": float(r.eps_prime),
                         "mass": r.mass, "nested_mass": r.nested_mass, "reaches": r.satisfied})
        bad = [n for n in range(1, nesting_max + 1) if not nesting_holds(n, eps, q, qp)]
        if bad:
            failures.append(f"nesting fails for q'={qp} at n={bad[:5]}")
    return {"columns": LEMMA1_COLUMNS, "rows": rows, "nesting_checked_to": nesting_max}, failures


COMMANDS = {"prop1": cmd_prop1, "scan": cmd_scan, "oracle": cmd_oracle, "lemma1": cmd_lemma1}


def render(command: str, params: dict, report: dict, failures: list, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=report["columns"], lineterminator="\n")
        writer.writeheader()
        for row in report["rows"]:
            writer.writerow({k: "" if row[k] is None else row[k] for k in report["columns"]})
        return buf.getvalue()
    body = {k: v for k, v in report.items() if k not in ("columns",)}
    if command == "scan":
        body.pop("rows")
    doc = {"schema_version": SCHEMA_VERSION, "command": command,
           "config": {k: v for k, v in params.items() if k != "workers"},
           "passed": not failures, "failures": failures, **body}
    return json.dumps(doc, indent=2, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating, np.bool_)):
        return obj.item()
    if isinstance(obj, (Mode, Family)):
        return obj.value
    raise TypeError(f"not serializable: {type(obj).__name__}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        params = resolve(args)
        report, failures = COMMANDS[args.command](params)
        text = render(args.command, params, report, failures, params["format"])
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except UsageError as exc:
        print(f"eigenscan: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except dense.CapacityError as exc:
        print(f"eigenscan: capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ValueError, TypeError, KeyError) as exc:
        print(f"eigenscan: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for f in failures:
        print(f"eigenscan: check failed: {f}", file=sys.stderr)
    return EXIT_CHECK if failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
