"""Command-line front end.

Exit codes: 0 success, 1 domain error (structured JSON on stderr),
2 usage error, 3 contradictory certified evidence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .conditions import (
    KR_DEFAULT_MAX_LEN,
    KR_DEFAULT_RESTARTS,
    KR_DEFAULT_TOL,
    check_K,
    check_KR,
    check_N,
    check_O,
    condition_c_witness,
    make_kr_witness,
    witness_from_report,
)
from .errors import ContradictoryEvidence, FilterErgodicError
from .filtering import DEFAULT_WINDOW, filter_path, gaps_to_csv, minmax_gap, simulate
from .lab import Budgets, entropy_rate, stability_curve, verdict
from .model import load_model_file, validate
from .simplex_kernel import AtomicMeasure, check_invariant, dirac_at, find_invariant, spread

COMMANDS = ("validate", "simulate", "filter", "conditions", "verdict", "stability",
            "invariant", "entropy", "witness")
CSV_COMMANDS = {"simulate", "filter", "stability", "entropy"}
PRIOR_TOL = 1e-9


class UsageError(Exception):
    exit_code = 2


@dataclass
class CliInvocation:
    command: str
    model_path: str
    flags: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None
    format: str = "json"
    threads: int = 1
    timing: bool = False


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(sp):
    sp.add_argument("--model", required=True, help="model JSON file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", "-o", default=None, help="output file (default: stdout)")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    sp.add_argument("--timing", action="store_true", help="include elapsed times in reports")


def _kr_flags(sp):
    sp.add_argument("--max-len", type=int, default=KR_DEFAULT_MAX_LEN)
    sp.add_argument("--restarts", type=int, default=KR_DEFAULT_RESTARTS)
    sp.add_argument("--tol", type=float, default=KR_DEFAULT_TOL)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="filterergodic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    sp = sub.add_parser("validate", help="validate a model file")
    _common(sp)

    sp = sub.add_parser("simulate", help="sample a signal/observation path")
    _common(sp)
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--initial", default=None, help="initial law (default: stationary)")

    sp = sub.add_parser("filter", help="run the filter on an observation word")
    _common(sp)
    sp.add_argument("--prior", default=None, help="prior law (default: stationary)")
    sp.add_argument("--word", default="", help="comma-separated observation labels")

    sp = sub.add_parser("conditions", help="check N, O/UO, K, KR")
    _common(sp)
    sp.add_argument("--check", choices=("N", "O", "UO", "K", "KR", "all"), default="all")
    sp.add_argument("--max-patterns", type=int, default=1 << 16)
    _kr_flags(sp)

    sp = sub.add_parser("verdict", help="aggregate verdict on unique ergodicity")
    _common(sp)
    _kr_flags(sp)
    sp.add_argument("--invariant-steps", type=int, default=64)
    sp.add_argument("--atom-budget", type=int, default=10**4)
    sp.add_argument("--horizon", type=int, default=10**4, help="stability horizon")
    sp.add_argument("--stability-tol", type=float, default=1e-3)

    sp = sub.add_parser("stability", help="gap between filters from two priors")
    _common(sp)
    sp.add_argument("--mu", default=None, help="first prior (default: stationary)")
    sp.add_argument("--nu", default=None, help="second prior (default: stationary)")
    sp.add_argument("--law", default=None, help="simulate under this law instead of mu")
    sp.add_argument("--horizon", type=int, default=1000)
    sp.add_argument("--minmax", action="store_true",
                    help="min/max-filter gap proxy along a stationary path instead")
    sp.add_argument("--window", type=int, default=DEFAULT_WINDOW)

    sp = sub.add_parser("invariant", help="iterate the filter kernel to an invariant measure")
    _common(sp)
    sp.add_argument("--start", choices=("dirac", "spread"), default="dirac")
    sp.add_argument("--prior", default=None, help="prior for --start (default: stationary)")
    sp.add_argument("--measure", default=None, help="check this atomic-measure JSON file instead")
    sp.add_argument("--max-steps", type=int, default=200)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.add_argument("--atom-budget", type=int, default=10**5)

    sp = sub.add_parser("entropy", help="entropy rate of the observation process")
    _common(sp)
    sp.add_argument("--horizon", type=int, default=10**5)

    sp = sub.add_parser("witness", help="merging-condition witness from a rank-one product")
    _common(sp)
    _kr_flags(sp)
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--word", default=None, help="use this word instead of searching")
    return parser


def parse_args(argv) -> CliInvocation:
    parser = build_parser()
    ns = parser.parse_args(list(argv))
    if ns.command is None:
        raise UsageError("a command is required: " + ", ".join(COMMANDS))
    if ns.format == "csv" and ns.command not in CSV_COMMANDS:
        raise UsageError(f"{ns.command} has no tabular output; use --format json")
    if not os.path.isfile(ns.model) or not os.access(ns.model, os.R_OK):
        raise UsageError(f"model file not readable: {ns.model}")
    if ns.threads < 1:
        raise UsageError("--threads must be at least 1")
    for name in ("n", "horizon", "max_len", "restarts", "samples", "max_steps",
                 "window", "atom_budget", "invariant_steps", "max_patterns"):
        if getattr(ns, name, 1) is not None and getattr(ns, name, 1) < (0 if name == "n" else 1):
            raise UsageError(f"--{name.replace('_', '-')} is out of range")
    for name in ("tol", "epsilon", "stability_tol"):
        if getattr(ns, name, 1.0) <= 0:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    for name in ("prior", "initial", "mu", "nu", "law"):
        raw = getattr(ns, name, None)
        if raw is not None:
            setattr(ns, name, parse_prior(raw))
    common = {"command", "model", "seed", "output", "format", "threads", "timing"}
    flags = {k: v for k, v in vars(ns).items() if k not in common}
    return CliInvocation(ns.command, ns.model, flags, ns.seed, ns.output, ns.format,
                         ns.threads, ns.timing)


def parse_prior(text: str) -> np.ndarray:
    try:
        w = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise UsageError(f"not a list of decimals: {text!r}") from None
    if np.any(~np.isfinite(w)) or np.any(w < 0) or abs(w.sum() - 1) > PRIOR_TOL:
        raise UsageError(f"prior must be nonnegative and sum to 1 within {PRIOR_TOL}: {text!r}")
    return w / w.sum()


def _word(model, text):
    if not text:
        return []
    try:
        return [model.obs_index(t) for t in text.split(",")]
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None


def _check_dim(model, vec, name):
    if vec is not None and vec.size != model.p:
        raise UsageError(f"--{name} has {vec.size} entries but the model has {model.p} states")


def _conditions(model, inv: CliInvocation):
    f = inv.flags
    which = f["check"]
    reports = []
    if which in ("N", "all"):
        reports.append(check_N(model))
    if which in ("O", "UO", "all"):
        rep = check_O(model)
        if which == "UO":
            rep.condition = "UO"
        reports.append(rep)
    if which in ("K", "all"):
        reports.append(check_K(model, f["max_patterns"]))
    if which in ("KR", "all"):
        reports.append(check_KR(model, f["max_len"], f["restarts"], f["tol"], inv.seed,
                                inv.threads))
    dicts = [r.to_dict(timing=inv.timing) for r in reports]
    return dicts[0] if len(dicts) == 1 else dicts


def execute(model, inv: CliInvocation):
    """Run the command; returns ``(result, csv_text_or_None)``."""
    f = inv.flags
    lam = model.stationary
    cmd = inv.command
    if cmd == "validate":
        return validate(model).to_dict(), None
    if cmd == "simulate":
        init = f["initial"] if f["initial"] is not None else lam
        _check_dim(model, init, "initial")
        path = simulate(model, init, f["n"], inv.seed)
        rows = ["step,x,y"] + [
            f"{k},{model.state_labels[path.x[k]]},{'' if k == 0 else model.obs_labels[path.y[k - 1]]}"
            for k in range(len(path.x))
        ]
        res = {"x": [model.state_labels[i] for i in path.x],
               "y": [model.obs_labels[i] for i in path.y], "seed": inv.seed}
        return res, "\n".join(rows) + "\n"
    if cmd == "filter":
        prior = f["prior"] if f["prior"] is not None else lam
        _check_dim(model, prior, "prior")
        trace = filter_path(model, prior, _word(model, f["word"]))
        res = trace.to_dict()
        res["posterior"] = trace.final.tolist()
        return res, trace.to_csv()
    if cmd == "conditions":
        return _conditions(model, inv), None
    if cmd == "verdict":
        b = Budgets(kr_max_len=f["max_len"], kr_restarts=f["restarts"], kr_tol=f["tol"],
                    invariant_steps=f["invariant_steps"], atom_budget=f["atom_budget"],
                    stability_horizon=f["horizon"], stability_tol=f["stability_tol"],
                    threads=inv.threads)
        return verdict(model, b, inv.seed).to_dict(timing=inv.timing), None
    if cmd == "stability":
        if f["minmax"]:
            if f["horizon"] < f["window"]:
                raise UsageError("--horizon must be at least --window")
            gaps = minmax_gap(model, f["window"], f["horizon"], inv.seed)
            res = {"window": f["window"], "horizon": f["horizon"], "seed": inv.seed,
                   "mean_gap": float(gaps.mean()), "gaps": gaps.tolist()}
            return res, gaps_to_csv(gaps, f["window"])
        mu = f["mu"] if f["mu"] is not None else lam
        nu = f["nu"] if f["nu"] is not None else lam
        for name, v in (("mu", mu), ("nu", nu), ("law", f["law"])):
            _check_dim(model, v, name)
        curve = stability_curve(model, mu, nu, f["horizon"], inv.seed, law=f["law"])
        return curve.to_dict(), curve.to_csv()
    if cmd == "invariant":
        if f["measure"]:
            try:
                with open(f["measure"], encoding="utf-8") as fh:
                    m = AtomicMeasure.from_dict(json.load(fh))
            except (OSError, ValueError, KeyError, TypeError) as exc:
                raise UsageError(f"cannot read measure file: {exc}") from None
            ok, res = check_invariant(model, m, f["tol"], f["atom_budget"])
            return {"invariant": ok, "residual": res}, None
        prior = f["prior"] if f["prior"] is not None else lam
        _check_dim(model, prior, "prior")
        start = dirac_at(prior) if f["start"] == "dirac" else spread(prior)
        return find_invariant(model, start, f["max_steps"], f["tol"], f["atom_budget"]).to_dict(), None
    if cmd == "entropy":
        est = entropy_rate(model, f["horizon"], inv.seed)
        return est.to_dict(), est.to_csv()
    if cmd == "witness":
        if f["word"]:
            w = make_kr_witness(model, _word(model, f["word"]))
        else:
            rep = check_KR(model, f["max_len"], f["restarts"], f["tol"], inv.seed, inv.threads)
            w = witness_from_report(model, rep)
        cw = condition_c_witness(model, w, f["epsilon"], f["samples"], inv.seed)
        return {"kr_witness": w.to_dict(model), "condition_c": cw.to_dict(model)}, None
    raise UsageError(f"unknown command {cmd}")


def run(inv: CliInvocation, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        model = load_model_file(inv.model_path)
        result, table = execute(model, inv)
    except UsageError as exc:
        print(str(exc), file=stderr)
        return 2
    except ContradictoryEvidence as exc:
        print(json.dumps(exc.to_dict()), file=stderr)
        return 3
    except FilterErgodicError as exc:
        print(json.dumps(exc.to_dict()), file=stderr)
        return 1
    if inv.format == "csv":
        text = table
    else:
        envelope = {"tool_version": __version__, "command": inv.command, "seed": inv.seed,
                    "result": result}
        text = json.dumps(envelope, indent=2) + "\n"
    if inv.output:
        with open(inv.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return 0


def main(argv=None) -> int:
    try:
        inv = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    return run(inv)


if __name__ == "__main__":
    sys.exit(main())
