"""Command-line front end.

Every subcommand prints one payload (JSON by default, ``--format text`` for a
flat listing) and exits with 0 when a verdict was computed, 2 on bad input
and 3 when a resource guard stopped the computation. Diagnostics go to
standard error as ``path:line: message`` when a file is involved.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction

from smpkit.dist import Cdf, CompositionKind, GridSpec
from smpkit.errors import ArtifactError, InputError, ParseError, ResourceGuard
from smpkit.rational import format_rational, rational

EXIT_OK, EXIT_INPUT, EXIT_GUARD = 0, 2, 3


@dataclass
class RunConfig:
    """Settings shared by all subcommands.

    Attributes:
        command: Subcommand name.
        inputs: Input file paths, in argument order.
        grid_points: Override for the numeric CDF grid, or None.
        grid_tol: Override for the grid tolerance, or None.
        scheduler_limit: Cap on enumerated scheduler choices.
        output: ``"json"`` or ``"text"``.
        seed: Seed for randomised subcommands.
    """

    command: str
    inputs: list = field(default_factory=list)
    grid_points: int | None = None
    grid_tol: float | None = None
    scheduler_limit: int = 4096
    output: str = "json"
    seed: int = 0

    def __post_init__(self):
        # GridSpec enforces points >= 16 and tol > 0.
        GridSpec(points=self.grid_points or 2048, tol=self.grid_tol or 1e-9)
        if self.output not in ("json", "text"):
            raise InputError(f"unknown output format {self.output!r}")


class CliInputError(InputError):
    """Bad input tied to a file, reported with its path."""

    def __init__(self, path: str, message: str, line: int | None = None):
        self.path, self.line = path, line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def jsonable(x):
    """Convert library values into plain JSON types with stable ordering."""
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else format_rational(x)
    if isinstance(x, float):
        return "inf" if math.isinf(x) else x
    if isinstance(x, Cdf):
        return x.to_literal()
    if hasattr(x, "to_json"):
        return jsonable(x.to_json())
    if hasattr(x, "describe"):
        return jsonable(x.describe())
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (set, frozenset)):
        return sorted((jsonable(v) for v in x), key=repr)
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if dataclasses.is_dataclass(x):
        return {f.name: jsonable(getattr(x, f.name)) for f in dataclasses.fields(x)}
    return str(x)


def emit(payload: dict, cfg: RunConfig, out=None) -> None:
    out = out or sys.stdout
    data = jsonable(payload)
    if cfg.output == "json":
        out.write(json.dumps(data, indent=2) + "\n")
        return
    for k, v in data.items():
        if isinstance(v, str) and "\n" in v:
            out.write(f"{k}:\n{v.rstrip()}\n")
        else:
            out.write(f"{k}: {v if isinstance(v, str) else json.dumps(v)}\n")


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliInputError(path, exc.strerror or str(exc)) from None


def _parse_file(path: str, parser):
    text = _read(path)
    try:
        return parser(text)
    except ParseError as exc:
        raise CliInputError(path, str(exc).split(" (", 1)[0], exc.line_value or 1) from None
    except InputError as exc:
        raise CliInputError(path, str(exc)) from None


def _header(path: str) -> str:
    for raw in _read(path).splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            return line.split()[0]
    raise CliInputError(path, "empty model file", 1)


def load_smp_file(path: str):
    from smpkit.smp import parse_smp

    return _parse_file(path, parse_smp)


def load_wts_file(path: str):
    from smpkit.wlwb import parse_wts

    return _parse_file(path, parse_wts)


def _formula_text(args) -> tuple[str, str]:
    """The formula source and a name for diagnostics."""
    if args.expr is not None:
        return args.expr, "<expr>"
    if args.formula is None:
        raise InputError("give a formula file or -e TEXT")
    return _read(args.formula).strip(), args.formula


def _parse_formula(args, parser):
    text, where = _formula_text(args)
    try:
        return parser(text)
    except ParseError as exc:
        raise CliInputError(where, str(exc), exc.line_value or 1) from None


def _state(M, s):
    M.check_state(s)
    return s


def _star(text: str) -> CompositionKind:
    try:
        return CompositionKind.parse(text)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _rat(text: str, what: str) -> Fraction:
    try:
        return rational(text)
    except (ValueError, ZeroDivisionError):
        raise InputError(f"bad {what} {text!r}") from None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_mc_wlwb(args, cfg):
    from smpkit.wlwb import model_check_wlwb, parse_wlwb, to_text

    M = load_wts_file(args.model)
    phi = _parse_formula(args, parse_wlwb)
    return {"formula": to_text(phi), "state": args.state, "holds": model_check_wlwb(M, _state(M, args.state), phi)}


def cmd_sat_wlwb(args, cfg):
    from smpkit.wlwb import parse_wlwb, satisfiable_wlwb, serialize_wts, to_text

    phi = _parse_formula(args, parse_wlwb)
    res = satisfiable_wlwb(phi)
    out = {"formula": to_text(phi), "sat": res.sat}
    if res.sat:
        out["state"] = res.state
        out["model"] = serialize_wts(res.model)
    return out


def cmd_bisim(args, cfg):
    if _header(args.model) == "wts":
        from smpkit.wlwb import distinguishing_formula, to_text, weighted_bisim

        M = load_wts_file(args.model)
        ok = weighted_bisim(M, _state(M, args.s), _state(M, args.t))
        out = {"relation": "weighted", "bisimilar": ok}
        if not ok:
            f = distinguishing_formula(M, args.s, args.t)
            out["distinguishing_formula"] = to_text(f) if f is not None else None
        return out
    from smpkit.simdist import bisimilar

    M = load_smp_file(args.model)
    return {"relation": "smp", "bisimilar": bisimilar(M, _state(M, args.s), _state(M, args.t))}


def cmd_gen_bisim(args, cfg):
    from smpkit.wlwb import gen_bisim_partition, gen_weighted_bisim

    M = load_wts_file(args.model)
    ok = gen_weighted_bisim(M, _state(M, args.s), _state(M, args.t))
    return {"relation": "generalised", "bisimilar": ok, "partition": gen_bisim_partition(M)}


def _grid(cfg):
    # Overrides are already in the environment via _grid_env.
    return GridSpec.from_env()


def cmd_simdist(args, cfg):
    from smpkit.simdist import raw_pair_acceleration, simulation_distance

    M = load_smp_file(args.model)
    d = simulation_distance(M, _state(M, args.s1), _state(M, args.s2), _grid(cfg))
    return {"distance": d, "raw_constant": raw_pair_acceleration(M, args.s1, args.s2)}


def cmd_eps_sim(args, cfg):
    from smpkit.simdist import simulation_relation

    M = load_smp_file(args.model)
    eps = _rat(args.eps, "eps")
    if eps < 1:
        raise InputError("eps must be at least 1")
    rel = simulation_relation(M, eps, _grid(cfg))
    ok = (_state(M, args.s1), _state(M, args.s2)) in rel
    out = {"eps": eps, "simulates": ok}
    if ok:
        out["witness_relation"] = sorted([list(p) for p in rel])
    return out


def cmd_mc_tml(args, cfg):
    from smpkit.tml import fragment, model_check_tml, parse_tml, tml_to_text

    M = load_smp_file(args.model)
    phi = _parse_formula(args, parse_tml)
    holds = model_check_tml(M, _state(M, args.state), phi)
    return {"formula": tml_to_text(phi), "state": args.state, "holds": holds, "fragments": sorted(fragment(phi))}


def cmd_perturb(args, cfg):
    from smpkit.tml import parse_tml, perturb, tml_to_text

    phi = _parse_formula(args, parse_tml)
    eps = _rat(args.eps, "eps")
    if eps <= 0:
        raise InputError("eps must be positive")
    return {"formula": tml_to_text(phi), "eps": eps, "perturbed": tml_to_text(perturb(phi, eps))}


def cmd_faster_than(args, cfg):
    from smpkit.fasterthan import faster_than_unambiguous, time_bounded_additive_faster

    U, V = load_smp_file(args.u), load_smp_file(args.v)
    u0 = _state(U, args.u0 or U.initial)
    v0 = _state(V, args.v0 or V.initial)
    if args.approx:
        eps, b = _rat(args.approx[0], "eps"), _rat(args.approx[1], "time bound")
        res = time_bounded_additive_faster(U, V, u0, v0, eps, b, horizon_override=args.horizon)
        return {
            "holds": res.holds, "method": res.method, "N": res.N, "eps": eps, "b": b,
            "words_checked": res.words_checked, "witness": res.witness,
        }
    res = faster_than_unambiguous(U, V, u0, v0)
    return {"holds": res.holds, "method": res.method, "words_checked": res.words_checked, "witness": res.witness}


def cmd_reach(args, cfg):
    from smpkit.smp import Scheduler, trivial_scheduler
    from smpkit.tml import reachability_prob

    M = load_smp_file(args.model)
    s = _state(M, args.state)
    t = _rat(args.t, "time bound")
    sched = trivial_scheduler(M, args.horizon) if len(M.inputs) == 1 else Scheduler.uniform(M, args.horizon)
    lo, hi = reachability_prob(M, sched, s, args.beta, t, args.horizon, args.precision)
    return {"lower": lo, "upper": hi, "horizon": args.horizon, "scheduler": "trivial" if len(M.inputs) == 1 else "uniform"}


def cmd_compose(args, cfg):
    from smpkit.smp import compose, serialize_smp

    C = compose(load_smp_file(args.m1), load_smp_file(args.m2), _star(args.star))
    return {"star": _star(args.star).value, "model": serialize_smp(C)}


def cmd_check_monotonic(args, cfg):
    from smpkit.anomaly import monotonic_bounded, strong_monotonic

    U, V, W = (load_smp_file(p) for p in (args.u, args.v, args.w))
    W2 = load_smp_file(args.w2) if args.w2 else None
    star = _star(args.star)
    strong = strong_monotonic(U, V, W, W2, star, args.n)
    out = {"star": star.value, "strong": strong}
    if args.weak is not None:
        out["weak_bounded"] = monotonic_bounded(U, V, W, W2, star, args.weak, cfg.scheduler_limit)
    return out


def cmd_anomaly(args, cfg):
    from smpkit.anomaly import detect_anomaly

    U, V, W = (load_smp_file(p) for p in (args.u, args.v, args.w))
    word = args.word.split(",") if "," in args.word else list(args.word)
    rep = detect_anomaly(U, V, W, _star(args.star), word, _rat(args.t, "time bound"))
    return {"star": _star(args.star).value, **rep.to_json()}


def cmd_axioms(args, cfg):
    from smpkit.wlwb import axiom_soundness_suite

    rep = axiom_soundness_suite(cfg.seed, args.models)
    return {"seed": cfg.seed, "checked": rep.checked, "violations": rep.violations[:20], "ok": rep.ok}


def cmd_selftest(args, cfg):
    from smpkit.selftest import format_table, run_selftest

    rows = run_selftest()
    ok = all(r.ok is not False for r in rows)
    if cfg.output == "text":
        return {"table": format_table(rows), "ok": ok}
    return {"rows": [dataclasses.asdict(r) | {"seconds": round(r.seconds, 3)} for r in rows], "ok": ok}


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------


def _add_formula(p):
    p.add_argument("formula", nargs="?", help="formula file")
    p.add_argument("-e", "--expr", help="formula text instead of a file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smpkit", description=__doc__.splitlines()[0])
    parser.add_argument("--format", dest="output", choices=("json", "text"), default="json")
    parser.add_argument("--grid-points", type=int, help="numeric CDF grid size (default SMPKIT_GRID_POINTS or 2048)")
    parser.add_argument("--grid-tol", type=float, help="numeric CDF tolerance (default SMPKIT_GRID_TOL or 1e-9)")
    parser.add_argument("--scheduler-limit", type=int, default=4096)
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mc-wlwb", help="model check a WLWB formula")
    p.add_argument("model")
    p.add_argument("state")
    _add_formula(p)
    p.set_defaults(fn=cmd_mc_wlwb, files=("model",))

    p = sub.add_parser("sat-wlwb", help="decide WLWB satisfiability and extract a model")
    _add_formula(p)
    p.set_defaults(fn=cmd_sat_wlwb, files=())

    for name, fn, help_ in (
        ("bisim", cmd_bisim, "weighted bisimilarity (wts) or SMP bisimilarity (smp)"),
        ("gen-bisim", cmd_gen_bisim, "generalised weighted bisimilarity"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("model")
        p.add_argument("s")
        p.add_argument("t")
        p.set_defaults(fn=fn, files=("model",))

    p = sub.add_parser("simdist", help="simulation distance d(s1, s2)")
    p.add_argument("model")
    p.add_argument("s1")
    p.add_argument("s2")
    p.set_defaults(fn=cmd_simdist, files=("model",))

    p = sub.add_parser("eps-sim", help="decide eps-simulation")
    p.add_argument("model")
    p.add_argument("s1")
    p.add_argument("s2")
    p.add_argument("eps")
    p.set_defaults(fn=cmd_eps_sim, files=("model",))

    p = sub.add_parser("mc-tml", help="model check a TML formula")
    p.add_argument("model")
    p.add_argument("state")
    _add_formula(p)
    p.set_defaults(fn=cmd_mc_tml, files=("model",))

    p = sub.add_parser("perturb", help="scale the time constants of a TML formula")
    _add_formula(p)
    p.add_argument("--eps", required=True)
    p.set_defaults(fn=cmd_perturb, files=())

    p = sub.add_parser("faster-than", help="faster-than preorder between two processes")
    p.add_argument("u")
    p.add_argument("v")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--unambiguous", action="store_true", help="exact decider (default)")
    mode.add_argument("--approx", nargs=2, metavar=("EPS", "B"), help="time-bounded additive check")
    p.add_argument("--u0")
    p.add_argument("--v0")
    p.add_argument("--horizon", type=int, help="word-length cap for --approx")
    p.set_defaults(fn=cmd_faster_than, files=("u", "v"))

    p = sub.add_parser("reach", help="time-bounded reachability bounds")
    p.add_argument("model")
    p.add_argument("state")
    p.add_argument("beta", help="boolean TML formula over atoms")
    p.add_argument("t")
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--precision", type=float)
    p.set_defaults(fn=cmd_reach, files=("model",))

    p = sub.add_parser("compose", help="parallel composition of two reactive processes")
    p.add_argument("m1")
    p.add_argument("m2")
    p.add_argument("--star", required=True)
    p.set_defaults(fn=cmd_compose, files=("m1", "m2"))

    p = sub.add_parser("check-monotonic", help="strong monotonicity (and optional bounded weak check)")
    p.add_argument("u")
    p.add_argument("v")
    p.add_argument("w")
    p.add_argument("w2", nargs="?")
    p.add_argument("--star", required=True)
    p.add_argument("--n", type=int, help="path length (default: the repetition bound)")
    p.add_argument("--weak", type=int, metavar="N", help="also run the bounded existential check")
    p.set_defaults(fn=cmd_check_monotonic, files=("u", "v", "w", "w2"))

    p = sub.add_parser("anomaly", help="compare U*W and V*W on one cylinder")
    p.add_argument("u")
    p.add_argument("v")
    p.add_argument("w")
    p.add_argument("--star", required=True)
    p.add_argument("--word", required=True, help="letters, e.g. aa, or comma separated")
    p.add_argument("--t", required=True)
    p.set_defaults(fn=cmd_anomaly, files=("u", "v", "w"))

    p = sub.add_parser("axioms", help="random soundness check of the WLWB axioms and rules")
    p.add_argument("--models", type=int, default=100)
    p.set_defaults(fn=cmd_axioms, files=())

    p = sub.add_parser("selftest", help="reproduce the reference examples")
    p.set_defaults(fn=cmd_selftest, files=())
    return parser


@contextlib.contextmanager
def _grid_env(cfg: RunConfig):
    """Expose grid overrides to modules that read the environment defaults."""
    saved = {k: os.environ.get(k) for k in ("SMPKIT_GRID_POINTS", "SMPKIT_GRID_TOL")}
    if cfg.grid_points is not None:
        os.environ["SMPKIT_GRID_POINTS"] = str(cfg.grid_points)
    if cfg.grid_tol is not None:
        os.environ["SMPKIT_GRID_TOL"] = repr(cfg.grid_tol)
    try:
        yield
    finally:
        for k, v in saved.items():
            if v is None:
                os.environ.pop(k, None)
            else:
                os.environ[k] = v


def run(argv=None, out=None, err=None) -> int:
    """Parse ``argv``, run one subcommand and return the exit code."""
    out, err = out or sys.stdout, err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        files = [getattr(args, f) for f in args.files if getattr(args, f, None)]
        cfg = RunConfig(args.command, files, args.grid_points, args.grid_tol, args.scheduler_limit, args.output, args.seed)
        with _grid_env(cfg):
            payload = args.fn(args, cfg)
    except ResourceGuard as exc:
        err.write(f"smpkit {args.command}: resource guard: {exc}\n")
        return EXIT_GUARD
    except (ArtifactError, ValueError) as exc:
        err.write(f"smpkit {args.command}: {exc}\n")
        return EXIT_INPUT
    emit(payload, cfg, out)
    if args.command == "selftest" and not payload["ok"]:
        return 1
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
