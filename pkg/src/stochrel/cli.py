"""``stochrel`` command line: JSON in, deterministic JSON reports out.

Exit codes: 0 positive finding, 1 negative finding, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction

from .coupling import FLOAT_TOL, Dist, DistError, st_related
from .ctmc import RateKernel, compare_stationary, ct_preserves, ct_subrelation
from .kernels import Kernel, preserves, subrelation
from .population import PopulationModel, partial_order_check, population_check, to_rate_kernel
from .queueing import alpha_properties, queueing_models, reproduce_queueing
from .relcore import (
    RealFn,
    Relation,
    RelationError,
    StateSpace,
    build_relation,
    conjugate_fn,
    conjugate_set,
    format_label,
    parse_label,
    relation_from_json,
    space_from_json,
    space_to_json,
)

log = logging.getLogger("stochrel")

EXIT_POSITIVE, EXIT_NEGATIVE, EXIT_ERROR = 0, 1, 2


class UsageError(ValueError):
    pass


def _reject_float(text: str):
    raise UsageError(f"float literal {text} not allowed in exact mode; write \"p/q\" or use --mode float")


def _load(path: str, mode: str):
    """Read JSON; exact mode refuses float literals, float mode reads them as exact decimals."""
    parse_float = _reject_float if mode == "exact" else Fraction
    with open(path, encoding="utf-8") as fh:
        return json.load(fh, parse_float=parse_float)


def _dump(doc, output: str | None) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2, default=_json_default) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_default(obj):
    if isinstance(obj, Fraction):
        return str(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _threads() -> int:
    raw = os.environ.get("STOCHREL_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"STOCHREL_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"STOCHREL_THREADS must be a positive integer, got {raw!r}")
    # evaluation is single-threaded; the variable is only an upper bound
    return 1


def _relation(args, left: StateSpace | None = None, right: StateSpace | None = None) -> Relation:
    doc = _load(args.relation, args.mode)
    if left is None or "left" in doc:
        R = relation_from_json(doc)
        if left is not None:
            _check_spaces(R, left, right)
        return R
    return relation_from_json(doc, left, right)


def _dist(path: str, space: StateSpace, args) -> Dist:
    doc = _load(path, args.mode)
    if isinstance(doc, list):
        doc = {"mass": doc}
    if "space" in doc:
        if space_from_json(doc["space"]) != space:
            raise RelationError(f"space of {path} does not match the relation")
    return Dist(space, tuple(doc["mass"]), exact=args.mode == "exact")


def _method(args) -> str:
    return "subset" if args.oracle else "flow"


def _check_spaces(R: Relation, left: StateSpace, right: StateSpace) -> None:
    if R.left != left or R.right != right:
        raise RelationError("relation spaces do not match the models")


# ---------------------------------------------------------------------------
# commands


def cmd_relate(args) -> tuple[dict, int]:
    R = _relation(args)
    mu, nu = _dist(args.mu, R.left, args), _dist(args.nu, R.right, args)
    tol = args.tol if args.tol is not None else FLOAT_TOL
    dec = st_related(R, mu, nu, method=_method(args), tol=tol)
    return dec.to_json(R), EXIT_POSITIVE if dec.related else EXIT_NEGATIVE


def _indices(raw, space: StateSpace) -> list[int]:
    out = []
    for item in raw:
        if isinstance(item, int) and not isinstance(item, bool):
            out.append(item)
        else:
            out.append(space.index(parse_label(item)))
    return out


def cmd_conjugate(args) -> tuple[dict, int]:
    R = _relation(args)
    source = R.left if args.side == "right" else R.right
    target = R.right if args.side == "right" else R.left
    if args.set is not None:
        B = _indices(json.loads(args.set), source)
        C = sorted(conjugate_set(R, B, args.side))
        doc = {"side": args.side, "set": sorted(set(B)), "conjugate": C, "conjugate_labels": [_label(target, k) for k in C]}
        return doc, EXIT_POSITIVE
    values = _load(args.function, args.mode)
    if isinstance(values, dict):
        values = values["values"]
    g = conjugate_fn(R, RealFn(source, tuple(values)), args.side)
    return {"side": args.side, "conjugate": [str(v) for v in g.values], "space": space_to_json(target)}, EXIT_POSITIVE


def _label(space: StateSpace, k: int):
    lab = space.labels[k]
    return lab if isinstance(lab, int) else format_label(lab)


def _kernels(args) -> tuple[Kernel, Kernel]:
    return Kernel.from_json(_load(args.model1, args.mode)), Kernel.from_json(_load(args.model2, args.mode))


def _rate_kernels(args) -> tuple[RateKernel, RateKernel]:
    return RateKernel.from_json(_load(args.model1, args.mode)), RateKernel.from_json(_load(args.model2, args.mode))


def cmd_preserve(args) -> tuple[dict, int]:
    P1, P2 = _kernels(args)
    R = _relation(args, P1.source, P2.source)
    target = None
    if args.target:
        target = relation_from_json(_load(args.target, args.mode), P1.target, P2.target)
    rep = preserves(R, P1, P2, target, method=_method(args))
    return rep.to_json(), EXIT_POSITIVE if rep.holds else EXIT_NEGATIVE


def cmd_ct_preserve(args) -> tuple[dict, int]:
    Q1, Q2 = _rate_kernels(args)
    R = _relation(args, Q1.space, Q2.space)
    rep = ct_preserves(R, Q1, Q2, method=_method(args))
    return rep.to_json(), EXIT_POSITIVE if rep.holds else EXIT_NEGATIVE


def _trace_exit(trace) -> int:
    return EXIT_POSITIVE if trace.fixed_point.nontrivial else EXIT_NEGATIVE


def cmd_subrelation(args) -> tuple[dict, int]:
    P1, P2 = _kernels(args)
    R = _relation(args, P1.source, P2.source)
    trace = subrelation(R, P1, P2, worklist=not args.full_rescan, method=_method(args))
    return trace.to_json(), _trace_exit(trace)


def cmd_ct_subrelation(args) -> tuple[dict, int]:
    Q1, Q2 = _rate_kernels(args)
    R = _relation(args, Q1.space, Q2.space)
    trace = ct_subrelation(R, Q1, Q2, worklist=not args.full_rescan, method=_method(args))
    return trace.to_json(), _trace_exit(trace)


def _population_models(args) -> tuple[PopulationModel, PopulationModel]:
    return (
        PopulationModel.from_json(_load(args.model1, args.mode)),
        PopulationModel.from_json(_load(args.model2, args.mode)),
    )


def cmd_population_check(args) -> tuple[dict, int]:
    m1, m2 = _population_models(args)
    if args.partial_order is not None:
        coords = [int(c) for c in args.partial_order.split(",") if c.strip()]
        rep = partial_order_check(coords, m1, m2)
        return rep.to_json(), EXIT_POSITIVE if rep.holds else EXIT_NEGATIVE
    R = _relation(args, m1.space, m2.space)
    rep = population_check(R, m1, m2)
    return rep.to_json(R), EXIT_POSITIVE if rep.holds else EXIT_NEGATIVE


def _any_model(doc):
    if "m" in doc:
        return to_rate_kernel(PopulationModel.from_json(doc))
    if "from" in doc:
        return Kernel.from_json(doc)
    return RateKernel.from_json(doc)


def _space_of(model) -> StateSpace:
    return model.source if isinstance(model, Kernel) else model.space


def cmd_stationary_compare(args) -> tuple[dict, int]:
    if args.queueing:
        lb, indep = queueing_models(args.lambda1, args.lambda2, args.cap, args.truncation)
        M1, M2 = to_rate_kernel(lb), to_rate_kernel(indep)
        R = build_relation(args.relation_kind, lb.space)
    else:
        if not (args.relation and args.model1 and args.model2):
            raise UsageError("stationary-compare needs RELATION MODEL1 MODEL2 or --queueing")
        M1 = _any_model(_load(args.model1, args.mode))
        M2 = _any_model(_load(args.model2, args.mode))
        R = _relation(args, _space_of(M1), _space_of(M2))
    cmp = compare_stationary(R, M1, M2)
    return cmp.to_json(), EXIT_POSITIVE if cmp.related else EXIT_NEGATIVE


def cmd_reproduce_queueing(args) -> tuple[dict, int]:
    rep = reproduce_queueing(args.lambda1, args.lambda2, args.cap, args.iters, worklist=not args.full_rescan)
    for row in rep.rows:
        log.info("n=%d %s (%d mismatches in safe region)", row["n"], row["status"], row["mismatches"])
    return rep.to_json(), EXIT_POSITIVE if rep.all_match else EXIT_NEGATIVE


def cmd_alpha_props(args) -> tuple[dict, int]:
    rep = alpha_properties((args.lo, args.hi), args.n_max)
    return rep.to_json(), EXIT_POSITIVE if rep.holds else EXIT_NEGATIVE


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=("exact", "float"), default="exact", help="arithmetic mode (default exact)")
    common.add_argument("--tol", type=float, default=None, help="decision tolerance, float mode only")
    common.add_argument("--oracle", action="store_true", help="use subset enumeration instead of max flow")
    common.add_argument("--output", "-o", default=None, help="write the report here instead of stdout")
    common.add_argument("--verbose", "-v", action="count", default=0)

    parser = argparse.ArgumentParser(prog="stochrel", description="Stochastic relations between Markov chains.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("relate", cmd_relate, "decide mu ~st nu under a relation")
    p.add_argument("relation")
    p.add_argument("mu")
    p.add_argument("nu")

    p = add("conjugate", cmd_conjugate, "conjugate of a set or function through a relation")
    p.add_argument("relation")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--set", help="JSON list of state indices or labels")
    grp.add_argument("--function", help="JSON file with a list of nonnegative values")
    p.add_argument("--side", choices=("right", "left"), default="right")

    for name, func, what in (
        ("preserve", cmd_preserve, "check that two kernels preserve a relation"),
        ("subrelation", cmd_subrelation, "largest subrelation preserved by two kernels"),
        ("ct-preserve", cmd_ct_preserve, "check that two rate kernels preserve a relation"),
        ("ct-subrelation", cmd_ct_subrelation, "largest subrelation preserved by two rate kernels"),
    ):
        p = add(name, func, what)
        p.add_argument("relation")
        p.add_argument("model1")
        p.add_argument("model2")
        if name == "preserve":
            p.add_argument("--target", help="relation between the target spaces (default: the relation itself)")
        if name.endswith("subrelation"):
            p.add_argument("--full-rescan", action="store_true", help="recheck every pair each round")

    p = add("population-check", cmd_population_check, "preservation test for population processes")
    p.add_argument("relation", nargs="?")
    p.add_argument("model1")
    p.add_argument("model2")
    p.add_argument("--partial-order", help="comma-separated 1-based coordinates M; checks x <=_M y")

    p = add("stationary-compare", cmd_stationary_compare, "relate stationary distributions")
    p.add_argument("relation", nargs="?")
    p.add_argument("model1", nargs="?")
    p.add_argument("model2", nargs="?")
    p.add_argument("--queueing", action="store_true", help="use the two-queue models instead of files")
    p.add_argument("--relation-kind", default="sum_leq", help="named relation for --queueing (default sum_leq)")
    _queue_args(p, cap=12)
    p.add_argument("--truncation", choices=("box", "total"), default="total")

    p = add("reproduce-queueing", cmd_reproduce_queueing, "subrelation iterates versus the closed form")
    _queue_args(p, cap=30)
    p.add_argument("--iters", type=int, default=8)
    p.add_argument("--full-rescan", action="store_true")

    p = add("alpha-props", cmd_alpha_props, "pointwise properties of alpha_n")
    p.add_argument("--lo", type=int, default=-5)
    p.add_argument("--hi", type=int, default=15)
    p.add_argument("--n-max", type=int, default=5)
    return parser


def _queue_args(p, cap: int) -> None:
    p.add_argument("--lambda1", default="2/5")
    p.add_argument("--lambda2", default="3/10")
    p.add_argument("--cap", type=int, default=cap)


def _validate(args) -> None:
    if args.tol is not None:
        if args.mode != "float":
            raise UsageError("--tol is only allowed with --mode float")
        if args.tol < 0:
            raise UsageError("--tol must be nonnegative")
    if args.command == "population-check" and args.partial_order is None and args.relation is None:
        raise UsageError("population-check needs RELATION or --partial-order")
    if args.command == "population-check" and args.partial_order is not None and args.relation is not None:
        raise UsageError("--partial-order replaces RELATION; pass only the two models")


def _configure_logging(verbose: int) -> None:
    # own handler: root configuration may already be claimed by a host program
    for h in list(log.handlers):
        log.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.WARNING - 10 * min(verbose, 2))
    log.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_POSITIVE
    _configure_logging(args.verbose)
    try:
        _threads()
        _validate(args)
        doc, code = args.func(args)
        _dump(doc, args.output)
        return code
    except (UsageError, ValueError, KeyError, TypeError, OSError, json.JSONDecodeError, DistError) as exc:
        sys.stderr.write(f"stochrel: error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
