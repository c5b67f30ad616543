"""Command-line entry point: ``tensorid <subcommand> [options]``.

Exit status is 0 when the computed verdict passes, 1 when it fails and 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import jsonio
from .decomposer import SolverConfig, multistart_decompose
from .fourfold import ConstructionError, DegenerateInputError, FitProblem, build_fourfold, fit_segre_embedding
from .multilinear import DEFAULT_RANK_TOL, Shape3, assemble, complex_normal, derive_rng, random_decomposition
from .pipeline import (
    UnexpectedRankError,
    _fourfold_summary,
    contact_check,
    fourfold_passes,
    sample_anchors,
    verify_unidentifiability,
)
from .secant import GenericityError, Segre, SegreVeronese, classify_balance, generic_rank_profile, terracini_dimension
from .tangential import FiberConfig, SolverIncompleteError, abstract_model, fiber_count, random_tangential_projection

log = logging.getLogger("tensorid")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="64-bit seed for every random draw (default 0)")
    p.add_argument("--json-out", metavar="PATH", help="write the JSON report here")
    p.add_argument("--starts", type=int, default=None, help="number of random starts for the solvers")
    p.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL, help="relative singular-value threshold")
    p.add_argument("--quiet", action="store_true", help="print nothing on stdout")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="tensorid", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("secant-dim", parents=[common], help="Terracini dimension of S_k")
    p.add_argument("dims", type=int, nargs=3, metavar="N")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--degrees", type=int, nargs=3, metavar="D", default=(1, 1, 1),
                   help="multidegree for a Segre-Veronese embedding (default: Segre)")

    p = sub.add_parser("generic-rank", parents=[common], help="smallest k with S_k filling the ambient space")
    p.add_argument("dims", type=int, nargs=3, metavar="N")

    p = sub.add_parser("balance", parents=[common], help="balanced/unbalanced classification of (a1,a2,a3)")
    p.add_argument("a", type=int, nargs=3, metavar="A")
    p.add_argument("--k", type=int, default=None)

    p = sub.add_parser("fit-segre", parents=[common], help="fit P^2 x P^1 -> P^5 through random point pairs")
    p.add_argument("--pairs", type=int, default=8)

    sub.add_parser("build-y", parents=[common], help="build the fourfold Y through 8 random points of X")

    p = sub.add_parser("tangential-degree", parents=[common], help="fiber count of the tangential projection")
    p.add_argument("--model", choices=("abstract", "fourfold"), default="abstract")

    p = sub.add_parser("decompose", parents=[common], help="multistart decomposition and class count")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--tensor", metavar="PATH", help="tensor JSON file")
    src.add_argument("--shape", type=int, nargs=3, metavar="N", default=(3, 6, 6),
                     help="shape of a synthetic random tensor (default 3 6 6)")
    p.add_argument("--rank", type=int, default=8, help="rank of the synthetic tensor (default 8)")
    p.add_argument("--k", type=int, default=None, help="number of summands (default: --rank)")

    sub.add_parser("verify-theorem", parents=[common], help="full non-identifiability chain")

    p = sub.add_parser("contact-check", parents=[common], help="tangency of X along Y")
    p.add_argument("--points", type=int, default=50)
    return parser


def _emit(args, lines, payload) -> None:
    if not args.quiet:
        for line in lines:
            print(line)
    if args.json_out:
        jsonio.write_json(payload, args.json_out)


def cmd_secant_dim(args) -> int:
    rng = derive_rng(args.seed)
    param = Segre(args.dims) if tuple(args.degrees) == (1, 1, 1) else SegreVeronese(args.dims, args.degrees)
    sd = terracini_dimension(param, args.k, rng, args.rank_tol)
    _emit(args, [f"{sd.projective_dim}", f"affine_dim={sd.affine_dim} expected={sd.expected_projective_dim} "
                 f"defect={sd.defect} gap={sd.gap:.3e}"],
          {**sd.to_json(seed=args.seed), "variety": param.name})
    return 0


def cmd_generic_rank(args) -> int:
    rank, profile = generic_rank_profile(Shape3(*args.dims), derive_rng(args.seed), args.rank_tol)
    lines = [str(rank)] + [f"k={d.k} projective_dim={d.projective_dim} defect={d.defect}" for d in profile if d.defect]
    _emit(args, lines, {"shape": list(args.dims), "generic_rank": rank, "seed": args.seed,
                        "profile": [d.to_json() for d in profile]})
    return 0


def cmd_balance(args) -> int:
    b = classify_balance(*args.a, k=args.k)
    line = f"{b.label}, bound {b.bound}"
    if b.identifiable is not None:
        line += f", {args.k}-identifiable: {'yes' if b.identifiable else 'no'}"
    _emit(args, [line], {"a": list(args.a), "balanced": b.balanced, "threshold": b.threshold, "bound": b.bound,
                         "k": args.k, "identifiable": b.identifiable})
    return 0


def cmd_fit_segre(args) -> int:
    rng = derive_rng(args.seed)
    fp = FitProblem(complex_normal(rng, (args.pairs, 6)), complex_normal(rng, (args.pairs, 3)))
    fit = fit_segre_embedding(fp, rng, args.rank_tol)
    ok = bool(fit.residuals.max() < 1e-8)
    _emit(args, [f"nullity={fit.nullity} residual_max={fit.residuals.max():.3e} cond={fit.condition:.3e}"],
          {"seed": args.seed, "nullity": fit.nullity, "S": fit.S, "t": fit.t,
           "residuals": list(map(float, fit.residuals))})
    return 0 if ok else 1


def cmd_build_y(args) -> int:
    Y = build_fourfold(sample_anchors(args.seed), derive_rng(args.seed, 0, 3), args.rank_tol)
    s = _fourfold_summary(Y)
    _emit(args, [f"span_dim={s['span_dim']} (P^{s['span_projective_dim']}) anchor_distance_max="
                 f"{s['anchor_distance_max']:.2e} fit_residual_max={s['fit_residual_max']:.2e}"],
          {**Y.to_json(), "seed": args.seed})
    return 0 if fourfold_passes(Y) else 1


def cmd_tangential_degree(args) -> int:
    rng = derive_rng(args.seed)
    model = abstract_model() if args.model == "abstract" else build_fourfold(sample_anchors(args.seed), rng, args.rank_tol)
    cfg = FiberConfig() if args.starts is None else FiberConfig(num_starts=args.starts)
    tp = random_tangential_projection(model, rng, args.rank_tol)
    fr = fiber_count(tp, rng, cfg)
    ok = fr.count == 6 and fr.residual_max < 1e-10 and fr.min_jacobian_sv > cfg.reduced_tol
    _emit(args, [f"{fr.count}", f"residual_max={fr.residual_max:.2e} min_jacobian_sv={fr.min_jacobian_sv:.2e} "
                 f"starts={fr.starts_used}"],
          {**fr.to_json(), "model": args.model, "seed": args.seed, "schema_version": jsonio.SCHEMA_VERSION})
    return 0 if ok else 1


def cmd_decompose(args) -> int:
    if args.tensor:
        T = jsonio.tensor_from_json(jsonio.read_json(args.tensor))
        k = args.k or args.rank
    else:
        d0 = random_decomposition(Shape3(*args.shape), args.rank, derive_rng(args.seed, 1))
        T = assemble(d0)
        k = args.k or args.rank
    cfg = SolverConfig(seed=args.seed) if args.starts is None else SolverConfig(seed=args.seed, num_starts=args.starts)
    rep = multistart_decompose(T, k, cfg)
    _emit(args, [f"{rep.distinct_count}", f"basins={[c.members_found for c in rep.classes]} "
                 f"status={dict(sorted(rep.status_counts.items()))}"],
          {**rep.to_json(), "tensor": jsonio.tensor_to_json(T)})
    return 0 if rep.distinct_count >= 1 else 1


def cmd_verify_theorem(args) -> int:
    cfg = SolverConfig(seed=args.seed) if args.starts is None else SolverConfig(seed=args.seed, num_starts=args.starts)
    rep = verify_unidentifiability(args.seed, cfg, FiberConfig(), args.rank_tol)
    lines = [f"{'PASS' if s.passed else 'FAIL'} {s.name}: {s.detail}" for s in rep.stages]
    lines.append(f"verdict: {'pass' if rep.verdict else 'fail'}")
    _emit(args, lines, rep.to_json())
    return 0 if rep.verdict else 1


def cmd_contact_check(args) -> int:
    rep = contact_check(args.seed, args.points, args.rank_tol)
    _emit(args, [f"({rep.dim_eight_tangent_span}, {rep.dim_augmented_span})",
                 f"negative_control={rep.negative_control_dim} verdict={'pass' if rep.passed else 'fail'}"],
          rep.to_json())
    return 0 if rep.passed else 1


COMMANDS = {
    "secant-dim": cmd_secant_dim,
    "generic-rank": cmd_generic_rank,
    "balance": cmd_balance,
    "fit-segre": cmd_fit_segre,
    "build-y": cmd_build_y,
    "tangential-degree": cmd_tangential_degree,
    "decompose": cmd_decompose,
    "verify-theorem": cmd_verify_theorem,
    "contact-check": cmd_contact_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DegenerateInputError, GenericityError, ConstructionError, SolverIncompleteError,
            UnexpectedRankError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
