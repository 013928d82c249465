"""Command-line interface.

Subcommands:
  test             run the test on CSV data against a constraint-set file
  tree-test        run the goodness-of-fit test for a latent tree model
  constraints      list the polynomial constraints implied by a tree
  simulate-size    empirical size study, CSV output
  simulate-power   empirical power study against local alternatives, CSV output
  simulate-pvalues null p-value study, CSV output

Results (JSON or CSV) go to stdout or --out; human-readable summaries and
warnings go to stderr.  Exit codes: 0 completed, 2 input error, 3 degenerate
constraint coordinate.
"""

from __future__ import annotations

import argparse
import os
import sys

from .bootstrap import BootstrapConfig, run_test
from .errors import DegenerateConstraintError, InputError, PolytestError
from .kernels import CovEntryBase, build_kernel
from .poly import parse_constraints
from .simulate import ExperimentConfig, empirical_power, empirical_size, pvalue_study
from .trees import Tree, enumerate_constraints, format_tree_constraint, TAGS
from .ustat import BudgetConfig, load_data_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3


def _default_threads() -> int:
    env = os.environ.get("POLYTEST_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"POLYTEST_THREADS must be an integer, got {env!r}")
    return 1


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _add_test_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--budget-N", type=int, default=None,
                    help="computational budget N (default 2n)")
    sp.add_argument("--n1", type=int, default=None,
                    help="projection subset size (default n)")
    sp.add_argument("--boot-A", type=int, default=1000,
                    help="bootstrap replicates (default 1000)")
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--skip-header", action="store_true",
                    help="skip the first CSV line")
    sp.add_argument("--out", default=None, help="write the JSON report here")


def _run_and_report(data, kernel, args) -> None:
    n = data.shape[0]
    N = args.budget_N if args.budget_N is not None else 2 * n
    threads = args.threads if args.threads is not None else _default_threads()
    budget = BudgetConfig(n=n, m=kernel.order, N=N, seed=args.seed)
    boot = BootstrapConfig(A=args.boot_A, alpha=args.alpha)
    report = run_test(data, kernel, budget, boot, n1=args.n1, threads=threads)
    _emit(report.to_json() + "\n", args.out)
    _note(
        f"T={report.t_stat:.6g} critical={report.critical_value:.6g} "
        f"p={report.p_value:.6g} reject={report.reject} "
        f"(n={n}, N={N}, N_hat={report.n_hat}, p_constraints={len(report.labels)})"
    )


def cmd_test(args) -> int:
    data = load_data_csv(args.data, skip_header=args.skip_header)
    l = data.shape[1]
    base = CovEntryBase(l)
    with open(args.constraints) as fh:
        parsed = parse_constraints(fh, base.dim, source=args.constraints)
    if not parsed:
        raise InputError(f"{args.constraints}: empty constraint set")
    kernel = build_kernel(parsed, base)
    _run_and_report(data, kernel, args)
    return EXIT_OK


def cmd_tree_test(args) -> int:
    data = load_data_csv(args.data, skip_header=args.skip_header)
    tree = Tree.from_file(args.tree)
    if tree.n_leaves != data.shape[1]:
        raise InputError(
            f"tree has {tree.n_leaves} leaves but data has {data.shape[1]} columns"
        )
    cset = enumerate_constraints(tree, args.mode)
    kernel = cset.to_kernel()
    _run_and_report(data, kernel, args)
    return EXIT_OK


def cmd_constraints(args) -> int:
    tree = Tree.from_file(args.tree)
    cset = enumerate_constraints(tree, args.mode)
    lines = [format_tree_constraint(c, tree) for c in cset.constraints]
    counts = cset.tag_counts()
    footer = "# total {} ({})".format(
        cset.p, ", ".join(f"{tag}={counts[tag]}" for tag in TAGS)
    )
    _emit("\n".join(lines + [footer]) + "\n", args.out)
    _note(f"{cset.p} constraints for {tree.n_leaves} leaves (mode={args.mode})")
    return EXIT_OK


def _experiment_config(args, *, mode=None, shift_grid=()) -> ExperimentConfig:
    threads = args.threads if args.threads is not None else _default_threads()
    budgets = args.budget_N if args.budget_N else (2 * args.n,)
    return ExperimentConfig(
        setup=args.setup,
        l=args.l,
        n=args.n,
        budgets=budgets,
        mode=mode if mode is not None else args.mode,
        reps=args.reps,
        alphas=args.alpha,
        shift_grid=shift_grid,
        A=args.boot_A,
        master_seed=args.seed,
        threads=threads,
    )


def cmd_simulate_size(args) -> int:
    cfg = _experiment_config(args)
    table = empirical_size(cfg)
    _emit(table.to_csv(), args.out)
    _note(f"size study done: setup {cfg.setup}, reps={cfg.reps}")
    return EXIT_OK


def cmd_simulate_power(args) -> int:
    if not args.shift_grid:
        raise InputError("simulate-power requires --shift-grid")
    cfg = _experiment_config(args, mode="all", shift_grid=args.shift_grid)
    table = empirical_power(cfg)
    _emit(table.to_csv(), args.out)
    _note(f"power study done: setup {cfg.setup}, reps={cfg.reps}")
    return EXIT_OK


def cmd_simulate_pvalues(args) -> int:
    cfg = _experiment_config(args)
    pvals = pvalue_study(cfg)
    lines = ["p_value"] + [repr(float(p)) for p in pvals]
    _emit("\n".join(lines) + "\n", args.out)
    _note(f"p-value study done: {len(pvals)} replicates")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="polytest",
        description="Test many polynomial constraints with randomized "
        "incomplete U-statistics and multiplier bootstrap critical values.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("test", help="test constraints on CSV data")
    sp.add_argument("--data", required=True)
    sp.add_argument("--constraints", required=True,
                    help="constraint-set text file over t<i> = vech(Sigma)")
    _add_test_flags(sp)
    sp.set_defaults(fn=cmd_test)

    sp = sub.add_parser("tree-test", help="latent tree goodness-of-fit test")
    sp.add_argument("--data", required=True)
    sp.add_argument("--tree", required=True, help="edge-list tree file")
    sp.add_argument("--mode", choices=("all", "eq"), default="all")
    _add_test_flags(sp)
    sp.set_defaults(fn=cmd_tree_test)

    sp = sub.add_parser("constraints", help="list a tree's constraints")
    sp.add_argument("--tree", required=True)
    sp.add_argument("--mode", choices=("all", "eq"), default="all")
    sp.add_argument("--out", default=None)
    # accepted for interface uniformity; the listing is deterministic anyway
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=None)
    sp.set_defaults(fn=cmd_constraints)

    for name, fn, needs_shift in (
        ("simulate-size", cmd_simulate_size, False),
        ("simulate-power", cmd_simulate_power, True),
        ("simulate-pvalues", cmd_simulate_pvalues, False),
    ):
        sp = sub.add_parser(name, help=f"{name.replace('-', ' ')} study")
        sp.add_argument("--setup", choices=("a", "b", "c"), default="a")
        sp.add_argument("--l", type=int, default=8)
        sp.add_argument("--n", type=int, default=200)
        sp.add_argument("--reps", type=int, default=300)
        sp.add_argument("--budget-N", type=_int_list, default=(),
                        help="comma-separated budgets (default 2n)")
        sp.add_argument("--mode", choices=("all", "eq"), default="eq")
        sp.add_argument("--alpha", type=_float_list, default=(0.01, 0.05, 0.1),
                        help="comma-separated levels")
        sp.add_argument("--boot-A", type=int, default=500)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--out", default=None)
        if needs_shift:
            sp.add_argument("--shift-grid", type=_float_list, default=(),
                            help="comma-separated local-alternative shifts")
        sp.set_defaults(fn=fn)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "mode", None) == "eq":
        args.mode = "equalities_only"
    try:
        return args.fn(args)
    except DegenerateConstraintError as exc:
        _note(f"error: {exc}")
        return EXIT_DEGENERATE
    except (PolytestError, OSError) as exc:
        _note(f"error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
