"""``alloc`` command-line front end.

Exit codes: 0 success, 2 invalid input, 3 infeasible constraints,
4 closed form unavailable (rerun with ``--mode greedy``), 5 oracle cap exceeded.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from .exact import ConditionNotMet, CostAllocation, ExactAllocation, exact_block, exact_cost, exact_crd
from .factorial import (
    Criterion,
    DesignSpec,
    InfeasibleError,
    VarianceSpec,
    check_conditions,
    criterion_value,
    effect_names,
    estimate_effects,
    finite_population_variances,
    treatment_label,
)
from .greedy import IntegerAllocation, greedy_block, greedy_crd
from .io import Problem, SpecError, load_pilot, load_potential_outcomes, load_problem, pilot_variances
from .oracle import DEFAULT_CAP, OracleCapExceeded, enumerate_block, enumerate_crd
from .simulate import RNG_ALGORITHM, monte_carlo

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_CONDITION, EXIT_CAP = 0, 2, 3, 4, 5


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def _ints(a):
    return np.asarray(a, dtype=np.int64).tolist()


def _conditions(vs: VarianceSpec, tol: float) -> dict:
    report = check_conditions(vs, tol=tol)
    out = {"homoscedastic": report.homoscedastic}
    if vs.is_block:
        out["WBH"] = report.WBH
        out["BBH"] = report.BBH
    return out


def _design(problem: Problem) -> DesignSpec:
    if problem.N is None:
        raise SpecError("completely randomized designs need design.N")
    return DesignSpec(problem.K, problem.N, problem.criterion, problem.lower, problem.upper)


def cmd_allocate(problem: Problem, design: str, mode: str = "exact", tol=None, cap: int = DEFAULT_CAP) -> dict:
    """Run one allocation and return a JSON-ready report."""
    tol = problem.tolerance if tol is None else tol
    vs = problem.variances
    crit = problem.criterion
    report = {
        "command": design,
        "mode": mode,
        "K": problem.K,
        "criterion": crit.value,
        "treatments": [treatment_label(j, problem.K) for j in range(1, problem.J + 1)],
        "variances": _floats(vs.variances),
    }
    if design == "block" and not vs.is_block:
        raise SpecError("`alloc block` needs design.blocks and a variance matrix")
    if design != "block" and vs.is_block:
        raise SpecError(f"`alloc {design}` needs design.N and a variance vector")
    if vs.is_block:
        report["blocks"] = [{"name": n, "size": int(s)} for n, s in zip(problem.block_names, vs.block_sizes)]
    report["N"] = problem.N
    report["conditions"] = _conditions(vs, tol)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if design == "cost":
            if mode != "exact":
                raise SpecError("cost-constrained allocation is only available with --mode exact")
            if problem.costs is None:
                raise SpecError("`alloc cost` needs a costs section")
            res = exact_cost(vs, problem.costs, crit)
            report.update(
                costs=_floats(problem.costs.costs),
                budget=problem.costs.budget,
                budget_shares=_floats(res.budget_shares),
                counts=_ints(res.integer_counts),
                spent=res.spent,
            )
            if np.all(res.integer_counts > 0) and not (crit is Criterion.D and np.any(vs.variances == 0)):
                report["criterion_value"] = criterion_value(vs, res.integer_counts, crit)
        elif mode == "exact":
            res = exact_block(vs, crit, tol=tol) if vs.is_block else exact_crd(vs, crit)
            totals = vs.block_sizes if vs.is_block else problem.N
            report["proportions"] = _floats(res.proportions)
            report["conditions_used"] = list(res.conditions_used)
            if totals is not None:
                expected = res.counts(totals)
                report["expected_counts"] = _floats(expected)
                if np.all(expected > 0) and not (crit is Criterion.D and np.any(vs.variances == 0)):
                    report["criterion_value"] = criterion_value(vs, expected, crit)
        elif mode == "greedy":
            if vs.is_block:
                res = greedy_block(vs, crit, lower=_default(problem.lower, 2), upper=problem.upper)
            else:
                res = greedy_crd(vs, _design(problem))
            report.update(counts=_ints(res.counts), criterion_value=res.criterion_value, iterations=res.iterations)
        elif mode == "oracle":
            if vs.is_block:
                res = enumerate_block(vs, crit, lower=_default(problem.lower, 2), upper=problem.upper, cap=cap)
            else:
                res = enumerate_crd(vs, _design(problem), cap=cap)
            report.update(
                counts=_ints(res.optima[0].counts),
                criterion_value=res.value,
                optima=[_ints(o.counts) for o in res.optima],
                enumerated=int(res.enumerated),
            )
        else:
            raise SpecError(f"unknown mode {mode!r}")
    report["warnings"] = [str(w.message) for w in caught]
    return report


def _default(value, fallback):
    return fallback if value is None else value


def allocation_from_report(doc: dict):
    """Rebuild the allocation object a JSON report describes."""
    crit = Criterion.parse(doc["criterion"])
    if doc["command"] == "cost":
        return CostAllocation(
            np.array(doc["budget_shares"]), np.array(doc["counts"], dtype=np.int64), doc["spent"], crit
        )
    if doc["mode"] == "exact":
        return ExactAllocation(np.array(doc["proportions"]), crit, tuple(doc.get("conditions_used", ())))
    return IntegerAllocation(
        np.array(doc["counts"], dtype=np.int64), crit, doc["criterion_value"], doc.get("iterations", 0)
    )


# ---------------------------------------------------------------------------
# Text rendering
# ---------------------------------------------------------------------------


def _fmt_count(x: float) -> str:
    return str(int(round(x))) if abs(x - round(x)) < 1e-9 else f"{x:.3f}"


def _table(header, rows) -> str:
    cells = [list(map(str, header))] + [list(map(str, r)) for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def _row_labels(report):
    if "blocks" in report:
        return [f"{b['name']} (M={b['size']})" for b in report["blocks"]]
    return [f"N={report['N']}" if report.get("N") else ""]


def render_allocation(report: dict) -> str:
    lines = [f"{report['criterion']}-optimal allocation ({report['command']}, {report['mode']})"]
    head = [""] + report["treatments"]
    labels = _row_labels(report)

    def rows_of(values, fmt):
        values = np.atleast_2d(values)
        return [[lab] + [fmt(v) for v in row] for lab, row in zip(labels, values)]

    if "budget_shares" in report:
        lines.append(_table(head, [["share"] + [f"{v:.3f}" for v in report["budget_shares"]],
                                   ["units"] + [str(v) for v in report["counts"]]]))
        lines.append(f"spent {report['spent']:.2f} of budget {report['budget']:.2f}")
    elif "proportions" in report:
        lines.append("proportions")
        lines.append(_table(head, rows_of(report["proportions"], lambda v: f"{v:.3f}")))
        if "expected_counts" in report:
            lines.append("units")
            lines.append(_table(head, rows_of(report["expected_counts"], _fmt_count)))
        if report.get("conditions_used"):
            lines.append("closed form valid under: " + ", ".join(report["conditions_used"]))
    else:
        lines.append(_table(head, rows_of(report["counts"], str)))
    if "optima" in report:
        lines.append(f"{len(report['optima'])} optimal allocation(s) among {report['enumerated']} enumerated")
        for i, opt in enumerate(report["optima"], start=1):
            lines.append(f"  #{i}: {opt}")
    if report.get("criterion_value") is not None:
        lines.append(f"criterion value: {report['criterion_value']:.6g}")
    held = [k for k, v in report["conditions"].items() if v]
    lines.append("conditions detected: " + (", ".join(held) if held else "none"))
    for w in report["warnings"]:
        lines.append(f"warning: {w}")
    return "\n".join(lines)


def cmd_estimate(path, K: int, pool: bool = False) -> dict:
    data = load_pilot(path, K)
    variances = pilot_variances(data, K, pool=pool)
    tau = estimate_effects(data.treatments, data.outcomes, K)
    return {
        "command": "estimate",
        "K": K,
        "treatments": [treatment_label(j, K) for j in range(1, 2**K + 1)],
        "variances": {
            name: {
                "pooled": _floats(entry["pooled"]),
                **({"replicates": {r: _floats(v) for r, v in entry["replicates"].items()}} if "replicates" in entry else {}),
            }
            for name, entry in variances.items()
        },
        "effects": dict(zip(effect_names(K), _floats(tau))),
    }


def render_estimate(report: dict) -> str:
    lines = ["sample variances"]
    head = ["group"] + report["treatments"]
    for name, entry in report["variances"].items():
        prefix = "" if name == "all" else f"{name}: "
        rows = [[f"{prefix}replicate {r}"] + [f"{v:.4f}" for v in vals] for r, vals in entry.get("replicates", {}).items()]
        rows.append([f"{prefix}{'pooled' if 'replicates' in entry else 'sample'}"] + [f"{v:.4f}" for v in entry["pooled"]])
        lines.append(_table(head, rows))
    lines.append("effect estimates (element 0 is twice the grand mean)")
    lines.append(_table(["effect", "estimate"], [[k, f"{v:.6f}"] for k, v in report["effects"].items()]))
    return "\n".join(lines)


def cmd_simulate(problem: Problem, po_path, reps: int, seed: int) -> dict:
    po = load_potential_outcomes(po_path)
    if po.J != problem.J:
        raise SpecError(f"potential-outcome table has {po.J} columns, design needs {problem.J}")
    if problem.is_block and po.blocks is None:
        raise SpecError("blocked design needs a block column in the potential-outcome table")
    if problem.is_block and not np.array_equal(po.block_sizes, problem.variances.block_sizes):
        raise SpecError("block sizes in the table differ from the problem file")
    if not problem.is_block and po.blocks is not None:
        raise SpecError("potential-outcome table has blocks but the design is completely randomized")
    if not problem.is_block and problem.N is not None and problem.N != po.N:
        raise SpecError(f"problem says N={problem.N}, table has {po.N} units")
    if problem.allocation is not None:
        alloc = problem.allocation
    else:
        vs = finite_population_variances(po)
        if vs.is_block:
            alloc = greedy_block(vs, problem.criterion, lower=_default(problem.lower, 2), upper=problem.upper).counts
        else:
            alloc = greedy_crd(vs, DesignSpec(po.K, po.N, problem.criterion, problem.lower, problem.upper)).counts
    rep = monte_carlo(po, alloc, reps, seed)
    additive = check_conditions(po, tol=problem.tolerance).strictly_additive
    min_eig = rep.heterogeneity_min_eigenvalue()
    return {
        "command": "simulate",
        "seed": seed,
        "replicates": reps,
        "rng": RNG_ALGORITHM,
        "allocation": _ints(alloc),
        "effects": effect_names(po.K),
        "tau": _floats(rep.tau),
        "empirical_mean": _floats(rep.empirical_mean),
        "standard_errors": _floats(rep.standard_errors),
        "unbiased_4se": [bool(x) for x in rep.unbiased(4.0)],
        "exact_first_term": _floats(rep.exact_first_term),
        "heterogeneity_term": _floats(rep.heterogeneity_term),
        "exact_cov": _floats(rep.exact_cov),
        "empirical_cov": _floats(rep.empirical_cov),
        "strictly_additive": bool(additive),
        "heterogeneity_min_eigenvalue": min_eig,
        "heterogeneity_psd": bool(min_eig >= -1e-9),
    }


def _matrix(name, m, labels):
    return name + "\n" + _table([""] + labels, [[lab] + [f"{round(v, 6) + 0.0: .6f}" for v in row] for lab, row in zip(labels, m)])


def render_simulate(report: dict) -> str:
    labels = report["effects"]
    lines = [
        f"seed {report['seed']}, {report['replicates']} replicates, rng {report['rng']}",
        f"allocation {report['allocation']}",
        _table(
            ["effect", "tau", "mean(est)", "SE", "within 4 SE"],
            [
                [lab, f"{t:.6f}", f"{m:.6f}", f"{s:.6f}", "pass" if ok else "FAIL"]
                for lab, t, m, s, ok in zip(
                    labels, report["tau"], report["empirical_mean"], report["standard_errors"], report["unbiased_4se"]
                )
            ],
        ),
        _matrix("exact covariance", report["exact_cov"], labels),
        _matrix("empirical covariance", report["empirical_cov"], labels),
    ]
    if report["strictly_additive"]:
        lines.append("heterogeneity term: 0 (strictly additive detected)")
    else:
        verdict = "pass" if report["heterogeneity_psd"] else "FAIL"
        lines.append(
            f"heterogeneity term: PSD check {verdict} (min eigenvalue {report['heterogeneity_min_eigenvalue']:.3e})"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alloc", description="Optimal allocation for 2^K factorial experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("crd", "completely randomized design"),
        ("block", "randomized block design"),
        ("cost", "budget-constrained completely randomized design"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--spec", required=True, help="problem file (YAML or JSON)")
        p.add_argument("--mode", choices=("exact", "greedy", "oracle"), default="exact")
        p.add_argument("--output", choices=("text", "json"), default="text")
        p.add_argument("--tol", type=float, default=None, help="relative tolerance for condition checks")
        p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="oracle state-space cap")
    p = sub.add_parser("estimate", help="variances and effect estimates from pilot data")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--pool", action="store_true", help="pool variances across replicates")
    p.add_argument("--output", choices=("text", "json"), default="text")
    p = sub.add_parser("simulate", help="Monte Carlo check of a design against a potential-outcome table")
    p.add_argument("--spec", required=True)
    p.add_argument("--po", required=True)
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", choices=("text", "json"), default="text")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("crd", "block", "cost"):
            report = cmd_allocate(load_problem(args.spec), args.command, args.mode, args.tol, args.cap)
            text = render_allocation
        elif args.command == "estimate":
            report = cmd_estimate(args.data, args.k, args.pool)
            text = render_estimate
        else:
            if args.reps < 1:
                raise SpecError("--reps must be >= 1")
            report = cmd_simulate(load_problem(args.spec), args.po, args.reps, args.seed)
            text = render_simulate
    except ConditionNotMet as exc:
        print(f"error: {exc}\nhint: rerun with --mode greedy", file=sys.stderr)
        return EXIT_CONDITION
    except OracleCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except InfeasibleError as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SpecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.output == "json":
        print(json.dumps(report, indent=2))
    else:
        print(text(report))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
