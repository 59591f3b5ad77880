"""Command-line interface: ``rankmedian <command> ...``.

Exit codes: 0 success, 2 usage or parse error, 3 data or schema error,
4 scale cap exceeded. ``RANKMEDIAN_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .consensus import RankingSample, gamma_ustat, pairwise_matrix, pseudo_median
from .data import read_csv, read_rankings, write_csv
from .ensemble import fit_bagged
from .errors import (
    BudgetExceeded,
    InvalidInput,
    NotTransitiveError,
    OracleScaleExceeded,
    RankMedianError,
    SchemaError,
)
from .evaluation import (
    CONVERGENCE_COLUMNS,
    TABLE1_COLUMNS,
    consensus_convergence,
    empirical_risk,
    evaluate,
    predictions,
    rmr_convergence,
    run_table1,
)
from .knn import KnnRanker, Metric
from .mallows import SETTINGS, SyntheticScenario, generate_scenario, parse_phi
from .models import load_model
from .perm import Permutation
from .tree import GrowConfig, grow

log = logging.getLogger("rankmedian")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SCALE = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidInput(message)


def _emit(obj, out: str | None = None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _int_list(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v]


def _scenario(args) -> SyntheticScenario:
    spec = args.scenario
    if spec and Path(spec).is_file():
        s = SyntheticScenario.load(spec)
        if args.seed is not None and args.seed != s.seed:
            log.info("--seed %d overrides scenario seed %d for data draws", args.seed, s.seed)
        return s
    seed = 0 if args.seed is None else args.seed
    return SyntheticScenario.preset(spec or "1", args.n_items, parse_phi(args.phi), seed, args.cells)


# --- commands ----------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.N < 1:
        raise InvalidInput(f"N must be >= 1, got {args.N}")
    scenario = _scenario(args)
    seed = scenario.seed if args.seed is None else args.seed
    data = generate_scenario(scenario, args.N, seed=seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, out)
    truth = {**scenario.to_json(), "data_seed": seed, "N": args.N, "cell_of_row": [int(c) for c in data.groups]}
    truth_path = out.with_suffix(".truth.json")
    truth_path.write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {data.size} records to {out} and ground truth to {truth_path}")
    return EXIT_OK


def cmd_fit(args) -> int:
    data = read_csv(args.dataset)
    method = args.method
    summary: dict = {"method": method, "records": data.size, "n": data.n}
    if method == "knn":
        model = KnnRanker(args.k, Metric(standardize=args.standardize, mixed=not data.schema.numeric_only)).fit(data)
        summary["k"] = args.k
    elif method == "crit":
        config = GrowConfig(args.max_depth, args.min_leaf or max(1, data.size // 10), args.max_features)
        model = grow(data, config, seed=args.seed)
        if args.lam is not None:
            model = model.prune(args.lam)
        summary["leaves"] = model.n_leaves
        summary["depth"] = model.depth
        summary["dispersion"] = model.dispersion()
        summary["variable_importance"] = dict(
            zip([f.name for f in data.schema.features], map(float, model.variable_importance()))
        )
    elif method == "bagged":
        config = GrowConfig(args.max_depth, args.min_leaf or max(1, data.size // 10), args.max_features)
        seed = 0 if args.seed is None else args.seed
        model = fit_bagged(data, args.bags, config, seed=seed, fraction=args.fraction, threads=args.threads)
        summary["B"] = model.B
    else:  # argparse restricts choices
        raise InvalidInput(f"unknown method {method!r}")
    summary["training_risk"] = empirical_risk(model, data)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        model.save(args.out)
        summary["model"] = str(args.out)
    _emit(summary)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    data = read_csv(args.dataset, schema=model.schema)
    _emit(evaluate(model, data), args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = read_csv(args.dataset, schema=model.schema)
    pred = predictions(model, data.X)
    lines = ["ranking"] + [f'"{Permutation(tuple(int(v) for v in row))}"' for row in pred]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_consensus(args) -> int:
    sample = RankingSample(read_rankings(args.path))
    res = pseudo_median(sample)
    m = pairwise_matrix(sample)
    out = {
        "median": str(res.median),
        "ordering": res.median.ordering_str(),
        "method": res.method,
        "sst": res.sst,
        "cost": res.cost,
        "dispersion": gamma_ustat(sample) if sample.size > 1 else 0.0,
        "noise_margin": m.noise_margin(),
        "rankings": sample.size,
    }
    _emit(out, args.out)
    return EXIT_OK


def cmd_table1(args) -> int:
    from .plotting import plot_table1

    settings = args.settings.split(",") if args.settings else list(SETTINGS)
    phis = [parse_phi(p) for p in args.phis.split(",")]
    report = run_table1(
        settings,
        _int_list(args.ns),
        phis,
        args.methods.split(","),
        trials=args.trials,
        seed=args.seed,
        N=args.N,
        threads=args.threads,
        k=args.k,
        max_depth=args.max_depth,
        stratify=not args.plain_split,
        include_published=args.published,
    )
    paths = report.write(args.out, "table1", TABLE1_COLUMNS)
    paths["png"] = plot_table1(report.records, Path(args.out) / "table1.png")
    for r in report.records:
        print(
            f"{r['setting']:<24} n={r['n']} phi={r['phi']:<4} {r['method']:<5} "
            f"risk={r['mean_risk']:.4f} (sd {r['std_risk']:.4f}) floor={r['oracle_risk']:.4f}"
            + (f" published={r['published_value']}" if r["published_value"] is not None else "")
        )
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


def cmd_convergence(args) -> int:
    from .plotting import plot_convergence

    grid = _int_list(args.grid)
    phi = parse_phi(args.phi)
    if args.study == "consensus":
        if phi is None:
            raise InvalidInput("the consensus study needs a finite phi")
        report = consensus_convergence(args.n_items, phi, grid, args.trials, seed=args.seed)
    else:
        report = rmr_convergence(
            args.scenario or "1", args.n_items, phi, grid, args.method, args.trials, seed=args.seed,
            test_size=args.test_size, threads=args.threads,
        )
    paths = report.write(args.out, "convergence", CONVERGENCE_COLUMNS)
    paths["png"] = plot_convergence(report.records, Path(args.out) / "convergence.png")
    for r in report.records:
        extra = f" recovery={r['recovery_rate']:.3f}" if r["recovery_rate"] is not None else ""
        print(f"N={r['N']:<6} mean={r['mean']:.4f} sd={r['std']:.4f}{extra}")
    print("trend: " + json.dumps(report.metadata["trend"], sort_keys=True))
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


# --- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (all randomness derives from it)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker threads; results do not depend on it")

    parser = _Parser(prog="rankmedian", description="Ranking median regression toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="draw a synthetic dataset")
    p.add_argument("--scenario", help="scenario JSON file or preset setting (1, 2, 3 or its name)")
    p.add_argument("--n-items", type=int, default=3)
    p.add_argument("--phi", default="inf", help="Mallows dispersion; 'inf' for noiseless")
    p.add_argument("--cells", type=int, default=6, choices=(1, 6))
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--out", required=True, help="CSV path; ground truth goes next to it as .truth.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit a ranking predictor")
    p.add_argument("dataset")
    p.add_argument("--method", choices=("knn", "crit", "bagged"), default="crit")
    p.add_argument("--k", type=_positive_int, default=5)
    p.add_argument("--standardize", action="store_true", help="scale numeric features to unit variance (knn)")
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--min-leaf", type=_positive_int, default=None, help="default: N // 10")
    p.add_argument("--max-features", type=_positive_int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="prune with leaf penalty lambda")
    p.add_argument("--bags", type=_positive_int, default=10)
    p.add_argument("--fraction", type=float, default=1.0, help="bootstrap size as a fraction of N")
    p.add_argument("--out", help="model JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="test risk and per-pair misorder rates")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="predict a ranking per dataset row")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("consensus", help="pseudo-median of a set of rankings")
    p.add_argument("path", help="dataset CSV or one ranking per line")
    p.add_argument("--out")
    p.set_defaults(func=cmd_consensus)

    p = sub.add_parser("table1", parents=[common], help="simulation benchmark over settings, n and phi")
    p.add_argument("--settings", default=None, help="comma list; default all three")
    p.add_argument("--ns", default="3,5,8")
    p.add_argument("--phis", default="inf,2,1")
    p.add_argument("--methods", default="knn,crit")
    p.add_argument("--trials", type=_positive_int, default=10)
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--k", type=_positive_int, default=5)
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--plain-split", action="store_true", help="unstratified 70/30 split")
    p.add_argument("--published", action="store_true", help="include published values in the report")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("convergence", parents=[common], help="risk against sample size")
    p.add_argument("--study", choices=("consensus", "rmr"), default="consensus")
    p.add_argument("--scenario", default="1")
    p.add_argument("--method", choices=("knn", "crit"), default="knn")
    p.add_argument("--n-items", type=int, default=3)
    p.add_argument("--phi", default="2")
    p.add_argument("--grid", default="25,50,100,200,400,800")
    p.add_argument("--trials", type=_positive_int, default=50)
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_convergence)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("RANKMEDIAN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        if args.command in ("table1", "convergence") and args.seed is None:
            args.seed = 0
        return args.func(args)
    except (OracleScaleExceeded, BudgetExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCALE
    except (SchemaError, NotTransitiveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidInput, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RankMedianError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
