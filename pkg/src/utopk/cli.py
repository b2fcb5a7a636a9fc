"""Command-line surface: inference, evaluation, oracle fixtures, weight
computation, label-tree search, and synthetic data generation.

Exit codes: 0 success, 1 I/O or file-format problems, 2 usage/validation
errors, 3 capability limits (size guards, unsupported families).

All subcommands are deterministic functions of their flags: re-running with
identical flags reproduces byte-identical output files.  Wall-clock time is
printed to stdout only, never written into outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data import (
    CapabilityError,
    FormatError,
    KIND_BINARY,
    KIND_PROBABILITIES,
    load_sparse_matrix,
    load_vector,
    matrix_to_predictions,
    predictions_to_matrix,
    save_sparse_matrix,
    save_vector,
)
from .evaluation import evaluate
from .inference import (
    InferenceConfig,
    bca_coverage_infer,
    bca_infer,
    greedy_coverage_infer,
    greedy_infer,
    top_k_infer,
    weighted_topk_infer,
)
from .labeltree import astar_top_k, load_label_tree, load_node_scores, weighted_gain
from .metrics import (
    MIXED,
    log_scheme,
    mixed,
    parse_metric,
    power_law_scheme,
    propensity_scheme,
    weight_compute,
)
from .oracle import brute_force_etu, brute_force_semi_etu
from .synth import SyntheticSpec, generate_synthetic

STRATEGIES = ("topk", "weighted-topk", "ps-topk", "power-topk", "log-topk",
              "bca", "bca-cov", "greedy", "greedy-cov")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="utopk",
        description="Exactly-k label prediction optimizing confusion-matrix "
                    "utilities from marginal label probabilities.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="run an inference strategy")
    p.add_argument("--strategy", required=True, choices=STRATEGIES)
    p.add_argument("--probs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--metric", help="metric string for bca/greedy")
    p.add_argument("--k-prime", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=("random", "topk"), default="random")
    p.add_argument("--max-passes", type=int, default=100)
    p.add_argument("--weights", help="w11 weight file for weighted-topk")
    p.add_argument("--weights01", help="optional additive weight file")
    p.add_argument("--priors", help="label prior file for ps/power/log-topk")
    p.add_argument("--n-train", type=int, help="training-set size for propensity weights")
    p.add_argument("--prop-a", type=float, default=0.55)
    p.add_argument("--prop-b", type=float, default=1.5)
    p.add_argument("--power-beta", type=float, default=0.5)
    p.add_argument("--alpha-sweep", help="start:stop:step over the mixing weight")
    p.add_argument("--labels", help="label file for --alpha-sweep evaluation")
    p.add_argument("--threads", type=int, default=0)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="compute the at-k metric report")
    p.add_argument("--preds", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--ps-weights")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="exhaustive optimum for small instances")
    p.add_argument("--metric", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--probs", required=True)
    p.add_argument("--objective", choices=("semi", "exact"), default="semi")
    p.add_argument("--out-preds")
    p.add_argument("--out-value")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("weights", help="compute per-label weight files")
    p.add_argument("--scheme", required=True,
                   help="propensity:<a>:<b> | power:<beta> | log")
    p.add_argument("--priors", required=True)
    p.add_argument("--n-train", type=int)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("plt", help="label-tree top-k search per instance")
    p.add_argument("--tree", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--weights", help="per-label gain weights (default uniform)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plt)

    p = sub.add_parser("synth", help="generate a synthetic power-law dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--power", type=float, default=1.5)
    p.add_argument("--avg-labels", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-probs", default="probs.txt")
    p.add_argument("--out-labels", default="labels.txt")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CapabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _config(args) -> InferenceConfig:
    return InferenceConfig(k=args.k, k_prime=args.k_prime, epsilon=args.epsilon,
                           seed=args.seed, init=args.init,
                           max_passes=args.max_passes)


def _resolve_threads(value: int) -> int:
    if value == 0:
        return os.cpu_count() or 1
    if value < 1:
        raise ValueError("--threads must be >= 1")
    return value


def cmd_infer(args) -> int:
    _resolve_threads(args.threads)
    probs = load_sparse_matrix(args.probs, kind=KIND_PROBABILITIES)
    cfg = _config(args)
    if args.alpha_sweep:
        return _run_alpha_sweep(args, probs, cfg)
    report = _run_strategy(args, probs, cfg)
    _write_report(args.out, probs.n_cols, report)
    print(f"passes={report.passes} wall_time={report.wall_time:.3f}s")
    return 0


def _run_strategy(args, probs, cfg, metric_override=None):
    strategy = args.strategy
    m = probs.n_cols
    if strategy == "topk":
        return top_k_infer(probs, cfg)
    if strategy == "weighted-topk":
        if not args.weights:
            raise ValueError("weighted-topk requires --weights")
        w11 = load_vector(args.weights)
        w01 = load_vector(args.weights01) if args.weights01 else None
        return weighted_topk_infer(probs, w11, w01, cfg)
    if strategy in ("ps-topk", "power-topk", "log-topk"):
        if not args.priors:
            raise ValueError(f"{strategy} requires --priors")
        priors = load_vector(args.priors)
        if priors.size != m:
            raise ValueError("prior vector length must equal the label count")
        if strategy == "ps-topk":
            if args.n_train is None:
                raise ValueError("ps-topk requires --n-train")
            scheme = propensity_scheme(priors, args.n_train, a=args.prop_a,
                                       b=args.prop_b)
        elif strategy == "power-topk":
            scheme = power_law_scheme(priors, args.power_beta, n_train=args.n_train)
        else:
            scheme = log_scheme(priors, n_train=args.n_train)
        return weighted_topk_infer(probs, weight_compute(scheme, cfg.k), None, cfg)
    if strategy == "bca-cov":
        return bca_coverage_infer(probs, cfg)
    if strategy == "greedy-cov":
        return greedy_coverage_infer(probs, cfg)
    metric = metric_override
    if metric is None:
        if not args.metric:
            raise ValueError(f"{strategy} requires --metric")
        metric = parse_metric(args.metric, cfg.k)
    if strategy == "bca":
        return bca_infer(probs, metric, cfg)
    if strategy == "greedy":
        return greedy_infer(probs, metric, cfg)
    raise ValueError(f"unknown strategy: {strategy!r}")


def _write_report(out_path, n_cols, report) -> None:
    save_sparse_matrix(predictions_to_matrix(report.predictions, n_cols), out_path)
    sidecar = {
        "passes": report.passes,
        "objective_trace": ["%.12g" % v for v in report.objective_trace],
    }
    with open(out_path + ".report.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=0, sort_keys=True)
        fh.write("\n")


def _run_alpha_sweep(args, probs, cfg) -> int:
    if args.strategy not in ("bca", "greedy"):
        raise ValueError("--alpha-sweep requires the bca or greedy strategy")
    if not args.metric:
        raise ValueError("--alpha-sweep requires a mixed metric template")
    template = parse_metric(args.metric, cfg.k)
    if template.family != MIXED:
        raise ValueError("--alpha-sweep requires --metric mixed:<alpha>:<A>:<B>")
    if not args.labels:
        raise ValueError("--alpha-sweep requires --labels for the per-alpha report")
    labels = load_sparse_matrix(args.labels, kind=KIND_BINARY)
    alphas = _parse_sweep(args.alpha_sweep)
    header = None
    rows = []
    for alpha in alphas:
        metric = mixed(alpha, template.part_a, template.part_b)
        report = _run_strategy(args, probs, cfg, metric_override=metric)
        out_path = f"{args.out}.alpha{alpha:.4g}"
        _write_report(out_path, probs.n_cols, report)
        ev = evaluate(report.predictions, labels, cfg.k)
        stats = ev.as_dict()
        if header is None:
            header = ["alpha"] + list(stats)
        rows.append([f"{alpha:.4g}"] + ["%.9g" % stats[key] for key in header[1:]])
        print(f"alpha={alpha:.4g} passes={report.passes}")
    with open(args.out + ".sweep.tsv", "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(row) + "\n")
    return 0


def _parse_sweep(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("--alpha-sweep must be start:stop:step")
    try:
        start, stop, step = (float(v) for v in parts)
    except ValueError:
        raise ValueError(f"bad --alpha-sweep value: {text!r}") from None
    if step <= 0:
        raise ValueError("--alpha-sweep step must be > 0")
    out = []
    value = start
    while value <= stop + 1e-12:
        out.append(round(value, 10))
        value += step
    if not out:
        raise ValueError("--alpha-sweep produced no values")
    return out


def cmd_eval(args) -> int:
    labels = load_sparse_matrix(args.labels, kind=KIND_BINARY)
    pred_mat = load_sparse_matrix(args.preds, kind=KIND_BINARY)
    preds = matrix_to_predictions(pred_mat, args.k)
    ps_weights = load_vector(args.ps_weights) if args.ps_weights else None
    report = evaluate(preds, labels, args.k, ps_weights=ps_weights)
    print(report.as_json() if args.json else report.as_lines())
    return 0


def cmd_oracle(args) -> int:
    probs = load_sparse_matrix(args.probs, kind=KIND_PROBABILITIES)
    metric = parse_metric(args.metric, args.k)
    if args.objective == "exact":
        result = brute_force_etu(probs, metric, args.k)
    else:
        result = brute_force_semi_etu(probs, metric, args.k)
    out_preds = args.out_preds or args.probs + ".oracle-preds.txt"
    out_value = args.out_value or args.probs + ".oracle-value.txt"
    save_sparse_matrix(predictions_to_matrix(result.best_preds, probs.n_cols), out_preds)
    with open(out_value, "w", encoding="utf-8") as fh:
        fh.write("%.9g\n" % result.best_value)
    print(f"best_value={result.best_value:.9g} "
          f"candidates={result.candidates_evaluated}")
    return 0


def cmd_weights(args) -> int:
    priors = load_vector(args.priors)
    parts = args.scheme.split(":")
    kind = parts[0]
    if kind == "propensity":
        if len(parts) != 3:
            raise ValueError("propensity scheme is propensity:<a>:<b>")
        if args.n_train is None:
            raise ValueError("propensity weights require --n-train")
        scheme = propensity_scheme(priors, args.n_train,
                                   a=float(parts[1]), b=float(parts[2]))
    elif kind == "power":
        if len(parts) != 2:
            raise ValueError("power scheme is power:<beta>")
        scheme = power_law_scheme(priors, float(parts[1]), n_train=args.n_train)
    elif kind == "log":
        if len(parts) != 1:
            raise ValueError("log scheme takes no parameters")
        scheme = log_scheme(priors, n_train=args.n_train)
    else:
        raise ValueError(f"unknown weight scheme: {kind!r}")
    save_vector(weight_compute(scheme, args.k), args.out)
    return 0


def cmd_plt(args) -> int:
    tree = load_label_tree(args.tree)
    score_rows = load_node_scores(args.scores, tree.n_nodes)
    if args.weights:
        w = load_vector(args.weights)
        if w.size != tree.n_labels:
            raise ValueError("gain weight length must equal the label count")
    else:
        w = np.ones(tree.n_labels)
    gain = weighted_gain(w)
    preds = []
    total_expansions = 0
    for scores in score_rows:
        row, expansions = astar_top_k(tree, scores, gain, args.k)
        preds.append(row)
        total_expansions += expansions
    save_sparse_matrix(predictions_to_matrix(preds, tree.n_labels), args.out)
    print(f"instances={len(preds)} expansions={total_expansions}")
    return 0


def cmd_synth(args) -> int:
    spec = SyntheticSpec(n=args.n, m=args.m, power_exponent=args.power,
                         avg_labels_per_instance=args.avg_labels, seed=args.seed)
    probs, labels = generate_synthetic(spec)
    save_sparse_matrix(probs, args.out_probs)
    save_sparse_matrix(labels, args.out_labels)
    print(f"wrote {args.out_probs} and {args.out_labels}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
