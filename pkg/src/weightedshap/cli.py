"""Command-line entry point: ``weightedshap <subcommand> [options]``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime errors.
Options resolve as built-in defaults < ``--config`` JSON file < command line.
Synthetic game specs name players 1-based (``unanimity:1,2``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

__all__ = ["main", "parse_game_spec", "UsageError"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


DEFAULTS = {
    "alpha": 1.0,
    "beta": 1.0,
    "seed": 0,
    "out": None,
    "n": None,
    "game": None,
    "data": None,
    "k": 5,
    "method": None,
    "samples": 10_000,
    "paired": False,
    "constant": None,
    "head": "mlp",
    "steps": 2000,
    "lr": 0.001,
    "gamma": 1.0,
    "batch_size": 8,
    "subsets": 32,
    "trace": None,
    "clip_norm": None,
    "instances": 8,
    "flip": 0.2,
    "valuator": "exact",
    "attributions": "exact",
    "n_min": None,
    "n_max": None,
    "all_pairs": False,
}


def parse_game_spec(spec: str, n: int):
    from .games import synthetic_game

    kind, _, arg = spec.partition(":")
    if kind == "additive":
        return synthetic_game("additive", n)
    if kind == "unanimity":
        target = [int(t) - 1 for t in arg.split(",") if t]
        return synthetic_game("unanimity", n, target=target)
    if kind == "majority":
        weights, _, quota = arg.partition("@")
        return synthetic_game("majority", n, weights=[float(w) for w in weights.split(",")], quota=float(quota))
    if kind == "random":
        return synthetic_game("random", n, seed=int(arg or 0))
    if kind == "constant":
        return synthetic_game("constant", n, value=float(arg or 0))
    raise UsageError(f"unknown game spec {spec!r}")


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--alpha", type=float, default=S)
    common.add_argument("--beta", type=float, default=S)
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--config", default=S, help="JSON file of option values")
    common.add_argument("--out", default=S, help="output path (stdout when omitted)")

    parser = _Parser(prog="weightedshap", description="Beta-weighted Shapley valuation tools")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        return p

    def game_args(p):
        p.add_argument("--game", default=S, help="additive | unanimity:1,2 | majority:w1,w2@quota | random:SEED | constant:C")
        p.add_argument("--n", type=int, default=S)
        p.add_argument("--data", default=S, help="dataset CSV (players are the train rows)")
        p.add_argument("--k", type=int, default=S, help="neighbours for the KNN game")

    p = add("exact", "exact values by enumeration")
    game_args(p)
    p.add_argument("--method", choices=["semivalue", "wls", "extended"], default=S)
    p.add_argument("--constant", type=float, default=S)

    p = add("estimate", "sampling estimators")
    game_args(p)
    p.add_argument("--method", choices=["mc", "wls"], default=S)
    p.add_argument("--samples", type=int, default=S)
    p.add_argument("--paired", action="store_true", default=S)
    p.add_argument("--constant", type=float, default=S)

    p = add("train", "train an amortized estimator")
    p.add_argument("--head", choices=["mlp", "attention"], default=S)
    p.add_argument("--data", default=S)
    p.add_argument("--k", type=int, default=S)
    p.add_argument("--steps", type=int, default=S)
    p.add_argument("--lr", type=float, default=S)
    p.add_argument("--gamma", type=float, default=S)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=S)
    p.add_argument("--subsets", type=int, default=S)
    p.add_argument("--trace", default=S, help="loss trace CSV path")
    p.add_argument("--clip-norm", type=float, default=S, help="gradient norm cap (attention head defaults to 1.0)")

    p = add("audit-bound", "check the amortized error bound on random games")
    p.add_argument("--n", type=int, default=S)
    p.add_argument("--instances", type=int, default=S)

    p = add("eval-noisy-labels", "noisy-label detection with a KNN value function")
    p.add_argument("--data", default=S)
    p.add_argument("--flip", type=float, default=S)
    p.add_argument("--valuator", choices=["exact", "mc", "regression", "amortized", "random"], default=S)
    p.add_argument("--k", type=int, default=S)
    p.add_argument("--samples", type=int, default=S)

    p = add("eval-inclusion", "inclusion AUC through a trained surrogate")
    p.add_argument("--data", default=S)
    p.add_argument("--attributions", choices=["exact", "mc", "random"], default=S)
    p.add_argument("--steps", type=int, default=S)
    p.add_argument("--samples", type=int, default=S)

    p = add("weights-report", "normalised weight curves and adjacent ratios (CSV)")
    p.add_argument("--n", type=int, default=S)

    p = add("hessian-report", "structure of E[s s^T] under p(s) (CSV)")
    p.add_argument("--n", type=int, default=S)
    p.add_argument("--n-min", dest="n_min", type=int, default=S)
    p.add_argument("--n-max", dest="n_max", type=int, default=S)
    p.add_argument("--all-pairs", dest="all_pairs", action="store_true", default=S)
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    explicit = vars(args).copy()
    command = explicit.pop("command")
    file_cfg = {}
    if "config" in explicit:
        path = Path(explicit.pop("config"))
        if not path.is_file():
            raise UsageError(f"config file {path} does not exist")
        file_cfg = json.loads(path.read_text())
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
    cfg = {**DEFAULTS, **file_cfg, **explicit}
    cfg["command"] = command
    if not (cfg["alpha"] > 0 and cfg["beta"] > 0):
        raise UsageError("--alpha and --beta must be positive")
    for key in ("data",):
        if cfg.get(key) is not None and not Path(cfg[key]).is_file():
            raise UsageError(f"--{key}: {cfg[key]} does not exist")
    return cfg


def _emit_json(doc: dict, cfg: dict) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_csv(header, rows, cfg: dict) -> None:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    if cfg["out"]:
        Path(cfg["out"]).write_text(buf.getvalue())
        # CSV headers are fixed, so the resolved config goes to a sidecar
        Path(str(cfg["out"]) + ".config.json").write_text(json.dumps(_config_echo(cfg), indent=2) + "\n")
    else:
        sys.stdout.write(buf.getvalue())


def _config_echo(cfg: dict) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if v is not None}


def _game_from_cfg(cfg: dict):
    from .games import knn_value_game, load_dataset_csv

    if cfg["game"] and cfg["data"]:
        raise UsageError("give either --game or --data, not both")
    if cfg["game"]:
        if not cfg["n"]:
            raise UsageError("--game needs --n")
        return parse_game_spec(cfg["game"], cfg["n"])
    if cfg["data"]:
        return knn_value_game(load_dataset_csv(cfg["data"]), K=cfg["k"])
    raise UsageError(f"{cfg['command']} needs --game or --data")


def _document(report, cfg: dict) -> dict:
    from .io import report_to_document

    doc = report_to_document(report)
    doc["config"] = {**doc.get("config", {}), **_config_echo(cfg)}
    return doc


def _cmd_exact(cfg):
    from .exact import exact_constrained_wls, exact_weighted_shapley, extended_generalized_shapley
    from .weights import build_scheme

    game = _game_from_cfg(cfg)
    ws = build_scheme(game.n, cfg["alpha"], cfg["beta"])
    method = cfg["method"] or "semivalue"
    if method == "semivalue":
        att = exact_weighted_shapley(game, ws)
    else:
        C = cfg["constant"]
        if C is None:
            C = exact_weighted_shapley(game, ws).total
        fn = exact_constrained_wls if method == "wls" else extended_generalized_shapley
        att = fn(game, ws, C)
    _emit_json(_document(att, cfg), cfg)


def _cmd_estimate(cfg):
    from .sampling import EstimatorConfig, monte_carlo_semivalue, regression_estimate
    from .weights import build_scheme

    method = cfg["method"] or "mc"
    game = _game_from_cfg(cfg)
    ws = build_scheme(game.n, cfg["alpha"], cfg["beta"])
    ec = EstimatorConfig(cfg["samples"], seed=cfg["seed"], paired_sampling=bool(cfg["paired"]),
                         constraint_constant=cfg["constant"])
    att = monte_carlo_semivalue(game, ws, ec) if method == "mc" else regression_estimate(game, ws, ec)
    _emit_json(_document(att, cfg), cfg)


def _cmd_train(cfg):
    from .amortized import Instance, MLPEstimator, TrainConfig, train, write_loss_trace
    from .evaluation import NoisyLabelConfig, train_attention_valuator
    from .games import load_dataset_csv, masked_feature_game
    from .surrogate import train_surrogate
    from .weights import build_scheme

    if not cfg["data"]:
        raise UsageError("train needs --data")
    data = load_dataset_csv(cfg["data"])
    tc = TrainConfig(steps=cfg["steps"], batch_size=cfg["batch_size"], subsets_per_instance=cfg["subsets"],
                     lr=cfg["lr"], gamma=cfg["gamma"], seed=cfg["seed"], clip_norm=cfg["clip_norm"])
    if cfg["head"] == "attention":
        clip = 1.0 if cfg["clip_norm"] is None else cfg["clip_norm"]
        nl = NoisyLabelConfig(alpha=cfg["alpha"], beta=cfg["beta"], K=cfg["k"], seed=cfg["seed"],
                              train=TrainConfig(**{**tc.__dict__, "gamma": 0.0, "constant_source": "none",
                                                   "clip_norm": clip}))
        est, result = train_attention_valuator(data, nl)
    else:
        X = data.features[data.train_idx]
        targets = np.eye(data.n_classes)[data.labels[data.train_idx]]
        surrogate = train_surrogate(X, targets, rng=cfg["seed"], n_classes=data.n_classes)
        instances = [Instance(x, masked_feature_game(x, int(y), surrogate))
                     for x, y in zip(X, data.labels[data.train_idx])]
        ws = build_scheme(data.n_features, cfg["alpha"], cfg["beta"])
        est = MLPEstimator(data.n_features, data.n_features, rng=cfg["seed"])
        result = train(est, instances, ws, tc)
    if cfg["trace"]:
        write_loss_trace(result, cfg["trace"])
    doc = {"schema_version": 1, **est.to_dict(), "final_loss": result.final_loss, "converged": result.converged,
           "config": _config_echo(cfg)}
    _emit_json(doc, cfg)


def _cmd_audit(cfg):
    from .amortized import Instance, MLPEstimator, audit_bound
    from .games import synthetic_game
    from .weights import build_scheme

    n = cfg["n"] or 8
    rng = np.random.default_rng(cfg["seed"])
    instances = [Instance(rng.normal(size=4), synthetic_game("random", n, seed=cfg["seed"] * 1000 + i))
                 for i in range(cfg["instances"])]
    est = MLPEstimator(4, n, rng=cfg["seed"])
    audit = audit_bound(est, instances, build_scheme(n, cfg["alpha"], cfg["beta"]))
    _emit_json(_document(audit, cfg), cfg)


def _cmd_eval_noisy(cfg):
    from .evaluation import NoisyLabelConfig, eval_noisy_labels
    from .games import load_dataset_csv

    if not cfg["data"]:
        raise UsageError("eval-noisy-labels needs --data")
    nl = NoisyLabelConfig(alpha=cfg["alpha"], beta=cfg["beta"], K=cfg["k"], seed=cfg["seed"], n_samples=cfg["samples"])
    report = eval_noisy_labels(load_dataset_csv(cfg["data"]), cfg["flip"], cfg["valuator"], nl)
    _emit_json(_document(report, cfg), cfg)


def _cmd_eval_inclusion(cfg):
    from .evaluation import eval_inclusion_auc
    from .exact import exact_weighted_shapley
    from .games import load_dataset_csv, masked_feature_game
    from .sampling import EstimatorConfig, monte_carlo_semivalue
    from .surrogate import train_surrogate
    from .weights import build_scheme

    if not cfg["data"]:
        raise UsageError("eval-inclusion needs --data")
    data = load_dataset_csv(cfg["data"])
    X = data.features[data.train_idx]
    targets = np.eye(data.n_classes)[data.labels[data.train_idx]]
    surrogate = train_surrogate(X, targets, steps=cfg["steps"], rng=cfg["seed"], n_classes=data.n_classes)
    Xv, yv = data.features[data.val_idx], data.labels[data.val_idx]
    ws = build_scheme(data.n_features, cfg["alpha"], cfg["beta"])
    rng = np.random.default_rng(cfg["seed"])
    atts = []
    for x, y in zip(Xv, yv):
        if cfg["attributions"] == "random":
            atts.append(rng.random(data.n_features))
            continue
        game = masked_feature_game(x, int(y), surrogate)
        if cfg["attributions"] == "exact":
            atts.append(exact_weighted_shapley(game, ws).values)
        else:
            atts.append(monte_carlo_semivalue(game, ws, EstimatorConfig(cfg["samples"], seed=cfg["seed"])).values)
    report = eval_inclusion_auc(Xv, yv, np.array(atts), surrogate, cfg["alpha"], cfg["beta"], cfg["attributions"])
    _emit_json(_document(report, cfg), cfg)


def _cmd_weights_report(cfg):
    from .weights import build_scheme, lemma_gap_report

    if not cfg["n"]:
        raise UsageError("weights-report needs --n")
    rows = lemma_gap_report(build_scheme(cfg["n"], cfg["alpha"], cfg["beta"]))
    _emit_csv(["k", "w_tilde_prev", "w_tilde", "ratio"],
              [[r["k"], r["w_tilde_prev"], r["w_tilde"], r["ratio"]] for r in rows], cfg)


def _cmd_hessian_report(cfg):
    from .exact import hessian_report
    from .weights import FEASIBLE_SET, build_scheme

    if cfg["n"]:
        ns = [cfg["n"]]
    elif cfg["n_min"] and cfg["n_max"]:
        ns = list(range(cfg["n_min"], cfg["n_max"] + 1))
    else:
        raise UsageError("hessian-report needs --n or --n-min/--n-max")
    pairs = FEASIBLE_SET if cfg["all_pairs"] else [(cfg["alpha"], cfg["beta"])]
    rows = []
    for a, b in pairs:
        for n in ns:
            r = hessian_report(build_scheme(n, a, b))
            rows.append([r.n, float(r.alpha), float(r.beta), r.a_diag, r.b_offdiag, r.lambda_min_numeric,
                         r.lambda_min_paper, r.lambda_min_derived, r.sigma])
    _emit_csv(["n", "alpha", "beta", "a", "b", "lambda_numeric", "lambda_paper", "lambda_derived", "sigma"], rows, cfg)


COMMANDS = {
    "exact": _cmd_exact,
    "estimate": _cmd_estimate,
    "train": _cmd_train,
    "audit-bound": _cmd_audit,
    "eval-noisy-labels": _cmd_eval_noisy,
    "eval-inclusion": _cmd_eval_inclusion,
    "weights-report": _cmd_weights_report,
    "hessian-report": _cmd_hessian_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError(parser.format_usage())
        cfg = _resolve(args)
        handler = COMMANDS[cfg["command"]]
        handler(cfg)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 2
        sys.stderr.write(f"error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
