"""``mgnet`` command line: generate / project / train / cv / grid / ablate / export-embeddings."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import data_io
from .errors import ConfigError, DataError, MGNetError
from .evaluation import ablation, accuracy, auc, cross_validate, fold_seed, fold_split, grid_search, make_fold_plan
from .model import ModelParams, forward, predict_proba
from .pipeline import PipelineConfig, fit_split, parse_ablation, select_modalities
from .projection import DEFAULT_TAU, solve_projections
from .tensor import mode_n_product
from .training import BATCH_GRID, DOUT_GRID, K_GRID, LOSS_KINDS, TrainConfig


PRESETS = {
    # one modality at 5x the noise std, the other pure noise
    "separable": dict(signal=(5.0, 0.0)),
    "null": dict(signal=(0.0, 0.0)),
    "multimodal": dict(signal=(1.0, 5.0)),
}


class UsageError(MGNetError):
    exit_code = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    data = _Parser(add_help=False)
    data.add_argument("--manifest", type=Path, required=True)

    model = _Parser(add_help=False)
    d = TrainConfig()
    model.add_argument("--k", type=int, default=PipelineConfig.k, help="nearest neighbours")
    model.add_argument("--dout", type=int, default=d.d_out)
    model.add_argument("--batch", type=int, default=d.batch_size)
    model.add_argument("--lr", type=float, default=d.lr)
    model.add_argument("--epochs", type=int, default=d.epochs)
    model.add_argument("--dropout", type=float, default=d.dropout_rate)
    model.add_argument("--layers", type=int, default=d.n_layers)
    model.add_argument("--loss", choices=LOSS_KINDS, default=d.loss_kind)
    model.add_argument("--smooth-l1-weight", type=float, default=d.smooth_l1_weight)
    model.add_argument("--tau", type=float, default=DEFAULT_TAU, help="energy threshold for U1 truncation")
    model.add_argument("--sigma", type=float, default=None, help="kernel width (default: median distance)")
    model.add_argument("--folds", type=int, default=10)
    model.add_argument("--jobs", type=int, default=1)
    model.add_argument("--transductive", action="store_true",
                       help="fit projection and graph on all subjects, test folds included")
    model.add_argument("--ablate", default=None,
                       help="avg_pooling | no_u1 | single_modality:<m>")

    p = _Parser(prog="mgnet", description=__doc__)
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic cohort")
    g.add_argument("--preset", choices=sorted(PRESETS), default="separable")
    g.add_argument("--nodes", type=int, default=32)
    g.add_argument("--per-class", type=int, default=50)
    g.add_argument("--signal", type=_floats, default=None, help="per-modality signal strengths")
    g.add_argument("--noise", type=float, default=1.0)
    g.add_argument("--p-within", type=float, default=0.6)
    g.add_argument("--p-between", type=_floats, default=(0.1, 0.3))

    pr = sub.add_parser("project", parents=[common, data], help="write U1, U2 and singular values")
    pr.add_argument("--tau", type=float, default=DEFAULT_TAU)

    sub.add_parser("train", parents=[common, data, model], help="train on one split (fold 0)")
    sub.add_parser("cv", parents=[common, data, model], help="cross-validate")
    gr = sub.add_parser("grid", parents=[common, data, model], help="grid search over K, batch, D_out")
    gr.add_argument("--k-grid", type=_ints, default=K_GRID)
    gr.add_argument("--batch-grid", type=_ints, default=BATCH_GRID)
    gr.add_argument("--dout-grid", type=_ints, default=DOUT_GRID)
    sub.add_parser("ablate", parents=[common, data, model], help="cross-validate an ablation")

    e = sub.add_parser("export-embeddings", parents=[common, data],
                       help="write pooled embeddings per subject from a checkpoint")
    e.add_argument("--checkpoint", type=Path, required=True)
    return p


def pipeline_config(args) -> PipelineConfig:
    train = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch, dropout_rate=args.dropout,
                        n_layers=args.layers, d_out=args.dout, loss_kind=args.loss,
                        smooth_l1_weight=args.smooth_l1_weight, seed=args.seed)
    if args.folds < 3:
        raise ConfigError("--folds must be at least 3")
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return PipelineConfig(train=train, k=args.k, tau=args.tau, sigma=args.sigma,
                          transductive=args.transductive, ablation=args.ablate)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _echo(args, argv, extra=None) -> None:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    cfg["argv"] = list(argv)
    if extra:
        cfg.update(extra)
    _write_json(args.out / "config.json", cfg)


def cmd_generate(args):
    preset = dict(PRESETS[args.preset])
    if args.signal is not None:
        preset["signal"] = args.signal
    spec = data_io.SyntheticSpec(n_nodes=args.nodes, per_class=args.per_class, noise=args.noise,
                                 p_within=args.p_within, p_between=args.p_between, seed=args.seed,
                                 name=f"synthetic-{args.preset}", **preset)
    cohort = data_io.generate_synthetic(spec)
    path = data_io.save_cohort(args.out, cohort)
    _write_json(args.out / "synthetic_spec.json", spec.to_dict())
    return f"wrote {cohort.x.shape[3]} subjects to {path}"


def cmd_project(args):
    cohort = data_io.load_cohort(args.manifest)
    p = solve_projections(cohort.x, args.tau)
    data_io.save_matrix(args.out / "u1.csv", p.u1)
    data_io.save_matrix(args.out / "u2.csv", p.u2)
    data_io.save_matrix(args.out / "singular_values.csv", p.singular_values[None, :])
    _write_json(args.out / "projection.json", {"trunc_rank": p.trunc_rank, "energy_threshold": p.energy_threshold,
                                               "n_nodes": p.n_nodes})
    return f"trunc_rank={p.trunc_rank} of {p.n_nodes}"


def cmd_train(args):
    cohort = data_io.load_cohort(args.manifest)
    cfg = pipeline_config(args)
    plan = make_fold_plan(cohort.labels, args.folds, seed=(args.seed, 0))
    tr, va, te = fold_split(plan, 0)
    prep, result = fit_split(cohort.x, cohort.labels, tr, va, cfg, fold_seed(args.seed, 0))
    with open(args.out / "train_log.jsonl", "w", encoding="utf-8") as fh:
        for rec in result.log:
            fh.write(json.dumps(vars(rec), sort_keys=True) + "\n")
    matrices = dict(result.params.named())
    matrices["a_hat"] = prep.graph.normalized
    if prep.projection is not None:
        matrices["u1"] = prep.projection.u1
    ckpt_cfg = {"pipeline": cfg.to_dict(), "n_nodes": cohort.x.shape[0], "modalities": cohort.modalities,
                "best_epoch": result.best_epoch, "split": {"train": tr.tolist(), "val": va.tolist(),
                                                          "test": te.tolist()}}
    data_io.save_checkpoint(args.out / "checkpoint.json", matrices, ckpt_cfg)

    probs = predict_proba(prep.h0[..., te], prep.graph.normalized, result.params)
    metrics = {"best_epoch": result.best_epoch, "test_accuracy": accuracy(probs, cohort.labels[te])}
    if len(set(cohort.labels[te].tolist())) == 2:
        metrics["test_auc"] = auc(probs[:, 1], cohort.labels[te])
    _write_json(args.out / "metrics.json", metrics)
    return f"best epoch {result.best_epoch}, test accuracy {metrics['test_accuracy']:.2f}"


def _write_report(out: Path, stem: str, rep) -> str:
    _write_json(out / f"{stem}.json", rep.to_dict())
    (out / f"{stem}.csv").write_text(rep.to_csv(), encoding="utf-8")
    acc, auc_ = rep.accuracy, rep.auc
    return f"accuracy {acc[0]:.2f} ± {acc[1]:.2f}, AUC {auc_[0]:.2f} ± {auc_[1]:.2f}"


def cmd_cv(args):
    cohort = data_io.load_cohort(args.manifest)
    rep = cross_validate(cohort.x, cohort.labels, pipeline_config(args), args.folds, args.seed, args.jobs)
    return _write_report(args.out, "report", rep)


def cmd_grid(args):
    cohort = data_io.load_cohort(args.manifest)
    res = grid_search(cohort.x, cohort.labels, pipeline_config(args), args.k_grid, args.batch_grid,
                      args.dout_grid, args.folds, args.seed, args.jobs)
    (args.out / "grid.csv").write_text(res.to_csv(), encoding="utf-8")
    _write_json(args.out / "best.json", {"row": vars(res.best), "config": res.best_config.to_dict()})
    b = res.best
    return f"best K={b.k} batch={b.batch_size} D_out={b.d_out} (val accuracy {b.val_accuracy:.2f})"


def cmd_ablate(args):
    if args.ablate is None:
        raise ConfigError("ablate needs --ablate avg_pooling | no_u1 | single_modality:<m>")
    cohort = data_io.load_cohort(args.manifest)
    cfg = pipeline_config(args)
    rep = ablation(cohort.x, cohort.labels, replace(cfg, ablation=None), args.ablate,
                   args.folds, args.seed, args.jobs)
    return _write_report(args.out, "ablation_report", rep)


def cmd_export(args):
    cohort = data_io.load_cohort(args.manifest)
    ckpt = data_io.load_checkpoint(args.checkpoint)
    cfg = PipelineConfig.from_dict(ckpt.config["pipeline"])
    n = cohort.x.shape[0]
    if ckpt.config.get("n_nodes") != n:
        raise DataError(f"checkpoint was trained on {ckpt.config.get('n_nodes')} nodes, cohort has {n}")
    x = select_modalities(cohort.x, cfg)
    names = {k: v for k, v in ckpt.matrices.items() if k not in ("a_hat", "u1")}
    params = ModelParams.from_named(names, cfg.train.dropout_rate)
    if params.n_modalities != x.shape[2]:
        raise DataError(f"checkpoint expects {params.n_modalities} modalities, cohort provides {x.shape[2]}")
    a_hat = ckpt.matrices["a_hat"]
    if "u1" in ckpt.matrices:
        h0 = mode_n_product(x, ckpt.matrices["u1"].T, 0)
    else:
        h0 = x
    trace = forward(h0, a_hat, params, mode="eval")
    emb_dir = args.out / "embeddings"
    emb_dir.mkdir(exist_ok=True)
    rows = []
    for s, sid in enumerate(cohort.subject_ids):
        data_io.save_matrix(emb_dir / f"{sid}.csv", trace.pooled[:, :, s])
        rows.append({"id": sid, "label": int(cohort.labels[s]), "p1": float(trace.probs[s, 1]),
                     "file": f"embeddings/{sid}.csv"})
    _write_json(args.out / "embeddings.json", rows)
    return f"wrote {len(rows)} embeddings to {emb_dir}"


COMMANDS = {"generate": cmd_generate, "project": cmd_project, "train": cmd_train, "cv": cmd_cv,
            "grid": cmd_grid, "ablate": cmd_ablate, "export-embeddings": cmd_export}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "ablate", None) is not None:
            parse_ablation(args.ablate)
        args.out.mkdir(parents=True, exist_ok=True)
        _echo(args, argv)
        msg = COMMANDS[args.command](args)
    except MGNetError as e:
        print(f"mgnet: error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"mgnet: error: {e}", file=sys.stderr)
        return DataError.exit_code
    print(msg)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
