"""Metrics, stratified cross-validation, grid search and ablation runs."""
from __future__ import annotations

import csv
import io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .model import predict_proba
from .pipeline import PipelineConfig, fit_split, parse_ablation, select_modalities
from .training import BATCH_GRID, DOUT_GRID, K_GRID


def accuracy(probs, labels) -> float:
    """Percent of subjects whose argmax class matches; an exact tie predicts class 0."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2 or probs.shape[0] != labels.shape[0] or labels.size == 0:
        raise ShapeError(f"{labels.size} labels for predictions of shape {probs.shape}")
    pred = np.argmax(probs, axis=1)
    return 100.0 * np.count_nonzero(pred == labels) / labels.size


def auc(scores, labels) -> float:
    """Area under the ROC curve in percent via the Mann-Whitney rank statistic.

    Tied scores receive their average rank, which counts each tied
    positive/negative pair as one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    pos = labels == 1
    n_pos = int(np.count_nonzero(pos))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC is undefined unless both classes are present")

    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    # ranks doubled so that midranks stay integral
    ranks2 = np.empty(scores.size, dtype=np.int64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks2[order[i:j + 1]] = (i + 1) + (j + 1)
        i = j + 1
    u2 = int(ranks2[pos].sum()) - n_pos * (n_pos + 1)
    return 100.0 * (u2 / 2) / (n_pos * n_neg)


def make_fold_plan(labels, n_folds: int = 10, seed=0) -> np.ndarray:
    """Stratified fold index per subject.

    Each class is shuffled and dealt round-robin, continuing from where the
    previous class stopped so fold sizes also stay balanced.
    """
    labels = np.asarray(labels)
    if n_folds < 3:
        raise ConfigError("need at least 3 folds (train, validation and test)")
    rng = np.random.default_rng(seed)
    assign = np.empty(labels.size, dtype=np.intp)
    offset = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < n_folds:
            raise DataError(f"class {c} has {idx.size} subjects, fewer than {n_folds} folds; "
                            f"use --folds {max(3, idx.size)} or fewer")
        idx = rng.permutation(idx)
        assign[idx] = (offset + np.arange(idx.size)) % n_folds
        offset += idx.size
    return assign


def fold_split(plan: np.ndarray, fold: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(train, validation, test) indices: fold ``k`` tests, fold ``k+1`` validates."""
    n_folds = int(plan.max()) + 1
    test = np.flatnonzero(plan == fold)
    val = np.flatnonzero(plan == (fold + 1) % n_folds)
    train = np.flatnonzero((plan != fold) & (plan != (fold + 1) % n_folds))
    return train, val, test


def fold_seed(seed: int, fold: int) -> tuple[int, int, int]:
    return (int(seed), 1, int(fold))


@dataclass
class FoldResult:
    fold: int
    accuracy: float
    auc: float
    val_accuracy: float
    best_epoch: int
    alpha: list[float]
    n_train: int
    n_val: int
    n_test: int


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


@dataclass
class EvalReport:
    folds: list[FoldResult]
    config: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> tuple[float, float]:
        return _mean_std([f.accuracy for f in self.folds])

    @property
    def auc(self) -> tuple[float, float]:
        return _mean_std([f.auc for f in self.folds])

    @property
    def val_accuracy(self) -> tuple[float, float]:
        return _mean_std([f.val_accuracy for f in self.folds])

    def to_dict(self) -> dict:
        acc, auc_ = self.accuracy, self.auc
        return {
            "config": self.config,
            "folds": [asdict(f) for f in self.folds],
            "accuracy_mean": acc[0], "accuracy_std": acc[1],
            "auc_mean": auc_[0], "auc_std": auc_[1],
            "val_accuracy_mean": self.val_accuracy[0],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold", "accuracy", "auc", "val_accuracy", "best_epoch", "alpha"])
        for f in self.folds:
            w.writerow([f.fold, repr(f.accuracy), repr(f.auc), repr(f.val_accuracy), f.best_epoch,
                        " ".join(repr(a) for a in f.alpha)])
        acc, auc_ = self.accuracy, self.auc
        w.writerow(["mean", repr(acc[0]), repr(auc_[0]), repr(self.val_accuracy[0]), "", ""])
        w.writerow(["std", repr(acc[1]), repr(auc_[1]), repr(self.val_accuracy[1]), "", ""])
        return buf.getvalue()


def run_fold(x, labels, plan, fold: int, cfg: PipelineConfig, seed: int) -> FoldResult:
    train_idx, val_idx, test_idx = fold_split(plan, fold)
    prep, result = fit_split(x, labels, train_idx, val_idx, cfg, fold_seed(seed, fold))
    probs = predict_proba(prep.h0[..., test_idx], prep.graph.normalized, result.params)
    y = labels[test_idx]
    best = result.log[result.best_epoch - 1]
    return FoldResult(
        fold=fold,
        accuracy=accuracy(probs, y),
        auc=auc(probs[:, 1], y),
        val_accuracy=best.val_acc,
        best_epoch=result.best_epoch,
        alpha=[float(a) for a in result.params.alpha],
        n_train=int(train_idx.size), n_val=int(val_idx.size), n_test=int(test_idx.size),
    )


def _run_fold_job(args):
    return run_fold(*args)


def cross_validate(x, labels, cfg: PipelineConfig, n_folds: int = 10, seed: int = 0,
                   jobs: int = 1) -> EvalReport:
    """Stratified k-fold CV; fold results are ordered by fold index whatever ``jobs`` is."""
    labels = np.asarray(labels).astype(np.intp)
    x = np.asarray(x, dtype=np.float64)
    if labels.size != x.shape[3]:
        raise ShapeError(f"{labels.size} labels for {x.shape[3]} subjects")
    select_modalities(x[..., :1], cfg)  # validate ablation index before any work
    plan = make_fold_plan(labels, n_folds, seed=(int(seed), 0))
    args = [(x, labels, plan, k, cfg, seed) for k in range(n_folds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(_run_fold_job, args))
    else:
        folds = [_run_fold_job(a) for a in args]
    config = {"pipeline": cfg.to_dict(), "folds": n_folds, "seed": seed}
    return EvalReport(folds=folds, config=config)


@dataclass
class GridRow:
    k: int
    batch_size: int
    d_out: int
    val_accuracy: float
    accuracy: float
    accuracy_std: float
    auc: float
    auc_std: float


@dataclass
class GridResult:
    rows: list[GridRow]
    best: GridRow
    best_config: PipelineConfig

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(GridRow.__dataclass_fields__)
        w.writerow(names)
        for r in self.rows:
            w.writerow([repr(getattr(r, n)) for n in names])
        return buf.getvalue()


def grid_search(x, labels, base: PipelineConfig, k_grid=K_GRID, batch_grid=BATCH_GRID,
                dout_grid=DOUT_GRID, n_folds: int = 10, seed: int = 0, jobs: int = 1) -> GridResult:
    """Exhaustive sweep over K x batch size x D_out, chosen by mean validation accuracy.

    Ties prefer smaller D_out, then smaller K, then smaller batch size.
    """
    if not (len(k_grid) and len(batch_grid) and len(dout_grid)):
        raise ConfigError("every grid needs at least one value")
    rows, configs = [], {}
    for k, b, d in itertools.product(k_grid, batch_grid, dout_grid):
        cfg = replace(base, k=int(k), train=replace(base.train, batch_size=int(b), d_out=int(d)))
        rep = cross_validate(x, labels, cfg, n_folds, seed, jobs)
        row = GridRow(int(k), int(b), int(d), rep.val_accuracy[0], *rep.accuracy, *rep.auc)
        rows.append(row)
        configs[(row.k, row.batch_size, row.d_out)] = cfg
    best = min(rows, key=lambda r: (-r.val_accuracy, r.d_out, r.k, r.batch_size))
    return GridResult(rows=rows, best=best, best_config=configs[(best.k, best.batch_size, best.d_out)])


def ablation(x, labels, cfg: PipelineConfig, kind: str, n_folds: int = 10, seed: int = 0,
             jobs: int = 1) -> EvalReport:
    """Cross-validate with ``kind`` applied (``avg_pooling``, ``no_u1``, ``single_modality:<m>``)."""
    parse_ablation(kind)
    rep = cross_validate(x, labels, replace(cfg, ablation=kind), n_folds, seed, jobs)
    rep.config["ablation"] = kind
    return rep
