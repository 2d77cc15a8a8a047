"""Per-split preparation: projection and population graph fitted on a subject subset, then training."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .graph import PopulationGraph, build_graph
from .projection import DEFAULT_TAU, ProjectionPair, project_nodes, solve_projections, truncated_u1
from .tensor import as_tensor4
from .training import TrainConfig, TrainResult, train

ABLATIONS = ("avg_pooling", "no_u1", "single_modality")


def parse_ablation(kind: str | None) -> tuple[str | None, int | None]:
    """``None``, ``avg_pooling``, ``no_u1`` or ``single_modality:<m>``."""
    if kind is None or kind == "none":
        return None, None
    name, _, arg = kind.partition(":")
    if name not in ABLATIONS:
        raise ConfigError(f"unknown ablation {kind!r}; choose from avg_pooling, no_u1, single_modality:<m>")
    if name == "single_modality":
        try:
            return name, int(arg)
        except ValueError:
            raise ConfigError("single_modality needs a modality index, e.g. single_modality:0") from None
    if arg:
        raise ConfigError(f"ablation {name} takes no argument")
    return name, None


@dataclass(frozen=True)
class PipelineConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    k: int = 6
    tau: float = DEFAULT_TAU
    sigma: float | None = None
    transductive: bool = False
    ablation: str | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"K must be >= 1, got {self.k}")
        if not 0 < self.tau <= 1:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        kind, _ = parse_ablation(self.ablation)
        if kind == "avg_pooling" and self.train.learn_alpha:
            object.__setattr__(self, "train", replace(self.train, learn_alpha=False))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d["train"] = TrainConfig(**d.get("train", {}))
        return cls(**d)


@dataclass
class Prepared:
    h0: np.ndarray  # (N, N, M, S) network input
    graph: PopulationGraph
    projection: ProjectionPair | None


def select_modalities(x: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    kind, m = parse_ablation(cfg.ablation)
    if kind != "single_modality":
        return x
    if not 0 <= m < x.shape[2]:
        raise ConfigError(f"modality index {m} out of range for {x.shape[2]} modalities")
    return x[:, :, m:m + 1, :]


def prepare(x, fit_idx, cfg: PipelineConfig) -> Prepared:
    """Fit the projection and graph on ``x[..., fit_idx]`` and project every subject.

    ``x`` must already be restricted by :func:`select_modalities`.
    """
    x = as_tensor4(x)
    fit = x[..., np.asarray(fit_idx, dtype=np.intp)]
    kind, _ = parse_ablation(cfg.ablation)
    if kind == "no_u1":
        mean_conn = fit.mean(axis=(2, 3))
        graph = build_graph(mean_conn, cfg.k, cfg.sigma)
        return Prepared(h0=x, graph=graph, projection=None)
    proj = solve_projections(fit, cfg.tau)
    graph = build_graph(truncated_u1(proj), cfg.k, cfg.sigma)
    return Prepared(h0=project_nodes(x, proj), graph=graph, projection=proj)


def fit_split(x, labels, train_idx, val_idx, cfg: PipelineConfig, seed) -> tuple[Prepared, TrainResult]:
    """Prepare inputs leak-free (train+val subjects only, unless transductive) and train."""
    x = select_modalities(as_tensor4(x), cfg)
    train_idx = np.asarray(train_idx, dtype=np.intp)
    val_idx = np.asarray(val_idx, dtype=np.intp)
    fit_idx = np.arange(x.shape[3]) if cfg.transductive else np.sort(np.concatenate([train_idx, val_idx]))
    prep = prepare(x, fit_idx, cfg)
    result = train(prep.h0, labels, prep.graph.normalized, train_idx, val_idx, cfg.train, rng_seed=seed)
    return prep, result
