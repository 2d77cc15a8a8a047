"""Cohort manifests, matrix text files, checkpoints and the synthetic cohort generator."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

CHECKPOINT_FORMAT = "mgnet-checkpoint"
CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.json"


@dataclass
class Cohort:
    x: np.ndarray  # (N, N, M, S)
    labels: np.ndarray  # (S,) ints in {0, 1}
    modalities: list[str]
    subject_ids: list[str]
    name: str = "cohort"

    @property
    def shape(self):
        return self.x.shape

    def subset_modalities(self, keep) -> "Cohort":
        keep = list(keep)
        return Cohort(self.x[:, :, keep, :], self.labels, [self.modalities[i] for i in keep],
                      self.subject_ids, self.name)


# -- matrices ---------------------------------------------------------------

def format_matrix(a) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in a)


def save_matrix(path, a) -> None:
    Path(path).write_text(format_matrix(a), encoding="utf-8")


def parse_matrix(text: str, source: str = "<string>") -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as e:
            raise DataError(f"{source}:{lineno}: unparseable value ({e})") from None
        if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
            raise DataError(
                f"{source}:{lineno}: row has {len(rows[-1])} values, expected {len(rows[0])}")
    if not rows:
        raise DataError(f"{source}: empty matrix file")
    return np.array(rows, dtype=np.float64)


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read matrix file {path}: {e.strerror}") from None
    return parse_matrix(text, str(path))


# -- cohorts ----------------------------------------------------------------

def load_cohort(manifest_path) -> Cohort:
    """Assemble the cohort tensor in manifest order; paths resolve relative to the manifest."""
    manifest_path = Path(manifest_path)
    try:
        spec = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DataError(f"cannot read manifest {manifest_path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{manifest_path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    try:
        n = int(spec["n_nodes"])
        modalities = list(spec["modalities"])
        subjects = list(spec["subjects"])
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{manifest_path}: missing or invalid field {e}") from None
    if n < 2 or not modalities or not subjects:
        raise DataError(f"{manifest_path}: need n_nodes >= 2, modalities and subjects")

    base = manifest_path.parent
    x = np.empty((n, n, len(modalities), len(subjects)))
    labels, ids = [], []
    for s, subj in enumerate(subjects):
        sid = str(subj.get("id", f"#{s}"))
        label = subj.get("label")
        if label not in (0, 1) or isinstance(label, bool):
            raise DataError(f"subject {sid}: label must be 0 or 1, got {label!r}")
        files = subj.get("files", {})
        if sorted(files) != sorted(modalities):
            raise DataError(f"subject {sid}: files must list each modality {modalities} exactly once")
        for m, mod in enumerate(modalities):
            fpath = base / files[mod]
            if not fpath.is_file():
                raise DataError(f"subject {sid}, modality {mod}: missing file {fpath}")
            a = load_matrix(fpath)
            if a.shape != (n, n):
                raise DataError(f"subject {sid}, modality {mod}: {fpath} is {a.shape[0]}x{a.shape[1]}, "
                                f"expected {n}x{n}")
            if not np.all(np.isfinite(a)):
                raise DataError(f"subject {sid}, modality {mod}: {fpath} contains NaN or Inf")
            asym = np.abs(a - a.T).max()
            if asym > 1e-8:
                raise DataError(f"subject {sid}, modality {mod}: {fpath} is not symmetric "
                                f"(max asymmetry {asym:.3g})")
            x[:, :, m, s] = 0.5 * (a + a.T)
        labels.append(label)
        ids.append(sid)
    labels = np.array(labels, dtype=np.intp)
    if len(set(labels.tolist())) < 2:
        raise DataError(f"{manifest_path}: need at least one subject per class")
    return Cohort(x=x, labels=labels, modalities=modalities, subject_ids=ids,
                  name=str(spec.get("name", manifest_path.stem)))


def save_cohort(directory, cohort: Cohort) -> Path:
    """Write one CSV per subject and modality plus ``manifest.json``; returns the manifest path."""
    directory = Path(directory)
    (directory / "matrices").mkdir(parents=True, exist_ok=True)
    n, _, _, s_count = cohort.x.shape
    subjects = []
    for s in range(s_count):
        sid = cohort.subject_ids[s]
        files = {}
        for m, mod in enumerate(cohort.modalities):
            rel = f"matrices/{sid}_{mod}.csv"
            save_matrix(directory / rel, cohort.x[:, :, m, s])
            files[mod] = rel
        subjects.append({"id": sid, "label": int(cohort.labels[s]), "files": files})
    manifest = {"name": cohort.name, "n_nodes": n, "modalities": list(cohort.modalities),
                "subjects": subjects}
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return path


# -- synthetic cohorts --------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Two planted node blocks; class 1 has denser inter-block connections than class 0.

    Each edge is present with probability ``p_within`` inside a block and
    ``p_between[label]`` across blocks, is scaled by the modality's signal
    strength, and Gaussian noise of std ``noise`` is added.
    """

    n_nodes: int = 32
    per_class: int = 50
    signal: tuple[float, ...] = (5.0, 0.0)
    noise: float = 1.0
    p_within: float = 0.6
    p_between: tuple[float, float] = (0.1, 0.3)
    seed: int = 0
    modalities: tuple[str, ...] | None = None
    name: str = "synthetic"

    def __post_init__(self):
        if self.n_nodes < 4:
            raise ConfigError("synthetic cohorts need at least 4 nodes")
        if self.per_class < 2:
            raise ConfigError("synthetic cohorts need at least 2 subjects per class")
        if not self.signal or any(not (v >= 0) for v in self.signal):
            raise ConfigError("signal strengths must be nonnegative")
        if not self.noise >= 0:
            raise ConfigError("noise std must be nonnegative")
        probs = (self.p_within, *self.p_between)
        if len(self.p_between) != 2 or any(not 0 <= p <= 1 for p in probs):
            raise ConfigError("edge probabilities must lie in [0, 1]")
        if self.modalities is not None and len(self.modalities) != len(self.signal):
            raise ConfigError("one modality name per signal strength")

    @property
    def modality_names(self) -> list[str]:
        if self.modalities is not None:
            return list(self.modalities)
        return [f"mod{i}" for i in range(len(self.signal))]

    def to_dict(self) -> dict:
        return asdict(self)


def _sym_noise(rng, n) -> np.ndarray:
    z = rng.standard_normal((n, n))
    z = np.triu(z, 1)
    return z + z.T


def generate_synthetic(spec: SyntheticSpec) -> Cohort:
    """Deterministic planted-block cohort; subjects alternate class 0, 1, 0, 1, ..."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_nodes
    block = np.arange(n) >= n // 2
    same = block[:, None] == block[None, :]
    mods = spec.modality_names
    s_count = 2 * spec.per_class
    labels = np.tile([0, 1], spec.per_class).astype(np.intp)
    x = np.empty((n, n, len(mods), s_count))
    for s in range(s_count):
        prob = np.where(same, spec.p_within, spec.p_between[labels[s]])
        for m, strength in enumerate(spec.signal):
            # draw edges for every modality so zero-signal modalities still
            # consume the same random stream regardless of label
            edges = (rng.random((n, n)) < prob).astype(np.float64)
            edges = np.triu(edges, 1)
            pattern = strength * (edges + edges.T)
            a = pattern + spec.noise * _sym_noise(rng, n)
            a[np.diag_indices(n)] = 0.0
            x[:, :, m, s] = a
    ids = [f"sub{s:04d}" for s in range(s_count)]
    return Cohort(x=x, labels=labels, modalities=mods, subject_ids=ids, name=spec.name)


# -- checkpoints ------------------------------------------------------------

@dataclass
class Checkpoint:
    matrices: dict[str, np.ndarray]
    config: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION


def save_checkpoint(path, matrices: dict, config: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config or {},
        "matrices": {
            name: {"shape": list(np.shape(a)), "data": np.asarray(a, dtype=np.float64).ravel().tolist()}
            for name, a in matrices.items()
        },
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_checkpoint(path, expected_shapes: dict | None = None) -> Checkpoint:
    """Read a checkpoint; ``expected_shapes`` maps names to required shapes."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid checkpoint at line {e.lineno}: {e.msg}") from None
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not an mgnet checkpoint")
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: checkpoint version {version}, this build reads {CHECKPOINT_VERSION}")
    matrices = {}
    for name, entry in payload.get("matrices", {}).items():
        shape = tuple(entry["shape"])
        data = np.array(entry["data"], dtype=np.float64)
        if data.size != math.prod(shape):
            raise DataError(f"{path}: matrix {name} has {data.size} values for shape {shape}")
        matrices[name] = data.reshape(shape)
    for name, shape in (expected_shapes or {}).items():
        if name not in matrices:
            raise DataError(f"{path}: checkpoint lacks {name}")
        if matrices[name].shape != tuple(shape):
            raise DataError(f"{path}: {name} has shape {matrices[name].shape}, expected {tuple(shape)}")
    return Checkpoint(matrices=matrices, config=payload.get("config", {}), version=version)
