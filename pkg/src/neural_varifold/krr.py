"""Kernel ridge regression on cloud Grams and few-shot episode evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .geometry import OrientedPointCloud, load_cloud, normalize_unit_sphere
from .varifold import KernelConfig, _row_against

__all__ = [
    "GramNotPDError",
    "LabeledCloudSet",
    "EpisodeSpec",
    "auto_lambda",
    "one_hot",
    "krr_solve",
    "krr_predict",
    "predict_labels",
    "run_episodes",
    "depth_ablation",
    "load_cloud_dataset",
]

log = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_STOP = 1e-4


class GramNotPDError(np.linalg.LinAlgError):
    pass


@dataclass
class LabeledCloudSet:
    clouds: list[OrientedPointCloud]
    labels: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.clouds) != len(self.labels):
            raise ValueError("clouds and labels differ in length")
        if len(self.labels) and self.labels.min() < 0:
            raise ValueError("labels must be nonnegative class indices")
        if self.class_names and len(self.labels) and self.labels.max() >= len(self.class_names):
            raise ValueError("label index exceeds number of classes")

    @property
    def n_classes(self) -> int:
        if self.class_names:
            return len(self.class_names)
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def __len__(self):
        return len(self.clouds)


@dataclass(frozen=True)
class EpisodeSpec:
    n_way: int = 5
    k_shot: int = 5
    q_query: int = 15
    episodes: int = 700
    seed: int = 0

    def __post_init__(self):
        for name in ("n_way", "k_shot", "q_query", "episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def auto_lambda(gram: np.ndarray, factor: float = 1e-6) -> float:
    """Scale-aware ridge: ``factor * trace(K) / n``."""
    return factor * float(np.trace(gram)) / gram.shape[0]


def one_hot(labels, n_classes: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
    y = np.zeros((len(labels), n_classes))
    y[np.arange(len(labels)), labels] = 1.0
    return y


def krr_solve(gram, y, lam: float | str | None = None) -> np.ndarray:
    """Coefficients ``(K + lam I)^-1 Y`` by Cholesky with escalating jitter.

    ``lam=None`` or ``"auto"`` picks :func:`auto_lambda`.  If the factorization
    fails, ``10**k * 1e-10 * trace/n`` is added to the diagonal for growing k
    up to ``1e-4 * trace/n``; past that :class:`GramNotPDError` is raised.
    """
    gram = np.asarray(gram, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = gram.shape[0]
    if gram.shape != (n, n):
        raise ValueError("training Gram must be square")
    if y.shape[0] != n:
        raise ValueError(f"targets have {y.shape[0]} rows, Gram has {n}")
    if not np.allclose(gram, gram.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(gram).max())):
        raise ValueError("training Gram must be symmetric")
    if lam is None or lam == "auto":
        lam = auto_lambda(gram)
    lam = float(lam)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")

    scale = max(float(np.trace(gram)) / n, np.finfo(float).tiny)
    system = gram + lam * np.eye(n)
    jitter = 0.0
    while True:
        try:
            factor = cho_factor(system + jitter * np.eye(n), lower=True, check_finite=True)
            break
        except LinAlgError:
            jitter = JITTER_START * scale if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_STOP * scale * (1 + 1e-9):
                raise GramNotPDError("gram not PD") from None
            log.debug("cholesky failed, retrying with jitter %.3g", jitter)
    return cho_solve(factor, y)


def krr_predict(gram_cross, coefficients) -> np.ndarray:
    gram_cross = np.atleast_2d(np.asarray(gram_cross, dtype=np.float64))
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if gram_cross.shape[1] != coefficients.shape[0]:
        raise ValueError(f"cross Gram has {gram_cross.shape[1]} columns, coefficients {coefficients.shape[0]} rows")
    return gram_cross @ coefficients


def predict_labels(scores) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(scores, axis=1)


class _GramCache:
    """Lazily filled cloud-kernel matrix over a fixed dataset."""

    def __init__(self, clouds, config):
        self.clouds = clouds
        self.config = config
        self.values = np.full((len(clouds), len(clouds)), np.nan)

    def block(self, rows, cols) -> np.ndarray:
        for i in rows:
            missing = [j for j in cols if np.isnan(self.values[i, j])]
            if missing:
                vals = _row_against(self.clouds[i], [self.clouds[j] for j in missing], self.config)
                self.values[i, missing] = vals
                self.values[missing, i] = vals
        return self.values[np.ix_(rows, cols)]


def _sample_episode(labels, spec: EpisodeSpec, rng):
    per_class = spec.k_shot + spec.q_query
    classes = np.unique(labels)
    eligible = [c for c in classes if (labels == c).sum() >= per_class]
    if len(eligible) < spec.n_way:
        raise ValueError(
            f"dataset cannot satisfy {spec.n_way}-way {spec.k_shot}-shot {spec.q_query}-query: "
            f"only {len(eligible)} classes have >= {per_class} samples"
        )
    chosen = rng.choice(eligible, size=spec.n_way, replace=False)
    support, query, s_lab, q_lab = [], [], [], []
    for new_label, c in enumerate(chosen):
        members = rng.choice(np.flatnonzero(labels == c), size=per_class, replace=False)
        support += members[: spec.k_shot].tolist()
        query += members[spec.k_shot :].tolist()
        s_lab += [new_label] * spec.k_shot
        q_lab += [new_label] * spec.q_query
    return support, np.array(s_lab), query, np.array(q_lab)


def run_episodes(
    dataset: LabeledCloudSet,
    spec: EpisodeSpec,
    config: KernelConfig | None = None,
    lam: float | str | None = None,
    return_accuracies: bool = False,
):
    """Mean N-way K-shot accuracy and its 95% CI half-width.

    Episode ``i`` draws its classes and items with seed ``spec.seed + i``.
    Cloud kernels are cached across episodes, so repeated items are cheap.
    """
    config = config or KernelConfig()
    cache = _GramCache(dataset.clouds, config)
    accs = []
    for index in range(spec.episodes):
        rng = np.random.default_rng(spec.seed + index)
        support, s_lab, query, q_lab = _sample_episode(dataset.labels, spec, rng)
        k_train = cache.block(support, support)
        k_test = cache.block(query, support)
        coef = krr_solve(k_train, one_hot(s_lab, spec.n_way), lam)
        pred = predict_labels(krr_predict(k_test, coef))
        accs.append(float(np.mean(pred == q_lab)))
    accs = np.asarray(accs)
    mean = float(accs.mean())
    half = 1.96 * float(accs.std(ddof=1)) / np.sqrt(len(accs)) if len(accs) > 1 else 0.0
    if return_accuracies:
        return mean, half, accs
    return mean, half


def depth_ablation(
    dataset: LabeledCloudSet,
    spec: EpisodeSpec,
    depths: Sequence[int] = (1, 3, 5),
    family: str = "ntk1",
    lam: float | str | None = None,
) -> list[dict]:
    """Episode accuracy for each NTK depth, one table row per depth."""
    rows = []
    for depth in depths:
        mean, half = run_episodes(dataset, spec, KernelConfig(family, depth), lam)
        rows.append({"family": family, "depth": int(depth), "accuracy": mean, "ci95": half})
    return rows


def load_cloud_dataset(root, normalize: bool = True, pattern: str = "*.xyzn") -> LabeledCloudSet:
    """Read one subdirectory per class, each holding XYZN files."""
    root = Path(root)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise ValueError(f"no class subdirectories under {root}")
    clouds, labels = [], []
    for label, d in enumerate(class_dirs):
        for f in sorted(d.glob(pattern)):
            cloud = load_cloud(f)
            if normalize:
                cloud = normalize_unit_sphere(cloud)[0]
            clouds.append(cloud)
            labels.append(label)
    return LabeledCloudSet(clouds, np.array(labels), [d.name for d in class_dirs])
