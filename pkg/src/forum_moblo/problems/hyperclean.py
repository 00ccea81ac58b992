"""
Multi-objective data hyper-cleaning on generated Gaussian-cluster data.

Each of the m datasets has a noisy training split, a clean validation
split and a clean test split. The UL variables alpha are one logit per
training sample (weight sigma(alpha)); the LL variable omega is a single
shared multinomial-logistic model W of shape (d + 1, classes), bias row last.

    f(alpha, omega) = sum_i (1/N_i) sum_j sigma(alpha_ij) CE(W; x_ij, y_ij) + ridge ||omega||^2
    F_i(alpha, omega) = mean validation CE on dataset i
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from attrs import field, frozen
from scipy.special import expit, logsumexp, softmax
from sklearn.metrics import accuracy_score, f1_score

from forum_moblo.shared.errors import ConfigurationError
from forum_moblo.shared.models import Capability, DecisionPoint, ProblemDims, ProblemOracle
from forum_moblo.shared.rng import make_rng

logger = logging.getLogger(__name__)

DATASET_SHIFT = 0.5


def _train_sizes(value: Union[int, Sequence[int]]) -> Union[int, Tuple[int, ...]]:
    if isinstance(value, (int, np.integer)):
        return int(value)
    return tuple(int(v) for v in value)


@frozen
class HypercleanSpec:
    """Generator settings; ``train_size`` is one size for every dataset or one per dataset."""

    m: int = 2
    classes: int = 3
    feature_dim: int = 10
    train_size: Union[int, Tuple[int, ...]] = field(default=200, converter=_train_sizes)
    val_size: int = 100
    test_size: int = 200
    corruption_rate: float = 0.5
    cluster_separation: float = 3.0
    ridge: float = 1e-2
    seed: int = 0

    def __attrs_post_init__(self):
        if self.m < 1:
            raise ConfigurationError(f"need at least one dataset, got {self.m}", field="m")
        if self.classes < 2:
            raise ConfigurationError(f"need at least two classes, got {self.classes}", field="classes")
        if self.feature_dim < 1:
            raise ConfigurationError(f"feature_dim must be >= 1, got {self.feature_dim}", field="feature_dim")
        if isinstance(self.train_size, tuple) and len(self.train_size) != self.m:
            raise ConfigurationError(
                f"{len(self.train_size)} training sizes given for {self.m} datasets", field="train_size"
            )
        checks = [("train_size", size) for size in self.train_sizes]
        checks += [("val_size", self.val_size), ("test_size", self.test_size)]
        for name, size in checks:
            if size < self.classes:
                raise ConfigurationError(
                    f"{size} samples cannot populate {self.classes} classes (empty class)", field=name
                )
        if not 0.0 <= self.corruption_rate < 1.0:
            raise ConfigurationError(f"must lie in [0, 1), got {self.corruption_rate}", field="corruption_rate")
        if self.ridge <= 0:
            raise ConfigurationError(f"must be > 0 for a strongly convex LL, got {self.ridge}", field="ridge")

    @property
    def train_sizes(self) -> Tuple[int, ...]:
        if isinstance(self.train_size, tuple):
            return self.train_size
        return (self.train_size,) * self.m


@frozen(eq=False)
class LabeledSplit:
    features: np.ndarray
    labels: np.ndarray
    clean_labels: np.ndarray
    dataset_id: int
    split: str

    @property
    def corrupted(self) -> np.ndarray:
        return self.labels != self.clean_labels

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])


def _augment(features: np.ndarray) -> np.ndarray:
    return np.hstack([features, np.ones((features.shape[0], 1))])


def _one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    return np.eye(classes)[labels]


class _CEBlock:
    """Cached design matrix and one-hot targets for one split."""

    def __init__(self, split: LabeledSplit, classes: int):
        self.X = _augment(split.features)
        self.Y = _one_hot(split.labels, classes)
        self.size = split.size

    def logits(self, W: np.ndarray) -> np.ndarray:
        return self.X @ W

    def losses(self, W: np.ndarray) -> np.ndarray:
        logits = self.logits(W)
        return logsumexp(logits, axis=1) - np.sum(logits * self.Y, axis=1)

    def residual(self, W: np.ndarray) -> np.ndarray:
        """softmax(logits) - Y, the per-sample logit gradient of CE."""
        return softmax(self.logits(W), axis=1) - self.Y


class HypercleaningProblem(ProblemOracle):
    name = "hyperclean"
    capabilities = frozenset({Capability.HVP_WW, Capability.HVP_AW})

    def __init__(self, spec: HypercleanSpec, train: List[LabeledSplit], val: List[LabeledSplit], test: List[LabeledSplit]):
        self.spec = spec
        self.train = train
        self.val = val
        self.test = test
        self._train_blocks = [_CEBlock(s, spec.classes) for s in train]
        self._val_blocks = [_CEBlock(s, spec.classes) for s in val]
        self._offsets = np.cumsum([0] + [s.size for s in train])
        n = int(self._offsets[-1])
        self._w_shape = (spec.feature_dim + 1, spec.classes)
        self._dims = ProblemDims(n=n, p=int(np.prod(self._w_shape)), m=spec.m)

    @property
    def dims(self) -> ProblemDims:
        return self._dims

    @property
    def corruption_mask(self) -> np.ndarray:
        return np.concatenate([s.corrupted for s in self.train])

    def weights_matrix(self, omega: np.ndarray) -> np.ndarray:
        return np.asarray(omega, dtype=np.float64).reshape(self._w_shape)

    def _alpha_slice(self, alpha: np.ndarray, i: int) -> np.ndarray:
        return alpha[self._offsets[i] : self._offsets[i + 1]]

    def ul_value(self, i: int, z: DecisionPoint) -> float:
        return float(self._val_blocks[i].losses(self.weights_matrix(z.omega)).mean())

    def ul_grad(self, i: int, z: DecisionPoint) -> np.ndarray:
        block = self._val_blocks[i]
        W = self.weights_matrix(z.omega)
        grad_W = block.X.T @ block.residual(W) / block.size
        return np.concatenate([np.zeros(self._dims.n), grad_W.ravel()])

    def ll_value(self, z: DecisionPoint) -> float:
        W = self.weights_matrix(z.omega)
        total = self.spec.ridge * float(z.omega @ z.omega)
        for i, block in enumerate(self._train_blocks):
            weights = expit(self._alpha_slice(z.alpha, i))
            total += float(weights @ block.losses(W)) / block.size
        return total

    def ll_grad(self, z: DecisionPoint) -> np.ndarray:
        W = self.weights_matrix(z.omega)
        grad_alpha = np.empty(self._dims.n)
        grad_W = 2.0 * self.spec.ridge * W
        for i, block in enumerate(self._train_blocks):
            s = expit(self._alpha_slice(z.alpha, i))
            grad_alpha[self._offsets[i] : self._offsets[i + 1]] = s * (1.0 - s) * block.losses(W) / block.size
            grad_W = grad_W + block.X.T @ (s[:, None] * block.residual(W)) / block.size
        return np.concatenate([grad_alpha, grad_W.ravel()])

    def ll_grad_omega(self, alpha: np.ndarray, omega: np.ndarray) -> np.ndarray:
        W = self.weights_matrix(omega)
        grad_W = 2.0 * self.spec.ridge * W
        for i, block in enumerate(self._train_blocks):
            s = expit(self._alpha_slice(alpha, i))
            grad_W = grad_W + block.X.T @ (s[:, None] * block.residual(W)) / block.size
        return grad_W.ravel()

    def ll_hvp_ww(self, z: DecisionPoint, v: np.ndarray) -> np.ndarray:
        W = self.weights_matrix(z.omega)
        V = self.weights_matrix(v)
        out = 2.0 * self.spec.ridge * V
        for i, block in enumerate(self._train_blocks):
            s = expit(self._alpha_slice(z.alpha, i))
            probs = softmax(block.logits(W), axis=1)
            U = block.X @ V
            curvature = probs * U - probs * np.sum(probs * U, axis=1, keepdims=True)
            out = out + block.X.T @ (s[:, None] * curvature) / block.size
        return out.ravel()

    def ll_hvp_aw(self, z: DecisionPoint, v: np.ndarray) -> np.ndarray:
        W = self.weights_matrix(z.omega)
        V = self.weights_matrix(v)
        out = np.empty(self._dims.n)
        for i, block in enumerate(self._train_blocks):
            s = expit(self._alpha_slice(z.alpha, i))
            directional = np.sum((block.X @ V) * block.residual(W), axis=1)
            out[self._offsets[i] : self._offsets[i + 1]] = s * (1.0 - s) * directional / block.size
        return out

    def predict(self, omega: np.ndarray, split: LabeledSplit) -> np.ndarray:
        return np.argmax(_augment(split.features) @ self.weights_matrix(omega), axis=1)


def _draw_split(
    rng: np.random.Generator,
    centers: np.ndarray,
    size: int,
    corruption_rate: float,
    dataset_id: int,
    split: str,
) -> LabeledSplit:
    classes, d = centers.shape
    labels = rng.permutation(np.arange(size) % classes)
    features = centers[labels] + rng.standard_normal((size, d))
    noisy = labels.copy()
    if corruption_rate > 0:
        count = int(round(corruption_rate * size))
        picked = rng.choice(size, size=count, replace=False)
        # shift by 1..classes-1 so the new label always differs
        noisy[picked] = (labels[picked] + rng.integers(1, classes, size=count)) % classes
    return LabeledSplit(features=features, labels=noisy, clean_labels=labels, dataset_id=dataset_id, split=split)


def hypercleaning_synthetic(spec: Optional[HypercleanSpec] = None) -> Tuple[HypercleaningProblem, np.ndarray]:
    """Generate the datasets and return the problem with its training corruption mask."""
    spec = spec or HypercleanSpec()
    rng = make_rng(spec.seed)
    directions = rng.standard_normal((spec.classes, spec.feature_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    base_centers = spec.cluster_separation * directions

    train, val, test = [], [], []
    for i in range(spec.m):
        centers = base_centers + DATASET_SHIFT * rng.standard_normal((1, spec.feature_dim))
        train.append(_draw_split(rng, centers, spec.train_sizes[i], spec.corruption_rate, i, "train"))
        val.append(_draw_split(rng, centers, spec.val_size, 0.0, i, "val"))
        test.append(_draw_split(rng, centers, spec.test_size, 0.0, i, "test"))

    problem = HypercleaningProblem(spec, train, val, test)
    mask = problem.corruption_mask
    logger.info(
        f"Generated hyper-cleaning data: m={spec.m}, n={problem.dims.n}, p={problem.dims.p}, "
        f"{int(mask.sum())} corrupted training labels"
    )
    return problem, mask


@frozen
class HypercleanReport:
    mean_weight_clean: Optional[float]
    mean_weight_corrupt: Optional[float]
    val_accuracy: Tuple[float, ...] = field(converter=tuple)
    test_accuracy: Tuple[float, ...] = field(converter=tuple)
    test_macro_f1: Tuple[float, ...] = field(converter=tuple)

    @property
    def mean_test_accuracy(self) -> float:
        return float(np.mean(self.test_accuracy))

    def as_dict(self) -> Dict[str, object]:
        return {
            "mean_weight_clean": self.mean_weight_clean,
            "mean_weight_corrupt": self.mean_weight_corrupt,
            "val_accuracy": list(self.val_accuracy),
            "test_accuracy": list(self.test_accuracy),
            "test_macro_f1": list(self.test_macro_f1),
            "mean_test_accuracy": self.mean_test_accuracy,
        }


def hyperclean_report(problem: HypercleaningProblem, z: DecisionPoint, mask: Optional[np.ndarray] = None) -> HypercleanReport:
    """Sample-weight means by corruption status plus per-dataset accuracy and macro-F1."""
    mask = problem.corruption_mask if mask is None else np.asarray(mask, dtype=bool)
    weights = expit(z.alpha)
    clean = weights[~mask]
    corrupt = weights[mask]
    val_acc = [accuracy_score(s.clean_labels, problem.predict(z.omega, s)) for s in problem.val]
    test_acc = [accuracy_score(s.clean_labels, problem.predict(z.omega, s)) for s in problem.test]
    test_f1 = [
        f1_score(s.clean_labels, problem.predict(z.omega, s), average="macro", zero_division=0)
        for s in problem.test
    ]
    return HypercleanReport(
        mean_weight_clean=float(clean.mean()) if clean.size else None,
        mean_weight_corrupt=float(corrupt.mean()) if corrupt.size else None,
        val_accuracy=[float(a) for a in val_acc],
        test_accuracy=[float(a) for a in test_acc],
        test_macro_f1=[float(f) for f in test_f1],
    )


def hyperclean_frame(problem: HypercleaningProblem) -> pd.DataFrame:
    """All splits as one table: feature_0..feature_{d-1}, label, dataset_id, is_corrupted, split."""
    frames = []
    for split in [*problem.train, *problem.val, *problem.test]:
        frame = pd.DataFrame(
            split.features, columns=[f"feature_{j}" for j in range(split.features.shape[1])]
        )
        frame["label"] = split.labels
        frame["dataset_id"] = split.dataset_id
        frame["is_corrupted"] = split.corrupted
        frame["split"] = split.split
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)
