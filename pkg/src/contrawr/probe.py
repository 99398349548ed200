"""Frozen-encoder linear probing: embeddings, multinomial logistic regression, metrics, CSV export."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_softmax, softmax

from .errors import DataError, ParameterError
from .nn.autodiff import Tensor, no_grad
from .signals import STAGE_INDEX, STAGES
from .spectral import STFTConfig, batch_features

N_CLASSES = len(STAGES)


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    embeddings: np.ndarray  # [n, d]
    labels: np.ndarray  # stage indices 0..4
    subject_ids: tuple

    def __post_init__(self):
        e = np.asarray(self.embeddings)
        y = np.asarray(self.labels, dtype=np.int64)
        if e.ndim != 2 or e.shape[0] != y.shape[0] or len(self.subject_ids) != y.shape[0]:
            raise ParameterError("embeddings, labels and subject ids must have matching lengths")
        if not np.all(np.isfinite(e)):
            raise DataError("embeddings contain NaN or Inf")
        if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
            raise ParameterError("labels must be stage indices 0..4")
        object.__setattr__(self, "embeddings", e)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))

    def __len__(self):
        return self.labels.shape[0]


def embed(encoder, epochs, stft: STFTConfig = STFTConfig(), batch_size: int = 256) -> EmbeddingSet:
    """Encoder outputs (not projections) for labelled epochs, computed in eval mode."""
    encoder.eval()
    chunks = []
    with no_grad():
        for i in range(0, len(epochs), batch_size):
            x = batch_features(epochs[i : i + batch_size], stft, dtype=encoder.stem.weight.dtype)
            chunks.append(encoder(Tensor(x)).data)
    d = encoder.latent_dim
    emb = np.concatenate(chunks) if chunks else np.zeros((0, d), dtype=np.float32)
    labels = [STAGE_INDEX[e.label] for e in epochs]
    return EmbeddingSet(emb, np.array(labels, dtype=np.int64), tuple(e.subject_id for e in epochs))


@dataclass
class ProbeModel:
    weights: np.ndarray  # [5, d]
    biases: np.ndarray  # [5]
    mean: np.ndarray
    scale: np.ndarray
    iterations: int = 0
    objective_trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.mean) / self.scale) @ self.weights.T + self.biases

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x), axis=1)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)


def fit_logistic(data: EmbeddingSet, max_iter: int = 500, l2: float = 1.0, standardize: bool = True) -> ProbeModel:
    """Multinomial logistic regression minimizing summed cross-entropy + l2/2 * |W|^2 with L-BFGS.

    Biases are not penalized. Features are standardized with training-set
    statistics unless ``standardize`` is False; constant dimensions keep
    unit scale.
    """
    n = len(data)
    if n < 10:
        raise ParameterError(f"need at least 10 samples to fit a probe, got {n}")
    if np.unique(data.labels).size < 2:
        raise DataError("probe training data contains a single class")
    if l2 < 0:
        raise ParameterError("l2 must be >= 0")
    x = data.embeddings.astype(np.float64)
    mean = x.mean(axis=0) if standardize else np.zeros(x.shape[1])
    scale = x.std(axis=0) if standardize else np.ones(x.shape[1])
    scale = np.where(scale > 1e-12, scale, 1.0)
    xs = (x - mean) / scale
    d = xs.shape[1]
    onehot = np.eye(N_CLASSES)[data.labels]

    def objective(theta):
        W = theta[: N_CLASSES * d].reshape(N_CLASSES, d)
        b = theta[N_CLASSES * d :]
        logp = log_softmax(xs @ W.T + b, axis=1)
        f = -(onehot * logp).sum() + 0.5 * l2 * (W * W).sum()
        r = np.exp(logp) - onehot
        gW = r.T @ xs + l2 * W
        return f, np.concatenate([gW.ravel(), r.sum(axis=0)])

    theta0 = np.zeros(N_CLASSES * (d + 1))
    trace = [objective(theta0)[0]]
    res = minimize(
        objective,
        theta0,
        jac=True,
        method="L-BFGS-B",
        callback=lambda th: trace.append(objective(th)[0]),
        options={"maxiter": max_iter},
    )
    W = res.x[: N_CLASSES * d].reshape(N_CLASSES, d)
    b = res.x[N_CLASSES * d :]
    return ProbeModel(W, b, mean, scale, int(res.nit), trace, bool(res.success))


def confusion_matrix(y_true, y_pred) -> np.ndarray:
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def evaluate(model: ProbeModel, data: EmbeddingSet):
    """Return ``(accuracy, confusion)`` with confusion[i, j] counting true i predicted j."""
    if len(data) == 0:
        raise ParameterError("cannot evaluate on an empty set")
    cm = confusion_matrix(data.labels, model.predict(data.embeddings))
    return float(np.trace(cm) / cm.sum()), cm


def per_class_metrics(cm: np.ndarray):
    tp = np.diag(cm).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(cm.sum(axis=0) > 0, tp / cm.sum(axis=0), 0.0)
        recall = np.where(cm.sum(axis=1) > 0, tp / cm.sum(axis=1), 0.0)
    return precision, recall


def format_report(accuracy: float, cm: np.ndarray, model: ProbeModel, extra: dict = None) -> str:
    precision, recall = per_class_metrics(cm)
    lines = [f"accuracy = {accuracy:.6f}", f"iterations = {model.iterations}", f"converged = {model.converged}"]
    lines.append(f"final_objective = {model.final_objective:.6f}")
    for k, name in enumerate(STAGES):
        lines.append(f"precision.{name} = {precision[k]:.6f}")
        lines.append(f"recall.{name} = {recall[k]:.6f}")
    for i, name in enumerate(STAGES):
        lines.append(f"confusion.{name} = " + " ".join(str(int(v)) for v in cm[i]))
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def export_embeddings(data: EmbeddingSet, path) -> Path:
    """CSV ``subject_id,label,e_0..e_{d-1}``.

    float32 embeddings are written with 9 significant digits, which round-trips
    them exactly; wider dtypes use the shortest exact representation.
    """
    path = Path(path)
    d = data.embeddings.shape[1]
    exact32 = data.embeddings.dtype == np.float32
    fmt = (lambda v: format(float(v), ".9g")) if exact32 else (lambda v: repr(float(v)))
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject_id", "label"] + [f"e_{i}" for i in range(d)])
            for sid, y, row in zip(data.subject_ids, data.labels, data.embeddings):
                w.writerow([sid, STAGES[y]] + [fmt(v) for v in row])
    except OSError as exc:
        raise DataError(f"cannot write embeddings to {path}: {exc}") from exc
    return path


def read_embeddings(path) -> EmbeddingSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = list(reader)
    emb = np.array([[float(v) for v in r[2:]] for r in rows])
    return EmbeddingSet(emb, np.array([STAGE_INDEX[r[1]] for r in rows]), tuple(r[0] for r in rows))
