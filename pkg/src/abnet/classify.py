"""Edge-weight feature vectors, a linear one-vs-rest SVM, and CV protocols.

Estimated networks are flattened into fixed-order feature vectors and fed to
a multiclass linear SVM trained by full-batch subgradient descent on the
soft-margin hinge objective. Two cross-validation protocols are supported:
``within_subject`` (stratified sample-level folds inside one subject, results
averaged across subjects) and ``across_subject`` (folds split at subject
granularity, so no subject contributes to both train and test).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimators import AdjacencyMatrix, EstimatorConfig, estimate_network
from .timeseries import (
    DatasetManifest,
    interpolate_temporal,
    load_scan,
    partition_into_chunks,
)

PROTOCOLS = ("within_subject", "across_subject")


class PipelineError(RuntimeError):
    """A pipeline stage failed; the message carries stage and provenance."""


@dataclass
class FeatureVector:
    """Flattened edge weights of one network plus its provenance."""

    values: np.ndarray
    label: str
    subject_id: str
    session_id: str
    chunk_index: int

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite feature value")


@dataclass
class LinearSVMModel:
    """One-vs-rest linear SVM: one weight vector and bias per class."""

    classes: list[str]
    weights: np.ndarray  # (n_classes, n_features)
    biases: np.ndarray  # (n_classes,)
    C: float
    epochs: int
    seed: int


@dataclass(frozen=True)
class SVMConfig:
    C: float = 1.0
    epochs: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class CVReport:
    """Per-fold and aggregate accuracies for one experiment configuration.

    For the across-subject protocol ``fold_accuracies`` holds one value per
    fold. For the within-subject protocol it holds one value per subject (the
    subject's mean fold accuracy), with the raw per-fold numbers kept in
    ``per_subject``; mean and std are taken over ``fold_accuracies`` either
    way (population std, ddof=0).
    """

    protocol: str
    fold_accuracies: list[float]
    mean: float
    std: float
    config: dict
    per_subject: dict[str, list[float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not all(0.0 <= a <= 1.0 for a in self.fold_accuracies):
            raise ValueError("accuracies must lie in [0, 1]")

    @classmethod
    def from_folds(
        cls,
        protocol: str,
        fold_accuracies: list[float],
        config: dict,
        per_subject: dict[str, list[float]] | None = None,
    ) -> "CVReport":
        accs = np.asarray(fold_accuracies, dtype=np.float64)
        return cls(
            protocol=protocol,
            fold_accuracies=[float(a) for a in accs],
            mean=float(accs.mean()),
            std=float(accs.std()),
            config=dict(config),
            per_subject=dict(per_subject or {}),
        )

    def to_json(self) -> str:
        doc = {
            "protocol": self.protocol,
            "fold_accuracies": self.fold_accuracies,
            "mean": self.mean,
            "std": self.std,
            "config": self.config,
            "per_subject": self.per_subject,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CVReport":
        doc = json.loads(text)
        return cls(
            protocol=doc["protocol"],
            fold_accuracies=[float(a) for a in doc["fold_accuracies"]],
            mean=float(doc["mean"]),
            std=float(doc["std"]),
            config=doc.get("config", {}),
            per_subject=doc.get("per_subject", {}),
        )

    def csv_row(self) -> str:
        """Row matching the report table layout: estimator, lambda, protocol, mean, std."""
        return ",".join(
            [
                str(self.config.get("estimator", "")),
                "%.17g" % float(self.config.get("lambda", 0.0)),
                self.protocol,
                "%.17g" % self.mean,
                "%.17g" % self.std,
            ]
        )


def vectorize(adj: AdjacencyMatrix) -> FeatureVector:
    """Flatten a network's edge weights in a fixed, documented order.

    Directed matrices scan the off-diagonal entries row-major, giving
    M*(M-1) features; undirected matrices take the strict upper triangle
    row-major, giving M*(M-1)/2.
    """
    w = adj.weights
    m = w.shape[0]
    if adj.directedness == "undirected":
        if not np.array_equal(w, w.T):
            raise ValueError("matrix flagged undirected is not symmetric")
        iu, ju = np.triu_indices(m, k=1)
        values = w[iu, ju]
    else:
        mask = ~np.eye(m, dtype=bool)
        values = w[mask]
    return FeatureVector(
        values=values,
        label=adj.provenance.task_label,
        subject_id=adj.provenance.subject_id,
        session_id=adj.provenance.session_id,
        chunk_index=adj.provenance.chunk_index,
    )


def _feature_matrix(samples: list[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    lengths = {s.values.size for s in samples}
    if len(lengths) != 1:
        raise ValueError(f"feature length mismatch across samples: {sorted(lengths)}")
    x = np.vstack([s.values for s in samples])
    y = np.array([s.label for s in samples])
    return x, y


def train_linear_svm(
    samples: list[FeatureVector], C: float = 1.0, epochs: int = 200, seed: int = 0
) -> LinearSVMModel:
    """Train one-vs-rest soft-margin linear SVMs by subgradient descent.

    Each binary problem minimizes ``||w||^2 / (2C) + mean_i hinge_i`` with
    full-batch subgradient steps at rate 1/sqrt(t + 1) from a tiny seeded
    random init. Averaging the hinge term (rather than summing it) makes the
    trained model invariant to duplicating the dataset, and the full-batch
    updates make it deterministic for a given seed.
    """
    x, y = _feature_matrix(samples)
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    n, d = x.shape
    rng = np.random.default_rng(seed)
    weights = np.empty((len(classes), d))
    biases = np.empty(len(classes))
    for ci, cls in enumerate(classes):
        target = np.where(y == cls, 1.0, -1.0)
        w = rng.normal(0.0, 1e-6, size=d)
        b = 0.0
        for t in range(epochs):
            margins = target * (x @ w + b)
            violated = margins < 1.0
            grad_w = w / C - (x[violated].T @ target[violated]) / n
            grad_b = -np.sum(target[violated]) / n
            lr = 1.0 / np.sqrt(t + 1.0)
            w = w - lr * grad_w
            b = b - lr * grad_b
        weights[ci] = w
        biases[ci] = b
    return LinearSVMModel(
        classes=classes, weights=weights, biases=biases, C=C, epochs=epochs, seed=seed
    )


def decision_values(model: LinearSVMModel, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != model.weights.shape[1]:
        raise ValueError(
            f"feature dimension mismatch: sample has {values.shape[-1]}, "
            f"model expects {model.weights.shape[1]}"
        )
    return values @ model.weights.T + model.biases


def predict(model: LinearSVMModel, sample: FeatureVector) -> str:
    """Label with the highest decision value; ties go to the lowest class index."""
    scores = decision_values(model, sample.values)
    return model.classes[int(np.argmax(scores))]


def _predict_batch(model: LinearSVMModel, x: np.ndarray) -> np.ndarray:
    scores = decision_values(model, x)
    return np.array([model.classes[i] for i in np.argmax(scores, axis=1)])


def kfold_split(
    samples: list[FeatureVector], k: int, protocol: str, seed: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic k-fold partitions for either protocol.

    ``within_subject`` requires all samples to share one subject and deals
    each label's shuffled samples round-robin across folds (stratification).
    ``across_subject`` shuffles subjects and splits at subject granularity,
    so no subject appears on both sides of any fold. Returns k
    (train_indices, test_indices) pairs.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    n = len(samples)
    all_idx = np.arange(n)

    if protocol == "within_subject":
        subjects = {s.subject_id for s in samples}
        if len(subjects) != 1:
            raise ValueError(f"within_subject split requires a single subject, got {sorted(subjects)}")
        if n < k:
            raise ValueError(f"cannot make {k} folds from {n} samples")
        labels = np.array([s.label for s in samples])
        folds: list[list[int]] = [[] for _ in range(k)]
        offset = 0
        for lab in sorted(set(labels.tolist())):
            idx = np.flatnonzero(labels == lab)
            idx = idx[rng.permutation(idx.size)]
            for pos, i in enumerate(idx):
                folds[(offset + pos) % k].append(int(i))
            offset = (offset + idx.size) % k
    else:
        subject_ids = sorted({s.subject_id for s in samples})
        if len(subject_ids) < k:
            raise ValueError(f"cannot make {k} subject folds from {len(subject_ids)} subjects")
        order = rng.permutation(len(subject_ids))
        groups = np.array_split(order, k)
        folds = []
        for group in groups:
            members = {subject_ids[g] for g in group}
            folds.append([int(i) for i in all_idx if samples[i].subject_id in members])

    out = []
    for f in range(k):
        test = np.array(sorted(folds[f]), dtype=int)
        in_test = np.zeros(n, dtype=bool)
        in_test[test] = True
        train = all_idx[~in_test]
        out.append((train, test))
    return out


def _standardizer(x_train: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean/std from the training fold only; dead dims keep scale 1."""
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


def _evaluate_folds(
    samples: list[FeatureVector],
    splits: list[tuple[np.ndarray, np.ndarray]],
    svm: SVMConfig,
) -> list[float]:
    x, y = _feature_matrix(samples)
    accs = []
    for train, test in splits:
        mean, std = _standardizer(x[train])
        train_samples = [
            FeatureVector(
                values=(x[i] - mean) / std,
                label=samples[i].label,
                subject_id=samples[i].subject_id,
                session_id=samples[i].session_id,
                chunk_index=samples[i].chunk_index,
            )
            for i in train
        ]
        model = train_linear_svm(train_samples, C=svm.C, epochs=svm.epochs, seed=svm.seed)
        pred = _predict_batch(model, (x[test] - mean) / std)
        accs.append(float(np.mean(pred == y[test])))
    return accs


def extract_features(
    manifest: DatasetManifest,
    estimator_config: EstimatorConfig,
    window_length: int,
    n_insert: int = 0,
) -> list[FeatureVector]:
    """Load every scan, window it, estimate a network per chunk and vectorize."""
    features: list[FeatureVector] = []
    for entry in manifest.entries:
        where = f"subject={entry.subject_id} task={entry.task_label} session={entry.session_id}"
        try:
            scan = load_scan(entry, manifest.region_count)
        except Exception as e:
            raise PipelineError(f"stage=load {where}: {e}") from e
        if n_insert > 0:
            try:
                scan = interpolate_temporal(scan, n_insert)
            except Exception as e:
                raise PipelineError(f"stage=interpolate {where}: {e}") from e
        for chunk in partition_into_chunks(scan, window_length):
            try:
                adj, _ = estimate_network(chunk, estimator_config)
            except Exception as e:
                raise PipelineError(
                    f"stage=estimate {where} chunk={chunk.chunk_index}: {e}"
                ) from e
            features.append(vectorize(adj))
    return features


def run_experiment(
    manifest: DatasetManifest,
    estimator_config: EstimatorConfig,
    window_length: int,
    protocol: str,
    svm_config: SVMConfig,
    k: int = 3,
    seed: int = 0,
    n_insert: int = 0,
) -> CVReport:
    """Full pipeline: scans -> chunks -> networks -> features -> k-fold CV.

    Across-subject: one accuracy per fold, with a hard check that no subject
    leaks between train and test. Within-subject: k-fold CV inside each
    subject, then mean/std taken across the per-subject means.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    samples = extract_features(manifest, estimator_config, window_length, n_insert)
    if not samples:
        raise PipelineError("stage=features: no samples produced (window longer than scans?)")
    config_echo = {
        "estimator": estimator_config.kind,
        "lambda": estimator_config.lam,
        "alpha": estimator_config.alpha,
        "epochs": estimator_config.epochs,
        "zscore": estimator_config.zscore,
        "window_length": window_length,
        "n_insert": n_insert,
        "protocol": protocol,
        "k": k,
        "seed": seed,
        "svm_C": svm_config.C,
        "svm_epochs": svm_config.epochs,
        "svm_seed": svm_config.seed,
    }

    if protocol == "across_subject":
        splits = kfold_split(samples, k, protocol, seed)
        for train, test in splits:
            shared = {samples[i].subject_id for i in train} & {
                samples[i].subject_id for i in test
            }
            if shared:
                raise AssertionError(f"subject leakage across folds: {sorted(shared)}")
        accs = _evaluate_folds(samples, splits, svm_config)
        return CVReport.from_folds(protocol, accs, config_echo)

    by_subject: dict[str, list[FeatureVector]] = {}
    for s in samples:
        by_subject.setdefault(s.subject_id, []).append(s)
    per_subject: dict[str, list[float]] = {}
    subject_means: list[float] = []
    for subject in sorted(by_subject):
        subj_samples = by_subject[subject]
        try:
            splits = kfold_split(subj_samples, k, "within_subject", seed)
            accs = _evaluate_folds(subj_samples, splits, svm_config)
        except Exception as e:
            raise PipelineError(f"stage=cv subject={subject}: {e}") from e
        per_subject[subject] = accs
        subject_means.append(float(np.mean(accs)))
    return CVReport.from_folds(protocol, subject_means, config_echo, per_subject)


def save_report(report: CVReport, path: str | Path) -> None:
    Path(path).write_text(report.to_json(), newline="\n")


def load_report(path: str | Path) -> CVReport:
    return CVReport.from_json(Path(path).read_text())
