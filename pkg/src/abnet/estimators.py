"""Per-window network estimators: gradient descent, closed-form ridge, Pearson.

All regression-style estimators share one per-node objective: predict each
region's window samples as a weighted sum of every other region's samples,
scoring a candidate weight row by the window-mean squared prediction error
plus an L2 penalty ``lam * sum(w**2)``. ``fit_dabn`` descends that objective
row by row without constraints (directed network), ``fit_uabn`` ties each
weight to its transpose twin (undirected network), and ``ridge_closed_form``
jumps straight to the unique minimizer. ``pearson_network`` is the standard
pairwise-correlation baseline.

The edge convention is row-major: ``weights[i, j]`` is the coefficient with
which region j's signal contributes to the prediction of region i. The
diagonal is identically zero; a node never predicts itself.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .timeseries import DEGENERATE_STD, Chunk, zscore_chunk

ESTIMATOR_KINDS = ("dabn", "uabn", "ridge", "pearson")


class DivergenceError(RuntimeError):
    """Gradient descent produced a non-finite loss (learning rate too large)."""


class DegenerateRegionWarning(UserWarning):
    """A constant region row was encountered; its edges are reported as zero."""


@dataclass(frozen=True)
class NetworkProvenance:
    """Where an estimated network came from and how it was produced."""

    subject_id: str
    task_label: str
    session_id: str
    chunk_index: int
    estimator: str
    hyperparams: dict = field(default_factory=dict)

    @classmethod
    def from_chunk(cls, chunk: Chunk, estimator: str, hyperparams: dict | None = None):
        return cls(
            subject_id=chunk.subject_id,
            task_label=chunk.task_label,
            session_id=chunk.session_id,
            chunk_index=chunk.chunk_index,
            estimator=estimator,
            hyperparams=dict(hyperparams or {}),
        )


@dataclass
class AdjacencyMatrix:
    """M x M edge-weight matrix with a zero diagonal.

    ``directedness`` is "directed" or "undirected"; undirected matrices are
    required to be bitwise symmetric.
    """

    weights: np.ndarray
    directedness: str
    provenance: NetworkProvenance

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("adjacency weights must be a square matrix")
        if not np.all(np.isfinite(w)):
            raise ValueError("non-finite adjacency weight")
        if np.any(np.diagonal(w) != 0.0):
            raise ValueError("adjacency diagonal must be exactly zero")
        if self.directedness not in ("directed", "undirected"):
            raise ValueError(f"unknown directedness {self.directedness!r}")
        if self.directedness == "undirected" and not np.array_equal(w, w.T):
            raise ValueError("undirected adjacency must be bitwise symmetric")
        self.weights = w

    @property
    def n_regions(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator choice plus hyperparameters.

    ``lam`` is the L2 penalty weight, ``alpha`` the gradient-descent learning
    rate, ``epochs`` the number of full-window descent passes. ``zscore``
    controls whether chunks are standardized per row before estimation.
    """

    kind: str
    lam: float = 0.0
    alpha: float = 1e-5
    epochs: int = 100
    zscore: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; expected one of {ESTIMATOR_KINDS}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.kind == "ridge" and self.lam <= 0:
            raise ValueError("ridge requires lambda > 0")


@dataclass
class TrainingTrace:
    """Total loss (summed over output nodes) recorded after each epoch."""

    losses: np.ndarray

    def __post_init__(self) -> None:
        self.losses = np.asarray(self.losses, dtype=np.float64)

    def __len__(self) -> int:
        return self.losses.size


def pearson_network(chunk: Chunk) -> AdjacencyMatrix:
    """Pairwise Pearson correlations between region rows over the window.

    Entry (i, j) is the correlation of rows i and j; the matrix is symmetric
    with a zero diagonal and entries clipped to [-1, 1]. Rows with (near) zero
    variance get zero-weight edges and trigger a DegenerateRegionWarning.
    """
    data = chunk.data
    centered = data - data.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(centered**2, axis=1))
    degenerate = np.flatnonzero(norms < DEGENERATE_STD * np.sqrt(data.shape[1]))
    if degenerate.size:
        warnings.warn(
            f"constant region rows {degenerate.tolist()} in chunk "
            f"{chunk.subject_id}/{chunk.task_label}/{chunk.session_id}#{chunk.chunk_index}; "
            "their correlations are reported as 0",
            DegenerateRegionWarning,
            stacklevel=2,
        )
    safe = norms.copy()
    safe[degenerate] = 1.0
    unit = centered / safe[:, None]
    corr = unit @ unit.T
    np.clip(corr, -1.0, 1.0, out=corr)
    # mirror the upper triangle so symmetry holds bitwise, not just to rounding
    corr = np.triu(corr, k=1)
    corr = corr + corr.T
    if degenerate.size:
        corr[degenerate, :] = 0.0
        corr[:, degenerate] = 0.0
    return AdjacencyMatrix(
        weights=corr,
        directedness="undirected",
        provenance=NetworkProvenance.from_chunk(chunk, "pearson"),
    )


def ridge_closed_form(chunk: Chunk, lam: float) -> AdjacencyMatrix:
    """Exact minimizer of the shared per-node objective, one row at a time.

    For node i the stationarity condition of the window-mean squared error
    plus ``lam * ||w||**2`` is the symmetric positive-definite system
    ``(B^T B / L + lam * I) w = B^T b_i / L`` with B holding the other regions'
    window series as columns. Each system is solved with a Cholesky
    factorization; no matrix is ever inverted explicitly.
    """
    if lam <= 0:
        raise ValueError(f"ridge requires lambda > 0, got {lam}")
    data = chunk.data
    m, window = data.shape
    gram = (data @ data.T) / window
    weights = np.zeros((m, m), dtype=np.float64)
    others = np.arange(m)
    for i in range(m):
        keep = others[others != i]
        system = gram[np.ix_(keep, keep)].copy()
        system[np.diag_indices_from(system)] += lam
        rhs = gram[keep, i]
        try:
            factor = cho_factor(system, lower=True, check_finite=False)
        except np.linalg.LinAlgError as e:
            raise np.linalg.LinAlgError(
                f"ridge factorization failed for node {i} of chunk "
                f"{chunk.subject_id}/{chunk.task_label}/{chunk.session_id}"
                f"#{chunk.chunk_index} (lambda={lam}): {e}"
            ) from e
        weights[i, keep] = cho_solve(factor, rhs, check_finite=False)
    return AdjacencyMatrix(
        weights=weights,
        directedness="directed",
        provenance=NetworkProvenance.from_chunk(chunk, "ridge", {"lambda": lam}),
    )


def _check_self_weight(w_row: np.ndarray, node: int) -> np.ndarray:
    w_row = np.asarray(w_row, dtype=np.float64)
    if w_row[node] != 0.0:
        raise ValueError(f"self-weight w[{node}] must be zero, got {w_row[node]}")
    return w_row


def node_loss(w_row: np.ndarray, chunk: Chunk, node: int, lam: float) -> float:
    """Window-mean squared prediction error for one node plus the L2 penalty.

    ``w_row`` holds the incoming edge candidates for ``node`` and must have a
    zero self-entry.
    """
    w_row = _check_self_weight(w_row, node)
    data = chunk.data
    residual = data[node] - w_row @ data
    return float(np.mean(residual**2) + lam * np.sum(w_row**2))


def node_loss_gradient(w_row: np.ndarray, chunk: Chunk, node: int, lam: float) -> np.ndarray:
    """Analytic gradient of ``node_loss`` with the self-component masked to 0.

    Component j is ``-2 * mean_t(residual_t * b_jt) + 2 * lam * w_j``; the
    self-edge is not a parameter, so component ``node`` is forced to zero.
    """
    w_row = _check_self_weight(w_row, node)
    data = chunk.data
    window = data.shape[1]
    residual = data[node] - w_row @ data
    grad = (-2.0 / window) * (data @ residual) + 2.0 * lam * w_row
    grad[node] = 0.0
    return grad


def _full_gradient(weights: np.ndarray, data: np.ndarray, lam: float) -> np.ndarray:
    """Stacked per-node gradients; row i is node_loss_gradient for node i."""
    window = data.shape[1]
    residual = data - weights @ data
    grad = (-2.0 / window) * (residual @ data.T) + 2.0 * lam * weights
    np.fill_diagonal(grad, 0.0)
    return grad


def _total_loss(weights: np.ndarray, data: np.ndarray, lam: float) -> float:
    window = data.shape[1]
    residual = data - weights @ data
    return float(np.sum(residual**2) / window + lam * np.sum(weights**2))


def _raise_if_diverged(loss: float, epoch: int, alpha: float) -> None:
    if not np.isfinite(loss):
        raise DivergenceError(
            f"non-finite loss at epoch {epoch}; learning rate alpha={alpha} "
            "is too large for this chunk, try a smaller value"
        )


def fit_dabn(
    chunk: Chunk,
    config: EstimatorConfig,
    grad_tol: float | None = None,
    max_epochs: int = 100_000,
) -> tuple[AdjacencyMatrix, TrainingTrace]:
    """Directed network by full-window gradient descent from zero weights.

    Every epoch evaluates all row gradients at the epoch-start weights and
    applies them at learning rate ``config.alpha``; rows are independent
    problems, so the update order is irrelevant. The diagonal stays zero
    throughout. When ``grad_tol`` is given the loop instead runs until the
    gradient infinity-norm drops below it (or ``max_epochs`` is hit), which is
    how the closed-form cross-checks drive it.
    """
    if config.kind != "dabn":
        raise ValueError(f"fit_dabn called with config.kind={config.kind!r}")
    data = chunk.data
    m = data.shape[0]
    weights = np.zeros((m, m), dtype=np.float64)
    losses: list[float] = []
    n_epochs = max_epochs if grad_tol is not None else config.epochs
    for epoch in range(n_epochs):
        grad = _full_gradient(weights, data, config.lam)
        if grad_tol is not None and np.max(np.abs(grad)) < grad_tol:
            break
        weights -= config.alpha * grad
        loss = _total_loss(weights, data, config.lam)
        _raise_if_diverged(loss, epoch, config.alpha)
        losses.append(loss)
    adj = AdjacencyMatrix(
        weights=weights,
        directedness="directed",
        provenance=NetworkProvenance.from_chunk(
            chunk,
            "dabn",
            {"lambda": config.lam, "alpha": config.alpha, "epochs": len(losses)},
        ),
    )
    return adj, TrainingTrace(np.array(losses))


def fit_uabn(
    chunk: Chunk,
    config: EstimatorConfig,
    grad_tol: float | None = None,
    max_epochs: int = 100_000,
) -> tuple[AdjacencyMatrix, TrainingTrace]:
    """Undirected network: gradient descent with twin weights tied together.

    Weights start at zero (symmetric). Each epoch updates every unordered
    pair {i, j} once, moving the shared weight by half the learning rate
    times the sum of both nodes' partial derivatives, all evaluated at the
    epoch-start weights. Equivalently the whole epoch is
    ``W <- W - (alpha / 2) * (G + G^T)`` with G the stacked row gradients,
    which keeps the matrix bitwise symmetric at every epoch.
    """
    if config.kind != "uabn":
        raise ValueError(f"fit_uabn called with config.kind={config.kind!r}")
    data = chunk.data
    m = data.shape[0]
    weights = np.zeros((m, m), dtype=np.float64)
    losses: list[float] = []
    n_epochs = max_epochs if grad_tol is not None else config.epochs
    for epoch in range(n_epochs):
        grad = _full_gradient(weights, data, config.lam)
        shared = grad + grad.T
        if grad_tol is not None and np.max(np.abs(shared)) / 2.0 < grad_tol:
            break
        weights = weights - (config.alpha / 2.0) * shared
        loss = _total_loss(weights, data, config.lam)
        _raise_if_diverged(loss, epoch, config.alpha)
        losses.append(loss)
    adj = AdjacencyMatrix(
        weights=weights,
        directedness="undirected",
        provenance=NetworkProvenance.from_chunk(
            chunk,
            "uabn",
            {"lambda": config.lam, "alpha": config.alpha, "epochs": len(losses)},
        ),
    )
    return adj, TrainingTrace(np.array(losses))


def safe_step_size(chunk: Chunk, lam: float) -> float:
    """Learning rate at which the training trace is guaranteed non-increasing.

    ``1 / (lambda_max(D D^T / L) + lam)`` with D the full region-by-window
    matrix. Every node's design matrix is a principal submatrix of D, so its
    largest Gram eigenvalue is bounded by the full one and the quadratic
    objective cannot increase under a step this size.
    """
    data = chunk.data
    gram = data @ data.T / data.shape[1]
    top = float(np.linalg.eigvalsh(gram)[-1])
    return 1.0 / (top + lam)


def estimate_network(
    chunk: Chunk, config: EstimatorConfig
) -> tuple[AdjacencyMatrix, TrainingTrace | None]:
    """Normalize (if configured) and dispatch to the configured estimator."""
    if config.zscore:
        chunk, _ = zscore_chunk(chunk)
    if config.kind == "pearson":
        return pearson_network(chunk), None
    if config.kind == "ridge":
        return ridge_closed_form(chunk, config.lam), None
    if config.kind == "dabn":
        return fit_dabn(chunk, config)
    return fit_uabn(chunk, config)


def _meta_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".meta.json")


def save_adjacency(adj: AdjacencyMatrix, csv_path: str | Path) -> None:
    """Write the full M x M matrix as CSV plus a JSON metadata sidecar.

    Values are formatted with %.17g so a reload reproduces them bit for bit;
    undirected matrices are stored in full for uniformity.
    """
    csv_path = Path(csv_path)
    lines = [",".join("%.17g" % v for v in row) for row in adj.weights]
    csv_path.write_text("\n".join(lines) + "\n", newline="\n")
    meta = {
        "directedness": adj.directedness,
        "estimator": adj.provenance.estimator,
        "hyperparams": adj.provenance.hyperparams,
        "subject": adj.provenance.subject_id,
        "task": adj.provenance.task_label,
        "session": adj.provenance.session_id,
        "chunk_index": adj.provenance.chunk_index,
    }
    _meta_path(csv_path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", newline="\n")


def load_adjacency(csv_path: str | Path) -> AdjacencyMatrix:
    """Read a matrix CSV and its sidecar, re-validating all invariants."""
    csv_path = Path(csv_path)
    rows = [
        np.array([float(c) for c in line.split(",")])
        for line in csv_path.read_text().splitlines()
        if line
    ]
    weights = np.vstack(rows)
    meta = json.loads(_meta_path(csv_path).read_text())
    provenance = NetworkProvenance(
        subject_id=meta["subject"],
        task_label=meta["task"],
        session_id=meta["session"],
        chunk_index=int(meta["chunk_index"]),
        estimator=meta["estimator"],
        hyperparams=meta.get("hyperparams", {}),
    )
    return AdjacencyMatrix(weights=weights, directedness=meta["directedness"], provenance=provenance)
