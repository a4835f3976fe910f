"""KISSME pair metric.

Given difference vectors of same-identity pairs and of different-identity
pairs, the metric matrix is ``inv(S_pos) - inv(S_neg)`` where the ``S`` are
second-moment matrices of the differences, each with a small ridge. The
result is projected to the PSD cone so distances are never negative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InsufficientData, SingularCovariance

_COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class MetricModel:
    M: np.ndarray
    ridge: tuple[float, float] = (0.0, 0.0)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        M = np.asarray(self.M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionMismatch("metric matrix must be square")
        w, V = np.linalg.eigh((M + M.T) / 2.0)
        w = np.clip(w, 0.0, None)
        # factor M = L L^T so distances are squared norms of projected differences
        L = V * np.sqrt(w)
        M = L @ L.T
        M = (M + M.T) / 2.0
        M.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "_L", L)
        object.__setattr__(self, "eigenvalues", w)

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    @property
    def factor(self) -> np.ndarray:
        return self._L

    def to_dict(self) -> dict:
        return {"dim": self.dim, "M": self.M.ravel().tolist(),
                "ridge": list(self.ridge), "metadata": self.metadata}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricModel":
        dim = int(d["dim"])
        M = np.asarray(d["M"], dtype=np.float64).reshape(dim, dim)
        return cls(M=M, ridge=tuple(d.get("ridge", (0.0, 0.0))), metadata=d.get("metadata", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MetricModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _regularized_inverse(S: np.ndarray, ridge: float, side: str) -> np.ndarray:
    A = S + ridge * np.eye(S.shape[0])
    w = np.linalg.eigvalsh(A)
    if w[0] <= 0 or w[-1] / w[0] > _COND_LIMIT:
        raise SingularCovariance(
            f"{side} covariance is (near) singular with ridge={ridge:g}; increase the ridge")
    return np.linalg.inv(A)


def fit_kissme(positive_diffs, negative_diffs, ridge: float | None = None,
               ridge_scale: float = 1e-4) -> MetricModel:
    """Fit the metric from difference vectors (rows).

    ``ridge=None`` uses ``ridge_scale * trace(S) / dim`` separately for each
    side.
    """
    P = np.asarray(positive_diffs, dtype=np.float64)
    N = np.asarray(negative_diffs, dtype=np.float64)
    if P.ndim != 2 or N.ndim != 2 or P.shape[1] != N.shape[1]:
        raise DimensionMismatch("difference sets must be 2-D with equal dimension")
    dim = P.shape[1]
    for name, X in (("positive", P), ("negative", N)):
        if X.shape[0] < dim + 1:
            raise InsufficientData(f"{name} side has {X.shape[0]} samples, need >= {dim + 1}")
    S_pos = P.T @ P / P.shape[0]
    S_neg = N.T @ N / N.shape[0]
    if ridge is None:
        r_pos = ridge_scale * np.trace(S_pos) / dim
        r_neg = ridge_scale * np.trace(S_neg) / dim
    else:
        r_pos = r_neg = float(ridge)
    M = _regularized_inverse(S_pos, r_pos, "positive") - _regularized_inverse(S_neg, r_neg, "negative")
    meta = {"n_positive": int(P.shape[0]), "n_negative": int(N.shape[0])}
    return MetricModel(M=M, ridge=(float(r_pos), float(r_neg)), metadata=meta)


def metric_distance(model: MetricModel, f1, f2) -> float:
    a = np.asarray(f1, dtype=np.float64)
    b = np.asarray(f2, dtype=np.float64)
    if a.shape != (model.dim,) or b.shape != (model.dim,):
        raise DimensionMismatch(f"vectors must have dimension {model.dim}")
    z = (a - b) @ model.factor
    return float(z @ z)


def pairwise_distances(model: MetricModel, F1, F2) -> np.ndarray:
    """Distances between every row of ``F1`` and every row of ``F2``."""
    A = np.asarray(F1, dtype=np.float64)
    B = np.asarray(F2, dtype=np.float64)
    if A.shape[-1] != model.dim or B.shape[-1] != model.dim:
        raise DimensionMismatch(f"vectors must have dimension {model.dim}")
    Z = (A[:, None, :] - B[None, :, :]) @ model.factor
    return np.einsum("ijk,ijk->ij", Z, Z)
