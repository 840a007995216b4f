"""Covariance-descriptor detector.

Pipeline per trace: project flattened maps onto a shared PCA basis,
form the regularized covariance of the projected rows, map it off the
SPD manifold with the matrix logarithm, vectorize the symmetric result
isometrically, and score with a Fisher discriminant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .errors import (
    AsymmetricMatrixError,
    DegenerateDatasetError,
    DimensionMismatchError,
    InsufficientTokensError,
    NotSpdError,
    RankDeficiencyError,
    SingularScatterError,
)
from .trace import BACKDOOR, BENIGN, AttentionTrace

SYMMETRY_TOL = 1e-8

# Scale-aware jitter keeping covariances strictly positive definite even
# when L - 1 < k (prompts shorter than k + 1 tokens).
EPSILON_SCALE = 1e-6
EPSILON_FLOOR = 1e-10

LDA_SHRINKAGE_SCALE = 1e-4


@dataclass(frozen=True)
class PcaBasis:
    mean: np.ndarray  # (D^2,)
    components: np.ndarray  # (k, D^2), orthonormal rows
    explained_variance: np.ndarray  # (k,) ratios, non-increasing

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def dim(self) -> int:
        return self.components.shape[1]


def fit_pca(corpus: Iterable[AttentionTrace], k: int) -> PcaBasis:
    """Top-k principal directions of all flattened maps pooled across the corpus."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rows = [t.maps.reshape(t.length, -1) for t in corpus]
    if not rows:
        raise DegenerateDatasetError("empty corpus")
    X = np.vstack(rows)
    if X.shape[0] < k:
        raise RankDeficiencyError(f"{X.shape[0]} maps cannot support k={k}")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    tol = s[0] * max(X.shape) * np.finfo(float).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    if k > rank:
        raise RankDeficiencyError(f"k={k} exceeds data rank {rank}")
    var = s**2
    return PcaBasis(
        mean=mean,
        components=Vt[:k].copy(),
        explained_variance=var[:k] / var.sum(),
    )


def project(trace: AttentionTrace, basis: PcaBasis) -> np.ndarray:
    """Centered projection of the trace's flattened maps; shape (L, k)."""
    flat = trace.maps.reshape(trace.length, -1)
    if flat.shape[1] != basis.dim:
        raise DimensionMismatchError(
            f"trace dimension {flat.shape[1]} != basis dimension {basis.dim}"
        )
    return (flat - basis.mean) @ basis.components.T


def covariance(features: np.ndarray, epsilon: float) -> np.ndarray:
    """Sample covariance of the rows (column-vector convention) plus epsilon * I."""
    features = np.asarray(features, dtype=float)
    L = features.shape[0]
    if L < 2:
        raise InsufficientTokensError(f"need >= 2 token features, got {L}")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    centered = features - features.mean(axis=0)
    C = centered.T @ centered / (L - 1)
    return C + epsilon * np.eye(features.shape[1])


def spd_epsilon(features: np.ndarray, scale: float = EPSILON_SCALE, floor: float = EPSILON_FLOOR) -> float:
    """Jitter proportional to the mean variance of the raw covariance."""
    centered = features - features.mean(axis=0)
    L, k = features.shape
    mean_var = float((centered * centered).sum()) / max(L - 1, 1) / k
    return max(scale * mean_var, floor)


def _check_symmetric(S: np.ndarray) -> None:
    if np.max(np.abs(S - S.T)) > SYMMETRY_TOL:
        raise AsymmetricMatrixError("matrix is not symmetric within tolerance")


def matrix_log(C: np.ndarray) -> np.ndarray:
    """Principal logarithm of an SPD matrix via eigendecomposition."""
    _check_symmetric(C)
    w, U = np.linalg.eigh(C)
    if w.min() <= 0:
        raise NotSpdError(f"non-positive eigenvalue {w.min():g}; regularize first")
    out = (U * np.log(w)) @ U.T
    return (out + out.T) / 2


def matrix_exp(S: np.ndarray) -> np.ndarray:
    """Exponential of a symmetric matrix via eigendecomposition."""
    _check_symmetric(S)
    w, U = np.linalg.eigh(S)
    out = (U * np.exp(w)) @ U.T
    return (out + out.T) / 2


def vectorize_symmetric(S: np.ndarray) -> np.ndarray:
    """Row-major upper triangle with off-diagonals scaled by sqrt(2).

    The scaling makes the Frobenius inner product equal the vector dot product.
    """
    _check_symmetric(S)
    k = S.shape[0]
    iu = np.triu_indices(k)
    scale = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return S[iu] * scale


def fit_lda(
    X: np.ndarray,
    y: np.ndarray,
    shrinkage: Optional[float] = None,
) -> Tuple[np.ndarray, float]:
    """Fisher discriminant: w = (S_W + lambda*I)^-1 (mu1 - mu0), boundary bisecting the means.

    Class 1 is the positive (backdoor) side: classify positive iff w.x + b > 0.
    shrinkage=None picks lambda = 1e-4 * trace(S_W)/dim; pass 0.0 to disable.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if set(np.unique(y)) != {0, 1}:
        raise DegenerateDatasetError("both classes (0 and 1) must be present")
    mu0 = X[y == 0].mean(axis=0)
    mu1 = X[y == 1].mean(axis=0)
    Sw = np.zeros((X.shape[1], X.shape[1]))
    for cls, mu in ((0, mu0), (1, mu1)):
        centered = X[y == cls] - mu
        Sw += centered.T @ centered
    lam = LDA_SHRINKAGE_SCALE * np.trace(Sw) / X.shape[1] if shrinkage is None else shrinkage
    try:
        w = np.linalg.solve(Sw + lam * np.eye(X.shape[1]), mu1 - mu0)
    except np.linalg.LinAlgError as exc:
        raise SingularScatterError(str(exc)) from exc
    if not np.all(np.isfinite(w)) or np.allclose(w, 0):
        raise SingularScatterError("degenerate discriminant direction")
    b = -0.5 * float(w @ (mu0 + mu1))
    return w, b


@dataclass(frozen=True)
class CdaModel:
    pca: PcaBasis
    lda_w: np.ndarray  # length k(k+1)/2
    lda_b: float
    epsilon_scale: float = EPSILON_SCALE
    epsilon_floor: float = EPSILON_FLOOR
    class_means_projected: Tuple[float, float] = (0.0, 0.0)

    def to_json_dict(self) -> dict:
        return {
            "k": self.pca.k,
            "epsilon_policy": {"scale": self.epsilon_scale, "floor": self.epsilon_floor},
            "pca": {
                "mean": self.pca.mean.tolist(),
                "components": self.pca.components.tolist(),
                "explained_variance": self.pca.explained_variance.tolist(),
            },
            "lda": {
                "w": self.lda_w.tolist(),
                "b": self.lda_b,
                "class_means_projected": list(self.class_means_projected),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CdaModel":
        pca = PcaBasis(
            mean=np.asarray(obj["pca"]["mean"], dtype=float),
            components=np.asarray(obj["pca"]["components"], dtype=float),
            explained_variance=np.asarray(obj["pca"]["explained_variance"], dtype=float),
        )
        return cls(
            pca=pca,
            lda_w=np.asarray(obj["lda"]["w"], dtype=float),
            lda_b=float(obj["lda"]["b"]),
            epsilon_scale=float(obj["epsilon_policy"]["scale"]),
            epsilon_floor=float(obj["epsilon_policy"]["floor"]),
            class_means_projected=tuple(obj["lda"]["class_means_projected"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "CdaModel":
        return cls.from_json_dict(json.loads(text))


def descriptor(
    trace: AttentionTrace,
    basis: PcaBasis,
    epsilon_scale: float = EPSILON_SCALE,
    epsilon_floor: float = EPSILON_FLOOR,
    per_sample_pca: bool = False,
) -> np.ndarray:
    """Vectorized log-covariance descriptor of one trace.

    per_sample_pca refits the basis on this trace alone (study mode; the
    resulting covariance is diagonal by construction).
    """
    if per_sample_pca:
        basis = fit_pca([trace], basis.k)
    feats = project(trace, basis)
    eps = spd_epsilon(feats, scale=epsilon_scale, floor=epsilon_floor)
    return vectorize_symmetric(matrix_log(covariance(feats, eps)))


def train_cda(traces: Iterable[AttentionTrace], k: int = 20) -> CdaModel:
    """Fit the shared PCA basis and the discriminant on a labeled corpus."""
    traces = list(traces)
    usable = [t for t in traces if t.length >= 2]
    basis = fit_pca(usable, k)
    X, y = [], []
    for t in usable:
        if t.label is None:
            raise DegenerateDatasetError("training requires labeled traces")
        X.append(descriptor(t, basis))
        y.append(1 if t.label.kind == BACKDOOR else 0)
    X = np.array(X)
    y = np.array(y)
    w, b = fit_lda(X, y)
    m0 = float((X[y == 0] @ w + b).mean())
    m1 = float((X[y == 1] @ w + b).mean())
    return CdaModel(pca=basis, lda_w=w, lda_b=b, class_means_projected=(m0, m1))


def cda_score(trace: AttentionTrace, model: CdaModel) -> float:
    vec = descriptor(
        trace, model.pca, epsilon_scale=model.epsilon_scale, epsilon_floor=model.epsilon_floor
    )
    return float(model.lda_w @ vec + model.lda_b)


def cda_classify(trace: AttentionTrace, model: CdaModel) -> Tuple[str, float]:
    """Label and raw score; the boundary score 0 counts as benign."""
    score = cda_score(trace, model)
    return (BACKDOOR if score > 0 else BENIGN), score
