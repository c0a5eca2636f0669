"""Mixup perturbations and one-hot encoding of predictions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import AccessLevel, ModelOutput
from .errors import PerturbError


def mixup(x, x_aux, lam: float) -> np.ndarray:
    """``lam * x + (1 - lam) * x_aux`` for ``0 < lam <= 1``."""
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(x_aux, dtype=np.float64)
    if x.shape != a.shape:
        raise PerturbError(f"dimension mismatch: {x.shape} vs {a.shape}")
    if not (0.0 < lam <= 1.0):
        raise PerturbError(f"Mixup ratio must lie in (0, 1], got {lam!r}")
    return lam * x + (1.0 - lam) * a


def mix_grid(X, aux, ratios) -> np.ndarray:
    """All mixtures of each row of ``X`` with each aux row at each ratio.

    Returns shape ``(len(X), len(aux), len(ratios), d)``; element
    ``[p, i, r]`` equals ``mixup(X[p], aux[i], ratios[r])``.
    """
    X = np.asarray(X, dtype=np.float64)
    A = np.asarray(aux, dtype=np.float64)
    lam = np.asarray(ratios, dtype=np.float64)
    if X.ndim != 2 or A.ndim != 2 or X.shape[1] != A.shape[1]:
        raise PerturbError(f"dimension mismatch: {X.shape} vs {A.shape}")
    if lam.size and (np.any(lam <= 0) or np.any(lam > 1)):
        raise PerturbError("Mixup ratios must lie in (0, 1]")
    lam = lam[None, None, :, None]
    return lam * X[:, None, None, :] + (1.0 - lam) * A[None, :, None, :]


@dataclass(frozen=True)
class PerturbedBatch:
    """N x R mixtures of one source vector, stored i-major / r-minor."""

    vectors: np.ndarray  # (N * R, d)
    provenance: tuple[tuple[str, str, float], ...]  # (source id, aux id, ratio)
    num_aux: int
    num_ratios: int

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def entry(self, i: int, r: int) -> np.ndarray:
        return self.vectors[i * self.num_ratios + r]


def perturb_batch(x, aux: Sequence, ratios: Sequence[float], source_id: str = "target",
                  aux_ids: Sequence[str] | None = None) -> PerturbedBatch:
    x = np.asarray(x, dtype=np.float64)
    A = np.asarray(aux, dtype=np.float64)
    if A.size == 0:
        raise PerturbError("no auxiliary samples")
    if A.ndim == 1:
        A = A[None, :]
    if aux_ids is None:
        aux_ids = [str(i) for i in range(len(A))]
    if len(aux_ids) != len(A):
        raise PerturbError("aux ids and aux samples differ in length")
    grid = mix_grid(x[None, :], A, ratios)[0]
    N, R, d = grid.shape
    prov = tuple((str(source_id), str(aux_ids[i]), float(ratios[r])) for i in range(N) for r in range(R))
    vectors = grid.reshape(N * R, d)
    vectors.setflags(write=False)
    return PerturbedBatch(vectors, prov, N, R)


def one_hot_rows(values) -> np.ndarray:
    """Row-wise one-hot at the argmax; ties go to the lowest index."""
    v = np.asarray(values, dtype=np.float64)
    out = np.zeros_like(v)
    out[np.arange(v.shape[0]), np.argmax(v, axis=1)] = 1.0
    return out


def one_hot(out: ModelOutput) -> ModelOutput:
    if out.kind not in (AccessLevel.LOGITS, AccessLevel.PROBS):
        raise PerturbError(f"cannot one-hot encode {out.kind.value} outputs")
    return ModelOutput(AccessLevel.LABELS, one_hot_rows(out.values[None, :])[0])
