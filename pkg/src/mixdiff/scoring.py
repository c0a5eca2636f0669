"""Output-based OOD scores.

Every score is oriented so that a larger value means "more OOD": MSP and MLS
are negated maxima, Energy is the negated log-sum-exp of the logits.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import AccessLevel, BaseScore, ModelOutput
from .errors import ScoringError

_LOGIT_ONLY = (BaseScore.MLS, BaseScore.ENERGY)


def softmax(logits) -> np.ndarray:
    """Softmax over the last axis with max-subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0 or z.shape[-1] == 0:
        raise ScoringError("softmax of an empty vector")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def logsumexp(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1)
    return m + np.log(np.exp(z - m[..., None]).sum(axis=-1))


def entropy_of_probs(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    return -np.sum(np.where(p > 0, p * np.log(safe), 0.0), axis=-1)


@dataclass(frozen=True)
class ScoreFn:
    kind: BaseScore = BaseScore.ENTROPY
    temperature: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BaseScore(self.kind))
        if not (self.temperature > 0 and np.isfinite(self.temperature)):
            raise ScoringError("temperature must be a positive real")

    def accepts(self, level: AccessLevel) -> bool:
        if level is AccessLevel.LOGITS:
            return True
        if level is AccessLevel.PROBS:
            return self.kind not in _LOGIT_ONLY
        return False

    def check(self, level: AccessLevel) -> None:
        level = AccessLevel(level)
        if not self.accepts(level):
            raise ScoringError(f"{self.kind.value} score cannot be computed from {level.value} outputs")

    def __call__(self, out: ModelOutput) -> float:
        return score(self, out)

    def batch(self, values, level: AccessLevel) -> np.ndarray:
        """Score each row of ``values`` (shape ``(n, K)``) produced at ``level``."""
        level = AccessLevel(level)
        self.check(level)
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 2:
            raise ScoringError(f"expected a 2-D array of outputs, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ScoringError("non-finite model output")
        kind = self.kind
        if level is AccessLevel.PROBS:
            if kind is BaseScore.MCM:
                warnings.warn("MCM temperature needs logits; scoring probabilities as MSP", stacklevel=2)
            if kind is BaseScore.ENTROPY:
                s = entropy_of_probs(v)
            else:
                s = -v.max(axis=1)
        elif kind is BaseScore.MLS:
            s = -v.max(axis=1)
        elif kind is BaseScore.ENERGY:
            s = -logsumexp(v)
        elif kind is BaseScore.ENTROPY:
            logp = log_softmax(v)
            s = -np.sum(np.exp(logp) * logp, axis=1)
        else:
            t = self.temperature if kind is BaseScore.MCM else 1.0
            s = -softmax(v / t).max(axis=1)
        if not np.all(np.isfinite(s)):
            raise ScoringError("score is not finite")
        return s


def score(fn: ScoreFn, out: ModelOutput) -> float:
    """Scalar OOD score of one model output (higher = more OOD)."""
    if out.kind in (AccessLevel.LABELS, AccessLevel.EMBEDDINGS):
        raise ScoringError(f"{fn.kind.value} score cannot be computed from {out.kind.value} outputs")
    return float(fn.batch(out.values[None, :], out.kind)[0])
