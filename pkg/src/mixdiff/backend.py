"""Classifier backends.

A backend answers ``predict`` at one or more access levels.  The local
backend wraps a :class:`LinearSoftmaxModel`; the remote backend talks to a
model server over HTTP (see ``docs/protocol.md``).
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import requests
from requests.adapters import HTTPAdapter

from .core import AccessLevel, LabeledDataset, ModelOutput, atomic_write_text, feature_matrix
from .errors import AccessDeniedError, BackendError
from .perturb import one_hot_rows
from .scoring import log_softmax, softmax

log = logging.getLogger(__name__)

DEFAULT_MAX_BATCH = 256


@dataclass(frozen=True)
class LinearSoftmaxModel:
    """Logits ``W x + b``; the embedding of ``x`` is ``x`` itself."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        if W.ndim != 2 or W.shape[0] != b.size or W.shape[0] < 1 or W.shape[1] < 1:
            raise BackendError(f"inconsistent model shapes W{W.shape}, b{b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise BackendError("model parameters must be finite")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    def logits(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise BackendError(f"expected inputs of dimension {self.dim}, got {X.shape[-1]}")
        # einsum keeps each row's result independent of the batch it arrives in
        return np.einsum("...d,kd->...k", X, self.W) + self.b

    def to_json(self) -> dict:
        return {"W": self.W.tolist(), "b": self.b.tolist(), "K": self.num_classes, "d": self.dim}

    @classmethod
    def from_json(cls, obj: dict) -> "LinearSoftmaxModel":
        try:
            model = cls(np.array(obj["W"], dtype=np.float64), np.array(obj["b"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed model description: {exc}") from None
        if obj.get("K", model.num_classes) != model.num_classes or obj.get("d", model.dim) != model.dim:
            raise BackendError("model K/d fields disagree with the weight shapes")
        return model

    def save(self, path: str | os.PathLike) -> None:
        atomic_write_text(Path(path), json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "LinearSoftmaxModel":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise BackendError(f"cannot load model {path}: {exc}") from None
        return cls.from_json(obj)


def outputs_from_logits(logits: np.ndarray, level: AccessLevel) -> np.ndarray:
    if level is AccessLevel.LOGITS:
        return logits
    if level is AccessLevel.PROBS:
        return softmax(logits)
    if level is AccessLevel.LABELS:
        return one_hot_rows(logits)
    raise BackendError(f"{level.value} outputs cannot be derived from logits")


class LocalBackend:
    """In-process backend over a linear model, optionally restricted to some levels."""

    remote = False

    def __init__(self, model: LinearSoftmaxModel, levels: Sequence[AccessLevel] | None = None):
        self.model = model
        self.levels = frozenset(AccessLevel) if levels is None else frozenset(AccessLevel(l) for l in levels)

    @property
    def num_classes(self) -> int:
        return self.model.num_classes

    @property
    def dim(self) -> int:
        return self.model.dim

    def predict_array(self, X, level: AccessLevel) -> np.ndarray:
        level = AccessLevel(level)
        if level not in self.levels:
            raise AccessDeniedError("access level denied")
        X = np.asarray(X, dtype=np.float64)
        if X.size == 0:
            width = self.dim if level is AccessLevel.EMBEDDINGS else self.num_classes
            return np.zeros((0, width))
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise BackendError(f"expected inputs of dimension {self.dim}, got shape {X.shape}")
        if level is AccessLevel.EMBEDDINGS:
            return X.copy()
        return outputs_from_logits(self.model.logits(X), level)

    def predict(self, batch, level: AccessLevel) -> list[ModelOutput]:
        return _wrap(self.predict_array(batch, level), level)


def _wrap(values: np.ndarray, level: AccessLevel) -> list[ModelOutput]:
    level = AccessLevel(level)
    return [ModelOutput(level, row) for row in values]


class RemoteBackend:
    """HTTP client for a model server exposing exactly one access level.

    Batches larger than the server's limit are split transparently.  Timeouts
    and connection failures are retried ``retries`` times.
    """

    remote = True
    model = None

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 2, pool_size: int = 8):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.session = requests.Session()
        adapter = HTTPAdapter(pool_connections=1, pool_maxsize=pool_size)
        self.session.mount("http://", adapter)
        self.session.mount("https://", adapter)
        self._info = None

    def close(self) -> None:
        self.session.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _request(self, method: str, path: str, **kwargs) -> requests.Response:
        url = self.endpoint + path
        last = None
        for attempt in range(self.retries + 1):
            try:
                return self.session.request(method, url, timeout=self.timeout, **kwargs)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last = exc
                log.warning("request to %s failed (attempt %d): %s", url, attempt + 1, exc)
        raise BackendError(f"transport failure after {self.retries + 1} attempts: {last}")

    @property
    def info(self) -> dict:
        if self._info is None:
            resp = self._request("GET", "/v1/info")
            if resp.status_code != 200:
                raise BackendError(f"/v1/info returned HTTP {resp.status_code}")
            try:
                info = resp.json()
                info["access_level"] = AccessLevel(info["access_level"])
                int(info["num_classes"]), int(info["dim"]), int(info["max_batch"])
            except (ValueError, KeyError, TypeError) as exc:
                raise BackendError(f"malformed /v1/info response: {exc}") from None
            self._info = info
        return self._info

    @property
    def levels(self) -> frozenset:
        return frozenset([self.info["access_level"]])

    @property
    def num_classes(self) -> int:
        return int(self.info["num_classes"])

    @property
    def dim(self) -> int:
        return int(self.info["dim"])

    @property
    def max_batch(self) -> int:
        return int(self.info.get("max_batch", DEFAULT_MAX_BATCH))

    def predict_array(self, X, level: AccessLevel) -> np.ndarray:
        level = AccessLevel(level)
        X = np.asarray(X, dtype=np.float64)
        width = self.dim if level is AccessLevel.EMBEDDINGS else self.num_classes
        if X.size == 0:
            return np.zeros((0, width))
        if X.ndim != 2:
            raise BackendError(f"expected a 2-D batch, got shape {X.shape}")
        chunks = [self._predict_chunk(X[s:s + self.max_batch], level, width)
                  for s in range(0, X.shape[0], self.max_batch)]
        return np.vstack(chunks)

    def _predict_chunk(self, X: np.ndarray, level: AccessLevel, width: int) -> np.ndarray:
        body = json.dumps({"inputs": X.tolist(), "level": level.value})
        resp = self._request("POST", "/v1/predict", data=body,
                             headers={"Content-Type": "application/json"})
        if resp.status_code == 403:
            raise AccessDeniedError("access level denied")
        if resp.status_code != 200:
            raise BackendError(f"server returned HTTP {resp.status_code}: {resp.text.strip()}")
        try:
            out = np.array(resp.json()["outputs"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise BackendError(f"malformed response: {exc}") from None
        if out.shape != (X.shape[0], width) or not np.all(np.isfinite(out)):
            raise BackendError(f"malformed response: expected shape {(X.shape[0], width)}, got {out.shape}")
        return out

    def predict(self, batch, level: AccessLevel) -> list[ModelOutput]:
        return _wrap(self.predict_array(batch, level), level)


def predict(backend, batch, level: AccessLevel) -> list[ModelOutput]:
    """One :class:`ModelOutput` per input vector, in input order."""
    X = np.asarray(batch, dtype=np.float64)
    if X.size and X.ndim == 2:
        feature_matrix(X)
    return backend.predict(X, level)


def remote_predict(endpoint: str, batch, level: AccessLevel, timeout: float = 10.0,
                   retries: int = 2) -> list[ModelOutput]:
    with RemoteBackend(endpoint, timeout=timeout, retries=retries) as client:
        return client.predict(batch, level)


# ---------------------------------------------------------------------------
# Training and gradients


def cross_entropy(model: LinearSoftmaxModel, X, y) -> float:
    logp = log_softmax(model.logits(X))
    return float(-np.mean(logp[np.arange(len(y)), y]))


def fit_logistic(data: LabeledDataset, epochs: int = 500, lr: float = 0.5, seed: int = 0,
                 history: list | None = None, tol: float = 1e-6) -> LinearSoftmaxModel:
    """Multinomial logistic regression by full-batch gradient descent.

    Weights start at zero, so the result does not depend on ``seed`` (kept
    for interface symmetry).  Training stops early, keeping the previous
    weights, if an epoch raises the loss by more than ``tol``.  Per-epoch
    losses are appended to ``history`` when given.
    """
    del seed
    if epochs < 1 or not (lr >= 0 and math.isfinite(lr)):
        raise BackendError("epochs must be positive and lr a non-negative real")
    rows = np.flatnonzero(~data.ood)
    X = data.features[rows]
    y = data.labels[rows]
    K = max(data.num_classes, int(y.max()) + 1 if y.size else 0)
    if len(np.unique(y)) < 2:
        raise BackendError("need at least two classes to fit a classifier")
    n = len(y)
    Y = np.eye(K)[y]
    W = np.zeros((K, X.shape[1]))
    b = np.zeros(K)
    prev = cross_entropy(LinearSoftmaxModel(W, b), X, y)
    if history is not None:
        history.append(prev)
    for epoch in range(epochs):
        G = (softmax(X @ W.T + b) - Y) / n
        W_new = W - lr * (G.T @ X)
        b_new = b - lr * G.sum(axis=0)
        loss = cross_entropy(LinearSoftmaxModel(W_new, b_new), X, y)
        if loss > prev + tol:
            log.info("loss rose at epoch %d (%.6g > %.6g); stopping early", epoch, loss, prev)
            break
        W, b, prev = W_new, b_new, loss
        if history is not None:
            history.append(loss)
    return LinearSoftmaxModel(W, b)


LOSSES = ("ce_uniform", "entropy")


def input_loss(model: LinearSoftmaxModel, x, loss: str) -> float:
    logp = log_softmax(model.logits(np.asarray(x, dtype=np.float64)))
    if loss == "ce_uniform":
        return float(-logp.mean())
    if loss == "entropy":
        return float(-np.sum(np.exp(logp) * logp))
    raise BackendError(f"unknown loss {loss!r}; expected one of {LOSSES}")


def grad_input(model, x, loss: str) -> np.ndarray:
    """Analytic gradient of ``loss`` with respect to the input ``x``.

    ``ce_uniform`` is the cross entropy between the uniform distribution and
    the prediction; ``entropy`` is the Shannon entropy of the prediction.
    """
    if isinstance(model, RemoteBackend) or getattr(model, "remote", False):
        raise BackendError("gradients unavailable")
    if isinstance(model, LocalBackend):
        model = model.model
    x = np.asarray(x, dtype=np.float64)
    logits = model.logits(x)
    p = softmax(logits)
    if loss == "ce_uniform":
        g_logits = p - 1.0 / model.num_classes
    elif loss == "entropy":
        g_logits = -p * (logits - np.sum(p * logits, axis=-1, keepdims=True))
    else:
        raise BackendError(f"unknown loss {loss!r}; expected one of {LOSSES}")
    return g_logits @ model.W
