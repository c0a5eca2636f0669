"""Gaussian-mixture toy data.

``default_theory_spec`` is the 2-D, four-component setup used to check the
Taylor decomposition and the auxiliary-existence result; its parameters are
our own choice (unit variance, means at (+-3, +-3)).
``overconfidence_benchmark`` builds ID clusters plus OOD clusters pushed
further out along each class direction, so a linear classifier is more
confident on the OOD points than on typical ID points.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import LabeledDataset
from .errors import TheoryError


@dataclass(frozen=True)
class Component:
    mean: tuple[float, ...]
    var: tuple[float, ...]
    count: int
    label: int | None = None  # None marks an OOD component

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        object.__setattr__(self, "var", tuple(float(v) for v in self.var))
        if len(self.mean) != len(self.var) or not self.mean:
            raise TheoryError("component mean and variance must have the same positive length")
        if not all(v > 0 and np.isfinite(v) for v in self.var):
            raise TheoryError("component covariance must be positive definite")
        if self.count < 0:
            raise TheoryError("component count must be non-negative")


@dataclass(frozen=True)
class SyntheticSpec:
    components: tuple[Component, ...]
    seed: int = 0

    def __post_init__(self):
        comps = tuple(c if isinstance(c, Component) else Component(**c) for c in self.components)
        object.__setattr__(self, "components", comps)
        labels = {c.label for c in comps if c.label is not None}
        if len(labels) < 2:
            raise TheoryError("need ≥2 ID classes")
        if len({len(c.mean) for c in comps}) != 1:
            raise TheoryError("all components must share one dimension")

    @property
    def dim(self) -> int:
        return len(self.components[0].mean)

    def to_json(self) -> dict:
        return {"seed": self.seed, "components": [asdict(c) for c in self.components]}

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticSpec":
        try:
            return cls(tuple(Component(**c) for c in obj["components"]), int(obj.get("seed", 0)))
        except (KeyError, TypeError) as exc:
            raise TheoryError(f"malformed synthetic spec: {exc}") from None

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SyntheticSpec":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise TheoryError(f"cannot read synthetic spec {path}: {exc}") from None


def sample_synthetic(spec: SyntheticSpec, prefix: str = "s") -> LabeledDataset:
    """Draw every component in order from one generator seeded by ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    X, labels, ood, ids = [], [], [], []
    for j, c in enumerate(spec.components):
        pts = np.asarray(c.mean) + rng.standard_normal((c.count, len(c.mean))) * np.sqrt(c.var)
        X.append(pts)
        labels += [-1 if c.label is None else c.label] * c.count
        ood += [c.label is None] * c.count
        ids += [f"{prefix}{j}_{n}" for n in range(c.count)]
    return LabeledDataset(tuple(ids), np.vstack(X), np.array(labels), np.array(ood, dtype=bool))


def default_theory_spec(seed: int = 0) -> SyntheticSpec:
    return SyntheticSpec(
        (
            Component((-3.0, -3.0), (1.0, 1.0), 100, 0),
            Component((-3.0, 3.0), (1.0, 1.0), 100, 1),
            Component((3.0, -3.0), (1.0, 1.0), 50, None),
            Component((3.0, 3.0), (1.0, 1.0), 50, None),
        ),
        seed,
    )


@dataclass(frozen=True)
class BenchmarkSpec:
    """ID clusters on a circle of radius ``radius``; each has an OOD cluster at ``ood_scale * radius``."""

    num_classes: int = 2
    dim: int = 2
    radius: float = 3.0
    ood_scale: float = 2.0
    var: float = 1.0
    ood_var: float = 1.0
    n_train: int = 200
    n_oracle: int = 15
    n_aux: int = 200
    n_test_id: int = 100
    n_test_ood: int = 100

    def class_means(self) -> np.ndarray:
        if self.dim < 2:
            raise TheoryError("benchmark needs at least two feature dimensions")
        K = self.num_classes
        ang = 2.0 * np.pi * np.arange(K) / K
        means = np.zeros((K, self.dim))
        means[:, 0] = self.radius * np.cos(ang)
        means[:, 1] = self.radius * np.sin(ang)
        return means

    def split(self, seed: int, id_count: int, ood_count: int) -> SyntheticSpec:
        means = self.class_means()
        var = (self.var,) * self.dim
        comps = [Component(m, var, id_count, k) for k, m in enumerate(means)]
        comps += [Component(m * self.ood_scale, (self.ood_var,) * self.dim, ood_count, None) for m in means]
        return SyntheticSpec(tuple(comps), seed)


@dataclass
class Benchmark:
    train: LabeledDataset
    oracles: LabeledDataset
    aux: LabeledDataset
    tune: LabeledDataset
    test: LabeledDataset
    spec: BenchmarkSpec = field(default_factory=BenchmarkSpec)


def overconfidence_benchmark(seed: int = 0, spec: BenchmarkSpec | None = None) -> Benchmark:
    """Independent train / oracle / aux / tune / test draws for one seed."""
    spec = spec or BenchmarkSpec()
    K = spec.num_classes
    ss = np.random.SeedSequence(seed).generate_state(5)

    def draw(j, id_count, ood_count, prefix):
        return sample_synthetic(spec.split(int(ss[j]), id_count, ood_count), prefix)

    per_id = max(1, spec.n_test_id // K)
    per_ood = max(1, spec.n_test_ood // K)
    return Benchmark(
        train=draw(0, spec.n_train, 0, "train"),
        oracles=draw(1, spec.n_oracle, 0, "oracle"),
        aux=draw(2, max(1, spec.n_aux // K), 0, "aux"),
        tune=draw(3, per_id, per_ood, "tune"),
        test=draw(4, per_id, per_ood, "test"),
        spec=spec,
    )


__all__ = [
    "Benchmark",
    "BenchmarkSpec",
    "Component",
    "SyntheticSpec",
    "default_theory_spec",
    "overconfidence_benchmark",
    "sample_synthetic",
]
