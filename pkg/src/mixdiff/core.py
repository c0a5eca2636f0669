"""Domain types, configuration and dataset I/O shared by the other modules.

Feature vectors are plain read-only ``float64`` numpy arrays; batches of them
are 2-D arrays of shape ``(n, d)``.  Inputs are used exactly as stored: no
feature normalization is applied before Mixup.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import enum
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DatasetError

PROB_SUM_TOL = 1e-9


def feature_vector(values) -> np.ndarray:
    """Validate ``values`` as a finite 1-D vector and return a read-only copy."""
    x = np.array(values, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise DatasetError(f"feature vector must be 1-D and non-empty, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DatasetError("feature vector contains non-finite values")
    x.setflags(write=False)
    return x


def feature_matrix(rows) -> np.ndarray:
    """Stack vectors into a read-only ``(n, d)`` array (``n`` may be 0)."""
    X = np.array(rows, dtype=np.float64)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, 0)
    if X.ndim != 2:
        raise DatasetError(f"expected a 2-D batch of feature vectors, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DatasetError("batch contains non-finite values")
    X.setflags(write=False)
    return X


class AccessLevel(str, enum.Enum):
    """What a model API exposes; also the kind tag of a :class:`ModelOutput`."""

    LOGITS = "logits"
    PROBS = "probs"
    LABELS = "labels"
    EMBEDDINGS = "embeddings"

    @classmethod
    def parse(cls, value) -> "AccessLevel":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown access level {value!r}") from None


@dataclass(frozen=True)
class ModelOutput:
    """One model response.  ``kind`` is the access level it was produced at."""

    kind: AccessLevel
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise DatasetError(f"model output must be a non-empty vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DatasetError("model output contains non-finite values")
        if self.kind is AccessLevel.PROBS:
            if np.any(v < 0) or np.any(v > 1) or abs(v.sum() - 1.0) > PROB_SUM_TOL:
                raise DatasetError("probabilities must lie in [0, 1] and sum to 1")
        elif self.kind is AccessLevel.LABELS:
            if np.count_nonzero(v == 1.0) != 1 or np.count_nonzero(v) != 1:
                raise DatasetError("one-hot label must have exactly one entry equal to 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def num_classes(self) -> int | None:
        return None if self.kind is AccessLevel.EMBEDDINGS else self.values.size


# ---------------------------------------------------------------------------
# Configuration


class BaseScore(str, enum.Enum):
    MSP = "msp"
    MLS = "mls"
    ENERGY = "energy"
    ENTROPY = "entropy"
    MCM = "mcm"


class AuxStrategy(str, enum.Enum):
    IN_BATCH = "in_batch"
    RANDOM_ID = "random_id"
    ORACLE_AS_AUX = "oracle_as_aux"


class OracleSelection(str, enum.Enum):
    BY_PREDICTED_LABEL = "by_predicted_label"
    UNLABELED_TOP_M = "unlabeled_top_m"
    RANDOM_ORACLE = "random_oracle"


def mixup_ratio_grid(R: int) -> list[float]:
    """Mixup ratios ``r / (R + 1)`` for ``r = 1..R``, evenly splitting (0, 1)."""
    if isinstance(R, bool) or not isinstance(R, (int, np.integer)) or R < 1:
        raise ConfigError(f"number of Mixup ratios must be a positive integer, got {R!r}")
    return [r / (R + 1) for r in range(1, R + 1)]


@dataclass(frozen=True)
class MixDiffConfig:
    """Hyperparameters of a MixDiff run.

    Defaults are a logit-access setting for large vision-language
    classifiers (M=15, N=14, R=7, gamma=2).  ``num_aux`` is ignored by the
    oracle-as-aux strategy, where N is ``oracle_size - 1``.
    """

    num_aux: int = 14
    num_ratios: int = 7
    oracle_size: int = 15
    gamma: float = 2.0
    access_level: AccessLevel = AccessLevel.LOGITS
    base_score: BaseScore = BaseScore.ENTROPY
    aux_strategy: AuxStrategy = AuxStrategy.IN_BATCH
    oracle_selection: OracleSelection = OracleSelection.BY_PREDICTED_LABEL
    compare_enabled: bool = True
    mixdiff_only: bool = False
    mcm_temperature: float = 1.0

    def __post_init__(self):
        for name in ("num_aux", "num_ratios", "oracle_size"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not math.isfinite(self.gamma):
            raise ConfigError("gamma must be finite")
        if not (self.mcm_temperature > 0 and math.isfinite(self.mcm_temperature)):
            raise ConfigError("mcm_temperature must be a positive real")
        object.__setattr__(self, "access_level", AccessLevel.parse(self.access_level))
        for name, enum_cls in _ENUM_FIELDS.items():
            value = getattr(self, name)
            try:
                object.__setattr__(self, name, enum_cls(value.lower() if isinstance(value, str) else value))
            except ValueError:
                raise ConfigError(f"unknown {name} {value!r}") from None

    @property
    def ratios(self) -> list[float]:
        return mixup_ratio_grid(self.num_ratios)

    def replace(self, **changes) -> "MixDiffConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            out[f.name] = value.value if isinstance(value, enum.Enum) else value
        return out

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "MixDiffConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "MixDiffConfig":
        """Read a flat ``key = value`` file (an optional ``[mixdiff]`` header is allowed)."""
        text = Path(path).read_text()
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            if not any(line.strip().startswith("[") for line in text.splitlines()):
                text = "[mixdiff]\n" + text
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not parser.has_section("mixdiff"):
            raise ConfigError(f"config {path} has no [mixdiff] section")
        return cls.from_mapping(dict(parser.items("mixdiff")))

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt_value(v)}\n" for k, v in self.to_dict().items())


_ENUM_FIELDS = {
    "base_score": BaseScore,
    "aux_strategy": AuxStrategy,
    "oracle_selection": OracleSelection,
}


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if key in ("num_aux", "num_ratios", "oracle_size"):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
    if key in ("gamma", "mcm_temperature"):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} must be a real number, got {raw!r}") from None
    if key in ("compare_enabled", "mixdiff_only"):
        return _parse_bool(raw, key)
    return raw


def _parse_bool(raw: str, what: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{what}: expected a boolean, got {raw!r}")


# ---------------------------------------------------------------------------
# Datasets

NO_LABEL = -1


@dataclass(frozen=True)
class Record:
    id: str
    features: np.ndarray
    label: int | None
    ood: bool


@dataclass(frozen=True)
class LabeledDataset:
    """Rows of ``(id, features, label, ood)`` stored column-wise.

    ``labels`` uses ``-1`` for a missing label.  ``label_names[k]`` is the
    original name of class ``k`` when the file used string labels.
    """

    ids: tuple[str, ...]
    features: np.ndarray
    labels: np.ndarray
    ood: np.ndarray
    label_names: tuple[str, ...] | None = None

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        X = np.array(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {X.shape}")
        n = len(ids)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        ood = np.array(self.ood, dtype=bool).reshape(-1)
        if X.shape[0] != n or labels.size != n or ood.size != n:
            raise DatasetError("ids, features, labels and ood flags differ in length")
        if n and X.shape[1] < 1:
            raise DatasetError("feature dimension must be at least 1")
        bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
        if bad.size:
            raise DatasetError(f"row {bad[0]}: non-finite feature value")
        missing = np.flatnonzero(~ood & (labels < 0))
        if missing.size:
            raise DatasetError(f"row {missing[0]}: in-distribution record without a class label")
        if np.any(labels < NO_LABEL):
            raise DatasetError("class labels must be non-negative")
        for arr in (X, labels, ood):
            arr.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ood", ood)
        if self.label_names is not None:
            object.__setattr__(self, "label_names", tuple(self.label_names))

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        if self.label_names is not None:
            return len(self.label_names)
        return int(self.labels.max()) + 1 if np.any(self.labels >= 0) else 0

    def records(self) -> Iterator[Record]:
        for i, x, y, o in zip(self.ids, self.features, self.labels, self.ood):
            yield Record(i, x, None if y < 0 else int(y), bool(o))

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return LabeledDataset(
            ids=tuple(self.ids[i] for i in index),
            features=self.features[index],
            labels=self.labels[index],
            ood=self.ood[index],
            label_names=self.label_names,
        )

    def id_only(self) -> "LabeledDataset":
        return self.subset(~self.ood)

    def label_table(self) -> dict[str, int]:
        if self.label_names is not None:
            return {name: k for k, name in enumerate(self.label_names)}
        return {str(k): k for k in range(self.num_classes)}

    @classmethod
    def from_records(cls, records: Sequence[Record], label_names=None) -> "LabeledDataset":
        if not records:
            raise DatasetError("empty dataset")
        dims = {np.size(r.features) for r in records}
        if len(dims) != 1:
            raise DatasetError("records have different feature dimensions")
        return cls(
            ids=tuple(r.id for r in records),
            features=np.array([r.features for r in records], dtype=np.float64),
            labels=np.array([NO_LABEL if r.label is None else r.label for r in records]),
            ood=np.array([r.ood for r in records], dtype=bool),
            label_names=label_names,
        )


def concat_datasets(*parts: LabeledDataset) -> LabeledDataset:
    names = {p.label_names for p in parts}
    if len(names) != 1:
        raise DatasetError("cannot concatenate datasets with different label tables")
    return LabeledDataset(
        ids=sum((p.ids for p in parts), ()),
        features=np.vstack([p.features for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        ood=np.concatenate([p.ood for p in parts]),
        label_names=parts[0].label_names,
    )


def _detect_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("csv", "jsonl"):
            raise DatasetError(f"unknown dataset format {fmt!r}")
        return fmt
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    if suffix == ".csv":
        return "csv"
    raise DatasetError(f"cannot infer dataset format from {path.name}; pass format explicitly")


def _parse_float(text, row: int) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DatasetError(f"row {row}: malformed feature value {text!r}") from None
    if not math.isfinite(value):
        raise DatasetError(f"row {row}: non-finite feature value {text!r}")
    return value


def _parse_flag(text, row: int) -> bool:
    if isinstance(text, bool):
        return text
    if isinstance(text, (int, float)) and text in (0, 1):
        return bool(text)
    try:
        return _parse_bool(str(text), "ood flag")
    except ConfigError:
        raise DatasetError(f"row {row}: malformed ood flag {text!r}") from None


def load_dataset(path: str | os.PathLike, format: str | None = None) -> LabeledDataset:
    """Load a CSV (``id,ood,label,f0..``) or JSONL (``id/ood/label/features``) dataset.

    Labels that all look like non-negative integers are used as class indices;
    otherwise the distinct names are sorted and numbered.  Row order is kept.
    """
    path = Path(path)
    fmt = _detect_format(path, format)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from None

    raw: list[tuple[str, bool, str | None, list[float]]] = []
    if fmt == "csv":
        rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
        if rows and rows[0][0].strip().lower() == "id":
            rows = rows[1:]
        for n, r in enumerate(rows):
            if len(r) < 4:
                raise DatasetError(f"row {n}: expected id, ood, label and at least one feature")
            label = r[2].strip() or None
            raw.append((r[0].strip(), _parse_flag(r[1], n), label, [_parse_float(v, n) for v in r[3:]]))
    else:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        for n, line in enumerate(lines):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"row {n}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or not {"id", "ood", "features"} <= obj.keys():
                raise DatasetError(f"row {n}: expected keys id, ood, label, features")
            feats = obj["features"]
            if not isinstance(feats, list) or not feats:
                raise DatasetError(f"row {n}: features must be a non-empty list")
            label = obj.get("label")
            raw.append((str(obj["id"]), _parse_flag(obj["ood"], n), None if label is None else str(label),
                        [_parse_float(v, n) for v in feats]))

    if not raw:
        raise DatasetError("empty dataset")
    dim = len(raw[0][3])
    for n, r in enumerate(raw):
        if len(r[3]) != dim:
            raise DatasetError(f"row {n}: expected {dim} features, got {len(r[3])}")

    names = sorted({r[2] for r in raw if r[2] is not None})
    if all(_is_index(s) for s in names):
        label_names = None
        mapping = {s: int(s) for s in names}
    else:
        label_names = tuple(names)
        mapping = {s: k for k, s in enumerate(names)}
    for n, r in enumerate(raw):
        if not r[1] and r[2] is None:
            raise DatasetError(f"row {n}: in-distribution record without a class label")
    return LabeledDataset(
        ids=tuple(r[0] for r in raw),
        features=np.array([r[3] for r in raw], dtype=np.float64),
        labels=np.array([NO_LABEL if r[2] is None else mapping[r[2]] for r in raw], dtype=np.int64),
        ood=np.array([r[1] for r in raw], dtype=bool),
        label_names=label_names,
    )


def _is_index(s: str) -> bool:
    return s.isdigit() and str(int(s)) == s


def save_dataset(data: LabeledDataset, path: str | os.PathLike, format: str | None = None) -> None:
    """Write ``data`` so that :func:`load_dataset` reads back an identical dataset."""
    path = Path(path)
    fmt = _detect_format(path, format)

    def label_text(y):
        if y < 0:
            return None
        return data.label_names[y] if data.label_names is not None else str(int(y))

    if fmt == "csv":
        lines = [",".join(["id", "ood", "label"] + [f"f{j}" for j in range(data.dim)])]
        for r_id, x, y, o in zip(data.ids, data.features, data.labels, data.ood):
            cells = [r_id, "1" if o else "0", label_text(y) or ""] + [repr(float(v)) for v in x]
            lines.append(",".join(_csv_cell(c) for c in cells))
    else:
        lines = [
            json.dumps({"id": r_id, "ood": bool(o), "label": label_text(y), "features": [float(v) for v in x]})
            for r_id, x, y, o in zip(data.ids, data.features, data.labels, data.ood)
        ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _csv_cell(text: str) -> str:
    if any(c in text for c in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def save_label_table(data: LabeledDataset, path: str | os.PathLike) -> None:
    atomic_write_text(Path(path), json.dumps(data.label_table(), indent=2, sort_keys=True) + "\n")


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Oracle sets


@dataclass(frozen=True)
class OracleSet:
    """In-distribution exemplars used as comparison anchors.

    Stored as a flat pool; ``labels`` is ``None`` for an unlabeled pool.  A
    labeled set holds the same number M of exemplars for every class.
    """

    features: np.ndarray
    ids: tuple[str, ...]
    labels: np.ndarray | None = None
    num_classes: int | None = None
    _by_class: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DatasetError("oracle set must be a non-empty 2-D pool")
        if len(self.ids) != X.shape[0]:
            raise DatasetError("oracle ids and features differ in length")
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        if self.labels is None:
            return
        y = np.array(self.labels, dtype=np.int64)
        if y.shape != (X.shape[0],):
            raise DatasetError("oracle labels and features differ in length")
        K = int(self.num_classes) if self.num_classes is not None else int(y.max()) + 1
        if np.any(y < 0) or np.any(y >= K):
            raise DatasetError(f"oracle labels must lie in [0, {K})")
        groups = {k: np.flatnonzero(y == k) for k in range(K)}
        sizes = {len(g) for g in groups.values()}
        if 0 in sizes:
            empty = min(k for k, g in groups.items() if len(g) == 0)
            raise DatasetError(f"no oracle exemplars for class {empty}")
        if len(sizes) != 1:
            raise DatasetError("every class must have the same number of oracle exemplars")
        y.setflags(write=False)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "num_classes", K)
        self._by_class.update(groups)

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    @property
    def per_class(self) -> int | None:
        return len(self._by_class[0]) if self.labeled else None

    def class_indices(self, k: int) -> np.ndarray:
        if not self.labeled:
            raise DatasetError("unlabeled oracle pool has no classes")
        if k not in self._by_class:
            raise DatasetError(f"no oracle exemplars for class {k}")
        return self._by_class[k]

    @property
    def entries(self) -> dict[int, np.ndarray]:
        return {k: self.features[idx] for k, idx in self._by_class.items()}

    @classmethod
    def from_dataset(cls, data: LabeledDataset, per_class: int | None = None,
                     labeled: bool = True, num_classes: int | None = None) -> "OracleSet":
        """Take the first ``per_class`` ID rows of each class (all rows if None)."""
        id_rows = np.flatnonzero(~data.ood)
        if not labeled:
            rows = id_rows if per_class is None else id_rows[: per_class * (num_classes or data.num_classes)]
            return cls(data.features[rows], tuple(data.ids[i] for i in rows))
        K = num_classes or data.num_classes
        chosen = []
        for k in range(K):
            rows = id_rows[data.labels[id_rows] == k]
            if per_class is not None:
                if len(rows) < per_class:
                    raise DatasetError(f"class {k} has {len(rows)} exemplars, need {per_class}")
                rows = rows[:per_class]
            chosen.append(rows)
        rows = np.concatenate(chosen)
        return cls(data.features[rows], tuple(data.ids[i] for i in rows), data.labels[rows], K)
