"""The perturb-and-compare detector.

For a target ``x_t`` predicted as class ``k`` the detector mixes ``x_t`` and
the class-``k`` oracle exemplars with the same auxiliary samples at the same
ratios, scores the perturbed target and the averaged perturbed oracle
outputs, and averages the score differences.  Oracle-side outputs do not
depend on the target and are computed once per auxiliary set
(:class:`OracleCache`).
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .backend import LinearSoftmaxModel, grad_input
from .core import (
    AccessLevel,
    AuxStrategy,
    LabeledDataset,
    MixDiffConfig,
    OracleSelection,
    OracleSet,
)
from .errors import BackendError, EngineError, MixDiffError
from .perturb import mix_grid
from .scoring import ScoreFn, softmax

log = logging.getLogger(__name__)

AUX_STREAM = 1
ORACLE_STREAM = 2


def stream_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator keyed by ``(seed, *keys)``; independent of call order."""
    if seed < 0:
        raise EngineError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


class Forward:
    """The function ``f`` the detector perturbs around.

    At input levels mixing happens in input space and ``f`` is the backend.
    At the embedding level inputs are first mapped to embeddings by the
    backend, mixing happens there, and ``f`` is a linear head on top.
    """

    def __init__(self, backend, cfg: MixDiffConfig, head: LinearSoftmaxModel | None = None):
        self.backend = backend
        self.level = cfg.access_level
        if self.level not in backend.levels:
            raise EngineError(f"backend does not expose {self.level.value} outputs")
        if self.level is AccessLevel.EMBEDDINGS:
            head = head if head is not None else getattr(backend, "model", None)
            if head is None:
                raise EngineError("embedding access needs a linear head model")
        self.head = head

    @property
    def native_level(self) -> AccessLevel:
        return AccessLevel.LOGITS if self.level is AccessLevel.EMBEDDINGS else self.level

    @property
    def num_classes(self) -> int:
        return self.head.num_classes if self.head is not None else self.backend.num_classes

    def embed(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.level is AccessLevel.EMBEDDINGS:
            return self.backend.predict_array(X, AccessLevel.EMBEDDINGS)
        return X

    def outputs(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        lead = Z.shape[:-1]
        flat = Z.reshape(-1, Z.shape[-1])
        if self.level is AccessLevel.EMBEDDINGS:
            out = self.head.logits(flat)
        else:
            out = self.backend.predict_array(flat, self.level)
        return out.reshape(*lead, out.shape[-1])


def _score_fn(cfg: MixDiffConfig, fwd: Forward) -> ScoreFn | None:
    if fwd.level is AccessLevel.LABELS:
        return None
    fn = ScoreFn(cfg.base_score, cfg.mcm_temperature)
    fn.check(fwd.native_level)
    return fn


@dataclass(frozen=True)
class OracleCache:
    """Perturbed oracle outputs for one auxiliary set and ratio grid.

    ``sample_outputs[p, i, r]`` is the output for pool row ``p`` mixed with
    auxiliary ``i`` at ratio ``r``; ``means[k]`` / ``scores[k]`` hold the
    class-``k`` averages (``scores`` is empty at the label level, where the
    mean of one-hot outputs is a per-class frequency).  When
    ``aux_pool_rows[i]`` is set, that pool row is left out of the average for
    auxiliary ``i`` so no exemplar is compared against a mixture with itself.
    A ``preselected`` cache holds one group that serves every predicted class.
    """

    aux: np.ndarray
    aux_ids: tuple[str, ...]
    ratios: tuple[float, ...]
    level: AccessLevel
    sample_outputs: np.ndarray
    pool_outputs: np.ndarray
    pool_ids: tuple[str, ...]
    groups: dict
    score_fn: ScoreFn | None
    aux_pool_rows: tuple[int, ...] | None = None
    preselected: bool = False
    means: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)

    @property
    def num_aux(self) -> int:
        return self.aux.shape[0]

    def mean_output(self, rows) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        if self.aux_pool_rows is None:
            return self.sample_outputs[rows].mean(axis=0)
        N = self.num_aux
        out = np.empty(self.sample_outputs.shape[1:])
        for i in range(N):
            keep = rows[rows != self.aux_pool_rows[i]]
            if keep.size == 0:
                raise EngineError("oracle-as-aux needs at least two exemplars per class")
            out[i] = self.sample_outputs[keep, i].mean(axis=0)
        return out

    def score_mean(self, mean: np.ndarray) -> np.ndarray | None:
        if self.score_fn is None:
            return None
        N, R, C = mean.shape
        return self.score_fn.batch(mean.reshape(-1, C), self.level).reshape(N, R)

    def group(self, k: int) -> tuple[np.ndarray, np.ndarray | None]:
        if self.preselected and len(self.means) == 1:
            k = next(iter(self.means))
        if k not in self.means:
            raise EngineError(f"no oracle exemplars for class {k}")
        return self.means[k], self.scores.get(k)

    def matches(self, aux, ratios) -> bool:
        aux = np.asarray(aux, dtype=np.float64)
        return (aux.shape == self.aux.shape and np.array_equal(aux, self.aux)
                and tuple(float(r) for r in ratios) == self.ratios)


def build_oracle_cache(backend, oracles, aux, cfg: MixDiffConfig, *, head=None,
                       aux_ids: Sequence[str] | None = None,
                       aux_pool_rows: Sequence[int] | None = None,
                       forward: Forward | None = None) -> OracleCache:
    """Mix every oracle exemplar with every auxiliary at every ratio and average per class.

    ``oracles`` is an :class:`OracleSet` or an ``(M, d)`` array of already
    selected exemplars (stored as group 0 and used whatever the target's
    predicted class).  ``aux`` is given in input space.
    """
    fwd = forward or Forward(backend, cfg, head)
    fn = _score_fn(cfg, fwd)
    if isinstance(oracles, OracleSet):
        pool = oracles.features
        pool_ids = oracles.ids
        groups = {k: oracles.class_indices(k) for k in range(oracles.num_classes)} if oracles.labeled else {}
    else:
        pool = np.asarray(oracles, dtype=np.float64)
        if pool.ndim != 2 or pool.shape[0] == 0:
            raise EngineError("need a non-empty 2-D array of oracle exemplars")
        pool_ids = tuple(str(i) for i in range(pool.shape[0]))
        groups = {0: np.arange(pool.shape[0])}
    A = np.asarray(aux, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] == 0:
        raise EngineError("no auxiliary samples")
    if A.shape[1] != pool.shape[1]:
        raise EngineError(f"auxiliary dimension {A.shape[1]} != oracle dimension {pool.shape[1]}")
    ratios = tuple(float(r) for r in cfg.ratios)
    Zp = fwd.embed(pool)
    Za = np.array(fwd.embed(A), dtype=np.float64)
    try:
        sample_outputs = fwd.outputs(mix_grid(Zp, Za, ratios))
        pool_outputs = fwd.outputs(Zp)
    except MixDiffError as exc:
        raise type(exc)(f"oracle-side forward pass failed: {exc}") from exc
    Za.setflags(write=False)
    cache = OracleCache(
        aux=Za,
        aux_ids=tuple(aux_ids) if aux_ids is not None else tuple(str(i) for i in range(len(A))),
        ratios=ratios,
        level=fwd.native_level,
        sample_outputs=sample_outputs,
        pool_outputs=pool_outputs,
        pool_ids=pool_ids,
        groups=groups,
        score_fn=fn,
        aux_pool_rows=tuple(int(r) for r in aux_pool_rows) if aux_pool_rows is not None else None,
        preselected=not isinstance(oracles, OracleSet),
    )
    for k, rows in groups.items():
        mean = cache.mean_output(rows)
        cache.means[k] = mean
        if fn is not None:
            cache.scores[k] = cache.score_mean(mean)
    return cache


@dataclass
class MixDiffResult:
    target_id: str
    predicted_class: int
    base_score: float | None
    mixdiff_score: float
    final_score: float
    is_ood: bool | None = None
    terms: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_json(self) -> dict:
        return {
            "id": self.target_id,
            "ood": self.is_ood,
            "predicted_class": self.predicted_class,
            "base_score": self.base_score,
            "mixdiff_score": self.mixdiff_score,
            "final_score": self.final_score,
        }


def _target_probs(fwd: Forward, outputs: np.ndarray) -> np.ndarray:
    level = fwd.native_level
    if level is AccessLevel.LABELS:
        raise EngineError("unlabeled top-M selection needs probability outputs, not labels")
    return outputs if level is AccessLevel.PROBS else softmax(outputs)


def select_oracles(oracles: OracleSet, target_out, cfg: MixDiffConfig, *, pool_outputs=None,
                   target_index: int = 0, seed: int = 0, level: AccessLevel | None = None) -> np.ndarray:
    """Pool row indices of the oracle exemplars to compare a target against.

    ``target_out`` is the target's output vector (logits, probabilities or a
    one-hot label).  ``pool_outputs`` (probabilities or logits of every pool
    row at ``level``) is needed for unlabeled top-M selection.
    """
    target_out = np.asarray(getattr(target_out, "values", target_out), dtype=np.float64)
    sel = cfg.oracle_selection
    if sel is OracleSelection.BY_PREDICTED_LABEL:
        if not oracles.labeled:
            raise EngineError("selection by predicted label needs a labeled oracle set")
        k = int(np.argmax(target_out))
        if k >= oracles.num_classes:
            raise EngineError(f"no oracle exemplars for class {k}")
        return oracles.class_indices(k)
    M = cfg.oracle_size
    P = oracles.features.shape[0]
    if M > P:
        raise EngineError(f"oracle pool has {P} samples, cannot select {M}")
    if sel is OracleSelection.RANDOM_ORACLE:
        rng = stream_rng(seed, ORACLE_STREAM, target_index)
        return np.sort(rng.choice(P, size=M, replace=False))
    if pool_outputs is None:
        raise EngineError("unlabeled top-M selection needs the pool's outputs")
    level = AccessLevel.PROBS if level is None else AccessLevel(level)
    if level is AccessLevel.LABELS:
        raise EngineError("unlabeled top-M selection needs probability outputs, not labels")
    to_p = (lambda v: v) if level is AccessLevel.PROBS else softmax
    sims = to_p(np.asarray(pool_outputs, dtype=np.float64)) @ to_p(target_out)
    order = sorted(range(P), key=lambda p: (-sims[p], oracles.ids[p]))
    return np.array(order[:M], dtype=np.int64)


def _score_group(fwd: Forward, X, cache: OracleCache, cfg: MixDiffConfig, *, ids, is_ood,
                 target_indices, exclude, oracles: OracleSet | None, seed: int,
                 keep_terms: bool = False) -> list[MixDiffResult]:
    """Score a group of targets that share ``cache``.

    ``exclude[t]`` is an auxiliary index to drop for target ``t`` (its own
    slot under in-batch auxiliaries) or ``None``.
    """
    X = np.asarray(X, dtype=np.float64)
    Zt = fwd.embed(X)
    T = Zt.shape[0]
    N, R = cache.num_aux, len(cache.ratios)
    base_out = fwd.outputs(Zt)
    mixed = fwd.outputs(mix_grid(Zt, cache.aux, cache.ratios))  # (T, N, R, C)
    fn = cache.score_fn
    label_mode = fn is None
    if label_mode and not cfg.compare_enabled:
        raise EngineError("label access has no score to use without the comparison")
    base_scores = None if label_mode else fn.batch(base_out, cache.level)
    results = []
    for t in range(T):
        if cfg.oracle_selection is OracleSelection.BY_PREDICTED_LABEL:
            k = int(np.argmax(base_out[t]))
            mean, oscores = cache.group(k)
        else:
            k = int(np.argmax(base_out[t]))
            rows = select_oracles(oracles, base_out[t], cfg, pool_outputs=cache.pool_outputs,
                                  target_index=target_indices[t], seed=seed, level=cache.level)
            mean = cache.mean_output(rows)
            oscores = cache.score_mean(mean)
        keep = np.ones(N, dtype=bool)
        if exclude[t] is not None:
            keep[exclude[t]] = False
        if not keep.any():
            raise EngineError(f"target {ids[t]} has no auxiliary samples")
        if label_mode:
            k_ir = np.argmax(mixed[t], axis=-1)  # (N, R)
            freq = np.take_along_axis(mean, k_ir[..., None], axis=-1)[..., 0]
            terms = 1.0 - freq
        else:
            s = fn.batch(mixed[t].reshape(N * R, -1), cache.level).reshape(N, R)
            terms = s - oscores if cfg.compare_enabled else s
        mixdiff = float(terms[keep].mean())
        if label_mode:
            base = None
            final = mixdiff
        else:
            base = float(base_scores[t])
            final = mixdiff if cfg.mixdiff_only else base + cfg.gamma * mixdiff
        results.append(MixDiffResult(
            target_id=str(ids[t]),
            predicted_class=k,
            base_score=base,
            mixdiff_score=mixdiff,
            final_score=final,
            is_ood=None if is_ood is None else bool(is_ood[t]),
            terms=terms[keep] if keep_terms else None,
        ))
    return results


def mixdiff_score(backend, target, cache: OracleCache, aux, cfg: MixDiffConfig, *, head=None,
                  target_id: str = "target", is_ood: bool | None = None, exclude_aux: int | None = None,
                  oracles: OracleSet | None = None, target_index: int = 0, seed: int = 0) -> MixDiffResult:
    """Score one target against a prebuilt oracle cache.

    ``aux`` must be the auxiliary set (input space) the cache was built with.
    """
    fwd = Forward(backend, cfg, head)
    if cache.aux_pool_rows is None and not cache.matches(fwd.embed(np.asarray(aux, dtype=np.float64)), cfg.ratios):
        raise EngineError("oracle cache was built with a different auxiliary set or ratio grid")
    if cache.aux_pool_rows is not None and tuple(float(r) for r in cfg.ratios) != cache.ratios:
        raise EngineError("oracle cache was built with a different ratio grid")
    if cfg.oracle_selection is not OracleSelection.BY_PREDICTED_LABEL and oracles is None:
        raise EngineError("per-target oracle selection needs the oracle set")
    X = np.asarray(target, dtype=np.float64)[None, :]
    return _score_group(fwd, X, cache, cfg, ids=[target_id], is_ood=None if is_ood is None else [is_ood],
                        target_indices=[target_index], exclude=[exclude_aux], oracles=oracles,
                        seed=seed, keep_terms=True)[0]


def _check_run(backend, targets: LabeledDataset, oracles: OracleSet, cfg: MixDiffConfig,
               aux_pool, fwd: Forward) -> None:
    n = len(targets)
    if n == 0:
        raise EngineError("no targets")
    if targets.dim != oracles.features.shape[1]:
        raise EngineError(f"target dimension {targets.dim} != oracle dimension {oracles.features.shape[1]}")
    strategy = cfg.aux_strategy
    if strategy is AuxStrategy.IN_BATCH and n < 2:
        raise EngineError("in-batch auxiliaries need at least two targets")
    if strategy is AuxStrategy.ORACLE_AS_AUX:
        if not oracles.labeled:
            raise EngineError("oracle-as-aux needs a labeled oracle set")
        if oracles.per_class < 2:
            raise EngineError("oracle-as-aux needs at least two exemplars per class")
        if cfg.oracle_selection is not OracleSelection.BY_PREDICTED_LABEL:
            raise EngineError("oracle-as-aux needs selection by predicted label")
    if strategy is AuxStrategy.RANDOM_ID:
        pool = oracles.features if aux_pool is None else np.asarray(aux_pool)
        if pool.shape[0] < cfg.num_aux:
            raise EngineError(f"random-ID pool has {pool.shape[0]} samples, need {cfg.num_aux}")
    sel = cfg.oracle_selection
    if sel is OracleSelection.BY_PREDICTED_LABEL:
        if not oracles.labeled:
            raise EngineError("selection by predicted label needs a labeled oracle set")
        if oracles.num_classes < fwd.num_classes:
            raise EngineError(f"no oracle exemplars for class {oracles.num_classes}")
    elif sel is OracleSelection.UNLABELED_TOP_M and fwd.native_level is AccessLevel.LABELS:
        raise EngineError("unlabeled top-M selection needs probability outputs, not labels")
    elif oracles.features.shape[0] < cfg.oracle_size:
        raise EngineError(f"oracle pool has {oracles.features.shape[0]} samples, cannot select {cfg.oracle_size}")
    if fwd.level is AccessLevel.LABELS and not cfg.compare_enabled:
        raise EngineError("label access has no score to use without the comparison")
    if fwd.level is not AccessLevel.LABELS:
        ScoreFn(cfg.base_score, cfg.mcm_temperature).check(fwd.native_level)


def in_batch_chunks(n: int, batch_size: int) -> list[range]:
    """Consecutive target batches; a trailing singleton joins the previous batch."""
    chunks = [range(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        last = chunks.pop()
        chunks[-1] = range(chunks[-1].start, last.stop)
    return chunks


def random_aux(pool, num_aux: int, seed: int, pool_ids=None):
    pool = np.asarray(pool, dtype=np.float64)
    rng = stream_rng(seed, AUX_STREAM)
    rows = np.sort(rng.choice(pool.shape[0], size=num_aux, replace=False))
    ids = [str(pool_ids[r]) if pool_ids is not None else f"aux{r}" for r in rows]
    return pool[rows], ids


def run_detection(backend, targets: LabeledDataset, oracles: OracleSet, cfg: MixDiffConfig,
                  seed: int = 0, *, aux_pool=None, aux_pool_ids=None, head=None, jobs: int = 1,
                  group_size: int = 256) -> list[MixDiffResult]:
    """Score every target; results come back in dataset order.

    Auxiliary sets: ``in_batch`` uses the other members of consecutive
    batches of ``num_aux + 1`` targets; ``random_id`` draws ``num_aux``
    samples once from ``aux_pool`` (default: the oracle pool) with the run
    seed; ``oracle_as_aux`` uses exemplars ``1..M-1`` of the predicted class.
    """
    fwd = Forward(backend, cfg, head)
    _check_run(backend, targets, oracles, cfg, aux_pool, fwd)
    n = len(targets)
    X = targets.features
    strategy = cfg.aux_strategy

    def score(rows, cache, exclude=None):
        rows = list(rows)
        return _score_group(
            fwd, X[rows], cache, cfg,
            ids=[targets.ids[r] for r in rows],
            is_ood=targets.ood[rows],
            target_indices=rows,
            exclude=exclude or [None] * len(rows),
            oracles=oracles,
            seed=seed,
        )

    def groups_of(rows):
        rows = list(rows)
        return [rows[s:s + group_size] for s in range(0, len(rows), group_size)]

    if strategy is AuxStrategy.RANDOM_ID:
        pool = oracles.features if aux_pool is None else aux_pool
        pool_ids = oracles.ids if aux_pool is None else aux_pool_ids
        A, A_ids = random_aux(pool, cfg.num_aux, seed, pool_ids)
        cache = build_oracle_cache(backend, oracles, A, cfg, aux_ids=A_ids, forward=fwd)
        work = [(g, cache, None) for g in groups_of(range(n))]
    elif strategy is AuxStrategy.IN_BATCH:
        work = []
        for chunk in in_batch_chunks(n, cfg.num_aux + 1):
            rows = list(chunk)
            cache = build_oracle_cache(backend, oracles, X[rows], cfg,
                                       aux_ids=[targets.ids[r] for r in rows], forward=fwd)
            work.append((rows, cache, list(range(len(rows)))))
    else:
        work = _oracle_as_aux_work(backend, fwd, X, oracles, cfg)

    def run(item):
        rows, cache, exclude = item
        return score(rows, cache, exclude)

    if jobs > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            parts = list(pool_exec.map(run, work))
    else:
        parts = [run(item) for item in work]
    by_row: dict[int, MixDiffResult] = {}
    for (rows, _, _), part in zip(work, parts):
        by_row.update(zip(rows, part))
    return [by_row[r] for r in range(n)]


def _oracle_as_aux_work(backend, fwd: Forward, X, oracles: OracleSet, cfg: MixDiffConfig):
    # Aux sets depend on the predicted class, so targets are grouped by it first.
    pred = np.argmax(fwd.outputs(fwd.embed(X)), axis=1)
    work = []
    for k in range(oracles.num_classes):
        rows = np.flatnonzero(pred == k).tolist()
        if not rows:
            continue
        cache = oracle_as_aux_cache(backend, oracles, k, cfg, forward=fwd)
        work.append((rows, cache, None))
    return work


def oracle_as_aux_cache(backend, oracles: OracleSet, k: int, cfg: MixDiffConfig, *, head=None,
                        forward: Forward | None = None) -> OracleCache:
    """Cache for class ``k`` whose auxiliaries are exemplars ``1..M-1`` of that class."""
    idx = oracles.class_indices(k)
    if len(idx) < 2:
        raise EngineError("oracle-as-aux needs at least two exemplars per class")
    cache = build_oracle_cache(
        backend, oracles.features[idx], oracles.features[idx[1:]],
        cfg.replace(oracle_selection=OracleSelection.BY_PREDICTED_LABEL),
        head=head, aux_ids=[oracles.ids[i] for i in idx[1:]],
        aux_pool_rows=range(1, len(idx)), forward=forward,
    )
    cache = dataclasses.replace(cache, preselected=False)
    cache.means[k] = cache.means.pop(0)
    if cache.scores:
        cache.scores[k] = cache.scores.pop(0)
    cache.groups.clear()
    cache.groups[k] = np.arange(len(idx))
    return cache


# ---------------------------------------------------------------------------
# Adversarial perturbation


def pgd_attack(model, x, is_id, eps: float, steps: int, step_size: float) -> np.ndarray:
    """L-infinity PGD on the detector's inputs.

    ID inputs descend the cross entropy to the uniform distribution (pushing
    them toward uncertainty); OOD inputs descend the prediction entropy
    (pushing them toward confidence).  Each step moves by ``step_size`` along
    the gradient sign and projects back into the ``eps`` ball around ``x``.
    Accepts a single vector or a batch with a per-row ``is_id`` mask.
    """
    if getattr(model, "remote", False):
        raise BackendError("gradients unavailable")
    model = getattr(model, "model", model)
    if not isinstance(model, LinearSoftmaxModel):
        raise EngineError("PGD needs a local differentiable model")
    if eps < 0 or step_size < 0 or steps < 0:
        raise EngineError("eps, steps and step_size must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    id_mask = np.broadcast_to(np.asarray(is_id, dtype=bool).reshape(-1), (X.shape[0],))
    lo, hi = X - eps, X + eps
    adv = X.copy()
    for _ in range(steps):
        g = np.where(id_mask[:, None], grad_input(model, adv, "ce_uniform"), grad_input(model, adv, "entropy"))
        adv = np.clip(adv - step_size * np.sign(g), lo, hi)
    return adv[0] if single else adv


def attack_dataset(model, data: LabeledDataset, mode: str, eps: float, steps: int,
                   step_size: float) -> LabeledDataset:
    """Copy of ``data`` with ID rows (``in``), OOD rows (``out``) or both attacked."""
    if mode not in ("in", "out", "both"):
        raise EngineError(f"unknown attack mode {mode!r}")
    chosen = {"in": ~data.ood, "out": data.ood, "both": np.ones(len(data), dtype=bool)}[mode]
    X = data.features.copy()
    rows = np.flatnonzero(chosen)
    if rows.size:
        X[rows] = pgd_attack(model, X[rows], ~data.ood[rows], eps, steps, step_size)
    return LabeledDataset(data.ids, X, data.labels, data.ood, data.label_names)


__all__ = [
    "Forward",
    "MixDiffResult",
    "OracleCache",
    "attack_dataset",
    "build_oracle_cache",
    "in_batch_chunks",
    "mixdiff_score",
    "oracle_as_aux_cache",
    "pgd_attack",
    "run_detection",
    "select_oracles",
    "stream_rng",
]
