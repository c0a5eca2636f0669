"""Second-order analysis of Mixup on a binary linear classifier.

A two-class ``LinearSoftmaxModel`` collapses to the scalar margin
``f(x) = w.x + b`` with ``w = W[1] - W[0]``; ``sigma(f)`` is the class-1
probability.  For a score ``h`` on that margin, mixing ``x_t`` with ``x_i`` at
ratio ``lam`` expands as

    h(f(x_mix)) ~= h(f(x_t)) + omega1 + omega2 + omega3

with ``u = (x_t - x_i).w`` and

    omega1 = (lam - 1) * u * h'(f(x_t))
    omega2 = 0                              (f is linear)
    omega3 = (lam - 1)**2 / 2 * u**2 * h''(f(x_t))

The binary scores here are MSP ``-max(sigma, 1 - sigma)``, the entropy of
``(sigma, 1 - sigma)`` and MLS taken as ``-f``.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .backend import LinearSoftmaxModel, fit_logistic
from .core import BaseScore, LabeledDataset
from .errors import TheoryError
from .scoring import ScoreFn
from .synthetic import SyntheticSpec, default_theory_spec, sample_synthetic

SUPPORTED = (BaseScore.MSP, BaseScore.ENTROPY, BaseScore.MLS)
DEFAULT_DECAY_LAMBDAS = (0.999, 0.998, 0.996, 0.992, 0.984)
SHRINK_LAMBDAS = (0.99, 0.9, 0.7, 0.5)
DECAY_SLACK = 10.0


def _kind(h) -> BaseScore:
    kind = h.kind if isinstance(h, ScoreFn) else BaseScore(h)
    if kind not in SUPPORTED:
        raise TheoryError(f"derivatives not implemented for {kind.value}")
    return kind


@dataclass(frozen=True)
class BinaryMargin:
    w: np.ndarray
    b: float

    def __call__(self, X) -> np.ndarray | float:
        X = np.asarray(X, dtype=np.float64)
        return X @ self.w + self.b


def binary_margin(model: LinearSoftmaxModel) -> BinaryMargin:
    if model.num_classes != 2:
        raise TheoryError(f"the margin analysis needs a binary model, got K={model.num_classes}")
    return BinaryMargin(model.W[1] - model.W[0], float(model.b[1] - model.b[0]))


def sigmoid_derivs(f):
    s = expit(f)
    d1 = s * (1.0 - s)
    return s, d1, d1 * (1.0 - 2.0 * s)


def score_on_margin(h, f):
    """Binary score as a function of the margin."""
    kind = _kind(h)
    f = np.asarray(f, dtype=np.float64)
    if kind is BaseScore.MLS:
        return -f
    if kind is BaseScore.MSP:
        return -expit(np.abs(f))
    p = expit(f)
    q = expit(-f)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -(np.where(p > 0, p * np.log(p), 0.0) + np.where(q > 0, q * np.log(q), 0.0))
    return ent


def score_derivs(h, f) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ``h'(f)`` and ``h''(f)``."""
    kind = _kind(h)
    f = np.asarray(f, dtype=np.float64)
    if kind is BaseScore.MLS:
        return -np.ones_like(f), np.zeros_like(f)
    _, d1, d2 = sigmoid_derivs(f)
    if kind is BaseScore.MSP:
        sign = np.where(f > 0, -1.0, 1.0)
        return sign * d1, sign * d2
    # entropy: H'(f) = -f s', H''(f) = -s' - f s''
    return -f * d1, -d1 - f * d2


@dataclass(frozen=True)
class OmegaTerms:
    omega1: float
    omega2: float
    omega3: float
    lam: float
    base_score: float
    approx: float
    exact: float
    residual: float


def _check_lambda(lam) -> None:
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam <= 0) or np.any(lam >= 1):
        raise TheoryError("lambda must lie in (0, 1)")


def _omega_arrays(margin: BinaryMargin, h, Xt, Xi, lam):
    """Vectorized expansion over broadcastable targets, auxiliaries and ratios."""
    Xt = np.asarray(Xt, dtype=np.float64)
    Xi = np.asarray(Xi, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    ft = margin(Xt)
    u = (Xt - Xi) @ margin.w
    d1, d2 = score_derivs(h, ft)
    base = score_on_margin(h, ft)
    step = (lam - 1.0) * u
    w1 = step * d1
    w2 = np.zeros_like(w1)
    w3 = (lam - 1.0) ** 2 / 2.0 * u**2 * d2
    approx = base + w1 + w2 + w3
    # margin of the mixed sample lam*x_t + (1-lam)*x_i, written as a step from x_t
    exact = score_on_margin(h, ft + step)
    return w1, w2, w3, base, approx, exact


def omega_terms(model: LinearSoftmaxModel, h, x_t, x_i, lam: float) -> OmegaTerms:
    margin = binary_margin(model)
    _kind(h)
    _check_lambda(lam)
    x_t = np.asarray(x_t, dtype=np.float64)
    x_i = np.asarray(x_i, dtype=np.float64)
    if x_t.shape != (model.dim,) or x_i.shape != (model.dim,):
        raise TheoryError(f"expected {model.dim}-dimensional inputs")
    w1, w2, w3, base, approx, exact = (float(v) for v in _omega_arrays(margin, h, x_t, x_i, lam))
    return OmegaTerms(w1, w2, w3, float(lam), base, approx, exact, exact - approx)


def residuals(model: LinearSoftmaxModel, h, X_t, X_i, lambdas) -> np.ndarray:
    """Residuals ``exact - approx`` with shape ``(n_pairs, n_lambdas)``."""
    margin = binary_margin(model)
    _check_lambda(lambdas)
    X_t = np.asarray(X_t, dtype=np.float64)
    X_i = np.asarray(X_i, dtype=np.float64)
    lam = np.asarray(lambdas, dtype=np.float64)[None, :]
    *_, approx, exact = _omega_arrays(margin, h, X_t[:, None, :], X_i[:, None, :], lam)
    return exact - approx


@dataclass
class DecayReport:
    score: str
    lambdas: list[float]
    max_abs_residual: list[float]
    constant: float
    slack: float
    pair_pass: np.ndarray
    residuals: np.ndarray = field(repr=False)

    @property
    def pass_fraction(self) -> float:
        return float(np.mean(self.pair_pass)) if self.pair_pass.size else 1.0

    @property
    def passed(self) -> bool:
        return bool(np.all(self.pair_pass))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["lambda", "max_abs_residual"])
        for lam, r in zip(self.lambdas, self.max_abs_residual):
            wr.writerow([repr(lam), repr(r)])
        return buf.getvalue()


def verify_taylor_decay(model: LinearSoftmaxModel, h, pairs, lambdas=DEFAULT_DECAY_LAMBDAS,
                        slack: float = DECAY_SLACK) -> DecayReport:
    """Check ``|residual(lam)| <= C (1 - lam)**2`` for every pair.

    ``C`` is the largest ``|residual| / (1 - lam)**2`` seen at the two ratios
    closest to 1, multiplied by ``slack``; it is fitted once over all pairs.
    """
    kind = _kind(h)
    lambdas = sorted((float(v) for v in lambdas), reverse=True)
    if len(lambdas) < 2:
        raise TheoryError("decay check needs at least two ratios")
    pairs = list(pairs)
    if not pairs:
        raise TheoryError("decay check needs at least one pair")
    X_t = np.array([p[0] for p in pairs], dtype=np.float64)
    X_i = np.array([p[1] for p in pairs], dtype=np.float64)
    res = residuals(model, kind, X_t, X_i, lambdas)
    gap2 = (1.0 - np.asarray(lambdas)) ** 2
    constant = slack * float(np.max(np.abs(res[:, :2]) / gap2[:2]))
    pair_pass = np.all(np.abs(res) <= constant * gap2, axis=1)
    return DecayReport(kind.value, lambdas, np.max(np.abs(res), axis=0).tolist(), constant,
                       slack, pair_pass, res)


def shrinks_toward_one(res: np.ndarray) -> np.ndarray:
    """Per row, ``|residual|`` is non-increasing as the ratios (ordered far to near) approach 1."""
    a = np.abs(res)
    return np.all(np.diff(a, axis=1) <= 0, axis=1)


@dataclass
class CalibrationResult:
    """Per grid point: the MixDiff difference and whether it is positive.

    ``bound_mask`` / ``omega3_mask`` record the two sufficient conditions used
    in the MSP argument (the margin bound and ``omega3`` difference >= 0);
    they are ``None`` for other scores.  ``closed_form`` is set for MLS only.
    ``exact_values`` holds the unexpanded difference
    ``h(f(mix(x_t, x_i))) - h(f(mix(x_m, x_i)))`` for comparison.
    """

    score: str
    lam: float
    grid: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    margin_bound: float | None = None
    bound_mask: np.ndarray | None = None
    omega3_mask: np.ndarray | None = None
    closed_form: float | None = None
    exact_values: np.ndarray | None = None

    @property
    def exact_mask(self) -> np.ndarray:
        return self.exact_values > 0

    @property
    def points(self) -> np.ndarray:
        return self.grid[self.mask]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow([f"x{j}" for j in range(self.grid.shape[1])] + ["value", "qualifies"])
        for p, v, q in zip(self.grid, self.values, self.mask):
            wr.writerow([repr(float(c)) for c in p] + [repr(float(v)), int(q)])
        return buf.getvalue()


def is_hard_ood(h, f_t: float, f_m: float) -> bool:
    """Same predicted side as the oracle and a lower score than it.

    For MLS (``h = -f``) the score ordering is one-sided, so only the shared
    side is required.
    """
    if f_t == 0 or f_m == 0 or (f_t > 0) != (f_m > 0):
        return False
    if _kind(h) is BaseScore.MLS:
        return True
    return abs(f_t) > abs(f_m)


def find_calibrating_aux(model: LinearSoftmaxModel, h, x_t, x_m, lam: float, search_grid) -> CalibrationResult:
    """Grid points ``x_i`` for which the expanded MixDiff difference is positive."""
    kind = _kind(h)
    margin = binary_margin(model)
    _check_lambda(lam)
    x_t = np.asarray(x_t, dtype=np.float64)
    x_m = np.asarray(x_m, dtype=np.float64)
    grid = np.atleast_2d(np.asarray(search_grid, dtype=np.float64))
    f_t, f_m = float(margin(x_t)), float(margin(x_m))
    if not is_hard_ood(kind, f_t, f_m):
        raise TheoryError(f"target is not hard OOD relative to the oracle (f_t={f_t:.6g}, f_m={f_m:.6g})")
    t1, _, t3, tbase, _, _ = _omega_arrays(margin, kind, x_t[None, :], grid, lam)
    m1, _, m3, mbase, _, _ = _omega_arrays(margin, kind, x_m[None, :], grid, lam)
    values = (tbase - mbase) + (t1 - m1) + (t3 - m3)
    f_i = margin(grid)
    exact = (score_on_margin(kind, lam * f_t + (1.0 - lam) * f_i)
             - score_on_margin(kind, lam * f_m + (1.0 - lam) * f_i))
    result = CalibrationResult(kind.value, float(lam), grid, values, values > 0, exact_values=exact)
    if kind is BaseScore.MLS:
        result.closed_form = -lam * f_t + lam * f_m
    elif kind is BaseScore.MSP:
        # mirror to the positive side; MSP is symmetric in f
        s = 1.0 if f_t > 0 else -1.0
        ft, fm = s * f_t, s * f_m
        _, dt, _ = sigmoid_derivs(ft)
        _, dm, _ = sigmoid_derivs(fm)
        c = ft - fm
        bound = ft + (1.0 / (2.0 * (lam - 1.0)) + c * dm) / (dt - dm)
        result.margin_bound = s * bound
        result.bound_mask = s * margin(grid) >= bound
        result.omega3_mask = (t3 - m3) >= 0
    return result


def lattice(extent: float, resolution: int, dim: int = 2) -> np.ndarray:
    """Axis-aligned lattice covering ``[-extent, extent]**dim``."""
    if extent <= 0 or resolution < 2:
        raise TheoryError("lattice needs a positive extent and at least two points per axis")
    axis = np.linspace(-extent, extent, resolution)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def data_extent(data: LabeledDataset) -> float:
    return float(np.max(np.abs(data.features)))


def hard_ood_pairs(model: LinearSoftmaxModel, h, data: LabeledDataset, count: int, seed: int = 0):
    """Random (OOD target, ID oracle) index pairs satisfying the hard-OOD condition."""
    margin = binary_margin(model)
    f = margin(data.features)
    ood = np.flatnonzero(data.ood)
    ids = np.flatnonzero(~data.ood)
    cand = [(t, m) for t in ood for m in ids if is_hard_ood(h, float(f[t]), float(f[m]))]
    if len(cand) < count:
        raise TheoryError(f"only {len(cand)} hard-OOD pairs available, need {count}")
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(cand), size=count, replace=False)
    return [cand[j] for j in sorted(pick)]


@dataclass
class TheoryReport:
    checks: dict[str, bool]
    details: dict[str, float]
    decay: dict[str, DecayReport]
    lattices: dict[str, CalibrationResult]
    timings: dict[str, float]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


@dataclass(frozen=True)
class TheorySettings:
    num_pairs: int = 200
    num_hard_pairs: int = 100
    lam: float = 0.5
    extent_factor: float = 3.0
    resolution: int = 81
    tolerance: float = 1e-3
    min_fraction: float = 0.95
    epochs: int = 500
    lr: float = 0.5


def run_theory_suite(spec: SyntheticSpec | None = None, settings: TheorySettings | None = None,
                     seed: int = 0) -> TheoryReport:
    """Taylor-residual and auxiliary-existence checks on a trained binary model."""
    spec = spec or default_theory_spec()
    st = settings or TheorySettings()
    data = sample_synthetic(spec)
    if data.num_classes != 2:
        raise TheoryError(f"the margin analysis needs exactly two ID classes, got {data.num_classes}")
    timings, checks, details = {}, {}, {}
    t0 = time.perf_counter()
    model = fit_logistic(data, epochs=st.epochs, lr=st.lr)
    rng = np.random.default_rng(seed)
    n = len(data)
    a = rng.integers(0, n, st.num_pairs)
    b = rng.integers(0, n, st.num_pairs)
    pairs = list(zip(data.features[a], data.features[b]))

    decay = {}
    for kind in SUPPORTED:
        decay[kind.value] = verify_taylor_decay(model, kind, pairs)
    X_t, X_i = data.features[a], data.features[b]
    msp_far = residuals(model, BaseScore.MSP, X_t, X_i, SHRINK_LAMBDAS[::-1])
    near = np.abs(msp_far[:, -1])
    details["msp_fraction_within_tolerance"] = float(np.mean(near <= st.tolerance))
    details["msp_fraction_shrinking"] = float(np.mean(shrinks_toward_one(msp_far)))
    mls_all = residuals(model, BaseScore.MLS, X_t, X_i, SHRINK_LAMBDAS)
    details["mls_max_abs_residual"] = float(np.max(np.abs(mls_all)))
    checks["msp_residual_within_tolerance"] = details["msp_fraction_within_tolerance"] >= st.min_fraction
    checks["msp_residual_shrinks"] = details["msp_fraction_shrinking"] >= st.min_fraction
    checks["mls_residual_zero"] = details["mls_max_abs_residual"] == 0.0
    for kind, rep in decay.items():
        details[f"{kind}_decay_pass_fraction"] = rep.pass_fraction
        checks[f"{kind}_decay"] = rep.pass_fraction >= st.min_fraction
    timings["taylor"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    grid = lattice(st.extent_factor * data_extent(data), st.resolution, data.dim)
    margin = binary_margin(model)
    nonempty, exact_nonempty = [], []
    lattices = {}
    for t, m in hard_ood_pairs(model, BaseScore.MSP, data, st.num_hard_pairs, seed):
        res = find_calibrating_aux(model, BaseScore.MSP, data.features[t], data.features[m], st.lam, grid)
        nonempty.append(bool(res.mask.any()))
        exact_nonempty.append(bool(res.exact_mask.any()))
        lattices.setdefault("msp", res)
    details["msp_nonempty_fraction"] = float(np.mean(nonempty))
    details["msp_exact_nonempty_fraction"] = float(np.mean(exact_nonempty))
    checks["msp_calibrating_aux_exists"] = details["msp_nonempty_fraction"] >= st.min_fraction

    f = margin(data.features)
    mls_ok = []
    for t, m in _ordered_mls_pairs(f, data.ood, st.num_hard_pairs, seed):
        res = find_calibrating_aux(model, BaseScore.MLS, data.features[t], data.features[m], st.lam, grid)
        identity = bool(np.all(np.abs(res.values - res.closed_form) <= 1e-12 * max(1.0, abs(res.closed_form))))
        mls_ok.append(bool(res.mask.all()) and identity)
        lattices.setdefault("mls", res)
    details["mls_all_qualify_fraction"] = float(np.mean(mls_ok)) if mls_ok else 0.0
    checks["mls_all_qualify"] = bool(mls_ok) and all(mls_ok)
    timings["calibration"] = time.perf_counter() - t0
    return TheoryReport(checks, details, decay, lattices, timings)


def _ordered_mls_pairs(f: np.ndarray, ood: np.ndarray, count: int, seed: int):
    """OOD targets and ID oracles with ``f(x_m) > f(x_t) > 0``."""
    cand = [(t, m) for t in np.flatnonzero(ood & (f > 0)) for m in np.flatnonzero(~ood)
            if f[m] > f[t] > 0]
    if not cand:
        return []
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(cand), size=min(count, len(cand)), replace=False)
    return [cand[j] for j in sorted(pick)]


__all__ = [
    "BinaryMargin",
    "CalibrationResult",
    "DecayReport",
    "OmegaTerms",
    "TheoryReport",
    "TheorySettings",
    "binary_margin",
    "data_extent",
    "find_calibrating_aux",
    "hard_ood_pairs",
    "is_hard_ood",
    "lattice",
    "omega_terms",
    "residuals",
    "run_theory_suite",
    "score_derivs",
    "score_on_margin",
    "shrinks_toward_one",
    "verify_taylor_decay",
]
