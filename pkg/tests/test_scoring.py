import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mixdiff.core import AccessLevel, BaseScore, ModelOutput
from mixdiff.errors import ScoringError
from mixdiff.scoring import ScoreFn, score, softmax

LOGITS, PROBS = AccessLevel.LOGITS, AccessLevel.PROBS


def test_reference_values():
    assert score(ScoreFn(BaseScore.ENTROPY), ModelOutput(PROBS, [0.5, 0.5])) == pytest.approx(math.log(2), abs=1e-15)
    assert score(ScoreFn(BaseScore.MSP), ModelOutput(PROBS, [0.25] * 4)) == -0.25
    assert score(ScoreFn(BaseScore.MLS), ModelOutput(LOGITS, [2.0, -1.0, 0.5])) == -2.0
    assert score(ScoreFn(BaseScore.ENERGY), ModelOutput(LOGITS, [0.0, 0.0, 0.0])) == pytest.approx(-math.log(3), abs=1e-15)


def test_mcm_temperature_identity():
    mcm = score(ScoreFn(BaseScore.MCM, temperature=2.0), ModelOutput(LOGITS, [2.0, 0.0]))
    msp = score(ScoreFn(BaseScore.MSP), ModelOutput(LOGITS, [1.0, 0.0]))
    assert mcm == pytest.approx(msp, abs=1e-15)


def test_mcm_on_probs_falls_back_with_warning():
    with pytest.warns(UserWarning, match="MCM"):
        got = score(ScoreFn(BaseScore.MCM, 3.0), ModelOutput(PROBS, [0.2, 0.8]))
    assert got == -0.8


@pytest.mark.parametrize("kind", [BaseScore.MLS, BaseScore.ENERGY])
def test_logit_only_scores_reject_probs(kind):
    with pytest.raises(ScoringError):
        score(ScoreFn(kind), ModelOutput(PROBS, [0.5, 0.5]))


@pytest.mark.parametrize("kind", list(BaseScore))
def test_labels_rejected(kind):
    with pytest.raises(ScoringError):
        score(ScoreFn(kind), ModelOutput(AccessLevel.LABELS, [0.0, 1.0]))


def test_softmax_examples():
    assert softmax([0.0, 0.0]).tolist() == [0.5, 0.5]
    big = softmax([1000.0, 0.0])
    assert big[0] == pytest.approx(1.0) and big[1] >= 0 and np.all(np.isfinite(big))
    with pytest.raises(ScoringError):
        softmax([])


def test_softmax_matches_extended_precision():
    import mpmath
    mpmath.mp.dps = 50
    e = [mpmath.e ** v for v in (1, 2, 3)]
    ref = [float(v / sum(e)) for v in e]
    assert np.allclose(softmax([1.0, 2.0, 3.0]), ref, rtol=1e-15, atol=0)


finite = st.floats(-30, 30, allow_nan=False)


@given(st.lists(finite, min_size=2, max_size=6), st.floats(-50, 50))
def test_shift_behaviour(logits, c):
    base = np.array(logits)
    shifted = base + c
    for kind in (BaseScore.MSP, BaseScore.ENTROPY, BaseScore.MCM):
        fn = ScoreFn(kind)
        assert fn(ModelOutput(LOGITS, shifted)) == pytest.approx(fn(ModelOutput(LOGITS, base)), abs=1e-9)
    for kind in (BaseScore.MLS, BaseScore.ENERGY):
        fn = ScoreFn(kind)
        assert fn(ModelOutput(LOGITS, shifted)) == pytest.approx(fn(ModelOutput(LOGITS, base)) - c, abs=1e-9)


@given(st.floats(0.5, 0.999), st.floats(0.0005, 0.0005))
def test_binary_monotonicity(p, dp):
    q = min(p + dp, 0.9999)
    for kind in (BaseScore.MSP, BaseScore.ENTROPY):
        fn = ScoreFn(kind)
        assert fn(ModelOutput(PROBS, [q, 1 - q])) < fn(ModelOutput(PROBS, [p, 1 - p]))


@pytest.mark.parametrize("kind", list(BaseScore))
def test_confident_scores_lower_than_uniform(kind):
    fn = ScoreFn(kind)
    assert fn(ModelOutput(LOGITS, [20.0, 0.0, 0.0])) < fn(ModelOutput(LOGITS, [0.0, 0.0, 0.0]))
    if fn.accepts(PROBS):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert fn(ModelOutput(PROBS, [1.0, 0.0, 0.0])) < fn(ModelOutput(PROBS, [1 / 3] * 3))


def test_entropy_zero_probability_terms():
    assert score(ScoreFn(BaseScore.ENTROPY), ModelOutput(PROBS, [1.0, 0.0])) == 0.0


def test_batch_matches_scalar(rng):
    V = rng.normal(size=(20, 4)) * 5
    for kind in BaseScore:
        fn = ScoreFn(kind, 1.7)
        got = fn.batch(V, LOGITS)
        want = [fn(ModelOutput(LOGITS, v)) for v in V]
        assert np.array_equal(got, want)


def test_non_finite_output_rejected():
    with pytest.raises(ScoringError):
        ScoreFn(BaseScore.MSP).batch(np.array([[np.nan, 0.0]]), LOGITS)
