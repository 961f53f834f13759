import json
import math

import jsonschema
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from framebits.complexity import analyze_sequence
from framebits.dataset import (
    DEFAULT_ORACLE_COEFFS,
    FrameCodingRecord,
    SequenceData,
    SyntheticOracleParams,
    feature_names,
    stack_corpus,
    sweep_encode,
)
from framebits.errors import (
    EmptyGop,
    InvalidConfig,
    NonPositiveBits,
    NonPositivePrediction,
    ReplayMiss,
)
from framebits.gop import cascade_qps, classify_frames
from framebits.models import ForestParams
from framebits.ratecontrol import (
    REPORT_SCHEMA,
    OracleBackend,
    RcConstants,
    ReplayBackend,
    allocate_gop,
    c_high_for_height,
    calibrate_c_low,
    compensate,
    predict_frames,
    qp_refine,
    round_half_away,
    simulate_session,
)
from framebits.synthvideo import generate_sequence
from framebits.training import fit_model


class Exact:
    """Predictor that reads the noise-free oracle, standing in for a perfect model."""

    def __init__(self, frame_type, use_chroma=True):
        self.c = DEFAULT_ORACLE_COEFFS[frame_type]
        self.feature_names = feature_names(frame_type, use_chroma)

    def predict(self, X):
        X = np.atleast_2d(X)
        col = {n: i for i, n in enumerate(self.feature_names)}
        h = sum(X[:, col[n]] for n in ("h_ref", "h_ref1", "h_ref2") if n in col)
        content = 1 + self.c.beta_E * X[:, col["E_Y"]] + \
            self.c.beta_C * (X[:, col["E_U"]] + X[:, col["E_V"]]) + self.c.beta_h * h
        return self.c.alpha * content * 2.0 ** (-(X[:, col["q"]] - 24) / self.c.gamma)


EXACT = {t: Exact(t) for t in "IPB"}


@pytest.fixture(scope="module")
def clip():
    features = analyze_sequence(generate_sequence(21, 64, 64, 97))
    return features, classify_frames(97)


def test_refine_examples():
    k = RcConstants(c_low=1.0, c_high=0.5, q_start=24)
    assert qp_refine(30, 1000, 1000, k) == (30.0, 30)
    q_bar, q_prime = qp_refine(25, 1000, 2000, k)
    assert abs(q_bar - 20.0) < 1e-12 and q_prime == 22
    q_bar, _ = qp_refine(0.5, 1000, 4000, k)
    assert abs(q_bar - (-1.5)) < 1e-12


def test_refine_clamps():
    assert qp_refine(60, 1.0, 1e-6)[1] == 63
    assert qp_refine(10, 1.0, 1e12, RcConstants(c_high=0.01))[1] == 0


def test_refine_rejects_non_positive():
    with pytest.raises(NonPositiveBits):
        qp_refine(30, 0, 10)
    with pytest.raises(NonPositiveBits):
        qp_refine(30, 10, -1)


@given(st.floats(0, 63), st.floats(1, 1e7), st.floats(1, 1e7), st.floats(1.001, 10),
       st.floats(0.1, 3), st.floats(0.01, 0.99), st.integers(0, 63))
def test_refine_properties(q, b_hat, b_prime, factor, c_low, c_high, q_start):
    k = RcConstants(c_low, c_high, q_start)
    q_bar, q_prime = qp_refine(q, b_hat, b_prime, k)
    assert qp_refine(q, b_hat, b_prime * factor, k)[0] < q_bar
    assert qp_refine(q, b_hat * factor, b_prime, k)[0] > q_bar
    if 0 <= round_half_away(q_bar) <= 63:
        assert q_prime >= round_half_away(q_bar)
        if q_bar >= q_start:
            assert q_prime == round_half_away(q_bar)


def test_round_half_away():
    assert [round_half_away(x) for x in (0.5, 1.5, 2.5, -0.5, -1.5, 2.49)] == [1, 2, 3, -1, -2, 2]


def test_constants_validation():
    for kwargs in ({"c_low": 0}, {"c_high": 1.0}, {"c_high": 0}, {"q_start": 64}):
        with pytest.raises(InvalidConfig):
            RcConstants(**kwargs)


def test_c_high_by_height():
    assert c_high_for_height(2160) == 0.5 and c_high_for_height(4320) == 0.5
    assert c_high_for_height(480) == 0.25 and c_high_for_height(240) == 0.25
    mid = c_high_for_height(1080)
    assert 0.25 < mid < 0.5
    assert mid == pytest.approx(0.25 + 0.25 * math.log2(1080 / 480) / math.log2(4.5))


def test_allocate_examples():
    assert allocate_gop(3000, [5, 5, 5]) == [1000, 1000, 1000]
    assert allocate_gop(4000, [3, 1]) == [3000, 1000]
    with pytest.raises(EmptyGop):
        allocate_gop(10, [])
    with pytest.raises(NonPositivePrediction):
        allocate_gop(10, [1, 0])


@given(st.lists(st.floats(1e-3, 1e7), min_size=1, max_size=64), st.floats(1, 1e9))
def test_allocate_conserves(preds, target):
    shares = allocate_gop(target, preds)
    assert abs(math.fsum(shares) - target) <= 1.0
    assert all(s > 0 for s in shares[:-1])


def test_compensate_examples():
    assert compensate(0, 5000) == (5000, 0)
    assert compensate(1000, 5000) == (4000, 0)
    adjusted, carry = compensate(1e6, 5000)
    assert adjusted == 500 and carry == pytest.approx(1e6 - 4500)
    assert compensate(1000, 5000, 0.5) == (4500, 0)
    with pytest.raises(InvalidConfig):
        compensate(0, 10, 0)


def test_single_frame_exact_backend():
    features = analyze_sequence(generate_sequence(2, 64, 64, 1))
    roles = classify_frames(1)

    class Echo:
        def bits(self, k, q):
            return 12345.0, False

    rep = simulate_session(features, roles, EXACT, 30 * 12345.0, 30.0, RcConstants(), Echo())
    assert rep.deviation_percent == 0.0 and rep.abs_deviation_percent == 0.0


def test_session_against_exact_oracle(clip):
    features, roles = clip
    params = SyntheticOracleParams()
    backend = OracleBackend(features, roles, params)
    first = cascade_qps(roles, 32)
    rate = sum(backend.bits(k, q)[0] for k, q in first.items()) * 30.0 / len(roles)
    rep = simulate_session(features, roles, EXACT, rate, 30.0, RcConstants(c_high=0.25),
                           backend, qp_range=(20, 50))
    assert rep.base_qp == 32
    assert rep.abs_deviation_percent < 1.0


def test_double_target_lowers_qp(clip):
    features, roles = clip
    backend = OracleBackend(features, roles, SyntheticOracleParams())
    pred = predict_frames(features, roles, EXACT, cascade_qps(roles, 32))
    rate = 2 * sum(pred.values()) * 30.0 / len(roles)
    rep = simulate_session(features, roles, EXACT, rate, 30.0, RcConstants(), backend,
                           base_qp=32)
    assert all(d.q_prime <= d.q for d in rep.decisions)


def _noisy_session(clip, per_frame=False):
    features, roles = clip
    backend = OracleBackend(features, roles, SyntheticOracleParams(epsilon=0.3, seed=1), "n")
    return simulate_session(features, roles, EXACT, 3e6, 30.0, RcConstants(c_high=0.25),
                            backend, base_qp=30, per_frame=per_frame)


@pytest.mark.parametrize("per_frame", [False, True])
def test_deviation_accounting_identity(clip, per_frame):
    rep = _noisy_session(clip, per_frame)
    total = math.fsum(d.achieved_bits for d in rep.decisions)
    assert total == rep.total_achieved_bits
    assert rep.total_achieved_bits - rep.total_target_bits == pytest.approx(
        rep.final_deficit, abs=1e-6 * rep.total_target_bits)
    assert rep.deviation_percent == pytest.approx(
        100 * rep.final_deficit / rep.total_target_bits, abs=1e-9)
    assert len(rep.carried) == len({d.gop for d in rep.decisions})


def test_session_deterministic_and_schema(clip):
    a, b = _noisy_session(clip), _noisy_session(clip)
    assert a.to_json() == b.to_json()
    jsonschema.validate(json.loads(a.to_json()), REPORT_SCHEMA)


def test_floor_carry_recorded(clip):
    features, roles = clip

    class Greedy:
        def bits(self, k, q):
            return 1e7, False

    rep = simulate_session(features, roles, EXACT, 1e5, 30.0, RcConstants(), Greedy(),
                           base_qp=40)
    assert any(c > 0 for c in rep.carried)
    assert all(d.b_prime > 0 for d in rep.decisions)


def test_replay_backend():
    recs = [FrameCodingRecord("s", 0, "I", 20, None, None, 8000.0),
            FrameCodingRecord("s", 0, "I", 30, None, None, 2000.0),
            FrameCodingRecord("s", 1, "I", 30, None, None, 500.0),
            FrameCodingRecord("t", 0, "I", 25, None, None, 1.0)]
    rb = ReplayBackend(recs, "s")
    assert rb.bits(0, 30) == (2000.0, False)
    bits, flagged = rb.bits(0, 25)
    assert flagged and bits == pytest.approx(4000.0)
    assert rb.bits(0, 40)[0] == pytest.approx(500.0)
    with pytest.raises(ReplayMiss):
        rb.bits(1, 31)
    with pytest.raises(ReplayMiss):
        rb.bits(5, 30)


def test_calibrate_recovers_c_low(clip):
    features, roles = clip
    recs = sweep_encode(features, roles, SyntheticOracleParams(), range(20, 51, 2))
    c = calibrate_c_low(recs)
    # gamma = 6 and sqrt(q) ~ 5.5 over the sweep give a value near one
    assert 0.8 < c < 1.3
    with pytest.raises(InvalidConfig):
        calibrate_c_low(recs[:1])


def test_session_with_trained_forest(clip):
    features, roles = clip
    params = SyntheticOracleParams()
    truth = sweep_encode(features, roles, params, range(20, 51, 2))
    seq = [SequenceData("s", features, roles, truth)]
    models = {}
    for t in "IPB":
        X, y, _ = stack_corpus(seq, t)
        models[t] = fit_model("forest", X, y, t, forest_params=ForestParams(n_estimators=20))
    backend = OracleBackend(features, roles, params, "s")
    first = cascade_qps(roles, 33)
    rate = sum(backend.bits(k, q)[0] for k, q in first.items()) * 30.0 / len(roles)
    rep = simulate_session(features, roles, models, rate, 30.0,
                           RcConstants(c_low=calibrate_c_low(truth), c_high=0.25), backend,
                           qp_range=(20, 50))
    assert 20 <= rep.base_qp <= 50
    assert rep.abs_deviation_percent < 2.0
