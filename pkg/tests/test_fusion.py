import math

import numpy as np
import pytest

import oracles
from phqfusion.encoders import MultiHeadAttention, TransformerEncoder
from phqfusion.errors import DimensionError, ModelError
from phqfusion.fusion import (
    CrossContext,
    FusionToggles,
    GateVector,
    PredictionHead,
    ReportGuidedFusion,
    Stage,
    aggregate,
    apply_gate,
    cls_pool,
    concat_gated,
    cross_attend,
    gate,
    masked_mean,
    predict,
)
from phqfusion.model import StageModel, collate
from phqfusion.numeric import Parameter, Tensor, grad_check
from phqfusion.objectives import cross_entropy


def identity_attention(dim):
    mha = MultiHeadAttention(dim, 1, np.random.default_rng(0))
    for proj in (mha.q_proj, mha.k_proj, mha.v_proj, mha.out_proj):
        proj.weight.data[...] = np.eye(dim)
        proj.bias.data[...] = 0.0
    return mha


def random_encoded(rng, d, lengths, masks=None):
    out = {}
    for kind, n in lengths.items():
        mask = np.ones((1, n), dtype=bool) if masks is None else masks[kind]
        out[kind] = (Tensor(rng.normal(size=(1, n, d))), mask)
    return out


# -- gate -----------------------------------------------------------------------------

def test_gate_at_zero_is_one_half():
    g = gate(np.zeros((1, 8)), np.ones((3, 8)), np.zeros(3)).data[0]
    assert g.tolist() == [0.5, 0.5, 0.5]


def test_gate_sigmoid_arithmetic():
    h = np.zeros((1, 4))
    b = np.array([math.log(3.0), 0.0, -math.log(3.0)])
    g = gate(h, np.zeros((3, 4)), b).data[0]
    assert np.allclose(g, oracles.GATES_LN3_0_NEGLN3, rtol=0, atol=1e-15)
    vec = GateVector.from_row(g)
    assert (vec.g_T, vec.g_A, vec.g_V) == pytest.approx(oracles.GATES_LN3_0_NEGLN3, abs=1e-15)


def test_gates_in_open_interval_for_random_summaries(rng):
    w, b = rng.normal(size=(3, 8)), rng.normal(size=3)
    g = gate(rng.normal(size=(1000, 8)), w, b).data
    assert np.all((g > 0.0) & (g < 1.0))
    for row in g[:50]:
        GateVector.from_row(row)


def test_gate_shape_mismatch():
    with pytest.raises(DimensionError):
        gate(np.zeros((1, 8)), np.zeros((3, 7)), np.zeros(3))


def test_gate_vector_rejects_closed_endpoints():
    with pytest.raises(ModelError):
        GateVector(1.0, 0.5, 0.5)


def test_apply_gate_broadcasts_scalar_over_sequence(rng):
    seq = rng.normal(size=(2, 4, 3))
    out = apply_gate(seq, np.array([0.25, 2.0])).data
    assert np.array_equal(out[0], 0.25 * seq[0])
    assert np.array_equal(out[1], 2.0 * seq[1])


# -- concatenation ----------------------------------------------------------------------

def test_concat_lengths_and_segment_order(rng):
    enc = random_encoded(rng, 8, {"text": 3, "video": 2, "audio": 4})
    cat = concat_gated(enc)
    assert cat.length == 9
    assert cat.segment_ids == ["text"] * 3 + ["video"] * 2 + ["audio"] * 4
    assert np.array_equal(cat.seq.data[0, 3:5], enc["video"][0].data[0])


def test_concat_preserves_masks(rng):
    masks = {"text": np.array([[1, 1, 0]], bool), "video": np.array([[1, 0]], bool), "audio": np.array([[0, 1, 1, 1]], bool)}
    cat = concat_gated(random_encoded(rng, 8, {"text": 3, "video": 2, "audio": 4}, masks))
    assert cat.mask[0].tolist() == [True, True, False, True, False, False, True, True, True]


def test_concat_width_mismatch(rng):
    with pytest.raises(DimensionError):
        concat_gated({"text": (Tensor(np.zeros((1, 2, 8))), np.ones((1, 2), bool)),
                      "audio": (Tensor(np.zeros((1, 2, 6))), np.ones((1, 2), bool))})


# -- cross attention ----------------------------------------------------------------------

def test_single_key_z1_returns_the_only_valid_row(rng):
    d = 6
    v = rng.normal(size=d)
    rows = np.stack([rng.normal(size=d), v, rng.normal(size=d)])[None]
    mask = np.array([[False, True, False]])
    cat = concat_gated({"text": (Tensor(rows), mask)})
    ctx = cross_attend(rng.normal(size=(1, d)), cat, identity_attention(d), identity_attention(d))
    assert np.array_equal(ctx.z1.data[0], v)


def test_single_key_z2_returns_the_summary(rng):
    d = 6
    h_s = rng.normal(size=(1, d))
    cat = concat_gated({"text": (Tensor(rng.normal(size=(1, 4, d))), np.array([[True, True, True, False]]))})
    ctx = cross_attend(h_s, cat, identity_attention(d), identity_attention(d))
    assert np.allclose(ctx.z2.data[0], h_s[0], rtol=0, atol=1e-15)


def test_cross_attention_weights_sum_to_one(rng):
    d = 8
    cat = concat_gated(random_encoded(rng, d, {"text": 3, "audio": 5}))
    ctx = cross_attend(rng.normal(size=(1, d)), cat, MultiHeadAttention(d, 2, rng), MultiHeadAttention(d, 2, rng))
    assert np.max(np.abs(ctx.summary_weights.sum(axis=-1) - 1.0)) <= 1e-12


def test_cross_attention_fully_masked_is_error(rng):
    cat = concat_gated({"audio": (Tensor(rng.normal(size=(1, 3, 4))), np.zeros((1, 3), bool))})
    with pytest.raises(ModelError):
        cross_attend(rng.normal(size=(1, 4)), cat, identity_attention(4), identity_attention(4))


# -- CLS pooling ---------------------------------------------------------------------------

def test_cls_pool_output_width(rng):
    d = 8
    cat = concat_gated(random_encoded(rng, d, {"text": 3, "video": 2}))
    out = cls_pool(cat, Parameter(rng.normal(size=d)), TransformerEncoder(d, 1, 2, rng))
    assert out.shape == (1, d)


def test_cls_pool_responds_to_unmasked_content(rng):
    d = 8
    encoder, cls = TransformerEncoder(d, 1, 2, rng), Parameter(rng.normal(size=d))
    for _ in range(100):
        rows = rng.normal(size=(1, 5, d))
        cat = concat_gated({"audio": (Tensor(rows), np.ones((1, 5), bool))})
        base = cls_pool(cat, cls, encoder).data
        probe = rows.copy()
        probe[0, rng.integers(5)] += rng.normal(size=d)
        changed = cls_pool(concat_gated({"audio": (Tensor(probe), np.ones((1, 5), bool))}), cls, encoder).data
        assert not np.array_equal(base, changed)


def test_cls_pool_ignores_masked_rows(rng):
    d = 8
    encoder, cls = TransformerEncoder(d, 2, 2, rng), Parameter(rng.normal(size=d))
    rows = rng.normal(size=(1, 5, d))
    mask = np.array([[True, True, False, True, False]])
    base = cls_pool(concat_gated({"video": (Tensor(rows), mask)}), cls, encoder).data
    rows[0, [2, 4]] = rng.normal(size=(2, d)) * 50
    assert np.array_equal(base, cls_pool(concat_gated({"video": (Tensor(rows), mask)}), cls, encoder).data)


# -- aggregation and heads -------------------------------------------------------------------

@pytest.mark.parametrize("d, width", [(8, oracles.FUSION_WIDTH_D8), (32, oracles.FUSION_WIDTH_D32)])
def test_aggregate_width_and_parts(d, width, rng):
    parts = [rng.normal(size=(2, d)) for _ in range(4)]
    emb = aggregate(parts[0], parts[1], CrossContext(Tensor(parts[2]), Tensor(parts[3])))
    assert emb.vector.shape == (2, width)
    for name, original in zip(("h_S", "H_CLS", "z1", "z2"), parts):
        assert np.array_equal(emb.parts[name], original)


def test_aggregate_width_mismatch(rng):
    with pytest.raises(DimensionError):
        aggregate(rng.normal(size=(1, 8)), rng.normal(size=(1, 7)),
                  CrossContext(Tensor(np.zeros((1, 8))), Tensor(np.zeros((1, 8)))))


def test_zero_screen_head_ties_to_class_zero(rng):
    head = PredictionHead(Stage.SCREEN, 8, rng)
    for p in head.parameters():
        p.data[...] = 0.0
    emb = aggregate(*(rng.normal(size=(1, 8)) for _ in range(2)),
                    CrossContext(Tensor(np.zeros((1, 8))), Tensor(np.zeros((1, 8)))))
    pred = predict(emb, Stage.SCREEN, head)[0]
    assert pred.logits.tolist() == [0.0, 0.0]
    assert pred.decision == 0


def test_head_widths(rng):
    x = rng.normal(size=(3, 32))
    assert PredictionHead(Stage.SCREEN, 8, rng)(x).shape == (3, 2)
    assert PredictionHead(Stage.SEVERITY, 8, rng)(x).shape == (3, 5)
    assert PredictionHead(Stage.SCORE, 8, rng)(x).shape == (3, 1)


def test_predict_rejects_mismatched_head(rng):
    emb = aggregate(*(rng.normal(size=(1, 8)) for _ in range(2)),
                    CrossContext(Tensor(np.zeros((1, 8))), Tensor(np.zeros((1, 8)))))
    with pytest.raises(ModelError):
        predict(emb, Stage.SEVERITY, PredictionHead(Stage.SCREEN, 8, rng))


def test_score_decision_is_clamped_but_logit_is_not(rng):
    head = PredictionHead(Stage.SCORE, 4, rng, score_max=24)
    assert head.decide(np.array([[-3.0], [12.5], [40.0]])) == [0.0, 12.5, 24.0]
    head9 = PredictionHead(Stage.SCORE, 4, rng, score_max=27)
    assert head9.decide(np.array([[40.0]])) == [27.0]


def test_classification_decision_invariant_to_constant_shift(rng):
    head = PredictionHead(Stage.SEVERITY, 4, rng)
    logits = rng.normal(size=(200, 5))
    assert head.decide(logits) == head.decide(logits + 17.25)


def test_tie_break_is_lowest_index(rng):
    head = PredictionHead(Stage.SEVERITY, 4, rng)
    assert head.decide(np.array([[0.0, 2.0, 2.0, 1.0, 2.0]])) == [1]
    assert head.decide(np.array([[0.0, 2.0, 2.0, 1.0, 2.0]])) == [1]


# -- full fusion module ---------------------------------------------------------------------

def fusion_inputs(rng, d=8):
    lengths = {"text": 3, "audio": 3, "video": 3}
    masks = {k: np.array([[True, True, True], [True, True, False]]) for k in lengths}
    encoded = {k: (Tensor(rng.normal(size=(2, n, d))), masks[k]) for k, n in lengths.items()}
    return rng.normal(size=(2, d)), encoded


def test_fusion_embedding_is_four_d(rng):
    fusion = ReportGuidedFusion(8, 2, 1, rng)
    h_s, encoded = fusion_inputs(rng)
    out = fusion(h_s, encoded)
    assert out.embedding.vector.shape == (2, 32)
    assert np.all((out.gates > 0) & (out.gates < 1))
    assert np.array_equal(out.embedding.parts["h_S"], h_s)


def test_forcing_text_gate_to_zero_zeroes_text_rows(rng):
    fusion = ReportGuidedFusion(8, 2, 1, rng)
    h_s, encoded = fusion_inputs(rng)
    out = fusion(h_s, encoded, force_gates={"text": 0.0})
    rows = out.cat.rows("text")
    assert np.array_equal(out.cat.seq.data[:, rows], np.zeros((2, 3, 8)))
    for scale in (0.5, 0.1, 0.01):
        scaled = fusion(h_s, encoded, force_gates={"text": scale})
        assert np.array_equal(scaled.cat.seq.data[:, rows], scale * encoded["text"][0].data)


def test_zero_gate_ablation_matches_text_only_rows(rng):
    h_s, encoded = fusion_inputs(rng)
    full = ReportGuidedFusion(8, 2, 1, np.random.default_rng(5))
    text_only = ReportGuidedFusion(8, 2, 1, np.random.default_rng(5), toggles=FusionToggles(modalities=("text",)))
    a = full(h_s, encoded, force_gates={"audio": 0.0, "video": 0.0})
    b = text_only(h_s, {"text": encoded["text"]})
    assert np.array_equal(a.cat.seq.data[:, a.cat.rows("text")], b.cat.seq.data)


def test_gate_off_records_ones(rng):
    fusion = ReportGuidedFusion(8, 2, 1, rng, toggles=FusionToggles(gate=False))
    h_s, encoded = fusion_inputs(rng)
    assert np.array_equal(fusion(h_s, encoded).gates, np.ones((2, 3)))


def test_bca_off_zeroes_cross_context(rng):
    fusion = ReportGuidedFusion(8, 2, 1, rng, toggles=FusionToggles(bca=False))
    h_s, encoded = fusion_inputs(rng)
    parts = fusion(h_s, encoded).embedding.parts
    assert not parts["z1"].any() and not parts["z2"].any()


def test_ap_off_uses_masked_mean(rng):
    fusion = ReportGuidedFusion(8, 2, 1, rng, toggles=FusionToggles(ap=False))
    h_s, encoded = fusion_inputs(rng)
    out = fusion(h_s, encoded)
    assert np.array_equal(out.h_cls.data, masked_mean(out.cat.seq, out.cat.mask).data)


def test_summary_only_variant_has_no_concat(rng):
    fusion = ReportGuidedFusion(8, 2, 1, rng, toggles=FusionToggles(modalities=()))
    out = fusion(rng.normal(size=(2, 8)), {})
    assert out.cat is None
    assert out.embedding.vector.shape == (2, 32)


def test_fusion_and_head_gradients_under_cross_entropy(rng):
    fusion = ReportGuidedFusion(8, 2, 1, rng)
    head = PredictionHead(Stage.SEVERITY, 8, rng)
    fusion.assign_names()
    head.assign_names()
    h_s, encoded = fusion_inputs(rng)
    labels = [1, 4]
    report = grad_check(lambda: cross_entropy(head(fusion(h_s, encoded).embedding.vector), labels),
                        params=fusion.parameters() + head.parameters())
    assert report.passed, (report.max_rel_error, report.worst)


def test_stage_models_do_not_share_weights(tiny_config):
    a, b = StageModel(1, tiny_config), StageModel(3, tiny_config)
    ids_a = {id(p) for p in a.parameters()}
    assert not ids_a & {id(p) for p in b.parameters()}


def test_stage_model_forward_shapes(tiny_config, tiny_features):
    for stage in Stage:
        out = StageModel(stage, tiny_config)(collate(tiny_features, int(stage)))
        assert out.logits.shape == (3, stage.width)
