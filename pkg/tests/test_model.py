import numpy as np
import pytest

from _gradcheck import check_gradients
from mtctc import ctc
from mtctc.model import BRANCH_COUNTS, ModelConfig, MtModel, ctc_loss_op
from mtctc.sot import TalkerUtterance, build_sot_target, build_stream_targets
from mtctc.tensor import Tape, Tensor, backward


def tiny_config(**overrides):
    base = dict(
        feature_dim=6,
        model_dim=8,
        num_heads=2,
        ff_dim=12,
        shared_depth=1,
        branch_depth=1,
        separator_layers=1,
        separator_hidden=10,
        decoder_depth=1,
        projector_stack=2,
        content_size=5,
        tch_attn_dim=4,
        tch_hidden=8,
        seed=3,
    )
    base.update(overrides)
    return ModelConfig(**base)


def toy_utterances(vocab, count, rng, tokens_per_talker=3):
    utts = []
    for talker in range(count):
        tokens = [int(t) for t in rng.choice(vocab.content_ids, size=tokens_per_talker)]
        utts.append(TalkerUtterance(talker_id=talker, tokens=tokens, onset=4 * talker))
    return utts


@pytest.fixture(scope="module")
def model():
    return MtModel(tiny_config())


def test_config_rejects_bad_teacher_memory():
    with pytest.raises(ValueError, match="teacher memory"):
        tiny_config(teacher_memory="encoder")


def test_config_rejects_projection_skip_with_mismatched_dims():
    with pytest.raises(ValueError, match="dims match"):
        tiny_config(input_projection=False)  # feature_dim 6 != model_dim 8


def test_config_rejects_tch_layers_outside_stack():
    with pytest.raises(ValueError, match="shared stack"):
        tiny_config(tch_layers=2)  # shared_depth is 1


def test_config_dict_round_trip():
    cfg = tiny_config(teacher_memory="separator", tch_layers=1)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_zero_depth_shared_encoder_is_identity(rng):
    cfg = tiny_config(
        feature_dim=8,
        shared_depth=0,
        input_projection=False,
        positional_encoding=False,
        tch_layers=None,
    )
    m = MtModel(cfg)
    x = rng.normal(size=(7, 8))
    out = m.encode_shared(Tensor(x))
    assert np.array_equal(out.data, x)


def test_encode_shared_checks_feature_dim(model, rng):
    with pytest.raises(ValueError, match="feature channels"):
        model.encode_shared(Tensor(rng.normal(size=(5, 7))))


def test_same_config_builds_identical_parameters():
    a = MtModel(tiny_config())
    b = MtModel(tiny_config())
    for (name_a, pa), (name_b, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert name_a == name_b
        assert pa.data.tobytes() == pb.data.tobytes()


def test_branch_forward_shapes_and_normalized_streams(model, rng):
    x = Tensor(rng.normal(size=(9, 6)))
    shared = model.encode_shared(x)
    for count in BRANCH_COUNTS:
        streams, branch_out = model.branch_forward(shared, count)
        assert len(streams) == count
        assert branch_out.shape == (9, model.config.model_dim)
        for stream in streams:
            assert stream.shape == (9, model.vocab.size)
            # rows must be log distributions
            ctc.LogProbLattice(stream.data).validate()


def test_bidirectional_separator_streams_and_gradients(rng):
    model = MtModel(tiny_config(separator_bidirectional=True))
    utts = toy_utterances(model.vocab, 2, rng)
    streams_t = build_stream_targets(utts, model.vocab).streams
    sot = build_sot_target(utts, model.vocab)
    x = Tensor(rng.normal(size=(12, 6)))

    shared = model.encode_shared(x)
    streams, _ = model.branch_forward(shared, 2)
    for stream in streams:
        assert stream.shape == (12, model.vocab.size)
        ctc.LogProbLattice(stream.data).validate()

    with Tape():
        loss = model.hybrid_loss(x, streams_t, sot, 2, alpha=0.3)
        backward(loss)
    reverse = [
        p.grad
        for name, p in model.named_parameters()
        if "separators.2" in name and "backward" in name
    ]
    assert reverse and all(g is not None for g in reverse)
    assert any(np.any(g != 0.0) for g in reverse)


def test_branch_counters_and_unknown_count(model, rng):
    model.reset_counters()
    shared = model.encode_shared(Tensor(rng.normal(size=(6, 6))))
    model.branch_forward(shared, 2)
    model.branch_forward(shared, 2)
    model.branch_forward(shared, 3)
    assert model.branch_calls == {2: 2, 3: 1}
    with pytest.raises(ValueError, match="talker count 4"):
        model.branch_encode(shared, 4)


def test_serialized_loss_matches_independent_ctc_sum(model, rng):
    x = Tensor(rng.normal(size=(12, 6)))
    shared = model.encode_shared(x)
    streams, _ = model.branch_forward(shared, 3)
    targets = [[5, 6], [7], [8, 9, 5]]
    with Tape():
        total = model.serialized_ctc_loss(streams, targets)
    expected = 0.0
    for stream, target in zip(streams, targets):
        value, _ = ctc.ctc_loss(ctc.LogProbLattice(stream.data), target)
        expected += value
    assert abs(total.item() - expected) < 1e-12


def test_serialized_loss_rejects_target_count_mismatch(model, rng):
    shared = model.encode_shared(Tensor(rng.normal(size=(8, 6))))
    streams, _ = model.branch_forward(shared, 2)
    with pytest.raises(ValueError, match="streams vs"):
        model.serialized_ctc_loss(streams, [[5], [6], [7]])


def test_ctc_loss_op_gradient_matches_kernel(rng):
    logits = rng.normal(size=(6, 7))
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    x = Tensor(logp, requires_grad=True)
    with Tape():
        loss = ctc_loss_op(x, [5, 6])
        backward(loss)
    value, grad = ctc.ctc_loss(ctc.LogProbLattice(logp), [5, 6])
    assert abs(loss.item() - value) < 1e-15
    assert np.allclose(x.grad, grad, atol=1e-15)


def test_teacher_loss_matches_manual_cross_entropy(model, rng):
    model.reset_counters()
    frames = Tensor(rng.normal(size=(8, model.config.model_dim)))
    utts = toy_utterances(model.vocab, 2, rng)
    target = build_sot_target(utts, model.vocab)
    loss = model.sot_teacher_loss(frames, target)
    assert model.teacher_calls == 1

    logits = model.teacher(frames, target.tokens[:-1]).data
    logp = logits - np.log(np.exp(logits - logits.max(axis=1, keepdims=True)).sum(axis=1, keepdims=True)) - logits.max(axis=1, keepdims=True)
    wanted = target.tokens[1:]
    manual = -np.mean([logp[i, t] for i, t in enumerate(wanted)])
    assert abs(loss.item() - manual) < 1e-12


def test_teacher_loss_ignores_padding(model, rng):
    from mtctc.sot import SotTarget

    frames = Tensor(rng.normal(size=(8, model.config.model_dim)))
    vocab = model.vocab
    base = [vocab.BOS, 5, 6, vocab.EOS]
    padded = base + [vocab.PAD, vocab.PAD]
    plain = model.sot_teacher_loss(frames, SotTarget(base))
    with_pad = model.sot_teacher_loss(frames, SotTarget(padded))
    # padded positions drop out of the mean but the causal mask keeps the
    # shared prefix positions identical
    logits = model.teacher(frames, padded[:-1]).data
    logp = logits - np.log(np.exp(logits - logits.max(axis=1, keepdims=True)).sum(axis=1, keepdims=True)) - logits.max(axis=1, keepdims=True)
    manual = -np.mean([logp[i, t] for i, t in enumerate(padded[1:]) if t != vocab.PAD])
    assert abs(with_pad.item() - manual) < 1e-12
    assert plain.item() == pytest.approx(
        -np.mean([logp[i, t] for i, t in enumerate(base[1:])]), abs=1e-12
    )


def test_hybrid_loss_validates_alpha(model, rng):
    utts = toy_utterances(model.vocab, 2, rng)
    streams = build_stream_targets(utts, model.vocab).streams
    sot = build_sot_target(utts, model.vocab)
    x = Tensor(rng.normal(size=(10, 6)))
    with pytest.raises(ValueError, match="alpha"):
        model.hybrid_loss(x, streams, sot, 2, alpha=1.5)


def test_hybrid_loss_is_affine_in_alpha(model, rng):
    utts = toy_utterances(model.vocab, 2, rng)
    streams = build_stream_targets(utts, model.vocab).streams
    sot = build_sot_target(utts, model.vocab)
    x = Tensor(rng.normal(size=(10, 6)))
    ctc_only = model.hybrid_loss(x, streams, sot, 2, alpha=1.0).item()
    sot_only = model.hybrid_loss(x, streams, sot, 2, alpha=0.0).item()
    for alpha in (0.25, 0.3, 0.9):
        mixed = model.hybrid_loss(x, streams, sot, 2, alpha=alpha).item()
        assert abs(mixed - (alpha * ctc_only + (1 - alpha) * sot_only)) < 1e-12


def grads_by_component(model):
    present = set()
    for name, p in model.named_parameters():
        if p.grad is not None and np.any(p.grad != 0.0):
            present.add(name.split(".")[0] + "." + name.split(".")[1])
    return present


def test_gradients_reach_only_the_selected_branch(model, rng):
    utts = toy_utterances(model.vocab, 2, rng)
    streams = build_stream_targets(utts, model.vocab).streams
    sot = build_sot_target(utts, model.vocab)
    x = Tensor(rng.normal(size=(10, 6)))

    from mtctc.tensor import zero_grads

    zero_grads([p for _, p in model.named_parameters()])
    with Tape():
        loss = model.hybrid_loss(x, streams, sot, 2, alpha=0.3)
        backward(loss)
    touched = {name for name, p in model.named_parameters() if p.grad is not None}
    assert any(n.startswith("shared_blocks.") for n in touched)
    assert any(n.startswith("branch_blocks.2.") for n in touched)
    assert any(n.startswith("separators.2.") for n in touched)
    assert any(n.startswith("teacher.") for n in touched)
    assert not any(n.startswith("branch_blocks.3.") for n in touched)
    assert not any(n.startswith("separators.3.") for n in touched)
    assert not any(n.startswith("count_head.") for n in touched)


def test_pure_ctc_loss_leaves_teacher_untouched(model, rng):
    utts = toy_utterances(model.vocab, 3, rng)
    streams = build_stream_targets(utts, model.vocab).streams
    sot = build_sot_target(utts, model.vocab)
    x = Tensor(rng.normal(size=(12, 6)))
    from mtctc.tensor import zero_grads

    zero_grads([p for _, p in model.named_parameters()])
    with Tape():
        backward(model.hybrid_loss(x, streams, sot, 3, alpha=1.0))
    touched = {name for name, p in model.named_parameters() if p.grad is not None}
    assert not any(n.startswith("teacher.") for n in touched)
    assert any(n.startswith("separators.3.") for n in touched)


def test_pure_teacher_loss_leaves_separator_untouched(model, rng):
    # memory comes from the branch output, so the separator only serves CTC
    utts = toy_utterances(model.vocab, 2, rng)
    streams = build_stream_targets(utts, model.vocab).streams
    sot = build_sot_target(utts, model.vocab)
    x = Tensor(rng.normal(size=(10, 6)))
    from mtctc.tensor import zero_grads

    zero_grads([p for _, p in model.named_parameters()])
    with Tape():
        backward(model.hybrid_loss(x, streams, sot, 2, alpha=0.0))
    touched = {name for name, p in model.named_parameters() if p.grad is not None}
    assert not any(n.startswith("separators.") for n in touched)
    assert any(n.startswith("teacher.") for n in touched)


def test_hybrid_loss_gradients_against_finite_differences(rng):
    m = MtModel(tiny_config())
    utts = toy_utterances(m.vocab, 2, rng, tokens_per_talker=2)
    streams = build_stream_targets(utts, m.vocab).streams
    sot = build_sot_target(utts, m.vocab)
    x = Tensor(rng.normal(size=(8, 6)))
    wanted = [
        "input_proj.weight",
        "shared_blocks.0.attention.out.bias",
        "shared_blocks.0.norm_ff.gain",
        "branch_blocks.2.0.feed_forward.lift.bias",
        "branch_norms.2.gain",
        "separators.2.lstm.forward_weights.0.2",
        "separators.2.stream_outputs.1.bias",
        "teacher.embedding.weight",
        "teacher.out.bias",
    ]
    table = dict(m.named_parameters())
    params = [table[name] for name in wanted]
    check_gradients(
        lambda: m.hybrid_loss(x, streams, sot, 2, alpha=0.3), params, tol=1e-4
    )


def test_hybrid_loss_runs_with_separator_memory(rng):
    m = MtModel(tiny_config(teacher_memory="separator"))
    utts = toy_utterances(m.vocab, 2, rng)
    streams = build_stream_targets(utts, m.vocab).streams
    sot = build_sot_target(utts, m.vocab)
    x = Tensor(rng.normal(size=(10, 6)))
    loss = m.hybrid_loss(x, streams, sot, 2, alpha=0.3)
    assert np.isfinite(loss.item())
    from mtctc.tensor import zero_grads

    zero_grads([p for _, p in m.named_parameters()])
    with Tape():
        backward(m.hybrid_loss(x, streams, sot, 2, alpha=0.0))
    touched = {name for name, p in m.named_parameters() if p.grad is not None}
    # the teacher now reads the separator trunk, which must receive gradient
    assert any(n.startswith("separators.2.lstm") for n in touched)


def test_tch_representation_depth_knob(rng):
    m = MtModel(tiny_config(shared_depth=2, tch_layers=1))
    x = Tensor(rng.normal(size=(7, 6)))
    tapped = m.tch_representation(x)
    manual = m.shared_blocks[0](m.embed_features(x))
    assert np.array_equal(tapped.data, manual.data)
    full = m.encode_shared(x)
    assert not np.array_equal(tapped.data, full.data)


def test_predict_count_and_counter(model, rng):
    model.reset_counters()
    count = model.predict_talker_count(Tensor(rng.normal(size=(9, 6))))
    assert count in BRANCH_COUNTS
    assert model.count_head_calls == 1


def test_infer_routed_oracle_skips_count_head(model, rng):
    model.reset_counters()
    out = model.infer_routed(Tensor(rng.normal(size=(9, 6))), oracle_count=3)
    assert out.talker_count == 3
    assert out.routed_by == "oracle"
    assert model.count_head_calls == 0
    assert len(out.streams) == 3
    assert model.branch_calls[3] == 1


def test_infer_routed_uses_count_head_without_oracle(model, rng):
    model.reset_counters()
    out = model.infer_routed(Tensor(rng.normal(size=(9, 6))))
    assert out.routed_by == "count_head"
    assert model.count_head_calls == 1
    assert out.talker_count in BRANCH_COUNTS
    assert len(out.streams) == out.talker_count


def test_infer_routed_decode_modes(model, rng):
    x = Tensor(rng.normal(size=(9, 6)))
    greedy = model.infer_routed(x, oracle_count=2, decode="greedy")
    beam = model.infer_routed(x, oracle_count=2, decode="beam", beam_width=4)
    for streams in (greedy.streams, beam.streams):
        assert len(streams) == 2
        for tokens in streams:
            assert all(isinstance(t, int) for t in tokens)
    with pytest.raises(ValueError, match="decode mode"):
        model.infer_routed(x, oracle_count=2, decode="sampled")


def test_teacher_greedy_decode_respects_cap(model, rng):
    x = Tensor(rng.normal(size=(9, 6)))
    out = model.teacher_greedy_decode(x, 2, max_tokens=5)
    assert len(out) <= 5
    assert all(isinstance(t, int) for t in out)


def test_forward_is_deterministic(rng):
    x = rng.normal(size=(9, 6))
    a = MtModel(tiny_config()).encode_shared(Tensor(x))
    b = MtModel(tiny_config()).encode_shared(Tensor(x))
    assert a.data.tobytes() == b.data.tobytes()
