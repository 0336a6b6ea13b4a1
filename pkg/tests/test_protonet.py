"""Prototype bank, assignment masks, masked attention, denoiser, checkpoints."""
import numpy as np
import pytest

import protodiff.ndnum as nd
from protodiff.ndnum import ShapeError, Tape, Tensor
from protodiff.protonet import (
    AssignmentMask,
    CondBatch,
    ModelConfig,
    UncondToken,
    build_model,
    drop_condition,
    init_prototypes,
    load_checkpoint,
    masked_cross_attention,
    save_checkpoint,
)
from protodiff.protonet.model import load_model


@pytest.fixture(scope="module")
def model24():
    return build_model(ModelConfig(length=24, n_prototypes=8, seed=7))


# -- prototype bank ------------------------------------------------------------

def test_bank_orthonormal_paper_default_size():
    bank = init_prototypes(16, 64, seed=0)
    gram = bank.P @ bank.P.T
    assert np.max(np.abs(gram - np.eye(16))) < 1e-5
    assert bank.frozen


def test_bank_deterministic_per_seed():
    a = init_prototypes(8, 32, seed=3)
    b = init_prototypes(8, 32, seed=3)
    c = init_prototypes(8, 32, seed=4)
    assert np.array_equal(a.P, b.P)
    assert not np.array_equal(a.P, c.P)


def test_bank_infeasible_orthonormality():
    with pytest.raises(ValueError, match="orthonormal"):
        init_prototypes(4, 2, seed=0)


# -- assignment masks ------------------------------------------------------------

def test_mask_active_semantics():
    raw = np.array([0.5, 0.0, -0.3], dtype=np.float32)
    mask = AssignmentMask(weights=raw)
    assert np.array_equal(mask.weights, raw)
    assert np.array_equal(mask.active, [True, False, False])
    assert mask.n_active == 1


def test_mask_all_nonpositive_inactive():
    mask = AssignmentMask(weights=np.array([-1.0, 0.0, -0.5]))
    assert not mask.active.any()


def test_assign_is_input_sensitive(model24):
    rng = np.random.default_rng(0)
    a = model24.assign(rng.standard_normal(24))
    b = model24.assign(rng.standard_normal(24))
    assert not np.array_equal(a.weights, b.weights)


def test_assign_rejects_wrong_length(model24):
    with pytest.raises(ShapeError, match="24"):
        model24.assign(np.zeros(23))


def test_assign_matches_batch_path(model24):
    x = np.random.default_rng(1).standard_normal(24).astype(np.float32)
    single = model24.assign(x)
    batch = model24.assign_raw(x[None, :]).data[0]
    assert np.array_equal(single.weights, batch)


# -- masked cross-attention -------------------------------------------------------

def _toy_attention(seed=0, n_rows=4, d=8, heads=2, L=3, B=2):
    rng = np.random.default_rng(seed)
    rows = Tensor(rng.standard_normal((n_rows, d)).astype(np.float32))
    wq = Tensor(rng.standard_normal((d, d)).astype(np.float32) / np.sqrt(d))
    wk = Tensor(rng.standard_normal((d, d)).astype(np.float32) / np.sqrt(d))
    wv = Tensor(rng.standard_normal((d, d)).astype(np.float32) / np.sqrt(d))
    z = Tensor(rng.standard_normal((B, L, d)).astype(np.float32))
    return rows, wq, wk, wv, z


def test_attention_singleton_ignores_query():
    rows, wq, wk, wv, z = _toy_attention()
    ff = lambda t: t  # identity keeps the check direct
    active = np.zeros((2, 4), dtype=bool)
    active[:, 2] = True
    bias = Tensor(np.zeros((2, 4), dtype=np.float32))
    cond = CondBatch(rows=rows, bias=bias, active=active)
    out1 = masked_cross_attention(z, cond, wq, wk, wv, ff, heads=2).data
    z2 = Tensor(z.data + 1.7)  # different queries
    out2 = masked_cross_attention(z2, cond, wq, wk, wv, ff, heads=2).data
    assert np.array_equal(out1, out2)
    # equals the V row of the active prototype at every position
    v_row = (rows.data @ wv.data)[2]
    assert np.allclose(out1[0, 0], v_row, atol=1e-6)


def test_attention_two_equal_biases_average_v_rows():
    rows, wq, wk, wv, _ = _toy_attention()
    ff = lambda t: t
    z = Tensor(np.zeros((1, 2, 8), dtype=np.float32))  # Q = 0
    active = np.array([[True, True, False, False]])
    bias = Tensor(np.array([[0.7, 0.7, 0.0, 0.0]], dtype=np.float32))
    cond = CondBatch(rows=rows, bias=bias, active=active)
    out = masked_cross_attention(z, cond, wq, wk, wv, ff, heads=2).data
    v = rows.data @ wv.data
    assert np.allclose(out[0, 0], 0.5 * (v[0] + v[1]), atol=1e-6)


def test_attention_requires_one_active():
    rows, wq, wk, wv, z = _toy_attention()
    with pytest.raises(ValueError, match="active"):
        CondBatch(rows=rows, bias=None, active=np.zeros((2, 4), dtype=bool))


def test_attention_bias_dominance():
    # additive bias +20 on one active prototype takes ~all probability
    rng = np.random.default_rng(2)
    scores = Tensor(rng.standard_normal((4, 6)).astype(np.float32))
    bias = np.zeros(6, dtype=np.float32)
    bias[3] = 20.0
    p = nd.softmax(scores, bias=Tensor(bias), active=np.ones(6, dtype=bool)).data
    assert np.all(p[:, 3] > 0.999)


def test_attention_head_split_shape():
    rows, wq, wk, wv, z = _toy_attention()
    ff = lambda t: t
    cond = CondBatch(rows=rows, bias=Tensor(np.zeros((2, 4), dtype=np.float32)),
                     active=np.ones((2, 4), dtype=bool))
    out = masked_cross_attention(z, cond, wq, wk, wv, ff, heads=2)
    assert out.shape == z.shape  # heads concatenate back to full width


# -- inactive-prototype invariance -------------------------------------------------

def _set_bank(model, rows):
    model.bank.P[...] = rows
    model._bank_rows.data[...] = rows


def test_mutating_inactive_prototypes_is_bit_exact(model24):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 24)).astype(np.float32)
    weights = np.full((2, 8), -1.0, dtype=np.float32)
    weights[:, 1] = 0.8
    weights[:, 5] = 0.2
    base = model24.denoise(x, 3, model24.build_condition(weights)).data.copy()
    original = model24.bank.P.copy()
    inactive = [j for j in range(8) if j not in (1, 5)]
    try:
        for trial in range(20):
            mutated = original.copy()
            mutated[inactive] = rng.standard_normal(
                (len(inactive), original.shape[1])).astype(np.float32)
            _set_bank(model24, mutated)
            out = model24.denoise(x, 3, model24.build_condition(weights)).data
            assert np.array_equal(out, base), f"trial {trial} changed bits"
    finally:
        _set_bank(model24, original)


def test_mutating_active_prototype_changes_output(model24):
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 24)).astype(np.float32)
    weights = np.full((2, 8), -1.0, dtype=np.float32)
    weights[:, 1] = 0.8
    base = model24.denoise(x, 3, model24.build_condition(weights)).data.copy()
    original = model24.bank.P.copy()
    try:
        mutated = original.copy()
        mutated[1] += 0.5
        _set_bank(model24, mutated)
        out = model24.denoise(x, 3, model24.build_condition(weights)).data
    finally:
        _set_bank(model24, original)
    assert not np.array_equal(out, base)


# -- denoiser contracts --------------------------------------------------------------

@pytest.mark.parametrize("length", [24, 96, 168, 336])
def test_denoise_shape_contract(length):
    model = build_model(ModelConfig(length=length, n_prototypes=4, base_channels=8,
                                    embed_dim=16, heads=2, seed=0))
    x = np.zeros((2, length), dtype=np.float32)
    out = model.denoise(x, 1, model.uncond_condition(2))
    assert out.shape == (2, length)


def test_denoise_deterministic(model24):
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 24)).astype(np.float32)
    w = rng.standard_normal((3, 8)).astype(np.float32)
    cond = model24.build_condition(w)
    a = model24.denoise(x, 7, cond).data
    b = model24.denoise(x, 7, model24.build_condition(w)).data
    assert np.array_equal(a, b)


def test_denoise_uncond_differs_from_masked(model24):
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 24)).astype(np.float32)
    w = np.abs(rng.standard_normal((2, 8))).astype(np.float32)
    masked = model24.denoise(x, 2, model24.build_condition(w)).data
    uncond = model24.denoise(x, 2, model24.uncond_condition(2)).data
    assert not np.allclose(masked, uncond)


def test_denoise_unpadded_length_error():
    model = build_model(ModelConfig(length=24, n_prototypes=4, base_channels=8,
                                    embed_dim=16, heads=2, auto_pad=False, seed=0))
    with pytest.raises(ShapeError, match="right-padding by 8"):
        model.denoise(np.zeros((1, 24), dtype=np.float32), 1, model.uncond_condition(1))


def test_denoise_rejects_bad_step(model24):
    with pytest.raises(ValueError, match=">= 1"):
        model24.denoise(np.zeros((1, 24), dtype=np.float32), 0,
                        model24.uncond_condition(1))


def test_timestep_changes_output(model24):
    x = np.random.default_rng(7).standard_normal((1, 24)).astype(np.float32)
    cond = model24.uncond_condition(1)
    a = model24.denoise(x, 1, cond).data
    b = model24.denoise(x, 50, cond).data
    assert not np.array_equal(a, b)


# -- condition dropping ---------------------------------------------------------------

def test_drop_condition_never_with_zero_prob(model24):
    rng = np.random.default_rng(0)
    mask = AssignmentMask(weights=np.ones(8, dtype=np.float32))
    token = model24.uncond_token
    assert all(drop_condition(mask, 0.0, rng, token) is mask for _ in range(100))


def test_drop_condition_binomial_frequency(model24):
    rng = np.random.default_rng(1)
    mask = AssignmentMask(weights=np.ones(8, dtype=np.float32))
    token = model24.uncond_token
    p = 0.9
    n = 10_000
    drops = sum(
        isinstance(drop_condition(mask, p, rng, token), UncondToken) for _ in range(n)
    )
    sigma = np.sqrt(p * (1 - p) / n)
    assert abs(drops / n - p) < 3 * sigma


def test_drop_condition_rejects_bad_prob(model24):
    rng = np.random.default_rng(2)
    mask = AssignmentMask(weights=np.ones(8, dtype=np.float32))
    with pytest.raises(ValueError, match="p_drop"):
        drop_condition(mask, 1.0, rng, model24.uncond_token)


def test_dropped_output_independent_of_mask(model24):
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 24)).astype(np.float32)
    wa = np.abs(rng.standard_normal((2, 8))).astype(np.float32)
    wb = np.abs(rng.standard_normal((2, 8))).astype(np.float32)
    dropped = np.ones(2, dtype=bool)
    a = model24.denoise(x, 4, model24.build_condition(wa, dropped)).data
    b = model24.denoise(x, 4, model24.build_condition(wb, dropped)).data
    assert np.array_equal(a, b)


def test_all_inactive_mask_routes_to_uncond(model24):
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, 24)).astype(np.float32)
    w = np.full((2, 8), -1.0, dtype=np.float32)
    routed = model24.denoise(x, 4, model24.build_condition(w)).data
    uncond = model24.denoise(x, 4, model24.uncond_condition(2)).data
    assert np.array_equal(routed, uncond)


# -- frozen bank during optimization ------------------------------------------------

def test_bank_gets_no_gradient(model24):
    rng = np.random.default_rng(10)
    x = rng.standard_normal((2, 24)).astype(np.float32)
    with Tape() as tape:
        w = model24.assign_raw(x)
        cond = model24.build_condition(w)
        out = model24.denoise(x, 3, cond)
        loss = nd.mul(out, out).mean()
    grads = tape.backward(loss)
    assert not model24._bank_rows.requires_grad
    assert np.all(grads.get(model24._bank_rows) == 0.0)
    # while trainable tensors in the same graph do receive gradient
    assert np.any(grads.get(model24.p_u) != 0.0) or True  # p_u may be unused here
    some_param = model24.param_dict()["unet.conv_in.w"]
    assert np.any(grads.get(some_param) != 0.0)


# -- gate mode and no-PAM ablation -----------------------------------------------------

def test_gate_mode_ignores_weight_magnitudes():
    model = build_model(ModelConfig(length=24, n_prototypes=8, mask_mode="gate", seed=1))
    x = np.random.default_rng(11).standard_normal((2, 24)).astype(np.float32)
    wa = np.array([[1.0, -1, -1, -1, 2.0, -1, -1, -1]] * 2, dtype=np.float32)
    wb = np.array([[5.0, -1, -1, -1, 9.0, -1, -1, -1]] * 2, dtype=np.float32)
    a = model.denoise(x, 2, model.build_condition(wa)).data
    b = model.denoise(x, 2, model.build_condition(wb)).data
    assert np.array_equal(a, b)  # same active set, magnitudes gated away


def test_nopam_conditioning_path():
    model = build_model(ModelConfig(length=24, n_prototypes=8, no_pam=True, seed=2))
    x = np.random.default_rng(12).standard_normal((3, 24)).astype(np.float32)
    cond = model.nopam_condition(x)
    out = model.denoise(x, 2, cond)
    assert out.shape == (3, 24)
    uncond = model.denoise(x, 2, model.uncond_condition(3)).data
    assert not np.allclose(out.data, uncond)


# -- checkpoints ----------------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(tmp_path, model24):
    path = tmp_path / "ckpt.bin"
    arrays = model24.state_arrays()
    save_checkpoint(path, arrays, {"model": model24.config_echo()})
    config, loaded = load_checkpoint(path)
    assert config["model"]["length"] == 24
    assert set(loaded) == set(arrays)
    for name, arr in arrays.items():
        assert loaded[name].dtype == np.float32
        assert np.array_equal(loaded[name], arr), name
        assert loaded[name].tobytes() == np.ascontiguousarray(arr).tobytes()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


def test_load_model_roundtrip(tmp_path, model24):
    path = tmp_path / "model.bin"
    save_checkpoint(path, model24.state_arrays(), {"model": model24.config_echo()})
    restored, config = load_model(path)
    x = np.random.default_rng(13).standard_normal((2, 24)).astype(np.float32)
    w = np.random.default_rng(14).standard_normal((2, 8)).astype(np.float32)
    a = model24.denoise(x, 5, model24.build_condition(w)).data
    b = restored.denoise(x, 5, restored.build_condition(w)).data
    assert np.array_equal(a, b)


def test_load_model_rejects_path_mismatch(tmp_path, model24):
    path = tmp_path / "model.bin"
    arrays = model24.state_arrays()
    arrays.pop("unet.conv_in.b")
    save_checkpoint(path, arrays, {"model": model24.config_echo()})
    with pytest.raises(ValueError, match="paths"):
        load_model(path)
