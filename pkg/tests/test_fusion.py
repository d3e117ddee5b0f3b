import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affectfusion import ndcore as nd
from affectfusion.errors import FormatError
from affectfusion.fusion import (
    MultiViewBatch, attention_forward, init_attention, init_mctn, init_mfn, init_params,
    mctn_forward, mctn_loss, mfn_forward,
)
from affectfusion.fusion.attention import attention_weights_and_fused
from affectfusion.fusion.checkpoint import dumps, load_checkpoint, loads, save_checkpoint
from affectfusion.ndcore import ContractError, DimensionError, ModelParams
from affectfusion.objectives import VaTarget, va_loss

import gradsuite


def make_batch(rng, dims, B=2, T=10, tags=None):
    tags = tags or list(dims)
    views = [rng.normal(size=(B, T, dims[t])) for t in tags]
    return MultiViewBatch(views, tags, np.ones((B, T), bool))


def random_target(rng, n):
    return VaTarget(rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), np.ones(n, bool))


# ---------------------------------------------------------------- batch

def test_batch_validation():
    with pytest.raises(ContractError):
        MultiViewBatch([], [], np.ones((1, 2), bool))
    with pytest.raises(ContractError):
        MultiViewBatch([np.zeros((1, 2, 3)), np.zeros((1, 3, 3))], ["a", "b"], np.ones((1, 2), bool))
    b = MultiViewBatch([np.zeros((1, 2, 3)), np.ones((1, 2, 4))], ["a", "b"], np.ones((1, 2), bool))
    assert b.without("a").view_tags == ["b"] and b.has("b") and not b.has("c")


# ---------------------------------------------------------------- init

def test_init_bounds_and_forget_bias():
    p = init_params("mfn", {"views": {"visual": 8, "audio": 4}, "hidden": 16, "memory": 32},
                    np.random.default_rng(0))
    w = p["lstm.visual.w"].data
    assert np.all(np.abs(w) <= 1 / np.sqrt(8))
    b = p["lstm.visual.b"].data
    assert b[16:32].tolist() == [1.0] * 16 and not b[:16].any() and not b[32:].any()
    assert not p["head.b"].data.any()


def test_init_is_deterministic():
    dims = {"views": {"visual": 5, "audio": 3}, "hidden": 4}
    for kind in ("attention", "mfn", "mctn"):
        a = init_params(kind, dims, nd.RngState(3).stream("init"))
        b = init_params(kind, dims, nd.RngState(3).stream("init"))
        assert dumps(a) == dumps(b)


def test_init_unknown_kind():
    with pytest.raises(ContractError):
        init_params("lstm", {"views": {"visual": 2}, "hidden": 2}, np.random.default_rng(0))


# ---------------------------------------------------------------- attention

def test_attention_shape():
    rng = np.random.default_rng(0)
    dims = {"visual": 6, "audio": 3}
    p = init_attention(dims, 32, rng)
    assert attention_forward(make_batch(rng, dims, 2, 64), p).shape == (2, 64, 2)


def test_attention_single_view_is_plain_encoder():
    rng = np.random.default_rng(1)
    p = init_attention({"visual": 4}, 5, rng)
    batch = make_batch(rng, {"visual": 4}, 2, 7)
    alpha, _ = attention_weights_and_fused(batch, p)
    assert np.all(alpha.data == 1.0)
    x = batch.views[0]
    h = np.tanh(x @ p["enc.visual.w"].data + p["enc.visual.b"].data)
    ref = h @ p["head.w"].data + p["head.b"].data
    assert np.allclose(attention_forward(batch, p).data, ref, rtol=0, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_attention_weights_sum_to_one(seed, n_views):
    rng = np.random.default_rng(seed)
    dims = {f"v{i}": int(rng.integers(1, 5)) for i in range(n_views)}
    p = init_attention(dims, 6, rng)
    alpha, _ = attention_weights_and_fused(make_batch(rng, dims, 3, 5), p)
    assert np.all(np.abs(alpha.data.sum(-1) - 1) <= 1e-12)


def test_attention_dim_mismatch():
    rng = np.random.default_rng(0)
    p = init_attention({"visual": 4}, 3, rng)
    with pytest.raises(DimensionError):
        attention_forward(make_batch(rng, {"visual": 5}, 1, 2), p)


def test_attention_dropout_only_in_training():
    rng = np.random.default_rng(2)
    dims = {"visual": 4, "audio": 2}
    p = init_attention(dims, 8, rng)
    batch = make_batch(rng, dims, 2, 6)
    a = attention_forward(batch, p, np.random.default_rng(0), False, 0.5).data
    b = attention_forward(batch, p).data
    c = attention_forward(batch, p, np.random.default_rng(0), True, 0.5).data
    assert np.array_equal(a, b) and not np.array_equal(a, c)


# ---------------------------------------------------------------- mfn

def test_mfn_shapes():
    rng = np.random.default_rng(0)
    dims = {"visual": 8, "audio": 4}
    p = init_mfn(dims, 16, 32, rng)
    pred, mem = mfn_forward(make_batch(rng, dims, 2, 20), p, return_memory=True)
    assert pred.shape == (2, 20, 2) and mem.shape == (2, 20, 32)


def test_mfn_zero_case():
    rng = np.random.default_rng(0)
    dims = {"visual": 3, "audio": 2}
    p = init_mfn(dims, 4, 5, rng)
    for name, t in p.items():
        t.data = np.zeros_like(t.data)
    p["head.b"] = np.array([0.3, -0.7])
    batch = MultiViewBatch([np.zeros((2, 6, 3)), np.zeros((2, 6, 2))], list(dims), np.ones((2, 6), bool))
    pred, mem = mfn_forward(batch, p, return_memory=True)
    assert not mem.data.any()
    assert np.array_equal(pred.data, np.broadcast_to([0.3, -0.7], (2, 6, 2)))


def test_mfn_saturated_gates_freeze_memory():
    rng = np.random.default_rng(4)
    dims = {"visual": 3, "audio": 2}
    p = init_mfn(dims, 4, 5, rng)
    p["mem.retain.w"] = np.zeros_like(p["mem.retain.w"].data)
    p["mem.retain.b"] = np.full(5, 1e3)
    p["mem.update.w"] = np.zeros_like(p["mem.update.w"].data)
    p["mem.update.b"] = np.full(5, -1e3)
    u0 = rng.normal(size=(2, 5))
    _, mem = mfn_forward(make_batch(rng, dims, 2, 9), p, return_memory=True, memory0=u0)
    assert np.array_equal(mem.data, np.broadcast_to(u0[:, None, :], (2, 9, 5)))


def test_mfn_needs_two_views():
    rng = np.random.default_rng(0)
    with pytest.raises(ContractError):
        init_mfn({"visual": 3}, 4, 4, rng)
    p = init_mfn({"visual": 3, "audio": 2}, 4, 4, rng)
    with pytest.raises(ContractError):
        mfn_forward(make_batch(rng, {"visual": 3}), p)


# ---------------------------------------------------------------- mctn

def test_mctn_shapes():
    rng = np.random.default_rng(0)
    dims = {"visual": 8, "audio": 4}
    p = init_mctn(8, 4, 16, rng)
    out = mctn_forward(make_batch(rng, dims, 3, 10), p, "visual", "audio")
    assert out.pred.shape == (3, 10, 2)
    assert out.translation.shape == (3, 10, 4) and out.cycle.shape == (3, 10, 8)


def test_mctn_inference_ignores_target_view():
    rng = np.random.default_rng(1)
    dims = {"visual": 5, "audio": 3}
    p = init_mctn(5, 3, 6, rng)
    full = make_batch(rng, dims, 2, 12)
    a = mctn_forward(full, p, "visual", "audio").pred.data
    b = mctn_forward(full.without("audio"), p, "visual", "audio").pred.data
    assert a.tobytes() == b.tobytes()


def test_mctn_loss_reduces_to_va_loss():
    rng = np.random.default_rng(2)
    dims = {"visual": 5, "audio": 3}
    p = init_mctn(5, 3, 6, rng)
    batch = make_batch(rng, dims, 2, 8)
    tgt = random_target(rng, 16)
    out = mctn_forward(batch, p)
    base = va_loss(out.pred[..., 0], out.pred[..., 1], tgt, 0.5).item()
    assert mctn_loss(out, batch, tgt, 0.5, 0.0, 0.0).item() == base
    # without the translation term the target view is never touched
    cyc = np.mean((out.cycle.data - batch.view("visual")) ** 2)
    got = mctn_loss(out, batch.without("audio"), tgt, 0.5, 0.0, 0.3).item()
    assert got == pytest.approx(base + 0.3 * cyc, rel=1e-12)


def test_mctn_loss_two_frame_toy_by_hand():
    rng = np.random.default_rng(3)
    p = init_mctn(2, 1, 3, rng)
    xs, xt = rng.normal(size=(1, 2, 2)), rng.normal(size=(1, 2, 1))
    batch = MultiViewBatch([xs, xt], ["visual", "audio"], np.ones((1, 2), bool))
    tgt = VaTarget([0.2, -0.4], [0.5, 0.1], [True, True])
    out = mctn_forward(batch, p)
    pv, pa = out.pred.data[0, :, 0], out.pred.data[0, :, 1]

    def ccc2(p_, t_):
        mp, mt = (p_[0] + p_[1]) / 2, (t_[0] + t_[1]) / 2
        cov = ((p_[0] - mp) * (t_[0] - mt) + (p_[1] - mp) * (t_[1] - mt)) / 2
        vp = ((p_[0] - mp) ** 2 + (p_[1] - mp) ** 2) / 2
        vt = ((t_[0] - mt) ** 2 + (t_[1] - mt) ** 2) / 2
        return 2 * cov / (vp + vt + (mp - mt) ** 2)

    trans = np.mean((out.translation.data - xt) ** 2)
    cyc = np.mean((out.cycle.data - xs) ** 2)
    ref = 0.5 * (1 - ccc2(pv, tgt.valence)) + 0.5 * (1 - ccc2(pa, tgt.arousal)) + 0.1 * trans + 0.2 * cyc
    assert mctn_loss(out, batch, tgt, 0.5, 0.1, 0.2).item() == pytest.approx(ref, rel=1e-12)


def test_mctn_contract_errors():
    rng = np.random.default_rng(0)
    p = init_mctn(3, 2, 4, rng)
    batch = make_batch(rng, {"visual": 3, "audio": 2})
    with pytest.raises(ContractError):
        mctn_forward(batch, p, "visual", "visual")
    with pytest.raises(ContractError):
        mctn_forward(batch.without("visual"), p, "visual", "audio")
    out = mctn_forward(batch, p)
    with pytest.raises(ContractError):
        mctn_loss(out, batch.without("audio"), random_target(rng, 20), 0.5, 0.1, 0.1)


# ---------------------------------------------------------------- shared behaviour

@pytest.mark.parametrize("name", ["attention+va_loss", "mfn+va_loss", "mctn+mctn_loss"])
def test_model_gradients(name):
    builder, coords = gradsuite.MODEL_CASES[name]
    rep = gradsuite.run_case(builder, 0, coords)
    assert rep.passed, rep


@pytest.mark.parametrize("kind", ["attention", "mfn", "mctn"])
def test_models_are_deterministic(kind):
    dims = {"visual": 4, "audio": 3}
    outs = []
    for _ in range(2):
        rng = nd.RngState(5).stream("init")
        p = init_params(kind, {"views": dims, "hidden": 6}, rng)
        batch = make_batch(np.random.default_rng(9), dims, 2, 7)
        drop = nd.RngState(5).stream("dropout")
        if kind == "attention":
            y = attention_forward(batch, p, drop, True, 0.2)
        elif kind == "mfn":
            y = mfn_forward(batch, p, drop, True, 0.2)
        else:
            y = mctn_forward(batch, p, rng=drop, training=True, dropout=0.2).pred
        outs.append(y.data.tobytes())
    assert outs[0] == outs[1]


def test_masked_frames_do_not_change_losses():
    rng = np.random.default_rng(6)
    dims = {"visual": 4, "audio": 3}
    p = init_mctn(4, 3, 5, rng)
    batch = make_batch(rng, dims, 2, 6)
    valid = np.ones((2, 6), bool)
    valid[1, 4:] = False
    tgt = VaTarget(rng.uniform(-1, 1, 12), rng.uniform(-1, 1, 12), valid.reshape(-1))
    ref = mctn_loss(mctn_forward(batch, p), batch, tgt).item()
    # garbage in invalid target slots must not move the loss
    junk = VaTarget(np.where(tgt.valid, tgt.valence, 0.9), np.where(tgt.valid, tgt.arousal, -0.9), tgt.valid)
    views = [v.copy() for v in batch.views]
    views[1][1, 4:] = 1e3
    batch2 = MultiViewBatch(views, batch.view_tags, batch.valid)
    assert mctn_loss(mctn_forward(batch2, p), batch2, junk).item() == ref


# ---------------------------------------------------------------- checkpoint

@pytest.mark.parametrize("kind", ["attention", "mfn", "mctn"])
def test_checkpoint_round_trip(tmp_path, kind):
    p = init_params(kind, {"views": {"visual": 4, "audio": 3}, "hidden": 5}, np.random.default_rng(1))
    save_checkpoint(tmp_path / "m.sfck", p)
    q = load_checkpoint(tmp_path / "m.sfck")
    assert q.kind == kind and q.names() == p.names()
    for (a, x), (_, y) in zip(p.items(), q.items()):
        assert x.data.tobytes() == y.data.tobytes() and x.shape == y.shape
    assert dumps(q) == dumps(p)


def test_checkpoint_layout():
    p = ModelParams("mfn", {"w": np.array([[1.5, -2.0]])})
    buf = dumps(p)
    assert buf[:4] == b"SFCK"
    assert int.from_bytes(buf[4:8], "little") == 1
    assert buf[8] == 3 and buf[9:12] == b"mfn"
    assert int.from_bytes(buf[12:16], "little") == 1 and buf[16:17] == b"w"
    assert int.from_bytes(buf[17:21], "little") == 2
    assert np.frombuffer(buf[21:37], "<u8").tolist() == [1, 2]
    assert np.frombuffer(buf[37:], "<f8").tolist() == [1.5, -2.0]


def test_checkpoint_errors():
    p = ModelParams("attention", {"a": np.ones(3)})
    buf = dumps(p)
    with pytest.raises(FormatError):
        loads(b"XXXX" + buf[4:])
    with pytest.raises(FormatError):
        loads(buf[:-3])
