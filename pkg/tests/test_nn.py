import numpy as np
import pytest

from fedsynth.errors import DivergenceError, ValidationError
from fedsynth.nn import (AdamState, DenoiserParams, GradientVector, adam_step,
                         batch_loss, forward, init_denoiser, per_sample_grads,
                         time_embed, TrainingSample)


# ---------------------------------------------------------------------------
# Time embedding


def test_time_embed_t_zero_alternates_zero_one():
    emb = time_embed(0, dim=8)
    np.testing.assert_allclose(emb, [0, 1, 0, 1, 0, 1, 0, 1], atol=0)


def test_time_embed_known_values():
    emb = time_embed(3, dim=4)
    # angles: 3/10000^0 = 3 and 3/10000^(1/2) = 0.03
    expected = [np.sin(3.0), np.cos(3.0), np.sin(0.03), np.cos(0.03)]
    np.testing.assert_allclose(emb, expected, rtol=1e-15)


def test_time_embed_batched_matches_scalar():
    batch = time_embed(np.array([1, 5, 9]), dim=16)
    for i, t in enumerate([1, 5, 9]):
        np.testing.assert_array_equal(batch[i], time_embed(t, dim=16))


def test_time_embed_rejects_odd_dim():
    with pytest.raises(ValidationError):
        time_embed(1, dim=7)


# ---------------------------------------------------------------------------
# Parameter pack


def _tiny_net(rng_seed=0, d_enc=5, emb_shapes=((3,), (4,))):
    rng = np.random.default_rng(rng_seed)
    embeddings = [rng.normal(size=(v[0], 2)) for v in emb_shapes]
    return init_denoiser(d_enc, hidden_width=7, n_hidden=2, time_dim=6,
                         embeddings=embeddings, rng=rng)


def test_flatten_from_flat_roundtrip():
    params = _tiny_net()
    flat = params.flatten()
    assert flat.size == params.size
    back = DenoiserParams.from_flat(flat, params.manifest())
    np.testing.assert_array_equal(back.flatten(), flat)
    for w1, w2 in zip(params.weights, back.weights):
        np.testing.assert_array_equal(w1, w2)
    for e1, e2 in zip(params.embeddings, back.embeddings):
        np.testing.assert_array_equal(e1, e2)


def test_init_denoiser_shapes_and_bias_zero():
    params = init_denoiser(5, hidden_width=7, n_hidden=2, time_dim=6,
                           rng=np.random.default_rng(0))
    shapes = [w.shape for w in params.weights]
    assert shapes == [(11, 7), (7, 7), (7, 5)]
    for b in params.biases:
        assert np.all(b == 0.0)


def test_init_denoiser_kaiming_bound():
    params = init_denoiser(5, hidden_width=64, n_hidden=2, time_dim=6,
                           rng=np.random.default_rng(1))
    for w in params.weights:
        bound = np.sqrt(6.0 / w.shape[0])
        assert np.max(np.abs(w)) <= bound


def test_forward_zero_params_outputs_zero():
    params = _tiny_net()
    for w in params.weights:
        w[:] = 0.0
    x = np.random.default_rng(2).normal(size=5)
    np.testing.assert_array_equal(forward(params, x, 3), np.zeros(5))


def test_forward_batch_matches_single():
    params = _tiny_net()
    rng = np.random.default_rng(3)
    xs = rng.normal(size=(4, 5))
    ts = np.array([1, 2, 3, 4])
    batched = forward(params, xs, ts)
    for i in range(4):
        np.testing.assert_allclose(batched[i], forward(params, xs[i], ts[i]),
                                   rtol=1e-14)


# ---------------------------------------------------------------------------
# Per-sample gradients vs central finite differences


def _loss_of_flat(flat, manifest, sample_proto):
    """Loss as a pure function of the flat parameter vector.

    Rebuilds x_in from the (possibly perturbed) embedding tables so the
    finite-difference probe exercises the embedding path too.
    """
    params = DenoiserParams.from_flat(flat, manifest)
    x_in = np.array(sample_proto["x_base"])
    if sample_proto["rows"] is not None:
        n_num = params.n_numeric
        for j, row in enumerate(sample_proto["rows"]):
            x_in[n_num + 2 * j: n_num + 2 * (j + 1)] += (
                sample_proto["coeff"] * params.embeddings[j][row])
    out = forward(params, x_in, sample_proto["t"])
    diff = out - sample_proto["target"]
    return float(diff @ diff) / out.size


def _make_sample(params, rng, with_embeddings=True):
    d = params.d_enc
    x_base = rng.normal(size=d)
    rows = None
    coeff = 0.0
    if with_embeddings and params.embeddings:
        rows = np.array([rng.integers(0, e.shape[0]) for e in params.embeddings])
        coeff = 0.73
        n_num = params.n_numeric
        for j, row in enumerate(rows):
            x_base[n_num + 2 * j: n_num + 2 * (j + 1)] = 0.0
    proto = {"x_base": x_base, "rows": rows, "coeff": coeff,
             "t": int(rng.integers(1, 20)), "target": rng.normal(size=d)}
    x_in = np.array(x_base)
    if rows is not None:
        n_num = params.n_numeric
        for j, row in enumerate(rows):
            x_in[n_num + 2 * j: n_num + 2 * (j + 1)] += coeff * params.embeddings[j][row]
    sample = TrainingSample(x_in=x_in, t=proto["t"], target=proto["target"],
                            emb_rows=rows, emb_coeff=coeff)
    return sample, proto


def _fd_grad(flat, manifest, proto, idx, h=1e-6):
    up, dn = np.array(flat), np.array(flat)
    up[idx] += h
    dn[idx] -= h
    return (_loss_of_flat(up, manifest, proto)
            - _loss_of_flat(dn, manifest, proto)) / (2 * h)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_per_sample_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    params = _tiny_net(rng_seed=seed)
    sample, proto = _make_sample(params, rng)
    flat = params.flatten()
    manifest = params.manifest()
    grads, _ = per_sample_grads(params, [sample])
    g = grads[0].values
    # probe 40 random coordinates plus every embedding coordinate
    n_net = flat.size - sum(e.size for e in params.embeddings)
    probe = list(rng.choice(n_net, size=40, replace=False))
    probe += list(range(n_net, flat.size))
    for idx in probe:
        fd = _fd_grad(flat, manifest, proto, idx)
        assert g[idx] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_embedding_gradient_zero_for_unused_rows():
    params = _tiny_net()
    rng = np.random.default_rng(4)
    sample, _ = _make_sample(params, rng)
    grads, _ = per_sample_grads(params, [sample])
    g = grads[0].values
    n_net = params.size - sum(e.size for e in params.embeddings)
    pos = n_net
    for j, e in enumerate(params.embeddings):
        table_grad = g[pos: pos + e.size].reshape(e.shape)
        pos += e.size
        used = int(sample.emb_rows[j])
        for row in range(e.shape[0]):
            if row != used:
                assert np.all(table_grad[row] == 0.0)
            else:
                assert np.any(table_grad[row] != 0.0)


def test_mean_per_sample_grad_matches_batch_fd():
    """Mean of per-sample grads is the gradient of the mean loss."""
    params = _tiny_net(rng_seed=5)
    rng = np.random.default_rng(6)
    batch, protos = [], []
    for _ in range(4):
        s, p = _make_sample(params, rng, with_embeddings=False)
        batch.append(s)
        protos.append(p)
    grads, mean_loss = per_sample_grads(params, batch)
    mean_grad = np.mean([g.values for g in grads], axis=0)
    flat, manifest = params.flatten(), params.manifest()
    assert mean_loss == pytest.approx(batch_loss(params, batch), rel=1e-12)
    for idx in np.random.default_rng(7).choice(flat.size, 25, replace=False):
        fd = np.mean([_fd_grad(flat, manifest, p, idx) for p in protos])
        assert mean_grad[idx] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_per_sample_grads_rejects_empty_batch():
    with pytest.raises(ValidationError):
        per_sample_grads(_tiny_net(), [])


def test_gradient_vector_norm_cached():
    gv = GradientVector(np.array([3.0, 4.0]))
    assert gv.norm == 5.0
    assert len(gv) == 2


# ---------------------------------------------------------------------------
# Adam


def test_adam_first_step_closed_form():
    n = 6
    rng = np.random.default_rng(8)
    p0 = rng.normal(size=n)
    g = rng.normal(size=n)
    state = AdamState.zeros(n, lr=0.01)
    p1 = adam_step(np.array(p0), state, GradientVector(np.array(g)))
    # after bias correction the first step is lr * g / (|g| + eps)
    expected = p0 - 0.01 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(p1, expected, rtol=1e-12)
    assert state.t == 1


def test_adam_two_steps_closed_form():
    p = np.zeros(1)
    state = AdamState.zeros(1, lr=0.1)
    g1, g2 = np.array([2.0]), np.array([-1.0])
    p = adam_step(p, state, GradientVector(g1))
    p = adam_step(p, state, GradientVector(g2))
    b1, b2, eps = 0.9, 0.999, 1e-8
    m = (1 - b1) * g1
    v = (1 - b2) * g1**2
    x = -0.1 * (m / (1 - b1)) / (np.sqrt(v / (1 - b2)) + eps)
    m = b1 * m + (1 - b1) * g2
    v = b2 * v + (1 - b2) * g2**2
    x = x - 0.1 * (m / (1 - b1**2)) / (np.sqrt(v / (1 - b2**2)) + eps)
    np.testing.assert_allclose(p, x, rtol=1e-12)


def test_adam_rejects_nonfinite_gradient():
    state = AdamState.zeros(2, lr=0.1)
    with pytest.raises(DivergenceError):
        adam_step(np.zeros(2), state, GradientVector(np.array([np.nan, 0.0])))


def test_adam_rejects_shape_mismatch():
    state = AdamState.zeros(2, lr=0.1)
    with pytest.raises(ValidationError):
        adam_step(np.zeros(3), state, GradientVector(np.zeros(2)))
