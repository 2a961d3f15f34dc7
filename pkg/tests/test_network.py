import math
from dataclasses import replace

import numpy as np
import pytest

from wesnet.exceptions import ConfigError, ContractError, NumericalError, TrainingDivergedError
from wesnet.mimo import generate_batch
from wesnet.network import (
    AdamState, ForwardTrace, LayerTrace, MacCounter, NetConfig, TrainConfig, adam_step,
    backward, detect, detnet_layer_forward, layer_forward, loss_regularized, loss_weighted,
    network_forward, preprocess, psi_soft_sign, sparsity_penalty, train, xavier_init,
)
from wesnet.profiles import project_monotone_unit


def _cfg(**kw):
    base = dict(nt=2, nr=2, layers=3, profile="linear", keep_fraction=1.0)
    base.update(kw)
    return NetConfig(**base)


def _randomize_biases(params, seed=0):
    rng = np.random.default_rng(seed)
    for lp in params.layers:
        lp.b1[:] = rng.normal(scale=0.1, size=lp.b1.shape)
        lp.b2[:] = rng.normal(scale=0.1, size=lp.b2.shape)
        lp.b3[:] = rng.normal(scale=0.1, size=lp.b3.shape)
    return params


def _relu(x):
    return np.maximum(x, 0.0)


def _oracle_layer(lp, s, a, hty, gram, t=0.5, level=1.0):
    # straight-line re-evaluation of the four layer equations
    x = np.concatenate([hty, np.einsum("bij,bj->bi", gram, s), s, a], axis=1)
    ut = lp.beta * _relu(x @ lp.W1.T + lp.b1)
    q = ut @ lp.W2.T + lp.b2
    s_next = level * (-1 + (_relu(q + t) - _relu(q - t)) / t)
    return s_next, ut @ lp.W3.T + lp.b3


def test_config_validation_and_derived_sizes():
    cfg = NetConfig(nt=4, nr=8)
    assert (cfg.d, cfg.hidden, cfg.aux, cfg.input_dim, cfg.layers) == (4, 32, 8, 20, 12)
    assert NetConfig(nt=3, nr=3, modulation="qam4").d == 6
    for bad in (dict(layers=0), dict(reg_start_layer=0), dict(reg_start_layer=13),
                dict(keep_fraction=0.0), dict(lam=-1.0), dict(psi_t=0.0), dict(profile="learnable")):
        with pytest.raises(ConfigError):
            NetConfig(nt=4, nr=8, **bad)


def test_xavier_init_bounds_and_determinism():
    cfg = NetConfig(nt=4, nr=8, keep_fraction=0.5)
    p = xavier_init(3, cfg)
    d = cfg.d
    for lp in p.layers:
        assert np.max(np.abs(lp.W1)) <= math.sqrt(6 / (8 * d + 5 * d))
        assert np.max(np.abs(lp.W2)) <= math.sqrt(6 / (8 * d + d))
        assert not lp.b1.any() and not lp.b2.any() and not lp.b3.any()
        assert np.all(lp.beta[16:] == 0) and np.all(lp.beta[:16] == 1)
    q = xavier_init(3, cfg)
    for (n1, a), (n2, b) in zip(p.named_tensors(), q.named_tensors()):
        assert n1 == n2 and a.tobytes() == b.tobytes()


def test_psi_examples():
    assert psi_soft_sign(0.0) == 0.0
    assert psi_soft_sign(0.25, 0.5, 1.0) == 0.5
    np.testing.assert_array_equal(psi_soft_sign([0.5, 3.0, -0.5, -9.0], 0.5, 2.0), [2, 2, -2, -2])
    with pytest.raises(ContractError):
        psi_soft_sign(1.0, 0.0)


def test_layer_matches_straight_line_oracle():
    cfg = _cfg(nt=2, keep_fraction=0.75)
    p = _randomize_biases(xavier_init(1, cfg))
    b = generate_batch(2, 2, 2, "bpsk", 5, 5, 7)
    _, _, hty, gram = preprocess(b.H, b.y, True)
    rng = np.random.default_rng(3)
    s = rng.uniform(-1, 1, (7, 2))
    a = rng.normal(size=(7, 4))
    got_s, got_a, _ = layer_forward(p.layers[0], s, a, hty, gram, cfg)
    want_s, want_a = _oracle_layer(p.layers[0], s, a, hty, gram)
    np.testing.assert_allclose(got_s, want_s, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(got_a, want_a, rtol=1e-12, atol=1e-12)


def test_network_matches_chained_oracle():
    cfg = _cfg()
    p = _randomize_biases(xavier_init(4, cfg))
    b = generate_batch(5, 2, 2, "bpsk", 5, 5, 6)
    tr = network_forward(p, b.H, b.y, cfg)
    _, _, hty, gram = preprocess(b.H, b.y, True)
    s, a = np.zeros((6, 2)), np.zeros((6, 4))
    for lp, lt in zip(p.layers, tr.layers):
        s, a = _oracle_layer(lp, s, a, hty, gram)
        np.testing.assert_allclose(lt.s, s, rtol=1e-12, atol=1e-12)
    assert len(tr) == 3


def test_zero_weights_degenerate_layer():
    cfg = _cfg()
    p = xavier_init(0, cfg)
    lp = p.layers[0]
    for name in ("W1", "W2", "W3"):
        getattr(lp, name)[:] = 0.0
    lp.b2[:] = [0.1, -2.0]
    lp.b3[:] = [1.0, 2.0, 3.0, 4.0]
    b = generate_batch(0, 2, 2, "bpsk", 5, 5, 3)
    _, _, hty, gram = preprocess(b.H, b.y)
    s, a, _ = layer_forward(lp, np.zeros((3, 2)), np.zeros((3, 4)), hty, gram, cfg)
    np.testing.assert_array_equal(s, np.tile(psi_soft_sign([0.1, -2.0]), (3, 1)))
    np.testing.assert_array_equal(a, np.tile(lp.b3, (3, 1)))


def test_unit_profile_is_bitwise_detnet():
    cfg = _cfg(nt=4, nr=8, layers=12, profile="constant", lam=0.0)
    p = _randomize_biases(xavier_init(9, cfg))
    b = generate_batch(10, 4, 8, "bpsk", 10, 10, 50)
    tr = network_forward(p, b.H, b.y, cfg)
    s, a = np.zeros((50, 4)), np.zeros((50, 8))
    for lp, lt in zip(p.layers, tr.layers):
        s, a = detnet_layer_forward(lp, s, a, tr.hty, tr.gram, cfg)
        assert s.tobytes() == lt.s.tobytes() and a.tobytes() == lt.a.tobytes()


def test_sparse_path_bit_identical_and_mac_drop():
    cfg = NetConfig(nt=4, nr=8, layers=6, profile="halfexp", keep_fraction=0.5)
    p = _randomize_biases(xavier_init(2, cfg))
    b = generate_batch(3, 4, 8, "bpsk", 8, 8, 40)
    dense_c, sparse_c = MacCounter(), MacCounter()
    dense = network_forward(p, b.H, b.y, cfg, sparse=False, counter=dense_c)
    sparse = network_forward(p, b.H, b.y, cfg, sparse=True, counter=sparse_c)
    for a, s in zip(dense.layers, sparse.layers):
        assert a.s.tobytes() == s.s.tobytes() and a.a.tobytes() == s.a.tobytes()
    d, zeroed = cfg.d, 16
    for r in range(6):
        assert dense_c.per_layer[r] - sparse_c.per_layer[r] == (5 * d + d + 2 * d) * zeroed * 2


def test_truncation_semantics():
    cfg = NetConfig(nt=2, nr=4, layers=6)
    p = xavier_init(0, cfg)
    b = generate_batch(1, 2, 4, "bpsk", 5, 5, 4)
    full = network_forward(p, b.H, b.y, cfg)
    part = network_forward(p, b.H, b.y, cfg, layers_to_run=2)
    assert len(part) == 2
    np.testing.assert_array_equal(part.s_hat, full.layers[1].s)
    # NaN in the dropped layers must not leak into the output
    for lp in p.layers[2:]:
        lp.W1[:] = np.nan
    np.testing.assert_array_equal(detect(p, b.H, b.y, cfg, 2).soft, full.layers[1].s)
    lead = network_forward(xavier_init(0, cfg), b.H, b.y, cfg, layers_to_run=2, drop="leading")
    assert lead.layer_indices == [4, 5]
    macs = []
    for k in range(1, 7):
        c = MacCounter()
        network_forward(xavier_init(0, cfg), b.H, b.y, cfg, layers_to_run=k, counter=c)
        macs.append(c.total)
    assert all(np.diff(macs) > 0) and len(set(np.diff(macs))) == 1
    with pytest.raises(ContractError):
        network_forward(p, b.H, b.y, cfg, layers_to_run=7)


def test_outputs_bounded_by_level():
    cfg = NetConfig(nt=2, nr=2, modulation="qam4", layers=4)
    p = _randomize_biases(xavier_init(0, cfg))
    for lp in p.layers:
        lp.W2 *= 50
    b = generate_batch(0, 2, 2, "qam4", 0, 0, 30)
    tr = network_forward(p, b.H, b.y, cfg)
    for lt in tr.layers:
        assert np.max(np.abs(lt.s)) <= 1 / math.sqrt(2) + 1e-15


def _manual_trace(shats, s_zf):
    layers = [LayerTrace(None, None, None, None, None, np.atleast_2d(s), None) for s in shats]
    return ForwardTrace(None, None, None, None, layers, list(range(len(layers))),
                        np.atleast_2d(s_zf))


def test_loss_hand_values():
    s = np.array([[1.0, 1.0, 1.0, 1.0]])
    s_zf = np.array([[0.0, 0.0, 0.0, 1.0]])                      # ||s - s_zf||^2 = 3 ... adjust
    s_zf = np.array([[-1.0, 1.0, 1.0, 1.0]])                     # = 4
    s2 = np.array([[0.0, 0.0, 1.0, 1.0]])                        # ||s - s2||^2 = 2
    assert loss_weighted(_manual_trace([s2 * 0, s2], s_zf), s) == pytest.approx(math.log(2) * 0.5, rel=1e-15)
    assert loss_weighted(_manual_trace([s2], s_zf), s) == 0.0
    assert loss_weighted(_manual_trace([s, s, s], s_zf), s) == 0.0
    # ZF exact: denominator floored instead of dividing by zero
    assert math.isfinite(loss_weighted(_manual_trace([s2, s2], s), s))


def test_penalty_hand_value_and_structure():
    cfg = NetConfig(nt=1, nr=1, layers=2, profile="constant", lam=0.1)
    p = xavier_init(0, cfg)
    for lp in p.layers:
        for name in ("W1", "W2", "W3"):
            getattr(lp, name)[:] = 0.0
    p.layers[1].W1[0, 0] = 3.0
    p.layers[0].W1[:] = 7.0                                      # r = 1 never counts
    assert cfg.lam * sparsity_penalty(p, cfg) == pytest.approx(0.1 * math.log(4), rel=1e-15)
    b = generate_batch(0, 1, 1, "bpsk", 5, 5, 3)
    tr = network_forward(p, b.H, b.y, cfg, with_zf=True)
    zero = replace(cfg, lam=0.0)
    assert loss_regularized(tr, b.s, p, zero) == loss_weighted(tr, b.s)


def _loss_terms(params, b, cfg):
    """Every additive piece of the regularized loss as one flat array.

    Differencing these term by term before summing keeps the central
    difference accurate even when a single tiny term moves against a large
    total.
    """
    tr = network_forward(params, b.H, b.y, cfg, with_zf=True)
    den = np.maximum(np.sum((b.s - tr.s_zf) ** 2, axis=1), 1e-12)
    nb = b.s.shape[0]
    terms = [math.log(r) * np.sum((b.s - lt.s) ** 2, axis=1) / den / nb
             for r, lt in enumerate(tr.layers, start=1)]
    for r in range(max(cfg.reg_start_layer, 2), len(params) + 1):
        lp = params.layers[r - 1]
        mass = np.sum(lp.beta * (np.abs(lp.W1).sum(1) + np.abs(lp.W2).sum(0) + np.abs(lp.W3).sum(0)))
        terms.append(np.array([cfg.lam * math.log1p((r - 1) * mass)]))
    return np.concatenate(terms), tr


def _fd_check(cfg, seed, eps=1e-5):
    params = _randomize_biases(xavier_init(seed, cfg), seed)
    if cfg.learnable_beta:
        rng = np.random.default_rng(seed)
        for lp in params.layers:
            lp.beta[:] = project_monotone_unit(np.sort(rng.uniform(0.2, 1, lp.beta.size))[::-1])
    b = generate_batch(seed + 1, cfg.nt, cfg.nr, cfg.modulation, 0.0, 0.0, 8)
    terms, tr = _loss_terms(params, b, cfg)
    assert np.sum(terms) == pytest.approx(loss_regularized(tr, b.s, params, cfg), rel=1e-12)
    grads = backward(tr, b.s, params, cfg)

    worst = 0.0
    names = ("W1", "b1", "W2", "b2", "W3", "b3", "beta")
    for r, lp in enumerate(params.layers):
        for name in names:
            w = getattr(lp, name)
            for idx in np.ndindex(w.shape):
                old = w[idx]
                w[idx] = old + eps
                plus = _loss_terms(params, b, cfg)[0]
                w[idx] = old - eps
                minus = _loss_terms(params, b, cfg)[0]
                w[idx] = old
                fd = np.sum(plus - minus) / (2 * eps)
                an = grads[r][name][idx]
                # absolute floor only matters for exactly-dead paths
                rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
                worst = max(worst, rel)
    return worst


@pytest.mark.parametrize("kw", [dict(lam=1e-3), dict(lam=0.0, profile="halfexp", keep_fraction=0.5),
                                dict(lam=1e-2, learnable_beta=True, reg_start_layer=2)])
def test_full_network_finite_differences(kw):
    assert _fd_check(_cfg(**kw), seed=3) < 1e-4


def test_masked_units_get_zero_gradient_and_lambda_zero_has_no_penalty_grad():
    cfg = _cfg(profile="halfexp", keep_fraction=0.5, lam=0.0)
    p = _randomize_biases(xavier_init(0, cfg))
    b = generate_batch(0, 2, 2, "bpsk", 5, 5, 10)
    g = backward(network_forward(p, b.H, b.y, cfg, with_zf=True), b.s, p, cfg)
    for gr in g:
        assert not gr["W1"][8:].any() and not gr["b1"][8:].any()
        assert not gr["W2"][:, 8:].any() and not gr["W3"][:, 8:].any()
    with_pen = backward(network_forward(p, b.H, b.y, replace(cfg, lam=0.5), with_zf=True),
                        b.s, p, replace(cfg, lam=0.5))
    assert not np.array_equal(with_pen[1]["W1"], g[1]["W1"])
    np.testing.assert_array_equal(with_pen[0]["W1"], g[0]["W1"])   # r = 1 carries no penalty


def test_stale_trace_rejected():
    cfg = _cfg()
    p = xavier_init(0, cfg)
    b = generate_batch(0, 2, 2, "bpsk", 5, 5, 4)
    tr = network_forward(p, b.H, b.y, cfg, with_zf=True)
    adam_step(AdamState(), p, backward(tr, b.s, p, cfg), cfg)
    with pytest.raises(ContractError, match="stale"):
        backward(tr, b.s, p, cfg)
    with pytest.raises(ContractError):
        backward(network_forward(p, b.H, b.y, cfg), b.s, p, cfg)


def _zero_grads(p):
    return [{n: np.zeros_like(getattr(lp, n)) for n in ("W1", "b1", "W2", "b2", "W3", "b3", "beta")}
            for lp in p.layers]


def test_adam_scalar_oracle_and_zero_gradient():
    cfg = _cfg()
    p = xavier_init(0, cfg)
    before = p.copy()
    state = AdamState(lr=0.1)
    adam_step(state, p, _zero_grads(p), cfg)
    for (_, a), (_, b) in zip(p.named_tensors(), before.named_tensors()):
        np.testing.assert_array_equal(a, b)
    g = _zero_grads(p)
    g[0]["W1"][0, 0] = 0.5
    w0 = p.layers[0].W1[0, 0]
    adam_step(state, p, g, cfg)
    # step 2: m = 0.05, v = 0.00025; bias-corrected by (1 - 0.9^2), (1 - 0.999^2)
    m_hat, v_hat = 0.05 / (1 - 0.9**2), 0.00025 / (1 - 0.999**2)
    assert p.layers[0].W1[0, 0] == pytest.approx(w0 - 0.1 * m_hat / (math.sqrt(v_hat) + 1e-8), rel=1e-14)
    m_prev = state.m["layer000.W1"][0, 0]
    adam_step(state, p, _zero_grads(p), cfg)
    assert state.m["layer000.W1"][0, 0] == pytest.approx(0.9 * m_prev, rel=1e-15)


def test_adam_rejects_non_finite_gradient_naming_tensor():
    cfg = _cfg()
    p = xavier_init(0, cfg)
    g = _zero_grads(p)
    g[2]["b3"][1] = np.inf
    with pytest.raises(NumericalError, match="layer 2 tensor b3"):
        adam_step(AdamState(), p, g, cfg)


def test_learnable_beta_stays_monotone_and_masked():
    cfg = NetConfig(nt=2, nr=4, layers=4, profile="linear", keep_fraction=0.5,
                    learnable_beta=True, lam=1e-2)
    cut = 8

    def check(it, params, loss):
        for lp in params.layers:
            assert np.all(np.diff(lp.beta) <= 0)
            assert np.all((lp.beta >= 0) & (lp.beta <= 1))
            assert np.all(lp.beta[cut:] == 0)

    res = train(cfg, TrainConfig(iterations=60, batch=64, learning_rate=5e-2, lr_schedule="constant"),
                callback=check)
    assert not np.array_equal(res.params.layers[0].beta, xavier_init(0, cfg).layers[0].beta)


def test_training_is_reproducible_and_detnet_trajectory():
    cfg = NetConfig(nt=2, nr=4, layers=4, profile="constant", lam=0.0)
    tcfg = TrainConfig(iterations=20, batch=32)

    def same_as_unscaled(it, params, loss):
        b = generate_batch(it + 100, 2, 4, "bpsk", 8, 14, 16)
        tr = network_forward(params, b.H, b.y, cfg)
        s, a = np.zeros((16, 2)), np.zeros((16, 4))
        for lp in params.layers:
            s, a = detnet_layer_forward(lp, s, a, tr.hty, tr.gram, cfg)
        assert s.tobytes() == tr.s_hat.tobytes()

    r1 = train(cfg, tcfg, callback=same_as_unscaled)
    r2 = train(cfg, tcfg)
    assert r1.losses.tobytes() == r2.losses.tobytes()
    for (_, a), (_, b) in zip(r1.params.named_tensors(), r2.params.named_tensors()):
        assert a.tobytes() == b.tobytes()


def test_divergence_reports_last_good_parameters():
    cfg = NetConfig(nt=2, nr=2, layers=3)

    def corrupt(it, params, loss):
        if it == 1:
            params.layers[0].W1[:] = np.inf

    with pytest.raises(TrainingDivergedError) as err:
        train(cfg, TrainConfig(iterations=5, batch=8), callback=corrupt)
    assert err.value.iteration == 2
    assert all(np.all(np.isfinite(t)) for _, t in err.value.last_good.named_tensors())


def test_train_config_validation_and_schedule():
    t = TrainConfig(iterations=100, learning_rate=1e-2, lr_min=1e-3)
    assert t.lr_at(0) == pytest.approx(1e-2) and t.lr_at(50) == pytest.approx(5.5e-3)
    assert TrainConfig(lr_schedule="constant").lr_at(77) == TrainConfig().learning_rate
    for bad in (dict(iterations=0), dict(snr_lo=10, snr_hi=5), dict(lr_schedule="step"),
                dict(lr_min=1.0)):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_input_profile_mode_runs_literal_equation():
    cfg = NetConfig(nt=2, nr=2, layers=2, profile="linear", keep_fraction=0.6, input_profile_mode=True)
    p = xavier_init(0, cfg)
    assert p.layers[0].beta_in.shape == (10,)
    b = generate_batch(0, 2, 2, "bpsk", 5, 5, 4)
    dense = network_forward(p, b.H, b.y, cfg)
    sparse = network_forward(p, b.H, b.y, cfg, sparse=True)
    assert dense.s_hat.tobytes() == sparse.s_hat.tobytes()
    np.testing.assert_array_equal(dense.layers[0].x[:, 6:], 0.0)
    with pytest.raises(ConfigError):
        NetConfig(nt=1, nr=1, profile="halfexp", input_profile_mode=True)
