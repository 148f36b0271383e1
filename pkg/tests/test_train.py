import numpy as np
import pytest

from ccal import data, losses, net, train
from ccal.errors import ContractError, DegenerateSpectrumError, PoisonedGradientError
from ccal.layer import CCALayer


@pytest.fixture(scope="module")
def tiny():
    ds, _ = data.generate(data.SynthSpec(2, 6, 6, 32, "tanh", 0.5, 0.5, seed=1))
    return ds


@pytest.fixture(scope="module")
def small():
    ds, _ = data.generate(data.SynthSpec(3, 6, 5, 300, "tanh", 0.5, 0.5, seed=2))
    return data.split(ds, (0.6, 0.2, 0.2), 0)


def make(head, dx=6, dy=6, k=4, seed=0, hidden=(16,)):
    return net.DualNet.init(net.TowerSpec((dx,) + hidden + (k,)), net.TowerSpec((dy,) + hidden + (k,)), head, seed)


@pytest.mark.parametrize("head", net.HEADS)
def test_seed_determinism(small, head):
    tr, va, _ = small
    cfg = train.TrainConfig(batch_size=40, max_epochs=4, seed=3)
    _, a = train.train(make(head, 6, 5), tr, va, cfg)
    ma, _ = train.train(make(head, 6, 5), tr, va, cfg)
    mb, b = train.train(make(head, 6, 5), tr, va, cfg)
    assert a.lines() == b.lines()
    assert [r.loss for r in a.epochs] == [r.loss for r in b.epochs]
    assert net.model_to_bytes(ma) == net.model_to_bytes(mb)


def test_patience_schedule_with_frozen_weights(small):
    tr, va, _ = small
    model = make("learned-rank", 6, 5)
    before = net.model_to_bytes(model)
    cfg = train.TrainConfig(lr=0.0, batch_size=50, max_epochs=100, patience=2, patience_after=1)
    model, lg = train.train(model, tr, va, cfg)
    assert lg.reductions_done == 3
    assert lg.stop_reason == "patience exhausted"
    # epoch 1 sets the best, 2 stalls, 3 cuts, then one cut per epoch, then stop
    assert len(lg.epochs) == 6
    assert [r.lr for r in lg.epochs] == [0.0] * 6
    assert sum(e.startswith("lr->") for r in lg.epochs for e in r.events) == 3
    model.config = {}
    after = net.model_to_bytes(model)
    assert before.replace(b"{}", b"") == after.replace(b"{}", b"")


def test_reductions_follow_divisor(small):
    tr, va, _ = small
    cfg = train.TrainConfig(lr=0.0, batch_size=50, max_epochs=100, patience=1, patience_after=1, reductions=2)
    model = make("learned-rank", 6, 5)
    # lr=0 keeps the metric flat; the divisor still applies to the (zero) rate
    _, lg = train.train(model, tr, va, cfg)
    assert lg.reductions_done == 2 and len(lg.epochs) == 4


@pytest.mark.parametrize("head", net.HEADS)
def test_lr_zero_leaves_params_bitwise(small, head):
    tr, va, _ = small
    model = make(head, 6, 5)
    before = [p.copy() for p in model.params()]
    train.train(model, tr, va, train.TrainConfig(lr=0.0, batch_size=40, max_epochs=1))
    for p, q in zip(model.params(), before):
        assert p.tobytes() == q.tobytes()


@pytest.mark.parametrize("head", net.HEADS)
def test_every_parameter_gets_gradient(tiny, head):
    model = make(head)
    X, tf = net.mlp_forward(model.tower_f, tiny.X)
    Y, tg = net.mlp_forward(model.tower_g, tiny.Y)
    cfg = train.TrainConfig(margin=0.7, symmetric=True)
    _, gx, gy = train._head_step(model, CCALayer(4), X, Y, cfg, [], 0)
    grads = net.mlp_backward(tf, gx)[0] + net.mlp_backward(tg, gy)[0]
    assert len(grads) == len(model.params())
    for g, p in zip(grads, model.params()):
        assert g.shape == p.shape and np.any(g != 0)


@pytest.mark.parametrize("head", net.HEADS)
def test_training_loss_non_increasing(tiny, head):
    ok = 0
    for seed in range(5):
        cfg = train.TrainConfig(lr=1e-4, batch_size=32, max_epochs=200, patience=1000, weight_decay=0.0, seed=seed)
        _, lg = train.train(make(head, seed=seed), tiny, tiny, cfg)
        L = np.array([r.loss for r in lg.epochs])
        ok += bool(np.all(np.diff(L) <= 0))
    assert ok >= 4


def test_degenerate_retry_then_skip(small, monkeypatch):
    tr, va, _ = small
    seen = []

    def broken(X, Y, r):
        seen.append(r)
        raise DegenerateSpectrumError(0, 1, 0.0)
    monkeypatch.setattr(losses, "tno_loss", broken)
    _, lg = train.train(make("tno", 6, 5), tr, va, train.TrainConfig(batch_size=90, max_epochs=1, reg=1e-3))
    assert seen[:2] == [1e-3, pytest.approx(1e-2)]
    ev = lg.epochs[0].events
    assert ev[0].startswith("retry(batch=0") and ev[1] == "skip(batch=0)"
    assert np.isnan(lg.epochs[0].loss)


def test_poisoned_gradient_aborts(small, monkeypatch):
    tr, va, _ = small

    def poisoned(X, Y, cfg):
        return np.full_like(X, np.nan), np.zeros_like(Y)
    monkeypatch.setattr(losses, "ranking_loss_adjoint", poisoned)
    with pytest.raises(PoisonedGradientError):
        train.train(make("learned-rank", 6, 5), tr, va, train.TrainConfig(max_epochs=1))


def test_preconditions(small):
    tr, va, _ = small
    with pytest.raises(ContractError):
        train.train(make("ccal-rank", 6, 5), tr, va, train.TrainConfig(batch_size=4))
    with pytest.raises(ContractError):
        train.train(make("ccal-rank", 5, 5), tr, va, train.TrainConfig())
    with pytest.raises(ContractError):
        train.TrainConfig(margin=0.0)


def test_final_state_by_head(small):
    tr, va, _ = small
    cfg = train.TrainConfig(batch_size=40, max_epochs=2)
    assert train.train(make("ccal-rank", 6, 5), tr, va, cfg)[0].cca_state is not None
    m, _ = train.train(make("tno", 6, 5), tr, va, cfg)
    assert m.cca_state is None
    train.refit(m, tr)
    assert m.cca_state.k == 4
    with pytest.raises(ContractError):
        train.refit(make("learned-rank"), tr)


def test_learned_rank_smoke_identical_views():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((5500, 32))
    ds = data.PairedDataset(X, X.copy())
    tr, va = ds.take(np.arange(5000)), ds.take(np.arange(5000, 5500))
    cfg = train.TrainConfig(batch_size=100, max_epochs=50, patience=3, patience_after=1, reductions=0)
    _, lg = train.train(make("learned-rank", 32, 32, k=16, hidden=(64,)), tr, va, cfg)
    assert lg.best_val_mrr > 90.0
