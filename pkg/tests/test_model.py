import math

import numpy as np
import pytest

from fringedet.annotations import Annotation
from fringedet.errors import ConfigError, ShapeError, StaleTape
from fringedet.geometry import Ellipse
from fringedet.gridcodec import GridSpec, batch_encode, decode
from fringedet.loss import LossWeights, loss_gradient, total_loss
from fringedet.model import (
    AdamW,
    Frames,
    GridDetector,
    ModelConfig,
    OneCycle,
    TrainConfig,
    infer,
    load_checkpoint,
    predict,
    train,
)
from fringedet.model.layers import (
    AvgPool,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    ExistenceSigmoid,
    Flatten,
    LeakyReLU,
    MaxPool2,
    Residual,
    Sequential,
    Standardize,
    Tile,
)

F64 = np.float64


def tiny_config(seed=0, **kw):
    base = dict(input_size=16, pre_channels=(2, 2), stage_channels=(3,), head_width=6,
                dropout_rate=0.0, seed=seed, dtype="float64")
    base.update(kw)
    return ModelConfig(**base)


def rel_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-30))


def check_layer(layer, x, training=True, reseed=None, h=1e-6):
    """Compare analytic input and parameter gradients with central differences."""
    rng = np.random.default_rng(1)

    def run(inp):
        if reseed is not None:
            reseed()
        return layer.forward(inp, training)

    out = run(x)
    r = rng.standard_normal(out.shape)
    dx = layer.backward(r)
    grads = {k: g.copy() for k, g in layer.grads.items()}

    def f():
        return float(np.sum(run(x) * r))

    num_dx = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        num_dx[i] = (up - down) / (2 * h)
    assert rel_error(dx, num_dx) < 1e-7
    for k, p in layer.params.items():
        num = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            up = f()
            p[i] = old - h
            down = f()
            p[i] = old
            num[i] = (up - down) / (2 * h)
        assert rel_error(grads[k], num) < 1e-7, k


def _x(*shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


class TestLayerGradients:
    def test_conv(self):
        check_layer(Conv2D(2, 3, 3, rng=np.random.default_rng(0), dtype=F64), _x(2, 5, 4, 2))

    def test_dense(self):
        check_layer(Dense(5, 4, rng=np.random.default_rng(0), dtype=F64), _x(3, 5))

    def test_leaky_relu(self):
        check_layer(LeakyReLU(0.1), _x(2, 4, 4, 2))

    def test_maxpool(self):
        check_layer(MaxPool2(), _x(2, 4, 6, 2))

    def test_avgpool(self):
        check_layer(AvgPool(2), _x(2, 4, 4, 3))

    def test_tile(self):
        check_layer(Tile(3), _x(2, 3, 3, 1))

    def test_flatten(self):
        check_layer(Flatten(), _x(2, 3, 3, 2))

    def test_standardize(self):
        check_layer(Standardize(), _x(2, 4, 4, 2))

    def test_batchnorm_training(self):
        bn = BatchNorm(3, dtype=F64)
        bn.params["gamma"] = np.array([0.5, 1.5, -1.0])
        bn.params["beta"] = np.array([0.1, 0.0, -0.2])
        check_layer(bn, _x(3, 3, 2, 3))

    def test_batchnorm_inference(self):
        bn = BatchNorm(2, dtype=F64)
        bn.running_mean = np.array([0.3, -0.1])
        bn.running_var = np.array([2.0, 0.5])
        check_layer(bn, _x(2, 2, 2, 2), training=False)

    def test_dropout_with_fixed_mask(self):
        d = Dropout(0.4)

        def reseed():
            d.rng = np.random.default_rng(5)

        check_layer(d, _x(2, 3, 3, 2), reseed=reseed)

    def test_residual(self):
        rng = np.random.default_rng(0)
        block = Residual(Sequential(AvgPool(2), Tile(3)),
                         Sequential(Conv2D(1, 2, 3, rng=rng, dtype=F64), LeakyReLU(), MaxPool2(),
                                    Conv2D(2, 3, 3, rng=rng, dtype=F64)))
        x = _x(2, 4, 4, 1)
        check_layer(block, x)

    def test_existence_sigmoid(self):
        check_layer(ExistenceSigmoid(8, 0), _x(3, 16))


def test_stale_tape():
    d = Dense(2, 2)
    with pytest.raises(StaleTape):
        d.backward(np.zeros((1, 2)))
    d.forward(np.zeros((1, 2), dtype=np.float32))
    d.backward(np.zeros((1, 2)))
    with pytest.raises(StaleTape):
        d.backward(np.zeros((1, 2)))


def test_model_backward_without_forward():
    m = GridDetector(tiny_config())
    with pytest.raises(StaleTape):
        m.backward(np.zeros((1, 576)))


def _model_objective(m, x, y, w):
    pred = m.forward(x, training=True)
    return total_loss(y, pred, w), pred


@pytest.mark.parametrize("seed", range(5))
def test_end_to_end_gradient(seed):
    rng = np.random.default_rng(seed)
    cfg = tiny_config(seed, batch_norm=bool(seed % 2), head_init_gain=1.0)
    m = GridDetector(cfg)
    assert m.n_parameters() <= 10_000
    x = rng.uniform(0, 1, (2, 16, 16, 1))
    y = rng.uniform(0, 1, (2, 576))
    y[:, 0::8] = rng.integers(0, 2, (2, 72))
    w = LossWeights(1, 2, 3, 4, 5)
    _, pred = _model_objective(m, x, y, w)
    grads = m.backward(loss_gradient(y, pred, w))
    h = 1e-6
    analytic, numeric = [], []
    for name, p in m.named_parameters():
        flat = p.reshape(-1)
        pick = rng.choice(flat.size, size=min(flat.size, 40), replace=False)
        analytic.append(grads[name].ravel()[pick])
        for i in pick:
            old = flat[i]
            flat[i] = old + h
            up = _model_objective(m, x, y, w)[0]
            flat[i] = old - h
            down = _model_objective(m, x, y, w)[0]
            flat[i] = old
            numeric.append((up - down) / (2 * h))
    # one relative error over the sampled gradient; a conv bias ahead of
    # batch norm has an exactly-zero gradient that would swamp a per-tensor ratio
    assert rel_error(np.concatenate(analytic), np.array(numeric)) < 1e-6


def test_forward_shape_and_existence_range():
    m = GridDetector(tiny_config(head_init_gain=5.0))
    out = m.forward(np.random.default_rng(0).uniform(size=(3, 16, 16, 1)))
    assert out.shape == (3, 576)
    p = out[:, 0::8]
    assert np.all((p > 0) & (p < 1))


def test_zero_head_gives_half_existence():
    m = GridDetector(tiny_config())
    m.head.params["W"][...] = 0
    out = m.forward(np.random.default_rng(0).uniform(size=(2, 16, 16, 1)))
    assert np.all(out[:, 0::8] == 0.5)


def test_untrained_blank_image_detections_at_half():
    m = GridDetector(tiny_config())
    m.head.params["W"][...] = 0
    spec = GridSpec(16, 16)
    (dets,) = infer(m, [np.zeros((16, 16), dtype=np.uint8)], spec)
    assert len(dets) == 72
    assert all(d.confidence == 0.5 for d in dets)
    assert infer(m, [np.zeros((16, 16), dtype=np.uint8)], spec, threshold=1.0 + 1e-9) == [[]]


def test_infer_is_decode_of_forward():
    m = GridDetector(tiny_config(head_init_gain=3.0))
    img = np.random.default_rng(2).integers(0, 256, (16, 16), dtype=np.uint8)
    spec = GridSpec(16, 16)
    (dets,) = infer(m, [img], spec, threshold=0.3)
    assert dets == decode(m.forward(m.prepare([img]))[0], spec, 0.3)


def test_duplicate_inputs_identical_rows():
    m = GridDetector(tiny_config(dropout_rate=0.5))
    x = np.random.default_rng(0).uniform(size=(1, 16, 16, 1))
    out = m.forward(np.concatenate([x, x]), training=False)
    assert np.array_equal(out[0], out[1])


def test_zero_upstream_gives_zero_gradients():
    m = GridDetector(tiny_config())
    m.forward(np.random.default_rng(0).uniform(size=(2, 16, 16, 1)), training=True)
    grads = m.backward(np.zeros((2, 576)))
    assert all(np.all(g == 0) for g in grads.values())


def test_duplicated_sample_doubles_contribution():
    m = GridDetector(tiny_config())
    rng = np.random.default_rng(0)
    a, b = rng.uniform(size=(2, 1, 16, 16, 1))
    da, db = rng.standard_normal((2, 1, 576))

    def grads(x, d):
        m.forward(x, training=True)
        return m.backward(d)

    single = grads(np.concatenate([a, b]), np.concatenate([da, db]))
    single = {k: v.copy() for k, v in single.items()}
    double = grads(np.concatenate([a, a, b]), np.concatenate([da, da, db]))
    only_a = grads(a, da)
    for k in single:
        np.testing.assert_allclose(double[k], single[k] + only_a[k], atol=1e-10)


def test_shape_errors():
    m = GridDetector(tiny_config())
    with pytest.raises(ShapeError):
        m.forward(np.zeros((1, 8, 8, 1)))
    with pytest.raises(ConfigError):
        ModelConfig(input_size=20)


def test_default_model_size():
    m = GridDetector(ModelConfig())
    assert 300_000 <= m.n_parameters() <= 1_000_000
    assert m.forward(np.zeros((1, 64, 64, 1))).shape == (1, 576)


def test_flat_round_trip():
    m = GridDetector(tiny_config())
    flat = m.get_flat()
    m2 = GridDetector(tiny_config(seed=9))
    m2.set_flat(flat)
    assert np.array_equal(m2.get_flat(), flat)
    with pytest.raises(ShapeError):
        m2.set_flat(flat[:-1])


class TestOneCycle:
    def test_endpoints_and_peak(self):
        s = OneCycle(1e-3, 1001)
        assert s(0) == pytest.approx(1e-3 / 25)
        assert s.peak_step == 300
        assert s(300) == pytest.approx(1e-3)
        assert s(1000) == pytest.approx(1e-3 / 1e4)

    def test_piecewise_monotone_and_continuous(self):
        s = OneCycle(2e-3, 500, pct_start=0.25)
        lr = np.array([s(i) for i in range(500)])
        k = s.peak_step
        assert np.all(np.diff(lr[:k + 1]) >= 0)
        assert np.all(np.diff(lr[k:]) <= 0)
        assert np.max(np.abs(np.diff(lr))) < 2e-3 * 0.02
        assert lr.max() == pytest.approx(2e-3)


def test_adamw_decoupled_decay():
    p = {"0.Dense.W": np.array([1.0]), "0.Dense.b": np.array([1.0])}
    opt = AdamW(p, weight_decay=0.5)
    opt.step(p, {"0.Dense.W": np.array([0.0]), "0.Dense.b": np.array([0.0])}, lr=0.1)
    assert p["0.Dense.W"][0] == pytest.approx(0.95)
    assert p["0.Dense.b"][0] == 1.0


def _tiny_frames(n=2, seed=0):
    rng = np.random.default_rng(seed)
    imgs = [rng.integers(0, 256, (16, 16), dtype=np.uint8) for _ in range(n)]
    anns = [[Annotation(Ellipse(5 + i, 6, 3, 2, 10 * i), 1 + i)] for i in range(n)]
    return Frames.from_uint8(imgs, anns)


def test_lr_zero_leaves_parameters_unchanged():
    m = GridDetector(tiny_config())
    before = m.get_flat().copy()
    state = train(m, _tiny_frames(1), None, TrainConfig(epochs=1, batch_size=1, max_lr=0.0))
    assert np.array_equal(m.get_flat(), before)
    assert len(state.history.rows) == 1


def test_training_reduces_loss():
    m = GridDetector(tiny_config(head_init_gain=0.1))
    frames = _tiny_frames(4)
    state = train(m, frames, None, TrainConfig(epochs=40, batch_size=2, max_lr=3e-3, augment=False))
    losses = [r["train_loss"] for r in state.history.rows]
    assert losses[-1] < 0.5 * losses[0]


def test_training_is_bitwise_reproducible():
    from fringedet.augment import AugmentConfig

    def run():
        m = GridDetector(tiny_config(dropout_rate=0.2))
        s = train(m, _tiny_frames(4), _tiny_frames(2, seed=1), TrainConfig(epochs=3, batch_size=2, seed=4),
                  AugmentConfig.desk(seed=4))
        return s.history.to_csv(), m.get_flat()

    (h1, p1), (h2, p2) = run(), run()
    assert h1 == h2
    assert np.array_equal(p1, p2)


def test_checkpoint_resume(tmp_path):
    frames = _tiny_frames(4)
    tc = TrainConfig(epochs=2, batch_size=2, augment=False)
    part = GridDetector(tiny_config(dropout_rate=0.2))
    s = train(part, frames, None, tc, checkpoint_path=tmp_path / "last.npz")
    loaded, tcfg = load_checkpoint(tmp_path / "last.npz")
    assert tcfg == tc
    assert loaded.epoch == 2
    assert np.array_equal(loaded.model.get_flat(), part.get_flat())
    assert loaded.history.to_csv() == s.history.to_csv()
    assert loaded.optimizer.t == s.optimizer.t
    resumed = train(loaded.model, frames, None, tc, state=loaded)
    assert resumed.epoch == 4
    assert [r["epoch"] for r in resumed.history.rows] == [1, 2, 3, 4]


def test_best_checkpoint_written(tmp_path):
    m = GridDetector(tiny_config())
    train(m, _tiny_frames(2), _tiny_frames(2, seed=3), TrainConfig(epochs=2, batch_size=2),
          checkpoint_path=tmp_path / "last.npz")
    assert (tmp_path / "best.npz").exists()
    state, _ = load_checkpoint(tmp_path / "best.npz")
    assert math.isfinite(state.best_val)


def test_predict_matches_batched_targets_shape():
    m = GridDetector(tiny_config())
    frames = _tiny_frames(3)
    assert predict(m, frames.images).shape == batch_encode(frames.annotations, GridSpec(16, 16)).shape


def test_full_scale_preset_builds():
    cfg = ModelConfig.full_scale(head_width=8)
    assert cfg.input_size == 336
    m = GridDetector(cfg)
    assert m.forward(np.zeros((1, 336, 336, 1), dtype=np.float32), training=False).shape == (1, 576)
