import numpy as np
import pytest

import gridedit as ge

TILE = 8


@pytest.fixture(scope="module")
def record():
    return ge.generate_dataset(1, 3, TILE)[0]


@pytest.fixture(scope="module")
def gaussian():
    return ge.GaussianFlowModel(ge.ViewToGridMap.random(1), 0.05, TILE)


def test_shapes(record):
    assert record["src_grid"].shape == (3 * TILE, 2 * TILE, 3)
    assert record["src_cond"].shape == (TILE, TILE, 3)
    views = ge.split(record["src_grid"])
    assert len(views) == ge.NUM_VIEWS
    assert np.array_equal(ge.assemble(views), record["src_grid"])


def test_add_noise_endpoints(record):
    x = record["src_grid"]
    n = np.ones_like(x)
    assert np.array_equal(ge.add_noise(x, n, 0.0), x)
    assert np.array_equal(ge.add_noise(x, n, 1.0), n)


def test_identity_edit_is_exact(record, gaussian):
    for name in ge.presets():
        cfg = ge.with_preset(ge.EditConfig(), name)
        cfg.cfg_src = cfg.cfg_tar
        out, trace = ge.propagate_edit(gaussian, record["src_grid"], record["src_cond"],
                                       record["src_cond"], cfg)
        assert np.array_equal(out, record["src_grid"])
        assert len(trace["t"]) == cfg.n_max


def test_all_methods_run(record, gaussian):
    cfg = ge.EditConfig()
    cfg.total_steps, cfg.n_max = 10, 6
    for name in ge.methods():
        out, trace = ge.run_method(name, gaussian, record["src_grid"], record["src_cond"],
                                   record["tar_cond"], cfg)
        assert out.shape == record["src_grid"].shape
        assert np.isfinite(out).all()
        # naive integrates the whole schedule from pure noise
        assert len(trace["delta_norm"]) == (10 if name == "naive" else 6)


def test_cfg_one_returns_raw(record, gaussian):
    z = record["src_grid"]
    raw = gaussian.predict_raw(z, record["src_cond"], 0.4)
    assert np.array_equal(gaussian.predict(z, record["src_cond"], 0.4, 1.0), raw)


def test_metrics(record):
    a = np.zeros((3 * TILE, 2 * TILE, 3))
    b = a + 0.1
    assert ge.mse(a, b) == pytest.approx(0.01)
    assert ge.psnr(a, a) == 100.0
    mask = ge.edit_mask(record["src_grid"], record["tar_grid"])
    assert mask.shape == (3 * TILE, 2 * TILE)
    if mask.any() and not mask.all():
        assert ge.preservation_error(record["src_grid"], record["src_grid"], mask) == 0.0
    cos = ge.edit_direction_cosine(record["tar_grid"], record["src_grid"], record["tar_grid"])
    assert cos is None or cos == pytest.approx(1.0)


def test_errors(gaussian):
    with pytest.raises(ge.ShapeError):
        ge.mse(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)))
    cfg = ge.EditConfig()
    cfg.n_max = cfg.total_steps + 1
    with pytest.raises(ge.ConfigError):
        cfg.validate()
    with pytest.raises(ge.ConfigError):
        ge.with_preset(ge.EditConfig(), "no-such-preset")


def test_dataset_train_and_checkpoint(tmp_path):
    data = tmp_path / "data"
    manifest = ge.make_dataset(2, 5, TILE, str(data))
    assert len(manifest["records"]) == 2
    assert len(ge.load_dataset(str(data))) == 2

    net_cfg = ge.TinyFlowNetConfig()
    net_cfg.tile_size, net_cfg.layers, net_cfg.channels = TILE, 2, 4
    net = ge.TinyFlowNet(net_cfg)
    res = ge.train(net, str(data), epochs=3, seed=1)
    assert len(res["epoch_loss"]) == 3
    assert np.isfinite(res["final_loss"])

    path = tmp_path / "model.bin"
    net.save(str(path))
    again = ge.TinyFlowNet.load(str(path))
    assert np.array_equal(again.parameters(), net.parameters())

    report = ge.evaluate_benchmark(again, str(data), ["propagate", "naive"])
    assert "aggregates" in report


def test_png_round_trip(tmp_path, record):
    path = tmp_path / "grid.png"
    ge.write_grid(str(path), record["src_grid"])
    back = ge.read_grid(str(path))
    assert np.abs(back - record["src_grid"]).max() <= 1.0 / 255.0 + 1e-12
