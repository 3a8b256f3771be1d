import numpy as np
import pytest

try:
    import prunekit as pk
except ImportError:  # running against the bare build tree
    import _core as pk


def test_gemm_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5, 7))
    b = rng.standard_normal((7, 3))
    assert np.allclose(pk.gemm(a, b), a @ b, atol=1e-12)


def test_im2col_shape_and_values():
    img = np.arange(9.0).reshape(1, 3, 3)
    cols = pk.im2col(img, 2, 2, 1, 0)
    assert cols.shape == (4, 4)
    # top-left window, channel-major kernel order
    assert list(cols[:, 0]) == [0.0, 1.0, 3.0, 4.0]


def test_conv2d_matches_direct():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out = pk.conv2d(x, w, b, 1, 1)
    assert out.shape == (3, 6, 6)
    # one spot-checked output position
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    ref = np.sum(w[1] * xp[:, 2:5, 3:6]) + b[1]
    assert out[1, 2, 3] == pytest.approx(ref, abs=1e-12)


def test_train_and_prune_roundtrip(tmp_path):
    data = pk.synth_dataset(3, 300, 4)
    net = pk.build_network("convnet-s", 3, [1, 16, 16], 4)
    losses = pk.train(net, data, epochs=4, seed=5)
    assert losses[-1] < losses[0]
    acc = pk.evaluate_accuracy(net, data)
    assert acc > 0.8

    masks = pk.magnitude_prune(net, {li: (2.0, 0.5) for li in net.prunable_layers()})
    pk.apply_mask(net, masks)
    conv_dense, _ = pk.count_params(net, None)
    conv_kept, _ = pk.count_params(net, masks)
    assert 1.8 <= conv_dense / conv_kept <= 2.2

    path = str(tmp_path / "state.ckpt")
    pk.save_checkpoint(net, masks, {"note": "smoke"}, path)
    net2, masks2, meta = pk.load_checkpoint(path)
    assert meta["note"] == "smoke"
    x = pk.synth_dataset(4, 8, 4).images
    assert np.array_equal(pk.forward(net, x), pk.forward(net2, x))


def test_compress_pipeline():
    cfg = """
    synth_n = 400
    baseline_epochs = 2
    max_rounds = 1
    sa.iters_per_temp = 2
    sa.calibration_moves = 4
    sa.eval_subset = 200
    admm.iterations = 3
    admm.epochs_per_iter = 1
    admm.retrain_epochs = 2
    purify.iters_per_temp = 1
    purify.cooling_levels = 2
    purify.eval_subset = 200
    out_dir = /tmp
    """
    csv, final_acc = pk.compress(cfg)
    lines = csv.strip().splitlines()
    assert lines[0].startswith("round,phase,objective")
    assert any(",prune," in l for l in lines)
    assert 0.0 <= final_acc <= 1.0
