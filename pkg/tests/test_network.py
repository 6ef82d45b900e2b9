import numpy as np
import pytest

from sigverify import network as N
from sigverify.errors import CheckpointError, ConfigError, ShapeError
from sigverify.tensor import Rng, Tensor


def micro_config(head="fcn"):
    trunk = [N.conv(2, 3, 3), N.activation("relu"), N.pool(2, 2, "max")]
    if head == "fcn":
        return N.ModelConfig((1, 12, 14), trunk + [N.global_avg_pool(), N.softmax_output(2)])
    return N.ModelConfig((1, 12, 14), trunk + [N.flatten(), N.dense(8), N.activation("relu"),
                                               N.softmax_output(2)])


# ---------------------------------------------------------------------------
# Config validation


def test_presets_build_and_output_two_probs():
    for make in (N.default_cnn_config, N.default_fcn_config):
        net = N.build_network(make((1, 270, 360)), Rng(0))
        x = Tensor(np.zeros((1, 270, 360), np.float32))
        probs, _ = net.forward(x)
        assert probs.shape == (2,)
        assert abs(probs.data.sum() - 1.0) < 1e-6


def test_presets_share_identical_trunk():
    cnn = N.default_cnn_config()
    fcn = N.default_fcn_config()
    trunk_len = len(N.DEFAULT_TRUNK)
    assert cnn.layers[:trunk_len] == fcn.layers[:trunk_len]
    assert any(s.kind == "flatten" for s in cnn.layers)
    assert not any(s.kind == "global_avg_pool" for s in cnn.layers)
    assert any(s.kind == "global_avg_pool" for s in fcn.layers)
    assert not any(s.kind == "flatten" for s in fcn.layers)


def test_dense_on_3d_shape_is_a_build_error():
    cfg = N.ModelConfig((1, 12, 14), [N.conv(2, 3, 3), N.dense(10), N.softmax_output(2)])
    with pytest.raises(ConfigError, match=r"layer 1.*1-D"):
        cfg.validate()


def test_config_requires_final_softmax_output():
    cfg = N.ModelConfig((1, 8, 8), [N.flatten(), N.dense(2)])
    with pytest.raises(ConfigError, match="softmax_output"):
        cfg.validate()


def test_config_rejects_mixed_heads():
    cfg = N.ModelConfig((1, 12, 14), [N.conv(2, 3, 3), N.global_avg_pool(), N.flatten(),
                                      N.softmax_output(2)])
    with pytest.raises(ConfigError, match="mixes"):
        cfg.validate()


def test_shape_error_reports_layer_index_and_shapes():
    cfg = N.ModelConfig((1, 6, 6), [N.conv(2, 5, 5), N.pool(4, 4, "max"), N.flatten(),
                                    N.softmax_output(2)])
    with pytest.raises(ConfigError, match=r"layer 1 \(pool 4 4 max\).*4x4.*2x2"):
        cfg.validate()


def test_build_is_deterministic_given_seed():
    a = N.build_network(micro_config(), Rng(123))
    b = N.build_network(micro_config(), Rng(123))
    for (name_a, ta), (name_b, tb) in zip(a.parameters(), b.parameters()):
        assert name_a == name_b
        assert np.array_equal(ta.data, tb.data)


# ---------------------------------------------------------------------------
# Config text round trip


def test_config_text_round_trip():
    for make in (N.default_cnn_config, N.default_fcn_config):
        cfg = make((1, 54, 72))
        again = N.ModelConfig.from_text(cfg.to_text())
        assert again == cfg
        assert again.to_text() == cfg.to_text()


def test_config_text_ignores_comments_and_blanks():
    text = "# a comment\n\ninput 1 8 8\nconv 2 3 3   # inline\nrelu\nflatten\nsoftmax_output 2\n"
    cfg = N.ModelConfig.from_text(text)
    assert cfg.input_shape == (1, 8, 8)
    assert [s.kind for s in cfg.layers] == ["conv", "relu", "flatten", "softmax_output"]


def test_config_text_bad_line_reports_lineno():
    with pytest.raises(ConfigError, match="line 2"):
        N.ModelConfig.from_text("input 1 8 8\nconv two 3 3\nsoftmax_output 2\n")


def test_shipped_config_files_match_presets():
    from importlib import resources
    for name, make in (("cnn", N.default_cnn_config), ("fcn", N.default_fcn_config)):
        text = (resources.files("sigverify") / "configs" / f"{name}.cfg").read_text()
        assert N.ModelConfig.from_text(text) == make((1, 270, 360))


# ---------------------------------------------------------------------------
# Forward behavior


def test_forward_probs_sum_to_one():
    net = N.build_network(micro_config(), Rng(3))
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = Tensor(rng.uniform(0, 1, (1, 12, 14)).astype(np.float32))
        probs, _ = net.forward(x)
        assert abs(probs.data.sum() - 1.0) < 1e-6
        assert (probs.data >= 0).all()


def test_forward_differs_across_inputs():
    net = N.build_network(micro_config(), Rng(3))
    rng = np.random.default_rng(1)
    p1, _ = net.forward(Tensor(rng.uniform(0, 1, (1, 12, 14)).astype(np.float32)))
    p2, _ = net.forward(Tensor(rng.uniform(0, 1, (1, 12, 14)).astype(np.float32)))
    assert not np.array_equal(p1.data, p2.data)


def test_zero_input_zero_bias_gives_uniform_probs():
    net = N.build_network(micro_config(), Rng(3))     # biases init to zero
    probs, _ = net.forward(Tensor(np.zeros((1, 12, 14), np.float32)))
    assert np.allclose(probs.data, [0.5, 0.5])


def test_forward_rejects_wrong_input_shape():
    net = N.build_network(micro_config(), Rng(3))
    with pytest.raises(ShapeError, match="input shape"):
        net.forward(Tensor(np.zeros((1, 10, 14), np.float32)))


def test_softmax_shift_invariance_at_logit_level():
    rng = np.random.default_rng(8)
    for _ in range(20):
        logits = rng.uniform(-4, 4, 2)
        p = N.softmax(logits)
        q = N.softmax(logits + 17.5)
        assert np.argmax(p) == np.argmax(q)
        assert np.abs(p - q).max() < 1e-9


# ---------------------------------------------------------------------------
# Parameter counting


def test_param_count_empty_network():
    net = N.Network(micro_config(), [], np.float32)
    assert N.param_count(net) == 0


def test_param_count_single_conv_closed_form():
    cfg = N.ModelConfig((1, 10, 10), [N.conv(8, 5, 5), N.global_avg_pool(),
                                      N.softmax_output(2)])
    net = N.build_network(cfg, Rng(0))
    conv_params = sum(t.size for name, t in net.parameters() if name.startswith("layer0"))
    assert conv_params == 8 * (25 + 1)       # n * (c_in*m*r + 1)


def closed_form_count(config):
    """conv: n*(c_in*m*r+1); dense-like: in*out+out, from propagated shapes."""
    shape = config.input_shape
    total = 0
    for spec, out_shape in zip(config.layers, config.validate()):
        if spec.kind == "conv":
            n, m, r = spec.args
            total += n * (shape[0] * m * r + 1)
        elif spec.kind in ("dense", "softmax_output"):
            total += shape[0] * spec.args[0] + spec.args[0]
        shape = out_shape
    return total


def test_preset_param_counts_formula_vs_enumeration():
    cnn = N.build_network(N.default_cnn_config(), Rng(0))
    fcn = N.build_network(N.default_fcn_config(), Rng(0))
    assert N.param_count(cnn) == closed_form_count(N.default_cnn_config())
    assert N.param_count(fcn) == closed_form_count(N.default_fcn_config())
    assert N.param_count(fcn) < 0.01 * N.param_count(cnn)


# ---------------------------------------------------------------------------
# Checkpoints


def test_checkpoint_round_trip_bitwise(tmp_path):
    net = N.build_network(micro_config(), Rng(7))
    x = Tensor(np.random.default_rng(2).uniform(0, 1, (1, 12, 14)).astype(np.float32))
    probs_before, _ = net.forward(x)
    path = tmp_path / "net.ckpt"
    N.save_checkpoint(net, path, seed=99)
    restored, seed = N.load_checkpoint(path)
    assert seed == 99
    assert restored.config == net.config
    probs_after, _ = restored.forward(x)
    assert np.array_equal(probs_before.data, probs_after.data)


def test_checkpoint_corruption_detected(tmp_path):
    net = N.build_network(micro_config(), Rng(7))
    path = tmp_path / "net.ckpt"
    N.save_checkpoint(net, path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="checksum"):
        N.load_checkpoint(path)


def test_checkpoint_newer_version_rejected(tmp_path):
    import struct
    import zlib
    net = N.build_network(micro_config(), Rng(7))
    path = tmp_path / "net.ckpt"
    N.save_checkpoint(net, path)
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", N.CHECKPOINT_VERSION + 1)
    body = bytes(blob[:-4])
    path.write_bytes(body + struct.pack("<I", zlib.crc32(body)))
    with pytest.raises(CheckpointError, match="version"):
        N.load_checkpoint(path)


def test_checkpoint_truncation_detected(tmp_path):
    net = N.build_network(micro_config(), Rng(7))
    path = tmp_path / "net.ckpt"
    N.save_checkpoint(net, path)
    path.write_bytes(path.read_bytes()[:-9])
    with pytest.raises(CheckpointError):
        N.load_checkpoint(path)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(CheckpointError, match="magic"):
        N.load_checkpoint(path)
