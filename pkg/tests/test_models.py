"""
Test suite for the architecture builders, network and checkpoint format
"""

import os
import struct
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from errors import CheckpointError, ShapeMismatchError
from models.builders import (
    MODEL_IDS, build, channel_sequence, count_params, model_specs, scaled, shape_table,
)
from models.checkpoint import MAGIC, load_checkpoint, load_training_state, read_header, save_checkpoint
from models.network import Network, format_shape_table
from nn.gradcheck import check_network
from nn.loss import mse_dual_loss
from nn.optim import AdamState, adam_step
from schemas.config import ModelConfig
from schemas.layers import DenseSpec, OutputHeadSpec


def spatial(rows, kind="maxpool"):
    return [row.output_shape[:2] for row in rows if row.kind == kind]


class TestArchitectures:
    """Test suite for the M1, M2 and M3 layer lists"""

    def test_vgg_pooling_ladder(self):
        """Test M1 and M2 reach a 2 x 8 map after six pools at full input size"""
        expected = [(85, 256), (42, 128), (21, 64), (10, 32), (5, 16), (2, 8)]
        for model_id in ("M1", "M2"):
            rows = shape_table(ModelConfig(id=model_id))
            assert spatial(rows) == expected

    def test_weighted_layer_counts(self):
        """Test the conv and fully connected layer counts before the head"""
        assert build(ModelConfig.desk("M1")).weighted_layer_count == 14
        assert build(ModelConfig.desk("M2")).weighted_layer_count == 15
        assert build(ModelConfig.desk("M3")).weighted_layer_count == 27

    def test_full_scale_channel_order(self):
        """Test block channels follow the architecture table"""
        m1 = channel_sequence(model_specs(ModelConfig(id="M1")))
        m2 = channel_sequence(model_specs(ModelConfig(id="M2")))
        assert m1 == [16, 16, 32, 32, 64, 64, 128, 128, 256, 256, 512, 512]
        assert m2 == [64, 64, 128, 128, 256, 256, 512, 512, 512, 512, 512, 512]
        dense = [s.units for s in model_specs(ModelConfig(id="M2")) if isinstance(s, DenseSpec)]
        assert dense == [6144, 6144, 2000]

    def test_mobilenet_ladder(self):
        """Test the stem, the pointwise widths and the pooled head of M3"""
        specs = model_specs(ModelConfig(id="M3"))
        widths = channel_sequence(specs)
        assert widths[0] == 32
        assert widths[1:] == [64, 128, 128, 256, 256, 512, 512, 512, 512, 512, 512, 1024, 1024]
        assert specs[-2].kind == "global_avg_pool"
        assert isinstance(specs[-1], OutputHeadSpec)

    def test_every_conv_followed_by_batchnorm_relu(self):
        """Test the conv, batch norm, ReLU order in all three models"""
        for model_id in MODEL_IDS:
            specs = model_specs(ModelConfig(id=model_id))
            for i, spec in enumerate(specs):
                if spec.kind in ("conv2d", "depthwise", "pointwise"):
                    assert specs[i + 1].kind == "batchnorm"
                    assert specs[i + 2].kind == "relu"

    def test_full_scale_parameter_order(self):
        """Test M3 is the smallest and M2 the largest model at full scale"""
        counts = {model_id: count_params(ModelConfig(id=model_id)) for model_id in MODEL_IDS}
        assert counts["M3"] < counts["M1"] < counts["M2"]

    def test_width_multiplier_shrinks_m3(self):
        """Test a smaller width multiplier gives fewer parameters"""
        half = count_params(ModelConfig(id="M3", width_multiplier=0.5))
        full = count_params(ModelConfig(id="M3"))
        assert half < full

    def test_channel_scaling(self):
        """Test scaled counts round up and never reach zero"""
        assert scaled(6144, 1 / 16) == 384
        assert scaled(16, 1 / 16) == 1
        assert scaled(2000, 1 / 16) == 125
        assert scaled(3, 0.1) == 1
        assert scaled(10, 0.25) == 3

    def test_desk_shapes(self):
        """Test the desk input keeps every extent positive and ends in two outputs"""
        for model_id in MODEL_IDS:
            rows = shape_table(ModelConfig.desk(model_id))
            assert all(min(row.output_shape) >= 1 for row in rows)
            assert rows[-1].output_shape == (2,)

    def test_shape_table_text(self):
        """Test the plain-text table lists named layers and the total"""
        config = ModelConfig.desk("M1")
        text = format_shape_table(shape_table(config), config.input_shape)
        assert "conv3-1" in text
        assert "maxpool 2x2" in text
        assert "FC-2 linear" in text
        assert text.splitlines()[-1] == f"Total learnable parameters: {count_params(config):,}"

    def test_unbuilt_count_matches_built(self):
        """Test counting from the config equals counting the allocated network"""
        for model_id in MODEL_IDS:
            config = ModelConfig.desk(model_id)
            assert count_params(config) == count_params(build(config))


class TestNetwork:
    """Test suite for the network container"""

    @pytest.fixture(params=MODEL_IDS)
    def network(self, request):
        """Create each desk-scale model in double precision"""
        return build(ModelConfig.desk(request.param), seed=1)

    def test_output_shape(self, network):
        """Test a batch maps to (batch, 2)"""
        x = np.random.default_rng(0).random((3, 24, 64, 3))
        assert network.forward(x, training=True).shape == (3, 2)
        assert network.forward(x[:1], training=False).shape == (1, 2)

    def test_input_shape_checked(self, network):
        """Test inputs of another size are refused"""
        with pytest.raises(ShapeMismatchError):
            network.forward(np.zeros((2, 24, 65, 3)))

    def test_build_is_deterministic(self):
        """Test the same seed gives identical parameters and another seed does not"""
        config = ModelConfig.desk("M2")
        first, second, other = build(config, seed=5), build(config, seed=5), build(config, seed=6)
        for name, value in first.parameters().items():
            assert np.array_equal(value, second.parameters()[name])
        assert any(not np.array_equal(v, other.parameters()[k]) for k, v in first.parameters().items())

    def test_network_requires_head(self):
        """Test a layer list without the output head is refused"""
        with pytest.raises(ValueError):
            Network(ModelConfig.desk(), [DenseSpec(units=3)])

    @pytest.mark.parametrize("model_id", MODEL_IDS)
    def test_whole_network_gradients(self, model_id):
        """Test the composed backward pass against central differences at desk scale"""
        network = build(ModelConfig.desk(model_id), seed=2)
        rng = np.random.default_rng(3)
        x = rng.random((2, 24, 64, 3))
        target = rng.uniform(-1, 1, size=(2, 2))

        errors = check_network(network, x, target, training=True, seed=4)

        assert max(errors.values()) < 1e-4, {k: v for k, v in errors.items() if v >= 1e-4}


class TestCheckpoint:
    """Test suite for the checkpoint container"""

    @pytest.fixture
    def trained(self):
        """Create a desk M3 after two optimizer steps"""
        network = build(ModelConfig.desk("M3"), seed=0)
        adam = AdamState()
        rng = np.random.default_rng(1)
        x, y = rng.random((4, 24, 64, 3)), rng.uniform(-1, 1, (4, 2))
        for _ in range(2):
            _, grad = mse_dual_loss(network.forward(x, training=True), y)
            network.backward(grad)
            adam_step(network.parameters(), network.gradients(), adam)
        return network, adam, x, y

    def test_round_trip_is_bit_exact(self, tmp_path):
        """Test a fresh M1 reloads with identical specs and parameters"""
        network = build(ModelConfig.desk("M1"))
        path = save_checkpoint(network, tmp_path / "m1.ckpt")

        loaded = load_checkpoint(path)

        assert loaded.specs == network.specs
        assert loaded.config == network.config
        for name, value in network.parameters().items():
            assert loaded.parameters()[name].tobytes() == value.tobytes()

    def test_float32_round_trip(self, tmp_path):
        """Test single-precision parameters keep their dtype"""
        network = build(ModelConfig.desk("M3", dtype="float32"))
        loaded = load_checkpoint(save_checkpoint(network, tmp_path / "f32.ckpt"))
        assert all(p.dtype == np.float32 for p in loaded.parameters().values())
        assert all(np.array_equal(p, network.parameters()[k]) for k, p in loaded.parameters().items())

    def test_resume_matches_uninterrupted(self, tmp_path, trained):
        """Test a reloaded state takes exactly the step the original would"""
        network, adam, x, y = trained
        path = save_checkpoint(network, tmp_path / "mid.ckpt", adam=adam, metadata={"epoch": 1})
        restored, restored_adam, metadata = load_training_state(path)

        assert metadata == {"epoch": 1}
        assert restored_adam.t == adam.t == 2
        for name, buffer in network.buffers().items():
            assert np.array_equal(restored.buffers()[name], buffer)

        for model, state in ((network, adam), (restored, restored_adam)):
            _, grad = mse_dual_loss(model.forward(x, training=True), y)
            model.backward(grad)
            adam_step(model.parameters(), model.gradients(), state)
        for name, value in network.parameters().items():
            assert np.array_equal(restored.parameters()[name], value)

    def test_header_layout(self, tmp_path):
        """Test the documented prefix: magic, version, header length"""
        path = save_checkpoint(build(ModelConfig.desk("M3")), tmp_path / "x.ckpt")
        data = path.read_bytes()
        magic, version, length = struct.unpack_from("<8sII", data)
        assert magic == MAGIC
        assert version == 1
        header, blob = read_header(path)
        assert len(data) == 16 + length + len(blob)
        assert header.adam is None

    def test_bad_magic(self, tmp_path):
        """Test foreign files are refused"""
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\0" * 32)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_unknown_version(self, tmp_path):
        """Test a newer format version is refused"""
        path = save_checkpoint(build(ModelConfig.desk("M3")), tmp_path / "v.ckpt")
        data = bytearray(path.read_bytes())
        data[8:12] = struct.pack("<I", 99)
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated_tensors(self, tmp_path):
        """Test missing tensor bytes are detected"""
        path = save_checkpoint(build(ModelConfig.desk("M3")), tmp_path / "t.ckpt")
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
