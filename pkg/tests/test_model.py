import numpy as np
import pytest

from noisy_label_lab import autodiff as ad
from noisy_label_lab import model as md
from noisy_label_lab.autodiff import Tensor
from noisy_label_lab.errors import ConfigurationError, FormatError

DIMS = md.ModelDims(
    feature_dim=6, class_count=8, embed_dim=4, label_embed_dim=5, trunk_hidden=7, fuse_hidden=9
)


def random_params(seed=0):
    """Init then re-randomize the residual projection so cleaning is active."""
    params = md.init_params(DIMS, seed)
    rng = np.random.default_rng(seed + 100)
    params.replace("resid_w", Tensor(rng.normal(scale=0.5, size=(DIMS.fuse_hidden, DIMS.class_count))))
    params.replace("resid_b", Tensor(rng.normal(scale=0.1, size=DIMS.class_count)))
    return params


class TestInit:
    def test_same_seed_is_bitwise_identical(self):
        a = md.init_params(DIMS, 7)
        b = md.init_params(DIMS, 7)
        assert a.equals_bitwise(b)

    def test_different_seeds_differ_in_trunk(self):
        a = md.init_params(DIMS, 7)
        b = md.init_params(DIMS, 8)
        assert not np.array_equal(a["trunk_w1"].data, b["trunk_w1"].data)

    def test_residual_projection_starts_at_zero(self):
        params = md.init_params(DIMS, 3)
        assert not np.any(params["resid_w"].data)
        assert not np.any(params["resid_b"].data)

    def test_glorot_bounds(self):
        params = md.init_params(DIMS, 3)
        for name, shape, kind in md.parameter_layout(DIMS):
            if kind != "glorot":
                continue
            limit = np.sqrt(6.0 / sum(shape))
            data = params[name].data
            assert np.all(np.abs(data) <= limit)
            assert np.std(data) > 0

    def test_parameter_count(self):
        params = md.init_params(DIMS, 0)
        expect = sum(int(np.prod(shape)) for _, shape, _ in md.parameter_layout(DIMS))
        assert params.parameter_count() == expect

    def test_bad_dims_rejected(self):
        with pytest.raises(ConfigurationError, match="embed_dim"):
            md.ModelDims(feature_dim=4, class_count=4, embed_dim=0).validate()


class TestFeatures:
    def test_zero_trunk_gives_zero_embedding(self):
        params = md.init_params(DIMS, 0)
        for name in md.TRUNK_PARAMS:
            params.replace(name, Tensor(np.zeros(params[name].data.shape)))
        emb = md.features(params, np.ones((3, DIMS.feature_dim)))
        np.testing.assert_array_equal(emb.data, np.zeros((3, DIMS.embed_dim)))

    def test_matches_hand_computation(self):
        params = random_params(1)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4, DIMS.feature_dim))
        emb = md.features(params, x)
        hidden = np.tanh(x @ params["trunk_w1"].data + params["trunk_b1"].data)
        expect = hidden @ params["trunk_w2"].data + params["trunk_b2"].data
        np.testing.assert_allclose(emb.data, expect, rtol=0, atol=1e-12)

    def test_identical_rows_identical_embeddings(self):
        params = random_params(3)
        row = np.random.default_rng(4).normal(size=DIMS.feature_dim)
        emb = md.features(params, np.stack([row, row]))
        np.testing.assert_array_equal(emb.data[0], emb.data[1])

    def test_width_mismatch(self):
        params = md.init_params(DIMS, 0)
        with pytest.raises(ConfigurationError, match="width"):
            md.features(params, np.zeros((2, DIMS.feature_dim + 1)))


class TestCleanLabels:
    def test_identity_at_init_is_exact(self):
        params = md.init_params(DIMS, 5)
        rng = np.random.default_rng(6)
        y = (rng.random((10, DIMS.class_count)) < 0.3).astype(np.float64)
        emb = md.features(params, rng.normal(size=(10, DIMS.feature_dim)))
        cleaned = md.clean_labels(params, y, emb)
        np.testing.assert_array_equal(cleaned.data, y)

    def test_constant_positive_residual_saturates_positives(self):
        params = md.init_params(DIMS, 0)
        bias = np.zeros(DIMS.class_count)
        bias[2] = 0.5
        params.replace("resid_b", Tensor(bias))
        y = np.zeros((2, DIMS.class_count))
        y[0, 2] = 1.0
        emb = md.features(params, np.zeros((2, DIMS.feature_dim)))
        cleaned = md.clean_labels(params, y, emb)
        assert cleaned.data[0, 2] == 1.0  # 1 + 0.5 clips to 1
        assert cleaned.data[1, 2] == 0.5  # 0 + 0.5 stays interior

    def test_matches_hand_computation(self):
        params = random_params(7)
        rng = np.random.default_rng(8)
        y = (rng.random((5, DIMS.class_count)) < 0.4).astype(np.float64)
        x = rng.normal(size=(5, DIMS.feature_dim))
        emb = md.features(params, x)
        cleaned = md.clean_labels(params, y, emb)
        label_emb = y @ params["label_w"].data + params["label_b"].data
        fused = np.tanh(
            np.concatenate([label_emb, emb.data], axis=1) @ params["fuse_w"].data
            + params["fuse_b"].data
        )
        residual = fused @ params["resid_w"].data + params["resid_b"].data
        expect = np.clip(y + residual, 0.0, 1.0)
        np.testing.assert_allclose(cleaned.data, expect, rtol=0, atol=1e-12)

    def test_outputs_in_unit_interval(self):
        params = random_params(9)
        params.replace("resid_w", Tensor(np.random.default_rng(10).normal(
            scale=5.0, size=(DIMS.fuse_hidden, DIMS.class_count))))
        rng = np.random.default_rng(11)
        y = (rng.random((20, DIMS.class_count)) < 0.5).astype(np.float64)
        emb = md.features(params, rng.normal(size=(20, DIMS.feature_dim)))
        cleaned = md.clean_labels(params, y, emb).data
        assert np.all(cleaned >= 0.0)
        assert np.all(cleaned <= 1.0)

    def test_cleaning_is_feature_conditional(self):
        params = random_params(12)
        rng = np.random.default_rng(13)
        y = (rng.random((1, DIMS.class_count)) < 0.5).astype(np.float64)
        y2 = np.vstack([y, y])
        x = rng.normal(size=(2, DIMS.feature_dim)) * 3.0
        emb = md.features(params, x)
        cleaned = md.clean_labels(params, y2, emb).data
        assert not np.array_equal(cleaned[0], cleaned[1])

    def test_gradients_flow_to_cleaner_params(self):
        params = random_params(14)
        rng = np.random.default_rng(15)
        y = (rng.random((3, DIMS.class_count)) < 0.5).astype(np.float64)
        emb = md.features(params, rng.normal(size=(3, DIMS.feature_dim)))
        cleaned = md.clean_labels(params, y, emb)
        grads = ad.backward(cleaned.sum())
        for name in ("label_w", "fuse_w", "resid_w"):
            assert params[name] in grads
            assert np.any(grads[params[name]])

    def test_row_count_mismatch(self):
        params = md.init_params(DIMS, 0)
        emb = md.features(params, np.zeros((2, DIMS.feature_dim)))
        with pytest.raises(ConfigurationError, match="rows"):
            md.clean_labels(params, np.zeros((3, DIMS.class_count)), emb)


class TestPredict:
    def test_zero_head_gives_half(self):
        params = md.init_params(DIMS, 0)
        params.replace("head_w", Tensor(np.zeros((DIMS.embed_dim, DIMS.class_count))))
        emb = md.features(params, np.random.default_rng(1).normal(size=(4, DIMS.feature_dim)))
        out = md.predict(params, emb)
        np.testing.assert_array_equal(out.data, np.full((4, DIMS.class_count), 0.5))

    def test_large_bias_saturates_inside_open_interval(self):
        params = md.init_params(DIMS, 0)
        params.replace("head_b", Tensor(np.full(DIMS.class_count, 50.0)))
        emb = md.features(params, np.zeros((1, DIMS.feature_dim)))
        out = md.predict(params, emb).data
        assert np.all(out > 1.0 - 1e-9)
        assert np.all(out < 1.0)

    def test_matches_hand_computation(self):
        params = random_params(16)
        rng = np.random.default_rng(17)
        x = rng.normal(size=(3, DIMS.feature_dim))
        emb = md.features(params, x)
        out = md.predict(params, emb)
        logits = emb.data @ params["head_w"].data + params["head_b"].data
        expect = 1.0 / (1.0 + np.exp(-logits))
        np.testing.assert_allclose(out.data, expect, rtol=0, atol=1e-12)


class TestCheckpoint:
    def test_round_trip_is_bitwise(self, tmp_path):
        params = random_params(20)
        path = tmp_path / "model.ckpt"
        md.save_checkpoint(params, path)
        loaded = md.load_checkpoint(path)
        assert loaded.equals_bitwise(params)
        assert loaded.dims == params.dims

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"GARBAGE\nrest")
        with pytest.raises(FormatError, match="magic"):
            md.load_checkpoint(path)

    def test_version_mismatch(self, tmp_path):
        params = md.init_params(DIMS, 0)
        path = tmp_path / "model.ckpt"
        md.save_checkpoint(params, path)
        blob = path.read_bytes()
        path.write_bytes(blob.replace(b'"format_version":1', b'"format_version":9', 1))
        with pytest.raises(FormatError, match="version 9"):
            md.load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        params = md.init_params(DIMS, 0)
        path = tmp_path / "model.ckpt"
        md.save_checkpoint(params, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(FormatError, match="truncated"):
            md.load_checkpoint(path)
