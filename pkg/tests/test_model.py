import numpy as np
import pytest

from decohd.baselines import PrototypeTable
from decohd.model import (
    ChannelBank,
    ModelConfig,
    ModelParams,
    class_bundle,
    compose_path,
    flat_to_multi,
    init_params,
    layer_index_arrays,
    logits,
    materialize_channels,
    materialize_projectors,
    multi_to_flat,
    path_basis,
    pick_class,
)
from tests.conftest import integer_bank_and_head


def brute_force_logits(h, bank, head):
    """Independent oracle: explicit loops over paths, channels, classes."""
    channels = bank.channels_per_layer
    num_paths = int(np.prod(channels))
    num_classes = head.shape[0]
    scores = np.zeros(num_classes)
    for c in range(num_classes):
        bundle = np.zeros(bank.dim)
        for m in range(num_paths):
            multi = np.unravel_index(m, channels)
            z = np.array(h, dtype=np.float64)
            for i, mi in enumerate(multi):
                z = z * bank.channels[i][mi]
            bundle = bundle + head[c, m] * z
        scores[c] = float(np.dot(bundle, h))
    return scores


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(channels_per_layer=(), latent_dim=2, dim=4, num_classes=2)
        with pytest.raises(ValueError):
            ModelConfig(channels_per_layer=(0,), latent_dim=2, dim=4, num_classes=2)
        with pytest.raises(ValueError):
            ModelConfig(channels_per_layer=(2,), latent_dim=2, dim=4, num_classes=1)

    def test_num_paths(self):
        cfg = ModelConfig(channels_per_layer=(2, 3, 4), latent_dim=2, dim=4, num_classes=2)
        assert cfg.num_paths == 24
        assert cfg.num_layers == 3


class TestInitParams:
    def test_head_uniform(self):
        cfg = ModelConfig(channels_per_layer=(2, 2), latent_dim=3, dim=5, num_classes=3)
        params = init_params(cfg)
        assert np.all(params.head == 0.25)

    def test_deterministic(self):
        cfg = ModelConfig(channels_per_layer=(2,), latent_dim=4, dim=6, num_classes=2, seed=11)
        a = init_params(cfg)
        b = init_params(cfg)
        assert a.head.tobytes() == b.head.tobytes()
        for la, lb in zip(a.latents, b.latents):
            assert la.tobytes() == lb.tobytes()

    def test_sigma_moments(self):
        cfg = ModelConfig(channels_per_layer=(10,), latent_dim=10000, dim=4, num_classes=2, seed=1)
        params = init_params(cfg, sigma=0.1)
        std = params.latents[0].std()
        assert abs(std - 0.1) / 0.1 < 0.05

    def test_sigma_positive(self):
        cfg = ModelConfig(channels_per_layer=(2,), latent_dim=2, dim=2, num_classes=2)
        with pytest.raises(ValueError):
            init_params(cfg, sigma=0.0)


class TestPathEnumeration:
    def test_row_major_last_layer_fastest(self):
        channels = (2, 3)
        assert flat_to_multi(0, channels) == (0, 0)
        assert flat_to_multi(1, channels) == (0, 1)
        assert flat_to_multi(3, channels) == (1, 0)

    def test_bijection_roundtrip(self):
        channels = (2, 3, 4)
        seen = set()
        for flat in range(24):
            multi = flat_to_multi(flat, channels)
            seen.add(multi)
            assert multi_to_flat(multi, channels) == flat
        assert len(seen) == 24

    def test_index_arrays_match(self):
        channels = (3, 2)
        idx = layer_index_arrays(channels)
        for flat in range(6):
            assert tuple(a[flat] for a in idx) == flat_to_multi(flat, channels)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            flat_to_multi(6, (2, 3))
        with pytest.raises(ValueError):
            multi_to_flat((2, 0), (2, 3))


class TestMaterializeChannels:
    def test_zero_latent_zero_channel(self):
        params = ModelParams(latents=[np.zeros((1, 3))], head=np.ones((2, 1)))
        bank = materialize_channels(params, [np.ones((3, 5))])
        np.testing.assert_array_equal(bank.channels[0], np.zeros((1, 5)))

    def test_hand_matrix_vector(self):
        params = ModelParams(latents=[np.array([[2.0, 3.0]])], head=np.ones((2, 1)))
        proj = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
        bank = materialize_channels(params, [proj])
        np.testing.assert_array_equal(bank.channels[0][0], [2.0, 3.0, 5.0])

    def test_homogeneity(self, rng):
        lat = rng.standard_normal((2, 4))
        proj = rng.standard_normal((4, 7))
        a = materialize_channels(ModelParams([lat], np.ones((2, 2))), [proj])
        b = materialize_channels(ModelParams([2.0 * lat], np.ones((2, 2))), [proj])
        np.testing.assert_allclose(b.channels[0], 2.0 * a.channels[0], rtol=1e-12)

    def test_shape_mismatch(self):
        params = ModelParams(latents=[np.zeros((1, 3))], head=np.ones((2, 1)))
        with pytest.raises(ValueError, match="does not match"):
            materialize_channels(params, [np.ones((4, 5))])


class TestComposePath:
    def test_identity_channel(self):
        bank = ChannelBank([np.ones((1, 4))])
        h = np.array([1.0, -2.0, 3.0, 0.5])
        np.testing.assert_array_equal(compose_path(h, bank, (0,)), h)

    def test_hand_two_layer(self):
        bank = ChannelBank([np.array([[1.0, -1.0, 1.0]]), np.array([[2.0, 2.0, 2.0]])])
        z = compose_path(np.array([1.0, 2.0, 3.0]), bank, (0, 0))
        np.testing.assert_array_equal(z, [2.0, -4.0, 6.0])

    def test_layer_order_irrelevant(self, rng):
        a = rng.integers(-3, 4, 5).astype(float)
        b = rng.integers(-3, 4, 5).astype(float)
        h = rng.integers(-3, 4, 5).astype(float)
        z1 = compose_path(h, ChannelBank([a[None], b[None]]), (0, 0))
        z2 = compose_path(h, ChannelBank([b[None], a[None]]), (0, 0))
        np.testing.assert_array_equal(z1, z2)

    def test_index_out_of_range(self):
        bank = ChannelBank([np.ones((2, 3))])
        with pytest.raises(ValueError, match="out of range"):
            compose_path(np.ones(3), bank, (2,))


class TestClassBundle:
    def test_single_path(self):
        bank = ChannelBank([np.array([[2.0, -1.0]])])
        h = np.array([1.0, 3.0])
        head = np.array([[1.0]])
        np.testing.assert_array_equal(class_bundle(h, bank, head, 0), h * [2.0, -1.0])

    def test_zero_weights(self):
        bank = ChannelBank([np.ones((3, 4))])
        out = class_bundle(np.ones(4), bank, np.zeros((2, 3)), 1)
        np.testing.assert_array_equal(out, np.zeros(4))

    def test_hand_accumulation(self):
        # Z_1 = [2, 0], Z_2 = [0, 2] via h = [1, 1] and channels [2,0], [0,2]
        bank = ChannelBank([np.array([[2.0, 0.0], [0.0, 2.0]])])
        out = class_bundle(np.array([1.0, 1.0]), bank, np.array([[0.5, 0.5]]), 0)
        np.testing.assert_array_equal(out, [1.0, 1.0])

    def test_bad_class(self):
        bank = ChannelBank([np.ones((1, 2))])
        with pytest.raises(ValueError, match="class"):
            class_bundle(np.ones(2), bank, np.ones((2, 1)), 2)


class TestLogits:
    def test_zero_input(self, rng):
        bank, head, _ = integer_bank_and_head(rng)
        np.testing.assert_array_equal(logits(np.zeros(bank.dim), bank, head), np.zeros(3))

    def test_identity_channel_gives_norm_squared(self):
        bank = ChannelBank([np.ones((1, 5))])
        head = np.ones((3, 1))
        h = np.array([1.0, 2.0, -1.0, 0.0, 3.0])
        np.testing.assert_allclose(logits(h, bank, head), np.full(3, 15.0))

    def test_brute_force_oracle(self, rng):
        for _ in range(10):
            bank, head, h = integer_bank_and_head(rng, channels=(2, 3), dim=3)
            np.testing.assert_array_equal(logits(h, bank, head), brute_force_logits(h, bank, head))

    def test_linear_in_head_rows(self, rng):
        bank, head, h = integer_bank_and_head(rng)
        base = logits(h, bank, head)
        scaled = head.copy()
        scaled[1] *= 3.0
        out = logits(h, bank, scaled)
        assert out[1] == 3.0 * base[1]
        assert out[0] == base[0]

    def test_prototype_materialization_identity_exact(self, rng):
        # <Y_c(h), h> == <P_c, h*h> exactly on integer fixtures
        for _ in range(10):
            bank, head, h = integer_bank_and_head(rng, channels=(2, 2), dim=5)
            protos = head @ path_basis(bank)
            np.testing.assert_array_equal(logits(h, bank, head), protos @ (h * h))

    def test_single_layer_identity_head_matches_prototype_scorer(self, rng):
        # N=1, one channel per class, identity head: conventional table
        # whose prototype c is bind(h, A_c).
        dim, num_classes = 6, 3
        bank = ChannelBank([rng.integers(-3, 4, (num_classes, dim)).astype(float)])
        head = np.eye(num_classes)
        h = rng.integers(-3, 4, dim).astype(float)
        table = PrototypeTable(prototypes=bank.channels[0] * h)
        np.testing.assert_array_equal(logits(h, bank, head), table.score_batch(h[None])[0])


class TestPickClass:
    def test_argmax(self):
        assert pick_class(np.array([0.1, 0.9])) == 1

    def test_tie_breaks_low(self):
        assert pick_class(np.array([0.5, 0.5])) == 0

    def test_nan_ranks_below(self):
        assert pick_class(np.array([np.nan, -3.0])) == 1
        assert pick_class(np.array([np.nan, np.nan])) == 0


class TestProjectors:
    def test_projector_scale(self):
        cfg = ModelConfig(channels_per_layer=(1,), latent_dim=400, dim=500, num_classes=2, seed=8)
        proj = materialize_projectors(cfg, dtype=np.float64)[0]
        assert proj.shape == (400, 500)
        assert abs(proj.std() - 1.0 / 20.0) / (1.0 / 20.0) < 0.05

    def test_per_layer_streams_differ(self):
        cfg = ModelConfig(channels_per_layer=(2, 2), latent_dim=4, dim=8, num_classes=2, seed=8)
        a, b = materialize_projectors(cfg)
        assert a.tobytes() != b.tobytes()
