import numpy as np
import pytest

from latentzero import autodiff as ad
from latentzero.envs import BoardConfig, BoardGame, MiniBreakout, PixelConfig
from latentzero.errors import ArtifactError, ShapeError
from latentzero.networks import (HiddenState, NetworkBundle, NetworkConfig,
                                 load_bundle, save_bundle)

from .oracles import check_gradients, to_float64


def board_config(ch=8, blocks=1, b=3):
    return NetworkConfig(mode="board", input_planes=4, height=b, width=b,
                         num_actions=b * b, hidden_channels=ch, num_blocks=blocks)


def pixel_config(ch=8, blocks=1):
    return NetworkConfig(mode="pixel", input_planes=16, height=32, width=32,
                         num_actions=3, hidden_channels=ch, num_blocks=blocks)


def test_represent_depth_zero_and_shape():
    bundle = NetworkBundle(board_config(ch=32, b=7), seed=0)
    obs = BoardGame(BoardConfig(size=7, connect=5)).encode()
    hs = bundle.represent(obs)
    assert hs.unroll_depth == 0 and hs.origin == "representation"
    assert hs.planes.shape == (32, 7, 7)


def test_represent_deterministic():
    bundle = NetworkBundle(board_config(), seed=1)
    obs = BoardGame(BoardConfig(size=3, connect=3)).encode()
    a = bundle.represent(obs)
    b = bundle.represent(obs)
    assert np.array_equal(a.planes, b.planes)


def test_represent_shape_mismatch():
    bundle = NetworkBundle(board_config(), seed=0)
    with pytest.raises(ShapeError):
        bundle.represent(np.zeros((4, 5, 5), dtype=np.float32))


def test_dynamics_increments_depth():
    bundle = NetworkBundle(board_config(), seed=0)
    hs = bundle.represent(BoardGame(BoardConfig(3, 3)).encode())
    r, nxt = bundle.dynamics(hs, 4)
    assert nxt.unroll_depth == 1 and nxt.origin == "dynamics"
    assert r == 0.0  # board mode has no reward head


def test_unroll_depth_chain_to_100():
    bundle = NetworkBundle(board_config(), seed=0)
    hs = bundle.represent(BoardGame(BoardConfig(3, 3)).encode())
    seen = set()
    for k in range(1, 101):
        _, hs = bundle.dynamics(hs, k % 9)
        assert hs.unroll_depth == k
        seen.add(hs.planes.tobytes())
    assert len(seen) == 100  # all distinct latents


def test_dynamics_rejects_bad_action():
    bundle = NetworkBundle(board_config(), seed=0)
    hs = bundle.represent(BoardGame(BoardConfig(3, 3)).encode())
    with pytest.raises(ValueError):
        bundle.dynamics(hs, 9)


def test_hidden_state_invariants():
    with pytest.raises(ValueError):
        HiddenState(np.zeros((1, 3, 3)), 2, "representation")
    with pytest.raises(ValueError):
        HiddenState(np.zeros((1, 3, 3)), 0, "dynamics")


def test_predict_policy_normalized_value_bounded():
    bundle = NetworkBundle(board_config(), seed=3)
    hs = bundle.represent(BoardGame(BoardConfig(3, 3)).encode())
    policy, value = bundle.predict(hs)
    assert abs(policy.sum() - 1.0) < 1e-5
    assert -1.0 <= value <= 1.0


def test_fresh_net_policy_near_uniform():
    # Heads are zero-initialized, so the fresh policy is exactly uniform
    # and the value is 0; keep the looser bound as the regression check.
    bundle = NetworkBundle(board_config(ch=16, blocks=2), seed=7)
    obs = BoardGame(BoardConfig(3, 3)).encode()
    policy, value = bundle.predict(bundle.represent(obs))
    assert np.all(np.abs(policy - 1.0 / 9) < 0.1)
    assert -1.0 <= value <= 1.0


def test_decode_board_sigmoid_range_and_shape():
    bundle = NetworkBundle(board_config(), seed=0)
    game = BoardGame(BoardConfig(3, 3))
    game.apply(4)
    out = bundle.decode(bundle.represent(game.encode()))
    assert out.shape == (4, 3, 3)
    assert np.all((out > 0) & (out < 1))


def test_decode_pixel_three_planes():
    bundle = NetworkBundle(pixel_config(), seed=0)
    env = MiniBreakout(PixelConfig(), seed=0)
    out = bundle.decode(bundle.represent(env.encode()))
    assert out.shape == (3, 32, 32)


def test_pixel_dynamics_has_reward():
    bundle = NetworkBundle(pixel_config(), seed=0)
    env = MiniBreakout(PixelConfig(), seed=0)
    hs = bundle.represent(env.encode())
    r, nxt = bundle.dynamics(hs, 2)
    assert isinstance(r, float)
    assert nxt.planes.shape == (8, 8, 8)


def _make_predictor_identity(bundle):
    # relu(x) - relu(-x) == x, so a 2-layer relu MLP can be an exact
    # identity: l1 = [I, -I], l2 = [I; -I].
    d = bundle.config.latent_dim
    eye = np.eye(d, dtype=np.float32)
    bundle.params["pred.l1.w"].data = np.concatenate([eye, -eye], axis=1)
    bundle.params["pred.l1.b"].data = np.zeros(2 * d, dtype=np.float32)
    bundle.params["pred.l2.w"].data = np.concatenate([eye, -eye], axis=0)
    bundle.params["pred.l2.b"].data = np.zeros(d, dtype=np.float32)


def test_consistency_identical_latents_is_minus_one():
    # With an identity predictor, identical latents through the shared
    # projector are perfectly aligned, so the loss sits at its minimum.
    bundle = NetworkBundle(board_config(), seed=2)
    _make_predictor_identity(bundle)
    hs = bundle.represent(BoardGame(BoardConfig(3, 3)).encode())
    _, hg = bundle.dynamics(hs, 0)
    hg_as_h = HiddenState(hg.planes, 0, "representation")
    loss = bundle.consistency_pair(hg_as_h, hg)
    assert abs(loss - (-1.0)) < 1e-5


def test_consistency_orthogonal_is_zero():
    cos = ad.cosine_similarity(ad.constant([[1.0, 0.0]]), ad.constant([[0.0, 1.0]]))
    assert abs(float(cos.data[0])) < 1e-7


def test_consistency_zero_norm_returns_zero():
    cos = ad.cosine_similarity(ad.constant([[0.0, 0.0]]), ad.constant([[1.0, 1.0]]))
    assert float(cos.data[0]) == 0.0


def test_consistency_stop_gradient_branch():
    bundle = NetworkBundle(board_config(ch=4), seed=0)
    b64 = to_float64(bundle)
    obs = BoardGame(BoardConfig(3, 3)).encode().astype(np.float64)
    lat_h = b64.represent_batch(obs[None])
    # gradient must not flow into the representation branch feeding the
    # stop-gradient side
    probe = ad.Tensor(lat_h.data.copy(), requires_grad=True)
    _, lat_g = b64.dynamics_batch(probe, [0])
    loss = b64.consistency_batch(probe, lat_g)
    ad.zero_grad(b64.params)
    ad.backward(loss)
    # the projector receives gradient only through the moved branch; the
    # detached target contributes nothing: verify by re-running with the
    # target branch replaced by constants
    target = b64.project_batch(ad.Tensor(lat_h.data)).data
    moved = b64.predictor_batch(b64.project_batch(lat_g))
    cos = ad.cosine_similarity(moved, ad.Tensor(target))
    loss2 = ad.scale(ad.weighted_row_mean(cos), -1.0)
    grads1 = {k: None if t.grad is None else t.grad.copy() for k, t in b64.params.items()}
    ad.zero_grad(b64.params)
    ad.backward(loss2)
    for k, t in b64.params.items():
        g1, g2 = grads1[k], t.grad
        if g1 is None and g2 is None:
            continue
        assert g1 is not None and g2 is not None, k
        assert np.allclose(g1, g2, atol=1e-12), k


@pytest.mark.parametrize("mode", ["board", "pixel"])
def test_full_network_gradcheck(mode):
    """End-to-end gradient check of all five networks (float64 shadow)."""
    if mode == "board":
        cfg = board_config(ch=4, blocks=1)
        game = BoardGame(BoardConfig(3, 3))
        for a in (4, 0, 8):
            game.apply(a)
        obs = game.encode()
    else:
        cfg = NetworkConfig(mode="pixel", input_planes=8, height=8, width=8,
                            num_actions=3, hidden_channels=4, num_blocks=1)
        obs = np.random.default_rng(0).random((8, 8, 8)).astype(np.float32)
    bundle = to_float64(NetworkBundle(cfg, seed=5))
    rng = np.random.default_rng(9)
    pi_t = rng.dirichlet(np.ones(cfg.num_actions), 2)
    obs_b = np.stack([obs, obs]).astype(np.float64)

    # Freeze the stop-gradient target once: finite differences would
    # otherwise measure the (deliberately cut) detached branch.
    with ad.no_grad():
        lat0 = bundle.represent_batch(obs_b)
        frozen_target = bundle.project_batch(lat0).data.copy()

    def fn(build=False):
        lat = bundle.represent_batch(obs_b)
        r, lat2 = bundle.dynamics_batch(lat, [0, 1])
        logits, v = bundle.predict_batch(lat2)
        dec = bundle.decode_batch(lat2)
        loss = ad.cross_entropy_logits(logits, pi_t)
        loss = ad.add(loss, ad.mse(v, np.full((2, 1), 0.5)))
        loss = ad.add(loss, ad.mse(dec, np.full(dec.data.shape, 0.25)))
        moved = bundle.predictor_batch(bundle.project_batch(lat2))
        cos = ad.cosine_similarity(moved, ad.Tensor(frozen_target))
        loss = ad.add(loss, ad.scale(ad.weighted_row_mean(cos), -1.0))
        if r is not None:
            loss = ad.add(loss, ad.mse(r, np.full((2, 1), 1.0)))
        return loss

    # step 1e-5: the composed nets have enough curvature (and relu
    # kinks) that 1e-3 central differences hit truncation error
    check_gradients(fn, bundle.params, samples_per_param=2, step=1e-5,
                    rng=np.random.default_rng(1), tol=1e-4)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    bundle = NetworkBundle(board_config(ch=8, blocks=2), seed=4, env_text="size = 3")
    bundle.step = 123
    path = tmp_path / "net.lzc"
    save_bundle(bundle, path)
    loaded = load_bundle(path)
    assert loaded.step == 123
    assert loaded.env_text == "size = 3"
    for k, t in bundle.params.items():
        assert np.array_equal(loaded.params[k].data, t.data), k
    # identical forward outputs on a probe batch
    obs = BoardGame(BoardConfig(3, 3)).encode()
    a = bundle.represent(obs).planes
    b = loaded.represent(obs).planes
    assert np.array_equal(a, b)
    # byte-identical on re-save
    path2 = tmp_path / "net2.lzc"
    save_bundle(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.lzc"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ArtifactError):
        load_bundle(path)
