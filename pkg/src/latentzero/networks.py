"""The network family: representation, dynamics, prediction, decoder, and
the projector/predictor heads used by the state-consistency loss.

All five share one residual-conv vocabulary over the autodiff engine.
Board mode keeps the latent at board resolution; pixel mode downsamples
the frame stack twice (stride-2 convs) and the decoder mirrors that with
two nearest-neighbour upsamplings, emitting only the 3 RGB planes.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ArtifactError, ShapeError

CHECKPOINT_MAGIC = b"LZNB"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    mode: str  # "board" | "pixel"
    input_planes: int
    height: int
    width: int
    num_actions: int
    hidden_channels: int = 32
    num_blocks: int = 3
    value_hidden: int = 64
    decoder_planes: int = 0  # 0 = same as input (board); pixel uses 3

    def __post_init__(self):
        if self.mode not in ("board", "pixel"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")
        if self.decoder_planes == 0:
            object.__setattr__(self, "decoder_planes", self.input_planes if self.mode == "board" else 3)

    @property
    def latent_hw(self):
        if self.mode == "board":
            return self.height, self.width
        return self.height // 4, self.width // 4

    @property
    def latent_dim(self):
        h, w = self.latent_hw
        return self.hidden_channels * h * w

    def to_text(self):
        keys = ("mode", "input_planes", "height", "width", "num_actions",
                "hidden_channels", "num_blocks", "value_hidden", "decoder_planes")
        return "\n".join(f"{k} = {getattr(self, k)}" for k in keys)

    @classmethod
    def from_text(cls, text):
        kv = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            k, _, v = line.partition("=")
            kv[k.strip()] = v.strip()
        return cls(
            mode=kv["mode"],
            input_planes=int(kv["input_planes"]),
            height=int(kv["height"]),
            width=int(kv["width"]),
            num_actions=int(kv["num_actions"]),
            hidden_channels=int(kv["hidden_channels"]),
            num_blocks=int(kv["num_blocks"]),
            value_hidden=int(kv["value_hidden"]),
            decoder_planes=int(kv["decoder_planes"]),
        )


@dataclass
class HiddenState:
    """Latent planes plus unroll bookkeeping.

    origin "representation" always carries unroll_depth 0; every pass
    through the dynamics network increments the depth.
    """

    planes: np.ndarray  # (C, h, w)
    unroll_depth: int = 0
    origin: str = "representation"

    def __post_init__(self):
        if self.origin == "representation" and self.unroll_depth != 0:
            raise ValueError("representation states have unroll_depth 0")
        if self.origin == "dynamics" and self.unroll_depth < 1:
            raise ValueError("dynamics states have unroll_depth >= 1")


def _he_conv(rng, cout, cin, k=3):
    std = np.sqrt(2.0 / (cin * k * k))
    return (rng.standard_normal((cout, cin, k, k)) * std).astype(ad.DTYPE)


def _he_linear(rng, din, dout):
    std = np.sqrt(2.0 / din)
    return (rng.standard_normal((din, dout)) * std).astype(ad.DTYPE)


def _zeros(*shape):
    return np.zeros(shape, dtype=ad.DTYPE)


class NetworkBundle:
    """Weights of all five networks plus config and a training-step counter."""

    def __init__(self, config: NetworkConfig, seed=0, env_text=""):
        self.config = config
        self.env_text = env_text  # environment description stored in checkpoints
        self.step = 0
        self.params: dict[str, Tensor] = {}
        self._init_params(np.random.default_rng(seed))

    # -- parameter construction ------------------------------------------

    def _add(self, name, data):
        self.params[name] = ad.parameter(data, name=name)

    def _add_conv(self, rng, name, cout, cin, zero=False):
        self._add(f"{name}.w", _zeros(cout, cin, 3, 3) if zero else _he_conv(rng, cout, cin))
        self._add(f"{name}.b", _zeros(cout))

    def _add_norm(self, name, c):
        self._add(f"{name}.g", np.ones(c, dtype=ad.DTYPE))
        self._add(f"{name}.s", _zeros(c))

    def _add_linear(self, rng, name, din, dout, zero=False):
        self._add(f"{name}.w", _zeros(din, dout) if zero else _he_linear(rng, din, dout))
        self._add(f"{name}.b", _zeros(dout))

    def _add_blocks(self, rng, prefix, n, ch):
        for i in range(n):
            self._add_conv(rng, f"{prefix}.blk{i}.c1", ch, ch)
            self._add_norm(f"{prefix}.blk{i}.n1", ch)
            self._add_conv(rng, f"{prefix}.blk{i}.c2", ch, ch)
            self._add_norm(f"{prefix}.blk{i}.n2", ch)

    def _init_params(self, rng):
        cfg = self.config
        ch = cfg.hidden_channels
        lh, lw = cfg.latent_hw

        # representation
        if cfg.mode == "board":
            self._add_conv(rng, "h.stem", ch, cfg.input_planes)
            self._add_norm("h.stem_n", ch)
        else:
            self._add_conv(rng, "h.down1", ch, cfg.input_planes)
            self._add_norm("h.down1_n", ch)
            self._add_conv(rng, "h.down2", ch, ch)
            self._add_norm("h.down2_n", ch)
        self._add_blocks(rng, "h", cfg.num_blocks, ch)

        # dynamics (latent + 1 action plane)
        self._add_conv(rng, "g.stem", ch, ch + 1)
        self._add_norm("g.stem_n", ch)
        self._add_blocks(rng, "g", cfg.num_blocks, ch)
        if cfg.mode == "pixel":
            self._add_conv(rng, "g.rhead", 1, ch)
            self._add_norm("g.rhead_n", 1)
            self._add_linear(rng, "g.rout", lh * lw, 1, zero=True)

        # prediction
        self._add_conv(rng, "f.phead", 2, ch)
        self._add_norm("f.phead_n", 2)
        self._add_linear(rng, "f.pout", 2 * lh * lw, cfg.num_actions, zero=True)
        self._add_conv(rng, "f.vhead", 1, ch)
        self._add_norm("f.vhead_n", 1)
        self._add_linear(rng, "f.v1", lh * lw, cfg.value_hidden)
        self._add_linear(rng, "f.vout", cfg.value_hidden, 1, zero=True)

        # decoder: reverse of the representation stack
        self._add_blocks(rng, "d", cfg.num_blocks, ch)
        if cfg.mode == "board":
            self._add_conv(rng, "d.out", cfg.decoder_planes, ch)
        else:
            self._add_conv(rng, "d.up1", ch, ch)
            self._add_norm("d.up1_n", ch)
            self._add_conv(rng, "d.out", cfg.decoder_planes, ch)

        # consistency heads: 2-layer MLPs, hidden width 2x latent dim
        dim = cfg.latent_dim
        self._add_linear(rng, "proj.l1", dim, 2 * dim)
        self._add_linear(rng, "proj.l2", 2 * dim, dim)
        self._add_linear(rng, "pred.l1", dim, 2 * dim)
        self._add_linear(rng, "pred.l2", 2 * dim, dim)

    # -- shared pieces ----------------------------------------------------

    def _p(self, name):
        return self.params[name]

    def _conv(self, x, name, stride=1):
        return ad.conv2d(x, self._p(f"{name}.w"), self._p(f"{name}.b"), stride=stride)

    def _norm(self, x, name):
        return ad.channel_scale_shift(x, self._p(f"{name}.g"), self._p(f"{name}.s"))

    def _linear(self, x, name):
        return ad.linear(x, self._p(f"{name}.w"), self._p(f"{name}.b"))

    def _blocks(self, x, prefix):
        for i in range(self.config.num_blocks):
            y = ad.relu(self._norm(self._conv(x, f"{prefix}.blk{i}.c1"), f"{prefix}.blk{i}.n1"))
            y = self._norm(self._conv(y, f"{prefix}.blk{i}.c2"), f"{prefix}.blk{i}.n2")
            x = ad.relu(ad.add(x, y))
        return x

    # -- batched graph-building forwards ----------------------------------

    def represent_batch(self, obs) -> Tensor:
        # Tensor() keeps the incoming dtype: float32 in normal use,
        # float64 when running as an oracle shadow.
        x = obs if isinstance(obs, Tensor) else Tensor(np.asarray(obs))
        cfg = self.config
        if x.data.ndim != 4 or x.data.shape[1:] != (cfg.input_planes, cfg.height, cfg.width):
            raise ShapeError(f"observation batch {x.data.shape} does not match config "
                             f"(N, {cfg.input_planes}, {cfg.height}, {cfg.width})")
        if cfg.mode == "board":
            x = ad.relu(self._norm(self._conv(x, "h.stem"), "h.stem_n"))
        else:
            x = ad.relu(self._norm(self._conv(x, "h.down1", stride=2), "h.down1_n"))
            x = ad.relu(self._norm(self._conv(x, "h.down2", stride=2), "h.down2_n"))
        # tanh bounds every latent in (-1, 1): repeated dynamics
        # applications stay finite no matter how deep the unroll goes
        return ad.tanh(self._blocks(x, "h"))

    def action_planes(self, actions) -> np.ndarray:
        """Encode action ids as one extra latent plane per sample."""
        cfg = self.config
        actions = np.asarray(actions, dtype=np.int64)
        if actions.ndim != 1:
            raise ShapeError("actions must be a 1-D id array")
        if (actions < 0).any() or (actions >= cfg.num_actions).any():
            raise ValueError(f"action id out of range 0..{cfg.num_actions - 1}")
        n = actions.shape[0]
        lh, lw = cfg.latent_hw
        planes = np.zeros((n, 1, lh, lw), dtype=ad.DTYPE)
        if cfg.mode == "board":
            rows, cols = actions // lw, actions % lw
            planes[np.arange(n), 0, rows, cols] = 1.0
        else:
            planes += (actions.astype(ad.DTYPE) / cfg.num_actions)[:, None, None, None]
        return planes

    def dynamics_batch(self, latent: Tensor, actions):
        """Returns (reward (N,1) Tensor or None, next latent Tensor)."""
        planes = self.action_planes(actions).astype(latent.data.dtype)
        x = ad.concat([latent, Tensor(planes)], axis=1)
        x = ad.relu(self._norm(self._conv(x, "g.stem"), "g.stem_n"))
        nxt = ad.tanh(self._blocks(x, "g"))
        if self.config.mode == "board":
            return None, nxt
        r = ad.tanh(self._norm(self._conv(nxt, "g.rhead"), "g.rhead_n"))
        r = self._linear(ad.flatten(r), "g.rout")
        return r, nxt

    def predict_batch(self, latent: Tensor):
        """Returns (policy logits (N, A), value (N, 1)).

        Head conv stages use tanh: a relu after the 1- and 2-channel
        bottlenecks can die wholesale under a statistics-free norm.
        """
        p = ad.tanh(self._norm(self._conv(latent, "f.phead"), "f.phead_n"))
        logits = self._linear(ad.flatten(p), "f.pout")
        v = ad.tanh(self._norm(self._conv(latent, "f.vhead"), "f.vhead_n"))
        v = ad.relu(self._linear(ad.flatten(v), "f.v1"))
        v = self._linear(v, "f.vout")
        if self.config.mode == "board":
            v = ad.tanh(v)
        return logits, v

    def decode_batch(self, latent: Tensor) -> Tensor:
        x = self._blocks(latent, "d")
        if self.config.mode == "board":
            return ad.sigmoid(self._conv(x, "d.out"))
        x = ad.relu(self._norm(self._conv(ad.upsample2x(x), "d.up1"), "d.up1_n"))
        return ad.sigmoid(self._conv(ad.upsample2x(x), "d.out"))

    def project_batch(self, latent: Tensor) -> Tensor:
        x = ad.relu(self._linear(ad.flatten(latent), "proj.l1"))
        return self._linear(x, "proj.l2")

    def predictor_batch(self, proj: Tensor) -> Tensor:
        x = ad.relu(self._linear(proj, "pred.l1"))
        return self._linear(x, "pred.l2")

    def consistency_batch(self, latent_h: Tensor, latent_g: Tensor, weights=None) -> Tensor:
        """Negative cosine between predictor(projector(s_g)) and the
        stop-gradient of projector(s_h), averaged over the batch."""
        if latent_h.data.shape != latent_g.data.shape:
            raise ShapeError(f"consistency: {latent_h.data.shape} vs {latent_g.data.shape}")
        target = self.project_batch(latent_h).detach()
        moved = self.predictor_batch(self.project_batch(latent_g))
        cos = ad.cosine_similarity(moved, target)
        return ad.scale(ad.weighted_row_mean(cos, weights), -1.0)

    # -- single-state convenience API (forward only) ----------------------

    def represent(self, observation: np.ndarray) -> HiddenState:
        with ad.no_grad():
            latent = self.represent_batch(observation[None])
        return HiddenState(latent.data[0], 0, "representation")

    def dynamics(self, state: HiddenState, action: int):
        with ad.no_grad():
            r, nxt = self.dynamics_batch(Tensor(state.planes[None]), [action])
        reward = 0.0 if r is None else float(r.data[0, 0])
        return reward, HiddenState(nxt.data[0], state.unroll_depth + 1, "dynamics")

    def predict(self, state: HiddenState):
        with ad.no_grad():
            logits, v = self.predict_batch(Tensor(state.planes[None]))
            policy = ad.softmax(logits)
        return policy.data[0], float(v.data[0, 0])

    def decode(self, state: HiddenState) -> np.ndarray:
        with ad.no_grad():
            out = self.decode_batch(Tensor(state.planes[None]))
        return out.data[0]

    def consistency_pair(self, state_h: HiddenState, state_g: HiddenState) -> float:
        with ad.no_grad():
            loss = self.consistency_batch(
                Tensor(state_h.planes[None]), Tensor(state_g.planes[None]))
        return float(loss.data)

    # -- housekeeping ------------------------------------------------------

    def param_arrays(self):
        return {k: t.data for k, t in self.params.items()}

    def load_arrays(self, arrays):
        for k, t in self.params.items():
            if k not in arrays:
                raise ArtifactError(f"checkpoint missing parameter '{k}'")
            if arrays[k].shape != t.data.shape:
                raise ArtifactError(f"checkpoint shape mismatch for '{k}'")
            t.data = arrays[k].astype(ad.DTYPE)

    def clone(self):
        other = NetworkBundle.__new__(NetworkBundle)
        other.config = self.config
        other.env_text = self.env_text
        other.step = self.step
        other.params = {k: ad.parameter(t.data.copy(), name=k) for k, t in self.params.items()}
        return other


# ---------------------------------------------------------------------------
# checkpoint io: magic, version, config text, step, little-endian f32 blobs


def save_bundle(bundle: NetworkBundle, path):
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    cfg_bytes = bundle.config.to_text().encode("utf-8")
    env_bytes = bundle.env_text.encode("utf-8")
    buf.write(struct.pack("<I", len(cfg_bytes)))
    buf.write(cfg_bytes)
    buf.write(struct.pack("<I", len(env_bytes)))
    buf.write(env_bytes)
    buf.write(struct.pack("<Q", bundle.step))
    items = list(bundle.params.items())
    buf.write(struct.pack("<I", len(items)))
    for name, t in items:
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", t.data.ndim))
        for d in t.data.shape:
            buf.write(struct.pack("<I", d))
        buf.write(t.data.astype("<f4", copy=False).tobytes())
    data = buf.getvalue()
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_bundle(path) -> NetworkBundle:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        return _parse_bundle(raw)
    except ArtifactError:
        raise
    except (struct.error, IndexError, ValueError, UnicodeDecodeError, KeyError) as exc:
        raise ArtifactError(f"{path}: corrupt checkpoint ({exc})") from exc


def _parse_bundle(raw) -> NetworkBundle:
    view = memoryview(raw)
    if bytes(view[:4]) != CHECKPOINT_MAGIC:
        raise ArtifactError("not a checkpoint file")
    (version,) = struct.unpack_from("<I", view, 4)
    if version != CHECKPOINT_VERSION:
        raise ArtifactError(f"unsupported checkpoint version {version}")
    off = 8
    (clen,) = struct.unpack_from("<I", view, off)
    off += 4
    cfg = NetworkConfig.from_text(bytes(view[off : off + clen]).decode("utf-8"))
    off += clen
    (elen,) = struct.unpack_from("<I", view, off)
    off += 4
    env_text = bytes(view[off : off + elen]).decode("utf-8")
    off += elen
    (step,) = struct.unpack_from("<Q", view, off)
    off += 8
    (count,) = struct.unpack_from("<I", view, off)
    off += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", view, off)
        off += 2
        name = bytes(view[off : off + nlen]).decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", view, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", view, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(view, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        arrays[name] = arr.copy()
    bundle = NetworkBundle(cfg, seed=0, env_text=env_text)
    bundle.step = step
    bundle.load_arrays(arrays)
    return bundle
