"""Binary PPM (P6) output plus small observation renderers.

PPM keeps image output dependency-free and byte-exact, which the
reproducibility contract needs.
"""

from __future__ import annotations

import numpy as np


def write_ppm(path, rgb):
    """rgb: (3, H, W) float in [0,1] or uint8."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ValueError(f"expected (3, H, W), got {rgb.shape}")
    if rgb.dtype != np.uint8:
        rgb = (np.clip(rgb, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    _, h, w = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.transpose(1, 2, 0).tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM")
    parts = data.split(b"\n", 3)
    w, h = (int(x) for x in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=w * h * 3)
    return pixels.reshape(h, w, 3).transpose(2, 0, 1)


def scale_nearest(rgb, factor):
    return np.repeat(np.repeat(rgb, factor, axis=1), factor, axis=2)


BOARD_BG = np.array([0.78, 0.60, 0.34])  # wooden board tone


def render_board_obs(obs, black_to_play, cell=12):
    """Render 4-plane board observation planes as a board picture.

    Uses soft stone intensities so decoded (non-binary) planes stay
    readable: own/opponent plane values blend black/white stones over
    the background.
    """
    own, opp = obs[0], obs[1]
    if black_to_play:
        black, white = own, opp
    else:
        black, white = opp, own
    b = own.shape[0]
    img = np.empty((3, b, b), dtype=np.float32)
    for c in range(3):
        img[c] = BOARD_BG[c]
    black_stone = np.clip(black, 0.0, 1.0)
    white_stone = np.clip(white, 0.0, 1.0)
    for c in range(3):
        img[c] = img[c] * (1 - black_stone) + 0.05 * black_stone
        img[c] = img[c] * (1 - white_stone) + 0.97 * white_stone
    return scale_nearest(img, cell)


def render_planes(obs, cell=8, gap=1):
    """Generic plane strip: every channel as a grayscale tile side by side."""
    c, h, w = obs.shape
    strip = np.zeros((3, h, c * (w + gap) - gap), dtype=np.float32)
    for i in range(c):
        x0 = i * (w + gap)
        tile = np.clip(obs[i], 0.0, 1.0)
        for ch in range(3):
            strip[ch, :, x0 : x0 + w] = tile
    return scale_nearest(strip, cell)


def render_observation(obs, mode, black_to_play=True, cell=12):
    if mode == "board":
        return render_board_obs(obs, black_to_play, cell)
    if obs.shape[0] == 3:
        return scale_nearest(np.clip(obs, 0, 1), max(1, cell // 4))
    # stacked pixel observation: show the newest frame
    return scale_nearest(np.clip(obs[-4:-1], 0, 1), max(1, cell // 4))
