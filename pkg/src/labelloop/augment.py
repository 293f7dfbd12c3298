"""Weak and strong stochastic augmentation of samples.

Every draw is keyed by (policy seed, sample id, draw index), so augmentation
is a pure function and runs are reproducible regardless of batch composition.
The draw index packs (cycle, step, slot) via pack_draw. Variates come from a
counter-based splitmix64 kernel, vectorized over the batch; a per-sample numpy
Generator would cost ~15us per construction, which dominates the training loop
at this scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WEAK = "weak"
STRONG = "strong"

# Slots distinguish independent draws within one training step.
SLOT_EVAL = 0  # single weak draw over U at evaluation boundaries
SLOT_LABELED = 1  # weak draw for the labeled minibatch
SLOT_STRONG = 2  # strong draw for the pseudo-labeled minibatch

_STRONG_IMAGE_OPS = 4  # brightness, contrast, coarse dropout, additive noise


@dataclass
class AugmentPolicy:
    kind: str = WEAK
    jitter_sigma: float = 0.0
    shift_fraction: float = 0.0
    flip_prob: float = 0.0
    drop_prob: float = 0.0
    scale_range: tuple[float, float] = (1.0, 1.0)
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in (WEAK, STRONG):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.jitter_sigma < 0 or not np.isfinite(self.jitter_sigma):
            raise ValueError("jitter_sigma must be finite and >= 0")
        if not (0 <= self.shift_fraction < 1):
            raise ValueError("shift_fraction must be in [0, 1)")
        if not (0 <= self.flip_prob <= 1):
            raise ValueError("flip_prob must be in [0, 1]")
        if not (0 <= self.drop_prob <= 1):
            raise ValueError("drop_prob must be in [0, 1]")
        if self.kind == WEAK and self.drop_prob != 0:
            raise ValueError("weak policy must not drop features")
        lo, hi = self.scale_range
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise ValueError("scale_range must be finite with lo <= hi")


def weak_policy(jitter_sigma: float, seed: int = 0, *, flip_prob: float = 0.5,
                shift_fraction: float = 0.125) -> AugmentPolicy:
    return AugmentPolicy(
        kind=WEAK,
        jitter_sigma=jitter_sigma,
        flip_prob=flip_prob,
        shift_fraction=shift_fraction,
        seed=seed,
    )


def strong_policy(weak_sigma: float, seed: int = 0, *, sigma_factor: float = 3.0,
                  drop_prob: float = 0.1,
                  scale_range: tuple[float, float] = (0.8, 1.25),
                  flip_prob: float = 0.5,
                  shift_fraction: float = 0.125) -> AugmentPolicy:
    return AugmentPolicy(
        kind=STRONG,
        jitter_sigma=sigma_factor * weak_sigma,
        flip_prob=flip_prob,
        shift_fraction=shift_fraction,
        drop_prob=drop_prob,
        scale_range=scale_range,
        seed=seed,
    )


def pack_draw(cycle: int, step: int, slot: int) -> int:
    """Pack (cycle, step, slot) into one draw index. step < 2^34, slot < 16."""
    return (int(cycle) << 38) | (int(step) << 4) | int(slot)


# --- counter-based keyed variates -----------------------------------------

_G = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z + _G).astype(np.uint64)
    z = ((z ^ (z >> np.uint64(30))) * _M1).astype(np.uint64)
    z = ((z ^ (z >> np.uint64(27))) * _M2).astype(np.uint64)
    return z ^ (z >> np.uint64(31))


def _sample_keys(seed: int, ids: np.ndarray, draw_index: int, kind: str) -> np.ndarray:
    base = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    kind_tag = np.uint64(0 if kind == WEAK else 1)
    k = _mix64(np.asarray(ids, dtype=np.uint64))
    k = _mix64(k ^ _mix64(np.full_like(k, base)))
    k = _mix64(k ^ np.uint64(draw_index & 0xFFFFFFFFFFFFFFFF))
    return _mix64(k ^ kind_tag)


def _uniforms(keys: np.ndarray, count: int, offset: int = 0) -> np.ndarray:
    """(n, count) uniforms in [0, 1); stream position = offset + column."""
    idx = np.arange(offset, offset + count, dtype=np.uint64)
    words = _mix64(keys[:, None] + idx[None, :])
    return (words >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def _normals(keys: np.ndarray, count: int, offset: int = 0) -> np.ndarray:
    """(n, count) standard normals via Box-Muller on the keyed stream."""
    pairs = (count + 1) // 2
    u1 = _uniforms(keys, pairs, offset)
    u2 = _uniforms(keys, pairs, offset + pairs)
    r = np.sqrt(-2.0 * np.log(1.0 - u1))  # 1-u1 in (0,1], log finite
    theta = 2.0 * np.pi * u2
    out = np.concatenate([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return out[:, :count]


# --- augmentation ----------------------------------------------------------

def augment_batch(
    x: np.ndarray,
    ids: np.ndarray,
    policy: AugmentPolicy,
    draw_index: int,
    image_shape: tuple[int, int] | None = None,
) -> np.ndarray:
    """Augment a batch of samples; output shape always equals input shape."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite sample rejected")
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape[0] != x.shape[0]:
        raise ValueError("ids must align with batch rows")
    keys = _sample_keys(policy.seed, ids, draw_index, policy.kind)
    if image_shape is not None:
        return _augment_images(x, keys, policy, image_shape)
    return _augment_vectors(x, keys, policy)


def augment(
    x: np.ndarray,
    policy: AugmentPolicy,
    draw_index: int,
    sample_id: int = 0,
    image_shape: tuple[int, int] | None = None,
) -> np.ndarray:
    """Single-sample convenience wrapper around augment_batch."""
    out = augment_batch(
        np.asarray(x, dtype=np.float64)[None, :],
        np.asarray([sample_id]),
        policy,
        draw_index,
        image_shape,
    )
    return out[0]


def _augment_vectors(x: np.ndarray, keys: np.ndarray, policy: AugmentPolicy) -> np.ndarray:
    d = x.shape[1]
    out = x
    if policy.kind == STRONG:
        # order matters: drop, then scale, then jitter (drop_prob=1 zeroes the
        # vector before jitter is added)
        u = _uniforms(keys, d + 1)
        if policy.drop_prob > 0:
            out = out * (u[:, :d] >= policy.drop_prob)
        lo, hi = policy.scale_range
        if hi > lo:
            out = out * (lo + u[:, d : d + 1] * (hi - lo))
        elif lo != 1.0:
            out = out * lo
    if policy.jitter_sigma > 0:
        out = out + policy.jitter_sigma * _normals(keys, d, offset=64)
    return out if out is not x else x.copy()


def _augment_images(
    x: np.ndarray, keys: np.ndarray, policy: AugmentPolicy,
    image_shape: tuple[int, int],
) -> np.ndarray:
    h, w = image_shape
    if h * w != x.shape[1]:
        raise ValueError("image_shape does not match sample length")
    imgs = x.reshape(-1, h, w).copy()
    u = _uniforms(keys, 8)
    max_dx = int(policy.shift_fraction * w)
    max_dy = int(policy.shift_fraction * h)
    for i in range(imgs.shape[0]):
        img = imgs[i]
        if u[i, 0] < policy.flip_prob:
            img = img[:, ::-1]
        dx = int(np.floor(u[i, 1] * (2 * max_dx + 1))) - max_dx
        dy = int(np.floor(u[i, 2] * (2 * max_dy + 1))) - max_dy
        img = _shift2d(img, dy, dx)
        if policy.kind == STRONG:
            op1 = int(u[i, 3] * _STRONG_IMAGE_OPS)
            op2 = int(u[i, 4] * (_STRONG_IMAGE_OPS - 1))
            if op2 >= op1:
                op2 += 1
            img = _image_op(img, op1, u[i, 5], keys[i : i + 1], policy)
            img = _image_op(img, op2, u[i, 6], keys[i : i + 1], policy)
            img = np.clip(img, 0.0, 1.0)
        imgs[i] = img
    return imgs.reshape(x.shape)


def _shift2d(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(img)
    h, w = img.shape
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
    out[ys, xs] = img[ys_src, xs_src]
    return out


def _image_op(img: np.ndarray, op: int, u: float, key: np.ndarray,
              policy: AugmentPolicy) -> np.ndarray:
    lo, hi = policy.scale_range
    if op == 0:  # brightness
        return img * (lo + u * (hi - lo))
    if op == 1:  # contrast around the image mean
        c = lo + u * (hi - lo)
        m = img.mean()
        return (img - m) * c + m
    if op == 2:  # coarse dropout: zero a box covering ~1/4 of each side
        h, w = img.shape
        bh, bw = max(h // 4, 1), max(w // 4, 1)
        y0 = int(u * (h - bh + 1))
        x0 = int((u * 7919) % 1.0 * (w - bw + 1))
        out = img.copy()
        out[y0 : y0 + bh, x0 : x0 + bw] = 0.0
        return out
    noise = _normals(key, img.size, offset=160).reshape(img.shape)
    return img + policy.jitter_sigma * noise
