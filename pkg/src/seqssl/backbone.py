"""Tiny temporal encoder with classifier, spatial head and per-scale temporal heads.

The encoder is a per-frame affine map with tanh followed by one learned
temporal mixing layer: a row-stochastic (softmax-normalized) T x T matrix
applied over the time axis, then tanh. Row-stochastic mixing keeps constant
input constant while remaining sensitive to frame order.

The same parameter layout is instantiated twice: a trainable student and an
EMA teacher whose tensors never require grad.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ScaleOutOfRange, ShapeMismatch

INIT_SCALE = 0.1
# The per-frame map needs preactivations of order one for tanh curvature to
# react to amplitude changes, and the signed mixing filters need enough
# magnitude for the convex post-mixing nonlinearity to register within-clip
# swings; head weights stay small.
ENC_W1_SCALE = 1.0
ENC_MIX_SCALE = 4.0
TEMP_HEAD_SCALE = 0.01


@dataclass
class ModelDims:
    d_in: int = 16
    d_h: int = 32
    d_e: int = 16
    d_k: int = 32
    n_classes: int = 8
    clip_len: int = 8
    n_scales: int = 2


@dataclass
class Clip:
    frames: np.ndarray          # (T, d_in)
    stride: int
    source_id: int
    label: Optional[int] = None
    start: int = 0


@dataclass
class EncodedClip:
    tokens: ad.Tensor           # (T, d_h)
    pooled: ad.Tensor           # (d_h,)


class ParamSet:
    """Named parameter tensors for one network role (student or teacher)."""

    def __init__(self, dims: ModelDims, params: dict):
        self.dims = dims
        self.params = params

    @classmethod
    def init(cls, dims: ModelDims, rng: np.random.Generator, trainable: bool):
        def weight(*shape, scale=INIT_SCALE):
            return rng.uniform(-scale, scale, size=shape)

        arrays = {
            "enc.W1": weight(dims.d_in, dims.d_h, scale=ENC_W1_SCALE),
            "enc.b1": np.zeros(dims.d_h),
            "enc.M": weight(dims.clip_len, dims.clip_len, scale=ENC_MIX_SCALE),
            "cls.W": weight(dims.n_classes, dims.d_h),
            "cls.b": np.zeros(dims.n_classes),
            "spat.W": weight(dims.d_e, dims.d_h),
            "spat.b": np.zeros(dims.d_e),
        }
        for n in range(1, dims.n_scales + 1):
            # near-zero start: alignment targets open close to uniform, so
            # cross-scale pressure ramps up only once the heads carry signal
            # instead of random projections of the freshly-seeded encoder
            arrays[f"temp{n}.W"] = weight(dims.d_k, dims.d_h, scale=TEMP_HEAD_SCALE)
            arrays[f"temp{n}.b"] = np.zeros(dims.d_k)
        params = {k: ad.Tensor(v, requires_grad=trainable) for k, v in arrays.items()}
        return cls(dims, params)

    def copy_as_teacher(self):
        params = {k: ad.Tensor(v.data.copy()) for k, v in self.params.items()}
        return ParamSet(self.dims, params)

    def names(self):
        return sorted(self.params)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def flatten(self):
        return np.concatenate([self.params[k].data.ravel() for k in self.names()])

    def unflatten(self, vec):
        i = 0
        for k in self.names():
            p = self.params[k]
            n = p.data.size
            p.data = vec[i:i + n].reshape(p.data.shape).astype(np.float64)
            i += n
        if i != vec.size:
            raise ShapeMismatch(f"flat vector length {vec.size}, expected {i}")


def encode(params: ParamSet, clip: Clip) -> EncodedClip:
    dims = params.dims
    if clip.frames.shape != (dims.clip_len, dims.d_in):
        raise ShapeMismatch(
            f"clip frames {clip.frames.shape}, expected {(dims.clip_len, dims.d_in)}")
    x = ad.Tensor(clip.frames)
    h = ad.tanh(ad.add(ad.matmul(x, params.params["enc.W1"]), params.params["enc.b1"]))
    # Temporal mixing with rows constrained to sum to 1: each row is the
    # uniform average plus a zero-mean free part. Constant-in-time input
    # therefore passes through unchanged (identical token rows), while the
    # zero-mean part can realize signed difference filters that pick up
    # within-clip variation.
    t = dims.clip_len
    unif = ad.Tensor(np.full((t, t), 1.0 / t))
    m = params.params["enc.M"]
    mix = ad.add(ad.sub(m, ad.matmul(m, unif)), unif)
    # Shifted softplus (convex, zero at zero) after mixing: for a clip whose
    # features fluctuate in time, signed mixing outputs swing around their
    # mean and convexity turns that swing into a positive shift of the pooled
    # feature (Jensen's gap), so temporal variation survives the temporal
    # mean-pool. The -log(2) shift keeps activations roughly centered, so
    # normalized embeddings of different clips do not all collapse toward one
    # orthant direction.
    pre = ad.matmul(mix, h)
    tokens = ad.sub(ad.softplus(pre), ad.Tensor(np.full(pre.data.shape,
                                                        np.log(2.0))))
    return EncodedClip(tokens=tokens, pooled=ad.mean_rows(tokens))


def classify(params: ParamSet, enc: EncodedClip) -> ad.Tensor:
    """Class probability vector (softmax of the classifier head)."""
    logits = ad.add(ad.matmul(params.params["cls.W"], enc.pooled), params.params["cls.b"])
    return ad.softmax_temp(logits, 1.0)


def spatial_embed(params: ParamSet, enc: EncodedClip) -> ad.Tensor:
    """L2-normalized spatial embedding of the pooled clip feature."""
    out = ad.add(ad.matmul(params.params["spat.W"], enc.pooled), params.params["spat.b"])
    return ad.l2_normalize(out)


def temporal_embed(params: ParamSet, scale_index: int, tokens: ad.Tensor) -> ad.Tensor:
    """Logits of the scale-specific temporal head on mean-pooled tokens."""
    if not 1 <= scale_index <= params.dims.n_scales:
        raise ScaleOutOfRange(
            f"scale {scale_index} outside 1..{params.dims.n_scales}")
    pooled = ad.mean_rows(tokens)
    w = params.params[f"temp{scale_index}.W"]
    b = params.params[f"temp{scale_index}.b"]
    return ad.add(ad.matmul(w, pooled), b)


def ema_update(teacher: ParamSet, student: ParamSet, m: float) -> None:
    """teacher <- m * teacher + (1 - m) * student, elementwise, in place."""
    for k in student.names():
        pt, ps = teacher.params[k], student.params[k]
        if pt.data.shape != ps.data.shape:
            raise ShapeMismatch(f"ema_update: {k} {pt.data.shape} vs {ps.data.shape}")
        pt.data = m * pt.data + (1.0 - m) * ps.data


def config_hash(resolved_config: dict) -> str:
    blob = json.dumps(resolved_config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(path, student: ParamSet, teacher: ParamSet, cfg_hash: str) -> None:
    payload = {
        "config_hash": cfg_hash,
        "params": {
            "student": {k: v.data.tolist() for k, v in student.params.items()},
            "teacher": {k: v.data.tolist() for k, v in teacher.params.items()},
        },
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_checkpoint(path, student: ParamSet, teacher: ParamSet, cfg_hash: str) -> None:
    with open(path) as f:
        payload = json.load(f)
    if payload["config_hash"] != cfg_hash:
        raise ConfigError("checkpoint config hash does not match")
    for role, pset in (("student", student), ("teacher", teacher)):
        for k, p in pset.params.items():
            arr = np.asarray(payload["params"][role][k], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ShapeMismatch(f"checkpoint {role}.{k}: {arr.shape} vs {p.data.shape}")
            p.data = arr
