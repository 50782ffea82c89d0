"""Multi-scale temporal learning: clip sampling over strides, cross-scale
calibration of long-term key tokens against the short-term query, and the
temperature-sharpened alignment loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from . import autodiff as ad
from .backbone import Clip, ParamSet, encode, temporal_embed
from .errors import VideoTooShort
from .synthgen import extract_clip


@dataclass
class MultiScaleSample:
    short_clip: Clip
    long_clips: List[Clip]
    source_id: int


@dataclass
class CalibrationResult:
    attention: ad.Tensor          # (T,)
    calibrated_tokens: ad.Tensor  # (T, d_h)


def sample_multiscale(video_frames: np.ndarray, source_id: int, label,
                      strides, clip_len: int,
                      rng: np.random.Generator) -> MultiScaleSample:
    """One short-term clip (first stride) plus long-term clips (the rest),
    each from an independent random start offset."""
    length = video_frames.shape[0]
    need = (clip_len - 1) * max(strides) + 1
    if length < need:
        raise VideoTooShort(f"video length {length}, need {need}")
    clips = []
    for stride in strides:
        span = (clip_len - 1) * stride + 1
        start = int(rng.integers(0, length - span + 1))
        clips.append(extract_clip(video_frames, start, stride, clip_len,
                                  source_id, label))
    return MultiScaleSample(short_clip=clips[0], long_clips=clips[1:],
                            source_id=source_id)


def calibrate(query_tokens, key_tokens) -> CalibrationResult:
    """Per-frame cosine attention between query and key token rows; each key
    row is rescaled by its attention weight. Gradient flows into the query;
    the key side is a teacher constant when the caller passes it detached."""
    q, k = ad.as_tensor(query_tokens), ad.as_tensor(key_tokens)
    attention = ad.rowwise_cosine(q, k)
    return CalibrationResult(attention=attention,
                             calibrated_tokens=ad.scale_rows(k, attention))


def alignment_loss(student_logits, teacher_logits, tau_s: float,
                   tau_t: float) -> ad.Tensor:
    """Cross-entropy H(P^k, P^q) between the sharpened teacher distribution
    and the student distribution."""
    p_q = ad.softmax_temp(ad.as_tensor(student_logits), tau_s)
    p_k = ad.softmax_temp(ad.as_tensor(teacher_logits), tau_t)
    return ad.scale(ad.dot(p_k, ad.log(p_q)), -1.0)


def mtl_loss_from_clips(weak_short: Clip, strong_short: Clip,
                        weak_longs: List[Clip], student: ParamSet,
                        teacher: ParamSet, tau_s: float, tau_t: float,
                        centers=None):
    """MTL loss from already-augmented clips.

    `centers` (optional, one vector per scale) is subtracted from the teacher
    logits before sharpening. Without it the sharpened teacher target is
    trivially whatever logit dominates for every input and the alignment
    collapses to zero in a few steps; a running center keeps the target
    distribution spread over the embedding dimensions so alignment keeps
    exerting pressure to separate inputs (standard remedy in
    self-distillation).

    Returns (loss, per_scale) where per_scale holds (alignment loss value,
    mean attention weight) per long-term scale.
    """
    # the calibration query is the teacher's view of the short clip: the
    # whole target side stays constant in student parameters, so alignment
    # cannot be gamed by steering the attention instead of the representation
    q_tokens = encode(teacher, weak_short).tokens          # calibration query
    qstar_tokens = encode(student, strong_short).tokens    # aligned student repr
    losses = []
    per_scale = []
    for n, long_clip in enumerate(weak_longs, start=1):
        k_tokens = encode(teacher, long_clip).tokens       # teacher constant
        calib = calibrate(q_tokens, k_tokens)
        z_q = temporal_embed(student, n, qstar_tokens)
        z_k = temporal_embed(teacher, n, calib.calibrated_tokens)
        if centers is not None:
            z_k = ad.sub(z_k, ad.Tensor(centers[n - 1]))
        loss_n = alignment_loss(z_q, z_k, tau_s, tau_t)
        losses.append(loss_n)
        per_scale.append((loss_n.item(), float(calib.attention.data.mean())))
    total = losses[0]
    for loss_n in losses[1:]:
        total = ad.add(total, loss_n)
    return ad.scale(total, 1.0 / len(losses)), per_scale


def mtl_loss(sample: MultiScaleSample, student: ParamSet, teacher: ParamSet,
             tau_s: float, tau_t: float, rng: np.random.Generator,
             video_frames=None):
    """Convenience wrapper that draws weak/strong augmentations itself."""
    from .synthgen import strong_augment, weak_augment

    weak_short = weak_augment(sample.short_clip, rng, video_frames)
    strong_short = strong_augment(sample.short_clip, rng, video_frames)
    weak_longs = [weak_augment(c, rng, video_frames) for c in sample.long_clips]
    return mtl_loss_from_clips(weak_short, strong_short, weak_longs,
                               student, teacher, tau_s, tau_t, centers=None)
