"""Adaptive contrastive learning: candidate construction, GMM reliability
scoring, threshold selection with the low-reliability fallback, and the
contrastive loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import autodiff as ad
from . import gmm
from .errors import EmptyPositives, PrototypeMissing
from .protobank import MemoryBank

DEGENERATE_MIN_POINTS = 4
DEGENERATE_SPREAD = 1e-6


@dataclass
class AclSelection:
    anchor: object                     # Tensor (student side) or array
    naive_positive: np.ndarray         # f^p, teacher side
    positives: List[np.ndarray]
    negatives: List[np.ndarray]
    anchor_reliability: float
    used_fallback: bool


def build_candidates(bank: MemoryBank, pseudo_label: int, f_p: np.ndarray) -> list:
    """Initial positive set: same-pseudo-class bank entries plus f^p (last)."""
    return bank.candidates_of(pseudo_label) + [np.asarray(f_p, dtype=np.float64)]


def score_candidates(candidates: list, prototype: Optional[np.ndarray]) -> np.ndarray:
    """Reliability score per candidate from a per-set two-component GMM.

    Distances are cosines to the class prototype. Sets too small or too
    concentrated for a meaningful mixture get score 1.0 everywhere.
    """
    if prototype is None:
        raise PrototypeMissing("no prototype for the candidate class")
    stacked = np.stack([np.asarray(c, dtype=np.float64) for c in candidates])
    norms = np.linalg.norm(stacked, axis=1) * np.linalg.norm(prototype)
    dists = stacked @ prototype / norms
    if len(candidates) < DEGENERATE_MIN_POINTS or dists.std() < DEGENERATE_SPREAD:
        return np.ones(len(candidates))
    fit = gmm.fit_gmm(dists)
    return gmm.reliability_many(fit, dists)


def select(bank: MemoryBank, pseudo_label: int, anchor, f_p: np.ndarray,
           scores: np.ndarray, epsilon: float) -> AclSelection:
    """Threshold the scored candidates; fall back to {f^p} vs the whole bank
    when the anchor's own score is not above epsilon.

    ``scores`` must be aligned with build_candidates order (bank candidates
    in insertion order, then f^p last).
    """
    f_p = np.asarray(f_p, dtype=np.float64)
    gamma_fp = float(scores[-1])
    if gamma_fp <= epsilon:
        return AclSelection(
            anchor=anchor, naive_positive=f_p, positives=[f_p],
            negatives=bank.all_embeddings(), anchor_reliability=gamma_fp,
            used_fallback=True)

    cand_idx = [i for i, (_, lab) in enumerate(bank.entries) if lab == pseudo_label]
    pos_bank_idx = {i for i, s in zip(cand_idx, scores[:-1]) if s > epsilon}
    positives = [bank.entries[i][0] for i in sorted(pos_bank_idx)] + [f_p]
    negatives = [emb for i, (emb, _) in enumerate(bank.entries) if i not in pos_bank_idx]
    return AclSelection(
        anchor=anchor, naive_positive=f_p, positives=positives,
        negatives=negatives, anchor_reliability=gamma_fp, used_fallback=False)


def acl_loss(sel: AclSelection, tau: float) -> ad.Tensor:
    """-log of the positive exponential-sum share; differentiable in the anchor.

    Bank entries and f^p are teacher-side constants and carry no gradient.
    """
    if not sel.positives:
        raise EmptyPositives("selection has no positive samples")
    anchor = ad.as_tensor(sel.anchor)
    pos = ad.Tensor(np.stack(sel.positives))
    s_pos = ad.tsum(ad.exp(ad.scale(ad.matmul(pos, anchor), 1.0 / tau)))
    if sel.negatives:
        neg = ad.Tensor(np.stack(sel.negatives))
        s_neg = ad.tsum(ad.exp(ad.scale(ad.matmul(neg, anchor), 1.0 / tau)))
        total = ad.add(s_pos, s_neg)
    else:
        total = s_pos
    return ad.sub(ad.log(total), ad.log(s_pos))
