"""Self-verification: finite-difference gradient checks for every loss,
a multi-restart EM oracle comparison for the mixture fit, and a direct
exponential-sum oracle for the contrastive loss.

The oracles here are deliberately written against the formulas, not against
the implementations they check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from . import acl as acl_mod
from . import gmm
from . import trainer as tr
from .synthgen import DatasetConfig, SynthDataset


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self):
        return self.max_error < self.tolerance


def flat_gradcheck(paramset, loss_fn, eps=1e-5, corrupt=False):
    """Max relative error between backward() gradients and central
    differences, over every entry of every trainable parameter."""
    paramset.zero_grad()
    loss_fn().backward()
    analytic = {}
    for k in paramset.names():
        p = paramset.params[k]
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        analytic[k] = g.copy()
    if corrupt:
        first = paramset.names()[0]
        analytic[first] = analytic[first] + 1.0
    worst = 0.0
    for k in paramset.names():
        p = paramset.params[k]
        for idx in np.ndindex(p.data.shape):
            keep = p.data[idx]
            p.data[idx] = keep + eps
            f_plus = loss_fn().item()
            p.data[idx] = keep - eps
            f_minus = loss_fn().item()
            p.data[idx] = keep
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(analytic[k][idx] - numeric) / max(1.0, abs(analytic[k][idx]))
            worst = max(worst, err)
    return worst


def small_config(seed: int):
    """Desk-miniature config used by the gradient-check suites."""
    ds_cfg = DatasetConfig(n_classes=4, per_class=6, labeled_fraction=0.34,
                           d_in=4, video_len=40, noise=0.05, seed=seed)
    cfg = tr.TrainConfig(seed=seed, clip_len=4, strides=(2, 4, 8), d_h=6,
                         d_e=4, d_k=5, bank_capacity=32, epochs=2,
                         delta=0.0, b_l=2, b_u=3)
    return cfg, ds_cfg


def loss_gradchecks(seed: int, eps=1e-5, corrupt=False) -> List[CheckResult]:
    """Gradcheck L_l, L_u, L_ACL, L_MTL and the total over all student
    parameters at one seeded configuration (a warmed-up training state)."""
    cfg, ds_cfg = small_config(seed)
    ds = SynthDataset(ds_cfg)
    state = tr.TrainerState(cfg, ds)
    warm_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA]))
    # a few real steps so the bank, prototypes and gates are all active
    for s in range(4):
        labeled = [ds.labeled[(s + i) % len(ds.labeled)] for i in range(cfg.b_l)]
        unlabeled = [ds.unlabeled[(s * cfg.b_u + i) % len(ds.unlabeled)]
                     for i in range(cfg.b_u)]
        tr.train_step(state, labeled, unlabeled, 0, warm_rng)

    plan_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB]))
    plan = tr.prepare_step_plan(state, ds.labeled[:cfg.b_l],
                                ds.unlabeled[:cfg.b_u], plan_rng)

    def part(name):
        def fn():
            total, parts = tr.compute_losses(state.student, state.teacher,
                                             plan, cfg)
            return total if name == "total" else parts[name]
        return fn

    results = []
    for name in ("L_l", "L_u", "L_ACL", "L_MTL", "total"):
        err = flat_gradcheck(state.student, part(name), eps=eps,
                             corrupt=corrupt)
        results.append(CheckResult(f"gradcheck[{name}]@seed{seed}", err, 1e-4))
    return results


def oracle_em(points: np.ndarray, n_restarts: int = 50, seed: int = 0):
    """Independent 2-component EM with random restarts; returns the best
    log-likelihood found."""
    x = np.asarray(points, dtype=np.float64)
    rng = np.random.default_rng(seed)
    best = -np.inf
    for _ in range(n_restarts):
        mu = rng.choice(x, size=2, replace=False).astype(np.float64)
        var = np.full(2, max(x.var(), 1e-6))
        w = np.array([0.5, 0.5])
        prev = -np.inf
        for _ in range(500):
            log_p = np.stack([
                np.log(w[k]) - 0.5 * (np.log(2 * np.pi * var[k])
                                      + (x - mu[k]) ** 2 / var[k])
                for k in (0, 1)], axis=1)
            m = log_p.max(axis=1, keepdims=True)
            norm = m[:, 0] + np.log(np.exp(log_p - m).sum(axis=1))
            ll = norm.sum()
            if abs(ll - prev) < 1e-10:
                break
            prev = ll
            r = np.exp(log_p - norm[:, None])
            nk = r.sum(axis=0)
            mu = (r * x[:, None]).sum(axis=0) / nk
            var = np.maximum((r * (x[:, None] - mu) ** 2).sum(axis=0) / nk, 1e-6)
            w = nk / x.size
        best = max(best, prev)
    return best


def gmm_oracle_checks(n_datasets: int = 20) -> List[CheckResult]:
    """fit_gmm must reach the restart-oracle's log-likelihood minus 1e-3 on
    seeded two-cluster datasets with separations from 0.1 to 0.7."""
    results = []
    worst_gap = -np.inf
    for i in range(n_datasets):
        rng = np.random.default_rng(1000 + i)
        sep = 0.1 + 0.6 * i / max(1, n_datasets - 1)
        lo, hi = 0.5 - sep / 2, 0.5 + sep / 2
        pts = np.concatenate([rng.normal(lo, 0.05, 50), rng.normal(hi, 0.05, 50)])
        pts = np.clip(pts, -1.0, 1.0)
        fit = gmm.fit_gmm(pts)
        gap = oracle_em(pts, seed=i) - gmm.log_likelihood(fit, pts)
        worst_gap = max(worst_gap, gap)
    results.append(CheckResult("gmm_vs_restart_oracle", worst_gap, 1e-3))
    return results


def acl_oracle(anchor, positives, negatives, tau):
    """Direct evaluation of the contrastive formula: -log of the positive
    share of the exponential sums."""
    s_pos = sum(np.exp(np.dot(anchor, f) / tau) for f in positives)
    s_neg = sum(np.exp(np.dot(anchor, f) / tau) for f in negatives)
    return -np.log(s_pos / (s_pos + s_neg))


def acl_oracle_checks(n_cases: int = 50) -> List[CheckResult]:
    worst = 0.0
    for i in range(n_cases):
        rng = np.random.default_rng(2000 + i)
        d = 8
        def unit():
            v = rng.normal(size=d)
            return v / np.linalg.norm(v)
        n_pos = int(rng.integers(1, 8))
        n_neg = int(rng.integers(0, 30))
        anchor, pos, neg = unit(), [unit() for _ in range(n_pos)], \
            [unit() for _ in range(n_neg)]
        sel = acl_mod.AclSelection(anchor=anchor, naive_positive=pos[-1],
                                   positives=pos, negatives=neg,
                                   anchor_reliability=1.0, used_fallback=False)
        got = acl_mod.acl_loss(sel, 0.07).item()
        want = acl_oracle(anchor, pos, neg, 0.07)
        worst = max(worst, abs(got - want))
    return [CheckResult("acl_loss_vs_direct_sum", worst, 1e-9)]


def run_verification(corrupt: bool = False, gradcheck_seeds=(0, 1, 2)):
    """All self-checks; returns (all_passed, list of CheckResult)."""
    results = []
    for seed in gradcheck_seeds:
        results.extend(loss_gradchecks(seed, corrupt=corrupt))
    results.extend(gmm_oracle_checks())
    results.extend(acl_oracle_checks())
    return all(r.passed for r in results), results
