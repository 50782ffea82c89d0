"""Training orchestration: pseudo-label fusion, loss assembly, SGD with the
step schedule, EMA teacher updates and the memory-bank lifecycle.

A step is split into two phases. ``prepare_step_plan`` performs every
teacher-side and bookkeeping decision (augmentation draws, pseudo-labels,
gates, reliability scores, positive/negative selection, prototype updates)
and freezes the results into a plan. ``compute_losses`` is then a pure,
smooth function of the student parameters given that plan, which is what
makes finite-difference gradient verification of every loss exact.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import acl as acl_mod
from . import autodiff as ad
from . import backbone as bb
from .errors import EmptyBatch, EmptyDataset, PrototypeMissing
from .mtl import mtl_loss_from_clips, sample_multiscale
from .protobank import MemoryBank, PrototypeTable
from .synthgen import (DatasetConfig, SynthDataset, extract_clip,
                       strong_augment, weak_augment)

# momentum of the running center of teacher temporal logits (anti-collapse
# bias for the alignment loss)
CENTER_MOMENTUM = 0.9


@dataclass
class TrainConfig:
    delta: float = 0.3
    tau: float = 0.07
    tau_s: float = 0.1
    tau_t: float = 0.04
    epsilon: float = 0.7
    beta: float = 0.9
    mu1: float = 1.0
    mu2: float = 1.0
    b_l: int = 1
    b_u: int = 5
    clip_len: int = 8
    strides: tuple = (8, 16, 32)
    n_scales: int = 2
    lr: float = 0.005
    momentum: float = 0.9
    weight_decay: float = 0.001
    lr_drop_epochs: tuple = (25, 28)
    epochs: int = 30
    ema_momentum: float = 0.99
    bank_capacity: int = 512
    seed: int = 0
    d_h: int = 64
    d_e: int = 16
    d_k: int = 16
    use_acl: bool = True
    use_mtl: bool = True
    checkpoint_every: int = 10

    def to_dict(self):
        d = dict(self.__dict__)
        d["strides"] = list(self.strides)
        d["lr_drop_epochs"] = list(self.lr_drop_epochs)
        return d


@dataclass
class StepReport:
    step: int
    epoch: int
    loss_l: float
    loss_u: float
    loss_acl: float
    loss_mtl: float
    total: float
    acceptance_rate: float
    mean_gamma: float
    labeled_ids: list
    unlabeled_ids: list
    n_correct_accepted: int = 0
    n_accepted: int = 0


@dataclass
class LabeledItem:
    clips: List[bb.Clip]    # weak-augmented views: short clip first, then longs
    label: int


@dataclass
class UnlabeledItem:
    weak_short: bb.Clip
    strong_short: bb.Clip
    weak_longs: List[bb.Clip]
    pseudo_label: int
    fused_max: float
    gate: bool
    gamma: float
    selection: Optional[acl_mod.AclSelection]
    f_p: np.ndarray
    f_score: np.ndarray     # unit pooled embedding, used only for reliability
    true_label: int
    source_id: int


@dataclass
class StepPlan:
    labeled: List[LabeledItem]
    unlabeled: List[UnlabeledItem]
    # snapshot of the per-scale teacher-logit centers used by the alignment
    # loss this step (constants w.r.t. the student)
    mtl_centers: Optional[List[np.ndarray]] = None


class TrainerState:
    def __init__(self, cfg: TrainConfig, ds: SynthDataset):
        self.cfg = cfg
        self.ds = ds
        dims = bb.ModelDims(d_in=ds.cfg.d_in, d_h=cfg.d_h, d_e=cfg.d_e,
                            d_k=cfg.d_k, n_classes=ds.cfg.n_classes,
                            clip_len=cfg.clip_len, n_scales=cfg.n_scales)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x1017]))
        self.student = bb.ParamSet.init(dims, rng, trainable=True)
        self.teacher = self.student.copy_as_teacher()
        # reliability is scored in the pooled encoder space (shaped by the
        # classification losses, never pulled around by the contrastive
        # loss), so prototypes live there too; the loss-side bank below keeps
        # the projection-head embeddings the InfoNCE terms operate on, and a
        # second bank holds the pooled twins of the same entries, pushed in
        # lockstep so candidate order lines up
        self.protos = PrototypeTable(ds.cfg.n_classes, cfg.d_h)
        self.bank = MemoryBank(cfg.bank_capacity)
        self.score_bank = MemoryBank(cfg.bank_capacity)
        self.velocity = {k: np.zeros_like(p.data)
                         for k, p in self.student.params.items()}
        # running centers of the teacher's per-scale temporal logits,
        # subtracted before sharpening to stop alignment collapse
        self.mtl_centers = [np.zeros(cfg.d_k) for _ in range(cfg.n_scales)]
        self.global_step = 0


def fused_pseudo_label(teacher: bb.ParamSet, weak_short: bb.Clip,
                       weak_longs: List[bb.Clip]):
    """Argmax of the summed teacher predictions over all clips; ties go to
    the lowest class index (np.argmax convention)."""
    clips = [weak_short] + list(weak_longs)
    per_clip = [bb.classify(teacher, bb.encode(teacher, c)).data for c in clips]
    fused = np.sum(per_clip, axis=0)
    y_hat = int(np.argmax(fused))
    return y_hat, float(fused[y_hat] / len(clips)), per_clip


def sgd_step(params: bb.ParamSet, velocity: dict, lr: float, momentum: float,
             weight_decay: float) -> None:
    """v <- momentum*v + grad + wd*p; p <- p - lr*v."""
    for k in params.names():
        p = params.params[k]
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        velocity[k] = momentum * velocity[k] + g + weight_decay * p.data
        p.data = p.data - lr * velocity[k]


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    drops = sum(1 for e in cfg.lr_drop_epochs if epoch >= e)
    return cfg.lr * (0.1 ** drops)


def prepare_step_plan(state: TrainerState, labeled_recs, unlabeled_recs,
                      rng: np.random.Generator) -> StepPlan:
    """Teacher-side pass: draws augmentations, fixes pseudo-labels, gates,
    reliability scores and contrastive selections, and updates prototypes
    from the labeled embeddings."""
    cfg, ds = state.cfg, state.ds
    short_stride = cfg.strides[0]

    labeled_items = []
    for rec in labeled_recs:
        frames = ds.frames(rec)
        # labeled videos contribute every stride's view: with so few labels,
        # the supervised term is what first carves the confusable pairs apart
        sample = sample_multiscale(frames, rec.source_id, rec.class_id,
                                   cfg.strides, cfg.clip_len, rng)
        clips = [weak_augment(c, rng, frames)
                 for c in [sample.short_clip] + sample.long_clips]
        labeled_items.append(LabeledItem(clips=clips, label=rec.class_id))

    # prototype updates from the current student's labeled embeddings;
    # every view counts, so prototypes stabilize within the first epochs
    # and reliability scoring engages early
    for item in labeled_items:
        for clip in item.clips:
            enc = bb.encode(state.student, clip)
            pooled = enc.pooled.data
            f_l = pooled / max(float(np.linalg.norm(pooled)), 1e-12)
            state.protos.update(item.label, f_l, cfg.beta)

    unlabeled_items = []
    for rec in unlabeled_recs:
        frames = ds.frames(rec)
        sample = sample_multiscale(frames, rec.source_id, None, cfg.strides,
                                   cfg.clip_len, rng)
        weak_short = weak_augment(sample.short_clip, rng, frames)
        strong_short = strong_augment(sample.short_clip, rng, frames)
        weak_longs = [weak_augment(c, rng, frames) for c in sample.long_clips]

        y_hat, fused_max, _ = fused_pseudo_label(state.teacher, weak_short,
                                                 weak_longs)
        enc_p = bb.encode(state.teacher, weak_short)
        f_p = bb.spatial_embed(state.teacher, enc_p).data
        pooled = enc_p.pooled.data
        f_score = pooled / max(float(np.linalg.norm(pooled)), 1e-12)

        gamma = 1.0
        selection = None
        if cfg.use_acl:
            try:
                proto = state.protos.get(y_hat)
                # reliability comes from the pooled-space bank; the two banks
                # receive the same pushes in the same order, so these scores
                # line up one-for-one with the head-space candidates that the
                # selection below draws positives and negatives from
                cands = acl_mod.build_candidates(state.score_bank, y_hat,
                                                 f_score)
                scores = acl_mod.score_candidates(cands, proto)
                selection = acl_mod.select(state.bank, y_hat, None, f_p,
                                           scores, cfg.epsilon)
            except PrototypeMissing:
                # no reliability evidence for this pseudo-class yet
                selection = acl_mod.AclSelection(
                    anchor=None, naive_positive=f_p, positives=[f_p],
                    negatives=state.bank.all_embeddings(),
                    anchor_reliability=0.0, used_fallback=True)
            gamma = selection.anchor_reliability

        unlabeled_items.append(UnlabeledItem(
            weak_short=weak_short, strong_short=strong_short,
            weak_longs=weak_longs, pseudo_label=y_hat, fused_max=fused_max,
            gate=fused_max > cfg.delta, gamma=gamma, selection=selection,
            f_p=f_p, f_score=f_score, true_label=rec.class_id,
            source_id=rec.source_id))

    # the plan uses the centers as they stood before this step; then the
    # running centers absorb this batch's teacher logits
    centers_snapshot = None
    if cfg.use_mtl and unlabeled_items:
        centers_snapshot = [c.copy() for c in state.mtl_centers]
        for n in range(1, cfg.n_scales + 1):
            batch = []
            for item in unlabeled_items:
                tokens = bb.encode(state.teacher, item.weak_longs[n - 1]).tokens
                batch.append(bb.temporal_embed(state.teacher, n, tokens).data)
            state.mtl_centers[n - 1] = (
                CENTER_MOMENTUM * state.mtl_centers[n - 1]
                + (1.0 - CENTER_MOMENTUM) * np.mean(batch, axis=0))

    return StepPlan(labeled=labeled_items, unlabeled=unlabeled_items,
                    mtl_centers=centers_snapshot)


def compute_losses(student: bb.ParamSet, teacher: bb.ParamSet, plan: StepPlan,
                   cfg: TrainConfig):
    """Pure student-side loss assembly given a frozen step plan.

    Returns (total, parts) where parts maps loss names to Tensors.
    """
    zero = ad.Tensor(0.0)

    if not plan.labeled:
        raise EmptyBatch("labeled batch is empty")
    loss_l = zero
    for item in plan.labeled:
        per_view = zero
        for clip in item.clips:
            probs = bb.classify(student, bb.encode(student, clip))
            per_view = ad.add(per_view, ad.cross_entropy(probs, item.label))
        loss_l = ad.add(loss_l, ad.scale(per_view, 1.0 / len(item.clips)))
    loss_l = ad.scale(loss_l, 1.0 / len(plan.labeled))

    loss_u = zero
    loss_acl = zero
    n_anchors = 0
    mtl_terms = zero
    for item in plan.unlabeled:
        enc_strong = bb.encode(student, item.strong_short)
        if item.gate:
            probs = bb.classify(student, enc_strong)
            ce = ad.cross_entropy(probs, item.pseudo_label)
            weight = item.gamma if cfg.use_acl else 1.0
            loss_u = ad.add(loss_u, ad.scale(ce, weight))
        if cfg.use_acl and item.selection is not None:
            anchor = bb.spatial_embed(student, enc_strong)
            sel = acl_mod.AclSelection(
                anchor=anchor, naive_positive=item.selection.naive_positive,
                positives=item.selection.positives,
                negatives=item.selection.negatives,
                anchor_reliability=item.selection.anchor_reliability,
                used_fallback=item.selection.used_fallback)
            loss_acl = ad.add(loss_acl, acl_mod.acl_loss(sel, cfg.tau))
            n_anchors += 1
        if cfg.use_mtl:
            term, _ = mtl_loss_from_clips(item.weak_short, item.strong_short,
                                          item.weak_longs, student, teacher,
                                          cfg.tau_s, cfg.tau_t,
                                          centers=plan.mtl_centers)
            mtl_terms = ad.add(mtl_terms, term)

    n_u = max(1, len(plan.unlabeled))
    loss_u = ad.scale(loss_u, 1.0 / n_u)
    loss_mtl = ad.scale(mtl_terms, 1.0 / n_u) if cfg.use_mtl else zero
    loss_acl = ad.scale(loss_acl, 1.0 / n_anchors) if n_anchors else zero

    total = ad.add(ad.add(loss_l, loss_u),
                   ad.add(ad.scale(loss_mtl, cfg.mu1), ad.scale(loss_acl, cfg.mu2)))
    return total, {"L_l": loss_l, "L_u": loss_u, "L_ACL": loss_acl,
                   "L_MTL": loss_mtl}


def train_step(state: TrainerState, labeled_recs, unlabeled_recs, epoch: int,
               rng: np.random.Generator) -> StepReport:
    cfg = state.cfg
    plan = prepare_step_plan(state, labeled_recs, unlabeled_recs, rng)

    state.student.zero_grad()
    total, parts = compute_losses(state.student, state.teacher, plan, cfg)
    total.backward()
    sgd_step(state.student, state.velocity, lr_schedule(epoch, cfg),
             cfg.momentum, cfg.weight_decay)
    bb.ema_update(state.teacher, state.student, cfg.ema_momentum)

    for item in plan.unlabeled:
        state.bank.push(item.f_p, item.pseudo_label)
        state.score_bank.push(item.f_score, item.pseudo_label)

    accepted = [it for it in plan.unlabeled if it.gate]
    n_correct = sum(1 for it in accepted if it.pseudo_label == it.true_label)
    gammas = [it.gamma for it in plan.unlabeled]
    report = StepReport(
        step=state.global_step, epoch=epoch,
        loss_l=parts["L_l"].item(), loss_u=parts["L_u"].item(),
        loss_acl=parts["L_ACL"].item(), loss_mtl=parts["L_MTL"].item(),
        total=total.item(),
        acceptance_rate=len(accepted) / max(1, len(plan.unlabeled)),
        mean_gamma=float(np.mean(gammas)) if gammas else 1.0,
        labeled_ids=[r.source_id for r in labeled_recs],
        unlabeled_ids=[r.source_id for r in unlabeled_recs],
        n_correct_accepted=n_correct, n_accepted=len(accepted))
    state.global_step += 1
    return report


def supervised_loss(student: bb.ParamSet, labeled_items) -> ad.Tensor:
    """Mean cross-entropy on weak-augmented labeled views (per-item mean
    over its clips, then mean over items)."""
    if not labeled_items:
        raise EmptyBatch("labeled batch is empty")
    total = ad.Tensor(0.0)
    for item in labeled_items:
        per_view = ad.Tensor(0.0)
        for clip in item.clips:
            probs = bb.classify(student, bb.encode(student, clip))
            per_view = ad.add(per_view, ad.cross_entropy(probs, item.label))
        total = ad.add(total, ad.scale(per_view, 1.0 / len(item.clips)))
    return ad.scale(total, 1.0 / len(labeled_items))


def evaluate(params: bb.ParamSet, ds: SynthDataset, records, cfg: TrainConfig):
    """Top-1/top-5 accuracy on a single augmentation-free center clip per video."""
    if not records:
        raise EmptyDataset("evaluation set is empty")
    stride = cfg.strides[0]
    span = (cfg.clip_len - 1) * stride + 1
    top1 = top5 = 0
    for rec in records:
        frames = ds.frames(rec)
        start = (frames.shape[0] - span) // 2
        clip = extract_clip(frames, start, stride, cfg.clip_len, rec.source_id)
        probs = bb.classify(params, bb.encode(params, clip)).data
        # stable ranking: argmax ties resolve to the lowest class index
        if int(np.argmax(probs)) == rec.class_id:
            top1 += 1
        order = np.lexsort((np.arange(len(probs)), -probs))
        if rec.class_id in order[:5]:
            top5 += 1
    n = len(records)
    return top1 / n, top5 / n


def _fmt(x: float) -> str:
    return repr(float(x))


def run_training(cfg: TrainConfig, ds_cfg: DatasetConfig, out_dir: str,
                 eval_per_class: int = 10) -> dict:
    """Full training run; writes metrics.csv, epochs.csv, final_eval.json and
    a checkpoint into out_dir, and returns the final summary dict."""
    os.makedirs(out_dir, exist_ok=True)
    ds = SynthDataset(ds_cfg)
    state = TrainerState(cfg, ds)
    eval_recs = eval_records(ds, eval_per_class)

    resolved = {"train": cfg.to_dict(), "dataset": ds_cfg.to_dict()}
    cfg_hash = bb.config_hash(resolved)
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as f:
        json.dump(resolved, f, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(ds.manifest(), f)

    steps_per_epoch = math.ceil(len(ds.unlabeled) / cfg.b_u)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    epochs_path = os.path.join(out_dir, "epochs.csv")
    epoch_rows = []
    with open(metrics_path, "w", newline="") as mf:
        mw = csv.writer(mf)
        mw.writerow(["step", "epoch", "L_l", "L_u", "L_ACL", "L_MTL", "total",
                     "acceptance_rate", "mean_gamma"])
        for epoch in range(cfg.epochs):
            erng = np.random.default_rng(
                np.random.SeedSequence([cfg.seed, epoch, 0x5C]))
            lab_order = erng.permutation(len(ds.labeled))
            unl_order = erng.permutation(len(ds.unlabeled))
            li = 0
            n_acc = n_corr = n_seen = 0
            acc_rates = []
            for s in range(steps_per_epoch):
                labeled_recs = []
                for _ in range(cfg.b_l):
                    labeled_recs.append(ds.labeled[lab_order[li % len(lab_order)]])
                    li += 1
                u_lo = s * cfg.b_u
                unlabeled_recs = [ds.unlabeled[unl_order[i % len(unl_order)]]
                                  for i in range(u_lo, u_lo + cfg.b_u)]
                rng = np.random.default_rng(
                    np.random.SeedSequence([cfg.seed, epoch, s]))
                rep = train_step(state, labeled_recs, unlabeled_recs, epoch, rng)
                mw.writerow([rep.step, rep.epoch, _fmt(rep.loss_l),
                             _fmt(rep.loss_u), _fmt(rep.loss_acl),
                             _fmt(rep.loss_mtl), _fmt(rep.total),
                             _fmt(rep.acceptance_rate), _fmt(rep.mean_gamma)])
                n_acc += rep.n_accepted
                n_corr += rep.n_correct_accepted
                n_seen += len(unlabeled_recs)
                acc_rates.append(rep.acceptance_rate)

            s_top1, s_top5 = evaluate(state.student, ds, eval_recs, cfg)
            t_top1, t_top5 = evaluate(state.teacher, ds, eval_recs, cfg)
            pseudo_acc = n_corr / n_acc if n_acc else 0.0
            epoch_rows.append({
                "epoch": epoch, "student_top1": s_top1, "student_top5": s_top5,
                "teacher_top1": t_top1, "teacher_top5": t_top5,
                "pseudo_acc": pseudo_acc,
                "acceptance_rate": n_acc / max(1, n_seen)})
            if (epoch + 1) % cfg.checkpoint_every == 0 or epoch == cfg.epochs - 1:
                bb.save_checkpoint(os.path.join(out_dir, "checkpoint.json"),
                                   state.student, state.teacher, cfg_hash)

    with open(epochs_path, "w", newline="") as ef:
        ew = csv.writer(ef)
        ew.writerow(["epoch", "student_top1", "student_top5", "teacher_top1",
                     "teacher_top5", "pseudo_acc", "acceptance_rate"])
        for row in epoch_rows:
            ew.writerow([row["epoch"], _fmt(row["student_top1"]),
                         _fmt(row["student_top5"]), _fmt(row["teacher_top1"]),
                         _fmt(row["teacher_top5"]), _fmt(row["pseudo_acc"]),
                         _fmt(row["acceptance_rate"])])

    summary = {
        "top1": epoch_rows[-1]["teacher_top1"],
        "top5": epoch_rows[-1]["teacher_top5"],
        "student_top1": epoch_rows[-1]["student_top1"],
        "student_top5": epoch_rows[-1]["student_top5"],
        "pseudo_acc_first": epoch_rows[0]["pseudo_acc"],
        "pseudo_acc_final": epoch_rows[-1]["pseudo_acc"],
        "acceptance_first": epoch_rows[0]["acceptance_rate"],
        "acceptance_final": epoch_rows[-1]["acceptance_rate"],
        "epochs": cfg.epochs, "seed": cfg.seed,
        "use_acl": cfg.use_acl, "use_mtl": cfg.use_mtl,
    }
    with open(os.path.join(out_dir, "final_eval.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return summary


def eval_records(ds: SynthDataset, eval_per_class: int):
    """Held-out videos: indices beyond the training range, regenerated from
    the same class definitions."""
    from .synthgen import VideoRecord
    recs = []
    for c in range(ds.cfg.n_classes):
        for v in range(ds.cfg.per_class, ds.cfg.per_class + eval_per_class):
            recs.append(VideoRecord(source_id=c * 10_000 + v, class_id=c,
                                    video_index=v, labeled=False))
    return recs
