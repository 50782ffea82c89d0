"""A miniature end-to-end training run: EMA teacher pseudo-labeling with the
confidence gate, reliability-weighted unsupervised loss, contrastive and
multi-scale alignment terms, and the per-epoch metrics the full runs log.

Uses a reduced configuration so it finishes in about a minute; the full
default configuration is what `seqssl train` and the acceptance ablation run.
"""

import json
import tempfile
from pathlib import Path

from seqssl.synthgen import DatasetConfig
from seqssl.trainer import TrainConfig, run_training

ds_cfg = DatasetConfig(n_classes=4, per_class=12, labeled_fraction=0.25,
                       d_in=8, video_len=120, noise=0.05, seed=0)
cfg = TrainConfig(seed=0, epochs=8, clip_len=4, strides=(4, 8, 16),
                  d_h=16, d_e=8, d_k=12, bank_capacity=64, b_l=1, b_u=3)

out = Path(tempfile.mkdtemp(prefix="seqssl_demo_"))
summary = run_training(cfg, ds_cfg, str(out), eval_per_class=4)

print(f"run directory: {out}")
print(json.dumps(summary, indent=2, sort_keys=True))

print("\nper-epoch trajectory (teacher top-1 / pseudo-label accuracy /"
      " acceptance rate):")
for line in (out / "epochs.csv").read_text().strip().splitlines()[1:]:
    epoch, _, _, t1, _, pacc, arate = line.split(",")
    print(f"  epoch {int(epoch):2d}: top1={float(t1):.3f} "
          f"pseudo_acc={float(pacc):.3f} accepted={float(arate):.3f}")
