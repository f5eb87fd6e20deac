"""End-to-end: generate data, train a small detector, inspect alignment.

Uses a reduced 64px configuration so the whole demo finishes in about a
minute on a laptop. Run:  python3 demos/train_tiny_detector.py [out_dir]
"""

import os
import sys
import tempfile

from aligndet.metrics import evaluate_dataset
from aligndet.model import ModelConfig, build_model
from aligndet.scenes import DatasetConfig, make_dataset, train_seeds, val_seeds, write_dataset
from aligndet.train import adopt_params, load_checkpoint, train

out_dir = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="tiny_detector_")
os.makedirs(out_dir, exist_ok=True)

dcfg = DatasetConfig(image_size=64)
data = os.path.join(out_dir, "train.tdset")
write_dataset(make_dataset(train_seeds(24), dcfg), data)
val_records = make_dataset(val_seeds(8), dcfg)
print(f"dataset: 24 train + 8 val scenes at 64px")

cfg = ModelConfig(image_size=64, steps=150, batch_size=8, seed=0)

def progress(step, losses):
    if step % 25 == 0:
        print(f"  step {step:3d}: total {losses['total']:.4f}")

print("training 150 steps...")
params, history = train(cfg, data, out_dir, progress=progress)
print(f"loss {history[0]['total']:.3f} -> {history[-1]['total']:.3f}")

model_params, forward = build_model(cfg)
loaded, _, _ = load_checkpoint(os.path.join(out_dir, "checkpoint"))
adopt_params(model_params, loaded)

report = evaluate_dataset(forward, val_records, cfg.grid())
print("\nvalidation diagnostics:")
print(f"  rank correlation (score vs IoU), top-50: {report.pcc_top50:+.3f}")
print(f"  mean IoU of the 10 most confident:       {report.mean_iou_top10:.3f}")
print(f"  box census correct/redundant/error:      "
      f"{report.n_correct}/{report.n_redundant}/{report.n_error}")
ap50 = "none" if report.ap50 is None else f"{report.ap50:.3f}"
print(f"  AP@0.5: {ap50}")
print(f"\nartifacts in {out_dir}: loss_curve.csv, checkpoint/")
