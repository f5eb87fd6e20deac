"""Render a few synthetic scenes to PPM images you can open directly.

Each scene gets its ground-truth boxes burned in as thin white frames.
Run:  python3 demos/scene_gallery.py [out_dir]
"""

import os
import sys

import numpy as np

from aligndet.scenes import CLASS_NAMES, DatasetConfig, generate_scene

out_dir = sys.argv[1] if len(sys.argv) > 1 else "scene_gallery"
os.makedirs(out_dir, exist_ok=True)

cfg = DatasetConfig(image_size=128, max_per_scene=4)

def save_ppm(path, image):
    data = (np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6 {data.shape[1]} {data.shape[0]} 255\n".encode())
        fh.write(data.tobytes())

for seed in range(6):
    rec = generate_scene(seed, cfg)
    img = rec.image.copy()
    for box, cls in rec.instances:
        x1, y1 = int(box.x1), int(box.y1)
        x2, y2 = int(np.ceil(box.x2)) - 1, int(np.ceil(box.y2)) - 1
        img[y1, x1:x2 + 1] = 1.0
        img[y2, x1:x2 + 1] = 1.0
        img[y1:y2 + 1, x1] = 1.0
        img[y1:y2 + 1, x2] = 1.0
    path = os.path.join(out_dir, f"scene_{seed}.ppm")
    save_ppm(path, img)
    names = ", ".join(CLASS_NAMES[c] for _, c in rec.instances)
    print(f"{path}: {len(rec.instances)} instances ({names})")

print(f"\nwrote 6 scenes to {out_dir}/; any image viewer opens .ppm files")
