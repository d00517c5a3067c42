"""Simulate user clicks against a phantom's ground truth and look at them.

Shows the harmonic click-count law, then scatters simulated foreground and
background clicks over a maximum-intensity projection of the phantom PET.
Foreground clicks favor lesion cores (or exact centers/borders in the
official-style branch); background clicks are near-misses just outside the
mask.

Writes simulated_clicks.png next to this script.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from clickseg.phantom import make_phantom
from clickseg.simulate import SimConfig, sample_click_count, simulate_click_sequence

case = make_phantom(seed=12)
cfg = SimConfig(seed=5)
rng = np.random.default_rng(5)

counts = [sample_click_count(cfg, rng) for _ in range(20_000)]
hist = np.bincount(counts, minlength=11)
print("click-count frequencies (k: observed fraction):")
for k, c in enumerate(hist):
    print(f"  {k:2d}: {c / len(counts):.4f}")

clicks = simulate_click_sequence(case.gt, 10, 10, cfg, rng)
print(f"\nsimulated {len(clicks.foreground)} fg + {len(clicks.background)} bg clicks")
for c in clicks.foreground[:5]:
    print(f"  fg at {c.pos}, on mask: {bool(case.gt.data[c.pos])}")
for c in clicks.background[:5]:
    print(f"  bg at {c.pos}, on mask: {bool(case.gt.data[c.pos])}")

fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
axes[0].bar(range(11), hist / len(counts))
axes[0].plot(range(11), (1 / (np.arange(11) + 1)) / (1 / (np.arange(11) + 1)).sum(),
             "r.-", label="1/(k+1) law")
axes[0].set_title("click count distribution")
axes[0].set_xlabel("clicks per polarity")
axes[0].legend()

mip = case.pet.data.max(axis=0)
axes[1].imshow(mip, cmap="gray_r")
gt_proj = case.gt.data.max(axis=0)
axes[1].contour(gt_proj, levels=[0.5], colors="deepskyblue", linewidths=1.0)
for c in clicks.foreground:
    axes[1].plot(c.pos[2], c.pos[1], "g+", markersize=11, markeredgewidth=2)
for c in clicks.background:
    axes[1].plot(c.pos[2], c.pos[1], "rx", markersize=9, markeredgewidth=2)
axes[1].set_title("clicks over PET projection (blue contour = GT)")

out = Path(__file__).with_name("simulated_clicks.png")
fig.tight_layout()
fig.savefig(out, dpi=110)
print(f"wrote {out}")
