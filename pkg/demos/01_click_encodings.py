"""Compare the two click encodings: unit-volume Gaussians vs. distance falloff.

Renders a single click under several parameter choices and plots the voxel
profile through the click, plus a 2D slice of each channel.  The Gaussian's
unit normalization pushes peak values down as sigma grows, which is exactly
the low-intensity effect that motivates the distance-falloff encoding.

Writes click_encodings.png next to this script.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from clickseg.prompts import render_edt, render_gaussian

SHAPE = (31, 31, 31)
CENTER = (15, 15, 15)

sigmas = [0.25, 0.5, 1.0, 2.0]
sizes = [2.0, 3.0, 4.0]

fig, axes = plt.subplots(2, 2, figsize=(11, 8))

ax = axes[0, 0]
for sigma in sigmas:
    channel = render_gaussian([CENTER], sigma, SHAPE)
    profile = channel.data[15, 15, :]
    ax.plot(np.arange(31) - 15, profile, marker=".", label=f"sigma={sigma}")
    print(f"gaussian sigma={sigma}: peak={profile.max():.4f}, sum={channel.data.sum():.6f}")
ax.set_title("Gaussian kernels, normalized to unit volume")
ax.set_xlabel("voxels from click")
ax.set_ylabel("channel value")
ax.legend()

ax = axes[0, 1]
for size in sizes:
    channel = render_edt([CENTER], size, SHAPE)
    profile = channel.data[15, 15, :]
    ax.plot(np.arange(31) - 15, profile, marker=".", label=f"size={size}")
    print(f"edt size={size}: peak={profile.max():.4f}, support radius < {size} voxels")
ax.set_title("Distance falloff (EDT-style), peak 1 at the click")
ax.set_xlabel("voxels from click")
ax.legend()

# slice views of one example from each family
gauss = render_gaussian([CENTER], 2.0, SHAPE).data[15]
edt = render_edt([CENTER], 4.0, SHAPE).data[15]
for ax, img, title in ((axes[1, 0], gauss, "gaussian sigma=2, z-slice"),
                       (axes[1, 1], edt, "edt size=4, z-slice")):
    im = ax.imshow(img, cmap="magma")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)

out = Path(__file__).with_name("click_encodings.png")
fig.tight_layout()
fig.savefig(out, dpi=110)
print(f"wrote {out}")
