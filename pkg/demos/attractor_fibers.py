"""Pullback versus forward attractor fibers of the noisy Hopf normal form.

The pullback cloud phi(T, theta_{-T} w, seeds) settles on one fixed random
circle of radius r*(w) as T grows.  The forward cloud phi(T, w, seeds) also
collapses onto a circle, but that circle keeps moving because it is the fiber
over theta_T w.

    python demos/attractor_fibers.py [out_dir]
"""

import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from randiso.attractor import (
    annulus_seeds,
    circle_semidistance,
    forward_fiber,
    pullback_fiber,
    stationary_radius,
)
from randiso.models import make_model
from randiso.noise import sample_path, shift

sigma = 0.5
out = sys.argv[1] if len(sys.argv) > 1 else "demo_output"
os.makedirs(out, exist_ok=True)

entry = make_model("hopf_linear", {"sigma": sigma})
path = sample_path(7, 1e-2, 40.0)
seeds = annulus_seeds(400)
r_star = stationary_radius(path, sigma).value
print(f"r*(w) = {r_star:.4f}")

fig, axes = plt.subplots(1, 2, figsize=(8, 4), sharex=True, sharey=True)
for T, colour in zip((1.0, 5.0, 10.0), ("tab:orange", "tab:green", "tab:blue")):
    pb = pullback_fiber(entry, path, T, seeds).cloud
    fw = forward_fiber(entry, path, T, seeds).cloud
    r_T = stationary_radius(shift(path, T), sigma).value
    print(f"T={T:>4}: pullback gap to r*(w) {circle_semidistance(pb, r_star):.2e}, "
          f"forward gap to r*(theta_T w) {circle_semidistance(fw, r_T):.2e}")
    axes[0].plot(*pb.T, ".", ms=2, color=colour, label=f"T={T:g}")
    axes[1].plot(*fw.T, ".", ms=2, color=colour, label=f"T={T:g}")
for ax, title in zip(axes, ("pullback", "forward")):
    ax.set_title(title)
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=7)
fig.tight_layout()
fig.savefig(os.path.join(out, "attractor_fibers.svg"))
print(f"figure written to {out}/attractor_fibers.svg")
