"""
Data libraries and their singular value spectrum
================================================

Collect one noisy experiment on the four-state, two-input, two-output
reference plant, stack it into a Hankel library of depth 30, and look at
where the spectrum drops. The drop sits at mL + n = 64, so 64 directions
carry all the plant behaviour and the remaining 307 columns are redundant.
"""

import numpy as np

from mindeepc import data_matrices as dm
from mindeepc.lti import collect_data, benchmark_plant
from mindeepc.reduction import RankRule, reduce, select_rank, svd

plant = benchmark_plant()
T_ini, N = 10, 20
L = T_ini + N

# 400 samples of uniform inputs in [-3, 3], outputs with +/-0.002 noise
u, y = collect_data(plant, 400, (-3, 3), (-0.002, 0.002), seed=0)

# the input must be persistently exciting of order L + n for the library to
# capture every trajectory of length L
print("input excitation:", bool(dm.check_persistent_excitation(u, L + plant.n)))

H = dm.io_library(u, y, L)
print("library shape:", H.shape)

bundle = svd(H)
s = bundle.singular_values
print("singular values around the drop:")
for i in range(60, 68):
    print(f"  sigma_{i + 1:<3d} {s[i]:.3e}")
print(f"gap between sigma_64 and sigma_65: {np.log10(s[63] / s[64]):.2f} decades")

# three rank rules agree on this data set
rules = {
    "log_gap": RankRule.log_gap(),
    "structural": RankRule.structural(plant.m, L, plant.n),
    "threshold 1e-3": RankRule.threshold(1e-3),
}
for name, rule in rules.items():
    print(f"{name:>15s}: r = {select_rank(bundle, rule)}")

# reduced library H_bar = H V1 spans the same column space with 64 columns
red = reduce(H, RankRule.log_gap(), bundle=bundle)
print("reduced shape:", red.shape)
print("H V1 - H_bar:", np.abs(np.asarray(H) @ red.V1 - red.H_bar).max())

# the same experiment without noise has an exact rank of 64
u0, y0 = collect_data(plant, 400, (-3, 3), (0.0, 0.0), seed=0)
s0 = svd(dm.io_library(u0, y0, L)).singular_values
print(f"noise-free: sigma_64 = {s0[63]:.2e}, sigma_65 = {s0[64]:.2e}")
