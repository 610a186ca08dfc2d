"""
Step certificates and the deviation bound
=========================================

The governor keeps a list of measured points (reference, step, state offset,
deviation bound).  From them it builds an upper envelope of the deviation
functional and picks the largest certified step fraction kappa toward the
command.  Here the plant is x' = -x + nu with |y| <= 1, whose exact
deviation is max(|step|, |state offset|).
"""

# %%
import numpy as np

from lrg.governor import Dataset, GovernorConfig, ProductNorm, compute_kappa, dbar_estimate, kappa_for_datapoint

config = GovernorConfig(holder_L=2.0, norm=ProductNorm(kind="sum"))
data = Dataset(1, 1)
for step in (0.1, 0.3, 0.5):
    data.append([0.0], [step], [0.0], step + 0.01)  # measured bound plus a small padding

# %% The envelope tightens where data exists and falls back to L * ||(step, offset)|| elsewhere
for q in (0.1, 0.2, 0.4, 0.8):
    print(f"step {q:.1f}: Dbar with data {dbar_estimate(data, [0.0], [q], [0.0], config):.3f}, "
          f"without {dbar_estimate(None, [0.0], [q], [0.0], config):.3f}, exact {q:.3f}")

# %% Largest certified fraction of a step from 0 toward r = 0.9 with d(0) = 1
res = compute_kappa(data, [0.0], [0.9], [0.0], 1.0, config)
print(f"kappa = {res.kappa:.4f}, certified by point(s) {res.certificates}")

# %% The closed form and the bisection route agree
pt = data[2]
closed = kappa_for_datapoint(pt, [0.0], [0.9], [0.0], 1.0, config)
bisect = kappa_for_datapoint(pt, [0.0], [0.9], [0.0], 1.0, config, method="bisection")
print(f"closed form {closed:.12f}  bisection {bisect:.12f}")
