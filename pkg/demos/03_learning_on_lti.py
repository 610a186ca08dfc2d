"""
Safe learning on a first-order plant
====================================

The learning loop cycles a command profile, lets the governor take certified
steps and records one deviation measurement per sample.  As data
accumulates the certified steps grow and the windowed tracking error falls,
while the output never leaves |y| <= 1.
"""

# %%
import numpy as np

from lrg.governor import Governor, GovernorConfig, ProductNorm
from lrg.holder import lti_lipschitz_bound
from lrg.learning import LearningConfig, run_learning
from lrg.simkit import LTIPlant, analytic_steady_state_map

plant = LTIPlant(-1.0, 1.0, 1.0)
smap = analytic_steady_state_map(plant, np.linspace(-1, 1, 201))
L, _ = lti_lipschitz_bound(-1.0, 1.0, 1.0)
config = GovernorConfig(holder_L=L, horizon_T=8.0, epsilon=0.01, sample_period=0.5, norm=ProductNorm(kind="sum"))

# %%
lc = LearningConfig(n_max=60, k_max=20, command_source="profile", profile=(0.8, -0.8), moving_window_T=100.0,
                    dt=0.01)
report = run_learning(plant, Governor(config, smap, [0.0]), lc)
print(f"{len(report.dataset)} points, peak |y| = {report.log['y_abs_max'].max():.3f}")

# %% Windowed tracking error once per profile cycle
err = report.trace[:, 1]
for k in range(0, len(err), 2 * lc.k_max * 5):
    print(f"t = {report.trace[k, 0]:6.1f} s   error {err[k]:.4f}")

# %% Step fractions early and late in the run
kappa = report.log["kappa"]
print(f"mean kappa over the first command {kappa[:lc.k_max].mean():.3f}, "
      f"over the last command {kappa[-lc.k_max:].mean():.3f}")
