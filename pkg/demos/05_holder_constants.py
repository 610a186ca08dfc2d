"""
Holder constants
================

For a stable LTI loop the deviation functional is Lipschitz with a constant
available in closed form.  Random probe pairs confirm it.  The bound can be
loose, so only a constant below the largest observed ratio produces
failures.  For the truck no such formula exists, so the constant is
estimated by sampling finite-difference ratios of the measured deviation.
"""

# %%
import numpy as np

from lrg.config import RunConfig
from lrg.holder import estimate_holder_sampling, lti_lipschitz_bound, verify_holder_on_lti

A = np.array([[0.0, 1.0], [-2.0, -0.8]])
B = np.array([[0.0], [2.0]])
C = np.array([[1.0, 0.0]])
L, eta = lti_lipschitz_bound(A, B, C)
print(f"closed-form L' = {L:.3f} (sup ||exp(At)|| = {eta:.3f})")
for trial in (L, L / 2, L / 4):
    rep = verify_holder_on_lti(A, B, C, None, trial, probe_count=1000)
    print(f"L = {trial:.3f}: max ratio {rep.max_ratio:.3f}, failures {rep.failures}")

# %% Sampling estimate on the truck (about 20 s)
cfg = RunConfig.from_text("")
truck = cfg.plant()
est = estimate_holder_sampling(truck, cfg.steady_state_map(truck), 40, norm=cfg.norm(), horizon_T=6.0, dt=0.002,
                               nu_range=(-50, 50), dx_scale=np.radians(cfg.list("holder.dx_scale")))
print(f"truck: largest observed ratio {est.max_observed_ratio:.3f}, padded estimate {est.L:.3f}")
