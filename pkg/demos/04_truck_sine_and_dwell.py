"""
Sine-and-dwell on the tank truck
================================

A 50 degree sine-and-dwell steer tips the liquid-loaded truck past the
rollover limit |LTR| = 1.  The governor filters the steering command.  With
no data it relies on the conservative data-free bound.  After a training run
of random commands with short holds it certifies larger steps and follows
the driver more closely, still without a violation.  Takes about a minute.
"""

# %%
from lrg.config import RunConfig
from lrg.governor import Governor
from lrg.learning import LearningConfig, run_learning
from lrg.scenarios import simulate_scenario, sine_and_dwell

cfg = RunConfig.from_text("")
truck = cfg.plant()
smap = cfg.steady_state_map(truck)
command = lambda t: sine_and_dwell(t, 50.0)

# %% Training: 300 uniform commands over +-50 degrees, ten samples each
lc = LearningConfig(n_max=300, k_max=10, command_source="uniform", nu_range=(-50.0, 50.0), dt=0.004)
training = run_learning(truck, Governor(cfg.governor_config(), smap, [0.0]), lc)
print(f"training: {len(training.dataset)} points, peak |LTR| {training.log['y_abs_max'].max():.3f}")

# %% Three runs of the manoeuvre
op = cfg.governor_config(operating=True)
for label, governor in [("no governor", None),
                        ("untrained", Governor(op, smap, [0.0], phase="operating")),
                        ("trained", Governor(op, smap, [0.0], dataset=training.dataset, phase="operating"))]:
    res = simulate_scenario(truck, command, 8.0, 1e-3, governor=governor, sample_period=op.sample_period,
                            steady_map=smap, raise_on_violation=False)
    print(f"{label:>12}: steps with |LTR| > 1: {res.violations:4d}, "
          f"integral |SW - nu| = {res.command_modification():6.2f} deg s")
