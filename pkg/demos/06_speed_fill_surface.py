"""
Deviation bound across speed and fill ratio
===========================================

One dataset is learned per (speed, fill ratio) node and the envelope is
evaluated at a fixed probe: a 25 degree step from -25 degrees with no state
offset.  Faster driving and fuller tanks give larger bounds.  At 90 percent
fill the equilibrium map is usable only near straight driving, so that node
keeps the data-free bound.  Takes about a minute.
"""

# %%
import numpy as np

from lrg.cli import train_surface_node
from lrg.config import RunConfig
from lrg.scenarios import dbar_surface

cfg = RunConfig.from_text("")
speeds, fills = [20.0, 25.0, 30.0], [0.1, 0.5, 0.9]
ensemble = {(v, f): train_surface_node(cfg, v, f, -25.0) for v in speeds for f in fills}
surf = dbar_surface(ensemble, ([-25.0], [25.0], np.zeros(6)), speeds, fills, cfg.governor_config())

# %%
print("speed  " + "  ".join(f"fill {f:.1f}" for f in fills))
for i, v in enumerate(speeds):
    cells = "  ".join(f"{x:7.3f}{' ' if t else '*'}" for x, t in zip(surf.values[i], surf.trained[i]))
    print(f"{v:5.0f}  {cells}")
print("* untrained node, data-free bound")
