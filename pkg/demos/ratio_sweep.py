"""How the safety threshold ratio changes the path-finding rate on moving cubes.

A smaller ratio treats more points as close to a cell boundary, so more
cells are occupied and fewer frames admit a path.

    python demos/ratio_sweep.py [frames]
"""

import sys

from octogrid.experiments import RunConfig, ratio_sweep

frames = int(sys.argv[1]) if len(sys.argv) > 1 else 40
cfg = RunConfig("ratio-sweep", resolutions=[2.0, 3.0, 4.0], planners=["astar"])
report = ratio_sweep(cfg, frames=frames)
ratios = sorted(cfg.ratios, reverse=True)
print("res   " + "  ".join(f"r={q:<4}" for q in ratios) + "  direct")
for row in report.summary:
    rates = "  ".join(f"{row[f'pomp_{q}_rate']:.3f} " for q in ratios)
    print(f"{row['resolution']:<4}  {rates}  {row['direct_rate']:.3f}")
