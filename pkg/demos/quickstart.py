"""Map a cylinder world two ways, compare free space and plan through both.

    python demos/quickstart.py [out_dir]
"""

import sys
from pathlib import Path

from octogrid import direct_map, navigable_space_ratio, plan, pomp_map
from octogrid.render import render_svg, save_svg
from octogrid.scenes import CYLINDER_GOAL, CYLINDER_START, gen_cylinder_scene

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)

spec, points = gen_cylinder_scene(seed=4, count=20, point_count=20_000)
print(f"{len(points)} points on {len(spec.shapes)} cylinders")

for res in (0.5, 1.0, 2.0):
    m = pomp_map(points, spec.workspace, res, ratio=0.5)
    d, _ = direct_map(points, spec.workspace, res)
    a = plan(m.grid, CYLINDER_START, CYLINDER_GOAL, "jps")
    b = plan(d, CYLINDER_START, CYLINDER_GOAL, "jps")
    print(f"res {res:>4} m  NSR octree {navigable_space_ratio(m.grid, spec.workspace):.4f}"
          f"  direct {navigable_space_ratio(d, spec.workspace):.4f}"
          f"  path octree {a.length:.2f} m  direct {b.length:.2f} m")
    svg = render_svg(m.grid, 0.0, tree=m.tree, path=a.path if a.success else None, cell_px=12)
    save_svg(out / f"cylinders_{res}.svg", svg)

print(f"slices written to {out}/")
