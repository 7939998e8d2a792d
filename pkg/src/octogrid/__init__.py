"""Parallel octree mapping projected onto a half-cell-staggered occupancy grid."""

from .errors import CellBudgetError, ConfigError, FormatError, OutOfBoundsError
from .geometry import (Aabb, CellIndex, GridConfig, OctreeConfig, cell_center, check_alignment,
                       compute_grid_config, compute_octree_config, compute_tree_depth,
                       make_configs, region_center, world_to_cell)
from .grid import (OccupancyGrid, direct_ogm_build, grid_new, load_grid, mark_occupied,
                   mask_outside_workspace, navigable_space_ratio, save_grid, save_grid_csv)
from .octree import (Octree, OctreeNode, RegionState, build_parallel, build_serial,
                     insert_point, region_state, set_safe_state, tree_fingerprint)
from .pipeline import direct_map, pomp_map
from .planners import PlanRequest, PlanResult, astar, jps, neighbors, path_length, plan
from .projection import (DiagonalPair, PairVerdict, ProjectionStats, diagonal_pairs,
                         project_leaf, project_octree, resolve_pair)
from .scenes import (Box, Cone, Cylinder, Frame, SceneSpec, Sphere, gen_cylinder_scene,
                     gen_mixed_scene, gen_moving_cubes, load_cloud, read_stream, save_cloud,
                     write_stream)

__version__ = "0.1.0"
