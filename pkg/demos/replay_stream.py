"""Write a moving-cube stream, then replay it through a small queue with a slow mapper.

    python demos/replay_stream.py [out_dir]
"""

import sys
from pathlib import Path

from octogrid.replay import BLOCK, DROP_OLDEST, replay
from octogrid.scenes import CUBES_WORKSPACE, StreamReader, gen_moving_cubes, write_stream

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)
path = out / "cubes.ocs"

cubes = gen_moving_cubes(seed=1, count=400, point_budget=20_000)
write_stream(path, cubes.frames(30), CUBES_WORKSPACE, 20_000)

for policy, delay in ((DROP_OLDEST, 0.05), (BLOCK, 0.0)):
    res = replay(StreamReader(path), CUBES_WORKSPACE, 1.5, capacity=2, policy=policy,
                 consumer_delay=delay, plan=((-20, -20, -20), (20, 20, 20)))
    found = sum(bool(r.plan_success) for r in res.rows)
    print(f"{policy:>11}: produced {res.produced} consumed {res.consumed} dropped "
          f"{res.dropped} max in flight {res.max_in_flight}/{res.capacity}; "
          f"paths found on {found}/{len(res.rows)} mapped frames; "
          f"build {res.timings['build_ms_mean']:.1f} ms, "
          f"project {res.timings['project_ms_mean']:.1f} ms per frame")
