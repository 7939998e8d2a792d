"""Random obstacle worlds, surface sampling and point-cloud files.

Every random draw comes from a Philox stream keyed by ``(seed, purpose,
index)``, so one shape's samples never depend on how many draws another shape
made, and a moving-cube frame is a pure function of ``(seed, frame)``.

Point budgets are split across shapes by surface area with the largest
remainder rule; output order is shape index, then sample index.

Binary cloud layout (little-endian)::

    magic  b"OCPTS001"
    count  int64
    xyz    count x 3 float64

Frame stream layout (little-endian)::

    magic         b"OCFRMS01"
    frame_count   int64
    point_budget  int64
    workspace     6 x float64 (min xyz, max xyz)
    then per frame:
        n          int64
        timestamp  float64
        xyz        n x 3 float64
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, FormatError
from .geometry import Aabb, Vec3

_TAG_LAYOUT = 1
_TAG_SAMPLE = 2
_TAG_CUBES = 3
_TAG_UNIFORM = 5

CYLINDER_WORKSPACE = Aabb((-10.0, -10.0, -5.0), (10.0, 10.0, 5.0))
MIXED_WORKSPACE = Aabb((-25.0, -25.0, -25.0), (25.0, 25.0, 25.0))
CUBES_WORKSPACE = Aabb((-25.0, -25.0, -25.0), (25.0, 25.0, 25.0))

CYLINDER_START = (-9.0, -9.0, -2.0)
CYLINDER_GOAL = (9.0, 9.0, 2.0)
CUBES_START = (-20.0, -20.0, -20.0)
CUBES_GOAL = (20.0, 20.0, 20.0)


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


# -- shapes -------------------------------------------------------------------


def _unit_disc(rng, n):
    r = np.sqrt(rng.random(n))
    t = rng.random(n) * 2.0 * math.pi
    return r * np.cos(t), r * np.sin(t)


def _pick_parts(rng, n, areas):
    areas = np.asarray(areas, float)
    return rng.choice(len(areas), size=n, p=areas / areas.sum())


@dataclass(frozen=True)
class Cylinder:
    """Upright cylinder, closed by two caps; ``center`` is the mid-height point."""

    center: Vec3
    radius: float
    height: float

    def area(self) -> float:
        return 2 * math.pi * self.radius * self.height + 2 * math.pi * self.radius**2

    def sample(self, rng, n: int) -> np.ndarray:
        r, h = self.radius, self.height
        part = _pick_parts(rng, n, [2 * math.pi * r * h, math.pi * r * r, math.pi * r * r])
        out = np.empty((n, 3))
        t = rng.random(n) * 2 * math.pi
        u = rng.random(n)
        dx, dy = _unit_disc(rng, n)
        side = part == 0
        out[:, 0] = np.where(side, r * np.cos(t), r * dx)
        out[:, 1] = np.where(side, r * np.sin(t), r * dy)
        out[:, 2] = np.where(side, (u - 0.5) * h, np.where(part == 1, -0.5 * h, 0.5 * h))
        return out + np.asarray(self.center)

    def residual(self, pts) -> np.ndarray:
        q = np.asarray(pts) - np.asarray(self.center)
        rho = np.hypot(q[:, 0], q[:, 1])
        side = np.abs(rho - self.radius) + np.maximum(np.abs(q[:, 2]) - self.height / 2, 0)
        cap = np.abs(np.abs(q[:, 2]) - self.height / 2) + np.maximum(rho - self.radius, 0)
        return np.minimum(side, cap)


@dataclass(frozen=True)
class Sphere:
    center: Vec3
    radius: float

    def area(self) -> float:
        return 4 * math.pi * self.radius**2

    def sample(self, rng, n: int) -> np.ndarray:
        v = rng.standard_normal((n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return np.asarray(self.center) + self.radius * v

    def residual(self, pts) -> np.ndarray:
        return np.abs(np.linalg.norm(np.asarray(pts) - np.asarray(self.center), axis=1)
                      - self.radius)


@dataclass(frozen=True)
class Cone:
    """Right circular cone, base disc at ``center``, apex ``height`` above it."""

    center: Vec3
    radius: float
    height: float

    @property
    def slant(self) -> float:
        return math.hypot(self.radius, self.height)

    def area(self) -> float:
        return math.pi * self.radius * (self.radius + self.slant)

    def sample(self, rng, n: int) -> np.ndarray:
        r, h = self.radius, self.height
        part = _pick_parts(rng, n, [math.pi * r * self.slant, math.pi * r * r])
        # lateral: distance from the apex has density proportional to itself
        s = np.sqrt(rng.random(n))
        t = rng.random(n) * 2 * math.pi
        dx, dy = _unit_disc(rng, n)
        side = part == 0
        out = np.empty((n, 3))
        out[:, 0] = np.where(side, r * s * np.cos(t), r * dx)
        out[:, 1] = np.where(side, r * s * np.sin(t), r * dy)
        out[:, 2] = np.where(side, h * (1 - s), 0.0)
        return out + np.asarray(self.center)

    def residual(self, pts) -> np.ndarray:
        q = np.asarray(pts) - np.asarray(self.center)
        rho = np.hypot(q[:, 0], q[:, 1])
        side = (np.abs(rho - self.radius * (1 - q[:, 2] / self.height))
                + np.maximum(-q[:, 2], 0) + np.maximum(q[:, 2] - self.height, 0))
        base = np.abs(q[:, 2]) + np.maximum(rho - self.radius, 0)
        return np.minimum(side, base)


@dataclass(frozen=True)
class Box:
    center: Vec3
    half_extents: Vec3

    def _faces(self):
        a, b, c = self.half_extents
        return np.array([b * c, b * c, a * c, a * c, a * b, a * b]) * 4

    def area(self) -> float:
        return float(self._faces().sum())

    def sample(self, rng, n: int) -> np.ndarray:
        half = np.asarray(self.half_extents)
        face = _pick_parts(rng, n, self._faces())
        out = (rng.random((n, 3)) * 2 - 1) * half
        axis = face // 2
        sign = np.where(face % 2 == 0, -1.0, 1.0)
        out[np.arange(n), axis] = sign * half[axis]
        return out + np.asarray(self.center)

    def residual(self, pts) -> np.ndarray:
        q = np.abs(np.asarray(pts) - np.asarray(self.center)) - np.asarray(self.half_extents)
        # on the surface: max component is zero, none positive
        return np.abs(q.max(axis=1)) + np.maximum(q, 0).sum(axis=1)


Shape = Union[Cylinder, Sphere, Cone, Box]


@dataclass(frozen=True)
class SceneSpec:
    workspace: Aabb
    shapes: tuple
    point_count: int
    seed: int

    def __post_init__(self):
        if self.point_count < 0:
            raise ConfigError(f"point_count must be >= 0, got {self.point_count}")


@dataclass(frozen=True)
class Frame:
    timestamp: float
    points: np.ndarray = field(repr=False)


def split_budget(areas: Sequence[float], total: int) -> np.ndarray:
    """Largest-remainder split of ``total`` points proportional to ``areas``."""
    areas = np.asarray(areas, float)
    if len(areas) == 0 or total == 0:
        return np.zeros(len(areas), np.int64)
    share = total * areas / areas.sum()
    counts = np.floor(share).astype(np.int64)
    left = total - int(counts.sum())
    order = np.lexsort((np.arange(len(areas)), -(share - counts)))
    counts[order[:left]] += 1
    return counts


def sample_scene(spec: SceneSpec, stream: int = 0) -> np.ndarray:
    """Surface samples for every shape, concatenated in shape order."""
    counts = split_budget([s.area() for s in spec.shapes], spec.point_count)
    parts = [s.sample(rng_for(spec.seed, _TAG_SAMPLE, stream, i), int(c))
             for i, (s, c) in enumerate(zip(spec.shapes, counts))]
    if not parts:
        return np.empty((0, 3))
    return np.ascontiguousarray(np.concatenate(parts))


# -- generators ---------------------------------------------------------------


def gen_cylinder_scene(seed: int, count: int = 30, point_count: int = 20_000,
                       workspace: Aabb = CYLINDER_WORKSPACE,
                       radius_range: tuple[float, float] = (0.8, 1.0)):
    """Full-height pillars placed uniformly in the x-y footprint of ``workspace``.

    Returns ``(spec, points)``.
    """
    lo, hi = radius_range
    if not 0 < lo <= hi:
        raise ConfigError(f"bad radius range {radius_range}")
    rng = rng_for(seed, _TAG_LAYOUT)
    height = workspace.sides[2]
    zc = workspace.center[2]
    shapes = []
    for _ in range(count):
        r = float(rng.uniform(lo, hi))
        x = float(rng.uniform(workspace.min[0] + r, workspace.max[0] - r))
        y = float(rng.uniform(workspace.min[1] + r, workspace.max[1] - r))
        shapes.append(Cylinder((x, y, zc), r, height))
    spec = SceneSpec(workspace, tuple(shapes), point_count, seed)
    return spec, sample_scene(spec)


def gen_mixed_scene(seed: int, spheres: int = 100, cones: int = 100, boxes: int = 100,
                    point_count: int = 600_000, workspace: Aabb = MIXED_WORKSPACE,
                    size_range: tuple[float, float] = (0.5, 2.5)):
    """Spheres, upright cones and axis-aligned boxes with centres uniform in ``workspace``.

    Radii and half-extents are drawn from ``size_range``; cone heights from
    twice that range. Returns ``(spec, points)``.
    """
    lo, hi = size_range
    if not 0 < lo <= hi:
        raise ConfigError(f"bad size range {size_range}")
    rng = rng_for(seed, _TAG_LAYOUT)
    wmin, wmax = np.asarray(workspace.min), np.asarray(workspace.max)

    def place():
        return tuple(float(v) for v in rng.uniform(wmin, wmax))

    shapes: list = []
    for _ in range(spheres):
        shapes.append(Sphere(place(), float(rng.uniform(lo, hi))))
    for _ in range(cones):
        r = float(rng.uniform(lo, hi))
        h = float(rng.uniform(2 * lo, 2 * hi))
        c = place()
        shapes.append(Cone((c[0], c[1], c[2] - h / 2), r, h))
    for _ in range(boxes):
        shapes.append(Box(place(), tuple(float(v) for v in rng.uniform(lo, hi, 3))))
    spec = SceneSpec(workspace, tuple(shapes), point_count, seed)
    return spec, sample_scene(spec)


def uniform_cloud(seed: int, n: int, workspace: Aabb) -> np.ndarray:
    rng = rng_for(seed, _TAG_UNIFORM)
    return rng.uniform(workspace.min, workspace.max, (n, 3))


def reflect(x, lo, hi):
    """Fold free-flight coordinate ``x`` into ``[lo, hi]`` by mirror reflection.

    Returns ``(position, direction sign)``; the sign is -1 while travelling
    mirrored.
    """
    x = np.asarray(x, float)
    span = hi - lo
    u = np.mod(x - lo, 2 * span)
    back = u > span
    return lo + np.where(back, 2 * span - u, u), np.where(back, -1.0, 1.0)


@dataclass(frozen=True)
class MovingCubes:
    """Cubes flying in fixed directions with specular reflection off the walls.

    Frame ``t`` has every cube at ``start + t * velocity`` folded back into the
    workspace, so any frame can be produced without simulating earlier ones.
    """

    seed: int
    workspace: Aabb
    sides: np.ndarray = field(repr=False)
    starts: np.ndarray = field(repr=False)
    velocities: np.ndarray = field(repr=False)
    point_budget: int = 70_000
    frame_dt: float = 0.1

    @property
    def count(self) -> int:
        return len(self.sides)

    def _limits(self):
        half = self.sides[:, None] / 2
        return np.asarray(self.workspace.min) + half, np.asarray(self.workspace.max) - half

    def state(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Cube centres and velocities at frame ``t``."""
        lo, hi = self._limits()
        pos, sign = reflect(self.starts + t * self.velocities, lo, hi)
        return pos, self.velocities * sign

    def shapes(self, t: int) -> tuple:
        centers, _ = self.state(t)
        return tuple(Box(tuple(c), (s / 2,) * 3) for c, s in zip(centers, self.sides))

    def frame(self, t: int) -> Frame:
        spec = SceneSpec(self.workspace, self.shapes(t), self.point_budget, self.seed)
        return Frame(t * self.frame_dt, sample_scene(spec, stream=t + 1))

    def frames(self, count: int, first: int = 0) -> Iterator[Frame]:
        if count < 1:
            raise ConfigError(f"frame count must be >= 1, got {count}")
        for t in range(first, first + count):
            yield self.frame(t)


def gen_moving_cubes(seed: int, count: int = 800, point_budget: int = 70_000,
                     workspace: Aabb = CUBES_WORKSPACE, side_range=(1.0, 2.0),
                     speed_range=(1.0, 2.0), frame_dt: float = 0.1) -> MovingCubes:
    rng = rng_for(seed, _TAG_CUBES)
    sides = rng.uniform(*side_range, count)
    half = sides[:, None] / 2
    starts = rng.uniform(np.asarray(workspace.min) + half, np.asarray(workspace.max) - half)
    dirs = rng.standard_normal((count, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    speed = rng.uniform(*speed_range, count)
    return MovingCubes(seed, workspace, sides, starts, dirs * speed[:, None], point_budget,
                       frame_dt)


# -- cloud files --------------------------------------------------------------

CLOUD_MAGIC = b"OCPTS001"
STREAM_MAGIC = b"OCFRMS01"
_STREAM_HEADER = struct.Struct("<8sqq6d")
_FRAME_HEADER = struct.Struct("<qd")

_FORMATS = {".xyz": "xyz", ".txt": "xyz", ".csv": "xyz", ".ply": "ply", ".bin": "binary",
            ".ocpts": "binary"}


def _infer_format(path, fmt: Optional[str]) -> str:
    if fmt:
        if fmt not in ("xyz", "ply", "binary"):
            raise ValueError(f"unknown cloud format {fmt!r}")
        return fmt
    try:
        return _FORMATS[Path(path).suffix.lower()]
    except KeyError:
        raise ValueError(f"cannot infer cloud format from {path}") from None


def _finite_row(vals, path, line_no):
    if not all(math.isfinite(v) for v in vals):
        raise FormatError(f"{path}:{line_no}: non-finite coordinate")
    return vals


def _load_xyz(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].replace(",", " ").split()
            if not text:
                continue
            if len(text) < 3:
                raise FormatError(f"{path}:{line_no}: expected 3 coordinates, got {len(text)}")
            try:
                vals = [float(t) for t in text[:3]]
            except ValueError:
                raise FormatError(f"{path}:{line_no}: cannot parse {line.strip()!r}") from None
            rows.append(_finite_row(vals, path, line_no))
    return np.array(rows, float).reshape(-1, 3)


def _load_ply(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError(f"{path}:1: missing 'ply' magic")
    elements: list[tuple[str, int, list]] = []
    line_no = 1
    body = None
    for line_no in range(2, len(lines) + 1):
        words = lines[line_no - 1].split()
        if not words or words[0] in ("comment", "obj_info"):
            continue
        if words[0] == "format":
            if len(words) < 2 or words[1] != "ascii":
                raise FormatError(f"{path}:{line_no}: only ascii PLY is supported")
        elif words[0] == "element":
            if len(words) != 3 or not words[2].isdigit():
                raise FormatError(f"{path}:{line_no}: bad element line")
            elements.append((words[1], int(words[2]), []))
        elif words[0] == "property":
            if not elements:
                raise FormatError(f"{path}:{line_no}: property before any element")
            is_list = len(words) >= 2 and words[1] == "list"
            if (is_list and len(words) != 5) or (not is_list and len(words) != 3):
                raise FormatError(f"{path}:{line_no}: bad property line")
            elements[-1][2].append((words[-1], is_list))
        elif words[0] == "end_header":
            body = line_no
            break
        else:
            raise FormatError(f"{path}:{line_no}: unexpected header keyword {words[0]!r}")
    if body is None:
        raise FormatError(f"{path}: missing end_header")
    vertex = next((e for e in elements if e[0] == "vertex"), None)
    if vertex is None:
        raise FormatError(f"{path}: no vertex element")
    names = [name for name, _ in vertex[2]]
    for axis in "xyz":
        if axis not in names:
            raise FormatError(f"{path}: vertex element lacks property {axis!r}")
    extra = [n for n in names if n not in "xyz"]
    if extra:
        warnings.warn(f"{path}: ignoring vertex properties {extra}", stacklevel=3)
    cols = [names.index(a) for a in "xyz"]
    out = np.empty((vertex[1], 3))
    cursor = body
    for name, count, props in elements:
        for row in range(count):
            cursor += 1
            if cursor > len(lines):
                raise FormatError(f"{path}:{cursor}: unexpected end of file in {name!r}")
            if name != "vertex":
                continue
            words = lines[cursor - 1].split()
            if any(is_list for _, is_list in props):
                raise FormatError(f"{path}:{cursor}: list properties on vertices unsupported")
            if len(words) != len(props):
                raise FormatError(f"{path}:{cursor}: expected {len(props)} values, "
                                  f"got {len(words)}")
            try:
                vals = [float(words[c]) for c in cols]
            except ValueError:
                raise FormatError(f"{path}:{cursor}: cannot parse vertex") from None
            out[row] = _finite_row(vals, path, cursor)
    return out


def _load_binary(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != CLOUD_MAGIC:
        raise FormatError(f"{path}: bad cloud header")
    (n,) = struct.unpack_from("<q", data, 8)
    if n < 0 or len(data) != 16 + 24 * n:
        raise FormatError(f"{path}: header says {n} points, payload is {len(data) - 16} bytes")
    return np.frombuffer(data, "<f8", offset=16).reshape(n, 3).astype(float)


def load_cloud(path, fmt: Optional[str] = None) -> np.ndarray:
    """Read an ``(n, 3)`` cloud from xyz text, ascii PLY or the binary format."""
    kind = _infer_format(path, fmt)
    return {"xyz": _load_xyz, "ply": _load_ply, "binary": _load_binary}[kind](path)


def save_cloud(path, points, fmt: Optional[str] = None) -> None:
    pts = np.asarray(points, float).reshape(-1, 3)
    kind = _infer_format(path, fmt)
    if kind == "binary":
        with open(path, "wb") as fh:
            fh.write(CLOUD_MAGIC + struct.pack("<q", len(pts)))
            fh.write(pts.astype("<f8").tobytes())
        return
    with open(path, "w", encoding="utf-8") as fh:
        if kind == "ply":
            fh.write(f"ply\nformat ascii 1.0\nelement vertex {len(pts)}\n"
                     "property double x\nproperty double y\nproperty double z\nend_header\n")
        for x, y, z in pts.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


# -- frame streams ------------------------------------------------------------


def write_stream(path, frames: Iterable[Frame], workspace: Aabb, point_budget: int = 0) -> int:
    """Write frames to ``path``; returns the number written."""
    frames = list(frames)
    last = -math.inf
    with open(path, "wb") as fh:
        fh.write(_STREAM_HEADER.pack(STREAM_MAGIC, len(frames), point_budget, *workspace.min,
                                     *workspace.max))
        for fr in frames:
            if not fr.timestamp > last:
                raise ValueError(f"timestamps must increase: {fr.timestamp} after {last}")
            last = fr.timestamp
            pts = np.asarray(fr.points, "<f8").reshape(-1, 3)
            fh.write(_FRAME_HEADER.pack(len(pts), fr.timestamp))
            fh.write(pts.tobytes())
    return len(frames)


@dataclass(frozen=True)
class StreamHeader:
    frame_count: int
    point_budget: int
    workspace: Aabb


class StreamReader:
    """Iterates frames from a stream file, validating as it goes."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "rb")
        raw = self._fh.read(_STREAM_HEADER.size)
        if len(raw) != _STREAM_HEADER.size:
            self._fh.close()
            raise FormatError(f"{path}: truncated stream header")
        magic, count, budget, *box = _STREAM_HEADER.unpack(raw)
        if magic != STREAM_MAGIC or count < 0:
            self._fh.close()
            raise FormatError(f"{path}: bad stream header")
        try:
            ws = Aabb(tuple(box[:3]), tuple(box[3:]))
        except ConfigError as exc:
            self._fh.close()
            raise FormatError(f"{path}: bad workspace in header: {exc}") from None
        self.header = StreamHeader(count, budget, ws)

    def __iter__(self) -> Iterator[Frame]:
        last = -math.inf
        try:
            for k in range(self.header.frame_count):
                raw = self._fh.read(_FRAME_HEADER.size)
                if len(raw) != _FRAME_HEADER.size:
                    raise FormatError(f"{self.path}: frame {k} header truncated")
                n, ts = _FRAME_HEADER.unpack(raw)
                if n < 0:
                    raise FormatError(f"{self.path}: frame {k} has negative size")
                if not ts > last:
                    raise FormatError(f"{self.path}: frame {k} timestamp {ts} does not "
                                      f"follow {last}")
                last = ts
                payload = self._fh.read(24 * n)
                if len(payload) != 24 * n:
                    raise FormatError(f"{self.path}: frame {k} payload truncated")
                yield Frame(ts, np.frombuffer(payload, "<f8").reshape(n, 3).astype(float))
            if self._fh.read(1):
                raise FormatError(f"{self.path}: trailing bytes after last frame")
        finally:
            self._fh.close()

    def close(self):
        self._fh.close()


def read_stream(path) -> tuple[StreamHeader, list[Frame]]:
    reader = StreamReader(path)
    return reader.header, list(reader)
