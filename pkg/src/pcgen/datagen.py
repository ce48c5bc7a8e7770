"""Seeded synthetic shape families: uniform surface samples with Gaussian
jitter and per-cloud parameter perturbation for intra-class diversity."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pointcloud import Dataset, PointCloud

FAMILY_KINDS = ("sphere", "torus", "box", "plane_cross")

_DEFAULT_PARAMS = {
    "sphere": {"radius": 1.0},
    "torus": {"major_radius": 1.0, "minor_radius": 0.4},
    "box": {"extent_x": 1.0, "extent_y": 1.0, "extent_z": 1.0},
    "plane_cross": {"half_width": 1.0, "half_height": 1.0},
}


@dataclass(frozen=True)
class ShapeFamily:
    kind: str
    n_points: int = 512
    jitter: float = 0.01
    # fractional parameter perturbation per cloud (e.g. radii +-20%)
    param_spread: float = 0.2
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown shape family {self.kind!r}; expected {FAMILY_KINDS}")
        if self.n_points < 8:
            raise ValueError("n_points must be >= 8")
        if self.jitter < 0 or not 0 <= self.param_spread < 1:
            raise ValueError("jitter must be >= 0 and param_spread in [0, 1)")
        merged = dict(_DEFAULT_PARAMS[self.kind])
        merged.update(self.params)
        if any(v <= 0 for v in merged.values()):
            raise ValueError(f"shape parameters must be positive: {merged}")
        object.__setattr__(self, "params", merged)


def _cloud_rng(family: ShapeFamily, index: int):
    # (family seed, cloud index) fully determines the cloud
    return np.random.default_rng(np.random.SeedSequence([family.seed, index]))


def _perturb_params(family: ShapeFamily, rng):
    s = family.param_spread
    return {k: v * (1.0 + rng.uniform(-s, s)) for k, v in family.params.items()}


def _sphere(rng, n, p):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * p["radius"]


def _torus(rng, n, p):
    # area-correct sampling: minor angle accepted with density (R + r cos v)/(R + r)
    big_r, small_r = p["major_radius"], p["minor_radius"]
    u = rng.uniform(0.0, 2.0 * np.pi, size=n)
    v = np.empty(n)
    filled = 0
    while filled < n:
        cand = rng.uniform(0.0, 2.0 * np.pi, size=2 * (n - filled))
        accept = rng.uniform(size=cand.size) < (big_r + small_r * np.cos(cand)) / (big_r + small_r)
        got = cand[accept][: n - filled]
        v[filled : filled + got.size] = got
        filled += got.size
    ring = big_r + small_r * np.cos(v)
    return np.stack([ring * np.cos(u), ring * np.sin(u), small_r * np.sin(v)], axis=1)


def _box(rng, n, p):
    ex, ey, ez = p["extent_x"], p["extent_y"], p["extent_z"]
    areas = np.array([ey * ez, ey * ez, ex * ez, ex * ez, ex * ey, ex * ey])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-1.0, 1.0, size=n)
    w = rng.uniform(-1.0, 1.0, size=n)
    pts = np.empty((n, 3))
    half = np.array([ex, ey, ez]) / 2.0
    for f in range(6):
        mask = face == f
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        others = [a for a in range(3) if a != axis]
        pts[mask, axis] = sign * half[axis]
        pts[mask, others[0]] = u[mask] * half[others[0]]
        pts[mask, others[1]] = w[mask] * half[others[1]]
    return pts


def _plane_cross(rng, n, p):
    # two orthogonal rectangles intersecting along the z axis
    hw, hh = p["half_width"], p["half_height"]
    plane = rng.integers(0, 2, size=n)
    u = rng.uniform(-hw, hw, size=n)
    w = rng.uniform(-hh, hh, size=n)
    pts = np.zeros((n, 3))
    xz = plane == 0
    pts[xz, 0] = u[xz]
    pts[xz, 2] = w[xz]
    pts[~xz, 1] = u[~xz]
    pts[~xz, 2] = w[~xz]
    return pts


_SAMPLERS = {
    "sphere": _sphere,
    "torus": _torus,
    "box": _box,
    "plane_cross": _plane_cross,
}


def generate_cloud(family: ShapeFamily, index: int) -> PointCloud:
    rng = _cloud_rng(family, index)
    params = _perturb_params(family, rng)
    pts = _SAMPLERS[family.kind](rng, family.n_points, params)
    if family.jitter > 0:
        pts = pts + rng.normal(0.0, family.jitter, size=pts.shape)
    return PointCloud(pts, label=family.kind)


def generate(family: ShapeFamily, count: int, split="train", start_index=0) -> Dataset:
    """``count`` seeded clouds; cloud i depends only on (seed, start_index+i)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    clouds = [generate_cloud(family, start_index + i) for i in range(count)]
    return Dataset(clouds, split=split)


def mixture(families, proportions, count, split="train") -> Dataset:
    """Labeled multi-class dataset with deterministic counts and interleaving.

    Counts use largest-remainder rounding so they sum exactly to
    ``count``; clouds interleave round-robin across families.
    """
    proportions = np.asarray(proportions, dtype=np.float64)
    if len(families) != proportions.size or proportions.size == 0:
        raise ValueError("families and proportions must align and be non-empty")
    if np.any(proportions < 0) or abs(proportions.sum() - 1.0) > 1e-9:
        raise ValueError(f"proportions must be non-negative and sum to 1, got {proportions}")
    raw = proportions * count
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts))[: count - counts.sum()]:
        counts[i] += 1
    queues = [list(generate(f, c, split).clouds) if c else []
              for f, c in zip(families, counts)]
    clouds = []
    while any(queues):
        for q in queues:
            if q:
                clouds.append(q.pop(0))
    return Dataset(clouds, split=split)
