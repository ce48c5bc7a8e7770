"""Point-set containers, normalization protocols, and XYZ file I/O."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


class DegenerateCloudError(ValueError):
    """All points identical (or zero extent along an axis): no valid scale."""


class XYZFormatError(ValueError):
    def __init__(self, path, lineno, detail):
        super().__init__(f"{path}:{lineno}: {detail}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class PointCloud:
    """Unordered set of M 3D points. Treated as immutable once built."""

    points: np.ndarray  # (M, 3) float64
    label: str | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (M, 3), got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("point cloud must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class Dataset:
    clouds: tuple[PointCloud, ...]
    normalization_mode: str = "none"  # none | global_minmax | per_shape_minmax | unit_radius
    split: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "clouds", tuple(self.clouds))

    def __len__(self):
        return len(self.clouds)

    def as_array(self):
        """Stack into (N, M, 3); requires a uniform point count."""
        sizes = {c.n_points for c in self.clouds}
        if len(sizes) != 1:
            raise ValueError(f"clouds have mixed point counts: {sorted(sizes)}")
        return np.stack([c.points for c in self.clouds])


@dataclass(frozen=True)
class AffineParams:
    """Per-axis affine map x -> (x - offset) / scale, invertible."""

    offset: np.ndarray  # (3,)
    scale: np.ndarray  # (3,) or scalar broadcast as (3,)

    def apply(self, points):
        return (points - self.offset) / self.scale

    def invert(self, points):
        return points * self.scale + self.offset


def normalize_unit(pc: PointCloud):
    """Center at the origin and scale so the farthest point sits at radius 1.

    Returns (normalized cloud, AffineParams) so the map can be undone.
    """
    center = pc.points.mean(axis=0)
    centered = pc.points - center
    radius = float(np.linalg.norm(centered, axis=1).max())
    if radius < 1e-15:
        raise DegenerateCloudError("all points coincide; unit-radius scale undefined")
    params = AffineParams(offset=center, scale=np.full(3, radius))
    return PointCloud(centered / radius, label=pc.label), params


def minmax_params(clouds):
    """Bounding-box affine mapping the joint extent of ``clouds`` to [-1, 1]^3."""
    all_pts = np.concatenate([c.points for c in clouds])
    lo, hi = all_pts.min(axis=0), all_pts.max(axis=0)
    extent = hi - lo
    if np.any(extent < 1e-15):
        axis = int(np.argmin(extent))
        raise DegenerateCloudError(f"zero extent along axis {axis}; min-max scale undefined")
    return AffineParams(offset=(lo + hi) / 2.0, scale=extent / 2.0)


def normalize_minmax(ds: Dataset, mode: str):
    """Map coordinates into [-1, 1]^3, globally or per shape.

    Returns (dataset, params): one AffineParams in global mode, a list of
    them (one per cloud) in per-shape mode.
    """
    if mode == "global":
        params = minmax_params(ds.clouds)
        clouds = [PointCloud(params.apply(c.points), label=c.label) for c in ds.clouds]
        return Dataset(clouds, "global_minmax", ds.split), params
    if mode == "per_shape":
        out, plist = [], []
        for c in ds.clouds:
            p = minmax_params([c])
            out.append(PointCloud(p.apply(c.points), label=c.label))
            plist.append(p)
        return Dataset(out, "per_shape_minmax", ds.split), plist
    raise ValueError(f"unknown min-max mode {mode!r}")


def resample(pc: PointCloud, m_target: int, rng: np.random.Generator):
    """Uniformly resample to exactly ``m_target`` points.

    Subsamples without replacement when the cloud is large enough,
    otherwise samples with replacement; output points are always members
    of the input.
    """
    if m_target < 1:
        raise ValueError("m_target must be >= 1")
    m = pc.n_points
    idx = rng.choice(m, size=m_target, replace=m < m_target)
    return PointCloud(pc.points[idx], label=pc.label)


def read_xyz(path):
    """Read an ASCII XYZ file: one 'x y z' line per point, '#' comments."""
    pts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split()
            if len(fields) != 3:
                raise XYZFormatError(path, lineno, f"expected 3 values, got {len(fields)}")
            try:
                pts.append([float(v) for v in fields])
            except ValueError:
                raise XYZFormatError(path, lineno, f"non-numeric value in {stripped!r}") from None
    if not pts:
        raise XYZFormatError(path, 0, "no points in file")
    return PointCloud(np.array(pts))


def write_xyz(pc: PointCloud, path):
    # %.17g keeps the full float64 round-trip precision
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in pc.points:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


def write_dataset(ds_train: Dataset, ds_test: Dataset, out_dir):
    """Write one XYZ file per shape plus train.txt / test.txt split lists."""
    os.makedirs(out_dir, exist_ok=True)
    for split_name, ds in (("train", ds_train), ("test", ds_test)):
        names = []
        for i, c in enumerate(ds.clouds):
            tag = c.label or "shape"
            name = f"{tag}_{split_name}_{i:04d}.xyz"
            write_xyz(c, os.path.join(out_dir, name))
            names.append(name)
        with open(os.path.join(out_dir, f"{split_name}.txt"), "w", encoding="utf-8") as fh:
            fh.write("".join(n + "\n" for n in names))


def read_dataset(data_dir, split="train"):
    """Read the split list and its XYZ files. Labels come from file-name prefix."""
    list_path = os.path.join(data_dir, f"{split}.txt")
    if not os.path.isfile(list_path):
        raise FileNotFoundError(f"missing split list {list_path}")
    clouds = []
    with open(list_path, "r", encoding="utf-8") as fh:
        for rel in fh:
            rel = rel.strip()
            if not rel:
                continue
            pc = read_xyz(os.path.join(data_dir, rel))
            label = os.path.basename(rel).split("_")[0]
            clouds.append(PointCloud(pc.points, label=label))
    return Dataset(clouds, split=split)
