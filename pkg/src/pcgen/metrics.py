"""Generative evaluation: EMD (exact assignment + auction), 1-NNA, MMD,
COV, and voxel-occupancy JSD. Chamfer distance is shared with the
training objective (single implementation)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .objective import chamfer  # noqa: F401  (re-exported metric pathway)

_EXACT_EMD_MAX = 512


def _check_cloud_pair(a, b, equal_size):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != 3 or b.shape[1] != 3:
        raise ValueError(f"expected (M, 3) clouds, got {a.shape} and {b.shape}")
    if equal_size and a.shape[0] != b.shape[0]:
        raise ValueError(f"EMD needs equal sizes, got {a.shape[0]} and {b.shape[0]}")
    return a, b


def _cost_matrix(a, b):
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return np.sqrt(np.maximum(d2, 0.0))


def emd_exact(a, b, per_point=True):
    """Optimal-assignment earth mover's distance (Euclidean, unsquared)."""
    a, b = _check_cloud_pair(a, b, equal_size=True)
    cost = _cost_matrix(a, b)
    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum())
    return total / a.shape[0] if per_point else total


def emd_auction(a, b, per_point=True, rel_gap=0.005, eps_floor=1e-12):
    """Approximate EMD via the auction algorithm with epsilon scaling.

    The assignment found at scale ``eps`` satisfies epsilon-complementary
    slackness, so its cost C obeys C <= C* + n*eps. Scaling stops once
    n*eps <= rel_gap * (C - n*eps), certifying C <= (1 + rel_gap) * C*,
    or once eps hits ``eps_floor`` (near-identical clouds).
    """
    a, b = _check_cloud_pair(a, b, equal_size=True)
    n = a.shape[0]
    benefit = -_cost_matrix(a, b)
    prices = np.zeros(n)
    spread = float(benefit.max() - benefit.min())
    eps = max(spread / 2.0, eps_floor)
    owner = np.full(n, -1, dtype=np.int64)  # object -> person
    assigned = np.full(n, -1, dtype=np.int64)  # person -> object
    while True:
        owner.fill(-1)
        assigned.fill(-1)
        unassigned = list(range(n))
        while unassigned:
            i = unassigned.pop()
            values = benefit[i] - prices
            j = int(np.argmax(values))
            best = values[j]
            values[j] = -np.inf
            second = values.max() if n > 1 else best - eps
            prices[j] += (best - second) + eps
            prev = owner[j]
            if prev >= 0:
                assigned[prev] = -1
                unassigned.append(int(prev))
            owner[j] = i
            assigned[i] = j
        total = float(-benefit[np.arange(n), assigned].sum())
        slack = n * eps
        if slack <= rel_gap * (total - slack) or eps <= eps_floor:
            break
        eps = max(eps / 8.0, eps_floor)
    return total / n if per_point else total


def emd(a, b, method="auto", per_point=True, rel_gap=0.005):
    """Earth mover's distance. Exact solver up to 512 points, auction above."""
    a, b = _check_cloud_pair(a, b, equal_size=True)
    if method == "auto":
        method = "exact" if a.shape[0] <= _EXACT_EMD_MAX else "auction"
    if method == "exact":
        return emd_exact(a, b, per_point)
    if method == "auction":
        return emd_auction(a, b, per_point, rel_gap)
    raise ValueError(f"unknown EMD method {method!r}")


def _shape_distance_fn(dist):
    if dist == "cd":
        return lambda a, b: chamfer(a, b)
    if dist == "emd":
        return lambda a, b: emd(a, b)
    raise ValueError(f"unknown shape distance {dist!r}; expected 'cd' or 'emd'")


def cross_distance_matrix(sets_a, sets_b, dist="cd"):
    """Pairwise shape distances, (len(a), len(b))."""
    fn = _shape_distance_fn(dist)
    out = np.empty((len(sets_a), len(sets_b)))
    for i, a in enumerate(sets_a):
        for j, b in enumerate(sets_b):
            out[i, j] = fn(a, b)
    return out


def one_nna(gen, ref, dist="cd"):
    """Leave-one-out 1-NN two-sample accuracy, as a percentage.

    50% means the sets are indistinguishable; the nearest neighbor over
    the merged pool (self excluded) votes with its set label, ties broken
    to the lowest global index (generated shapes first).
    """
    if len(gen) != len(ref):
        raise ValueError(f"1-NNA needs equal set sizes, got {len(gen)} and {len(ref)}")
    if len(gen) < 2:
        raise ValueError("1-NNA needs at least two shapes per set")
    pool = list(gen) + list(ref)
    labels = np.array([0] * len(gen) + [1] * len(ref))
    n = len(pool)
    fn = _shape_distance_fn(dist)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = fn(pool[i], pool[j])
    np.fill_diagonal(d, np.inf)
    nn = np.argmin(d, axis=1)  # argmin takes the lowest index on ties
    correct = labels[nn] == labels
    return 100.0 * float(correct.mean())


def mmd_cov(gen, ref, dist="cd"):
    """Minimum matching distance and coverage, both reference-anchored.

    mmd = mean over references of the distance to the closest generated
    shape; cov = percentage of references that are the nearest reference
    of at least one generated shape.
    """
    if not len(gen) or not len(ref):
        raise ValueError("mmd/cov need non-empty sets")
    d = cross_distance_matrix(ref, gen, dist)  # (n_ref, n_gen)
    mmd = float(d.min(axis=1).mean())
    matched = np.unique(np.argmin(d, axis=0))  # nearest ref per generated shape
    cov = 100.0 * matched.size / len(ref)
    return mmd, cov


def jsd(gen, ref, resolution=28):
    """Jensen-Shannon divergence between voxel occupancy distributions.

    All points of each set are binned into a resolution^3 histogram over
    [-1, 1]^3 and normalized; natural log, so the range is [0, ln 2].
    """
    p = _occupancy(gen, resolution)
    q = _occupancy(ref, resolution)
    m = 0.5 * (p + q)
    return float(0.5 * _kl(p, m) + 0.5 * _kl(q, m))


def _occupancy(sets, resolution):
    hist = np.zeros(resolution**3)
    for cloud in sets:
        pts = np.asarray(cloud, dtype=np.float64)
        if np.any(pts < -1.0 - 1e-12) or np.any(pts > 1.0 + 1e-12):
            raise ValueError("jsd requires clouds normalized into [-1, 1]^3")
        idx = np.clip(((pts + 1.0) / 2.0 * resolution).astype(np.int64), 0, resolution - 1)
        flat = (idx[:, 0] * resolution + idx[:, 1]) * resolution + idx[:, 2]
        hist += np.bincount(flat, minlength=resolution**3)
    total = hist.sum()
    if total == 0:
        raise ValueError("empty point sets have no occupancy distribution")
    return hist / total


def _kl(p, m):
    mask = p > 0
    return float((p[mask] * np.log(p[mask] / m[mask])).sum())


@dataclass(frozen=True)
class MetricReport:
    n_gen: int
    n_ref: int
    one_nna_cd: float | None = None
    one_nna_emd: float | None = None
    mmd_cd: float | None = None
    mmd_emd: float | None = None
    cov: float | None = None
    jsd: float | None = None
    seed: int | None = None

    def rows(self):
        out = [("n_gen", self.n_gen), ("n_ref", self.n_ref)]
        for key in ("one_nna_cd", "one_nna_emd", "mmd_cd", "mmd_emd", "cov", "jsd", "seed"):
            val = getattr(self, key)
            if val is not None:
                out.append((key, val))
        return out


def compute_report(gen, ref, dist="both", jsd_resolution=28, seed=None,
                   normalize_for_jsd=True):
    """Full evaluation of a generated set against a reference set.

    ``dist``: "cd", "emd", or "both" selects which metrics get the EMD
    pathway. For JSD both sets are jointly min-max normalized into
    [-1, 1]^3 unless ``normalize_for_jsd`` is off.
    """
    gen = [np.asarray(c, dtype=np.float64) for c in gen]
    ref = [np.asarray(c, dtype=np.float64) for c in ref]
    use_cd = dist in ("cd", "both")
    use_emd = dist in ("emd", "both")
    if not (use_cd or use_emd):
        raise ValueError(f"unknown dist selector {dist!r}")

    fields = {"n_gen": len(gen), "n_ref": len(ref), "seed": seed}
    if use_cd:
        fields["one_nna_cd"] = one_nna(gen, ref, "cd")
        fields["mmd_cd"], fields["cov"] = mmd_cov(gen, ref, "cd")
    if use_emd:
        fields["one_nna_emd"] = one_nna(gen, ref, "emd")
        mmd_e, cov_e = mmd_cov(gen, ref, "emd")
        fields["mmd_emd"] = mmd_e
        if not use_cd:
            fields["cov"] = cov_e

    if normalize_for_jsd:
        all_pts = np.concatenate(gen + ref)
        lo, hi = all_pts.min(axis=0), all_pts.max(axis=0)
        span = np.maximum(hi - lo, 1e-15)
        center, half = (lo + hi) / 2.0, span / 2.0
        gen_n = [(c - center) / half for c in gen]
        ref_n = [(c - center) / half for c in ref]
    else:
        gen_n, ref_n = gen, ref
    fields["jsd"] = jsd(gen_n, ref_n, jsd_resolution)
    return MetricReport(**fields)


def write_report_csv(report: MetricReport, path):
    rows = report.rows()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(k for k, _ in rows) + "\n")
        fh.write(",".join(_fmt(v) for _, v in rows) + "\n")


def format_report_table(report: MetricReport):
    rows = report.rows()
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {_fmt(v)}" for k, v in rows) + "\n"


def _fmt(v):
    return f"{v:.17g}" if isinstance(v, float) else str(v)
