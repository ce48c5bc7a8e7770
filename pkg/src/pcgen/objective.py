"""Training losses: analytic flow-matching regression, symmetric squared
Chamfer distance, and their adaptively weighted combination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import tensor as T
from .predictor import predict
from .schedule import Schedule

# above this many pairwise entries the kd-tree beats the dense matrix
_BRUTE_FORCE_MAX_PAIRS = 64 * 64


@dataclass(frozen=True)
class LossBreakdown:
    l_fm: float
    l_cd: float
    lambda_cd: float
    l_total: float


def fm_loss(v_pred, x0, z, t, sigma_d, normalize="per_point"):
    """|| sigma_d v_pred - (alpha' x0 + sigma' z) ||^2, batch-averaged.

    ``normalize="per_point"`` divides by M so the flow and Chamfer terms
    share a per-point scale; ``"raw"`` keeps the plain squared norm.
    ``v_pred`` may be a Tensor (differentiable) or ndarray. The target is
    the trigflow one (cos t z - sin t x0) when a trigflow schedule
    computes it; callers pass the schedule-correct target via x0/z/t.
    """
    sched = _as_schedule_for_target(sigma_d)
    return fm_loss_for_schedule(sched, v_pred, x0, z, t, normalize)


def _as_schedule_for_target(sigma_d):
    return Schedule("trigflow", sigma_d=sigma_d)


def fm_loss_for_schedule(s: Schedule, v_pred, x0, z, t, normalize="per_point"):
    if normalize not in ("per_point", "raw"):
        raise ValueError(f"unknown fm normalization {normalize!r}")
    x0 = np.asarray(x0, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    target = s.fm_target(x0, z, t)
    v_shape = v_pred.shape if isinstance(v_pred, T.Tensor) else np.shape(v_pred)
    if tuple(v_shape) != x0.shape:
        raise T.ShapeError(f"v_pred shape {tuple(v_shape)} != x0 shape {x0.shape}")
    n_points = x0.shape[-2]
    batch = 1 if x0.ndim == 2 else x0.shape[0]
    resid = T.sub(T.mul(v_pred, s.sigma_d), T.Tensor(target))
    total = T.sumsq(resid)
    scale = 1.0 / batch if normalize == "raw" else 1.0 / (batch * n_points)
    return T.mul(total, scale)


def chamfer(a, b, method="auto"):
    """Symmetric squared Chamfer distance between two point sets.

    CD(a, b) = mean_i min_j ||a_i - b_j||^2 + mean_j min_i ||b_j - a_i||^2.
    ``method``: "auto" picks kd-tree for large products, "kdtree" or
    "brute" force a path; both are exact and agree to rounding.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != 3 or b.shape[1] != 3:
        raise ValueError(f"expected (M, 3) clouds, got {a.shape} and {b.shape}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("chamfer distance of an empty cloud is undefined")
    if method == "auto":
        method = "brute" if a.shape[0] * b.shape[0] <= _BRUTE_FORCE_MAX_PAIRS else "kdtree"
    if method == "brute":
        d2 = _pairwise_sq(a, b)
        return float(d2.min(axis=1).mean() + d2.min(axis=0).mean())
    if method == "kdtree":
        d_ab, _ = cKDTree(b).query(a, k=1)
        d_ba, _ = cKDTree(a).query(b, k=1)
        return float((d_ab**2).mean() + (d_ba**2).mean())
    raise ValueError(f"unknown chamfer method {method!r}")


def _pairwise_sq(a, b):
    # direct differences: exact zeros for coincident points, unlike the
    # expanded |a|^2 + |b|^2 - 2ab form used on the differentiable path
    return ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)


def chamfer_diff(a, b):
    """Differentiable batched Chamfer: per-item distances as a (B,) Tensor.

    ``a`` is a Tensor (B, Ma, 3); ``b`` an ndarray (B, Mb, 3). Nearest
    neighbors tie-break to the lowest index and gradients flow only to
    the selected neighbor.
    """
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0]:
        raise T.ShapeError(f"chamfer_diff: shapes {a.shape} and {b.shape} incompatible")
    batch, m_a, _ = a.shape
    m_b = b.shape[1]
    an = T.reshape(T.tsum(T.mul(a, a), axis=2), (batch, m_a, 1))
    bn = (b**2).sum(axis=2)[:, None, :]  # (B, 1, Mb) constant
    cross = T.matmul(a, np.swapaxes(b, 1, 2))
    d2 = T.sub(T.add(an, T.Tensor(bn)), T.mul(cross, 2.0))
    d_ab = T.tmean(T.amin(d2, axis=2), axis=1)  # (B,)
    d_ba = T.tmean(T.amin(d2, axis=1), axis=1)  # (B,)
    return T.add(d_ab, d_ba)


def lambda_schedule(t, t_max, mode="linear_ramp", fixed=0.3):
    """Chamfer weight in [0.1, 0.3]; default is a linear ramp in t.

    Later times amplify velocity error in the predictor (the sin t
    factor), so geometric supervision ramps up with t.
    """
    t = np.asarray(t, dtype=np.float64)
    if mode == "fixed":
        return np.broadcast_to(np.float64(fixed), t.shape).copy() if t.ndim else float(fixed)
    if mode == "linear_ramp":
        lam = 0.1 + 0.2 * (t / t_max)
        return lam if t.ndim else float(lam)
    raise ValueError(f"unknown lambda mode {mode!r}")


def total_loss(
    s: Schedule,
    model,
    x0,
    z,
    t,
    lambda_mode="linear_ramp",
    lambda_fixed=0.3,
    fm_normalization="per_point",
    loss_mode="fm_chamfer",
):
    """Compose perturb -> forward -> predict -> losses for one batch.

    Returns (LossBreakdown of floats, total Tensor for backprop).
    ``loss_mode``: "fm_chamfer" (default), "fm_only", "chamfer_only".
    The Chamfer term needs the closed-form predictor and therefore the
    trigflow schedule; other schedules train flow-matching only.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x0.ndim == 2:
        x0, z = x0[None], z[None]
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    batch = x0.shape[0]
    if t_arr.shape != (batch,):
        t_arr = np.broadcast_to(t_arr, (batch,)).copy()

    x_t = s.perturb(x0, z, t_arr)
    use_cd = loss_mode in ("fm_chamfer", "chamfer_only")
    use_fm = loss_mode in ("fm_chamfer", "fm_only")
    if loss_mode not in ("fm_chamfer", "fm_only", "chamfer_only"):
        raise ValueError(f"unknown loss mode {loss_mode!r}")
    if use_cd and s.kind != "trigflow":
        raise ValueError("the Chamfer term requires the trigflow schedule; "
                         "train other schedules with loss_mode='fm_only'")

    if use_cd:
        x_hat, v = predict(s, model, x_t, t_arr)
        cd_items = chamfer_diff(x_hat, x0)  # (B,)
        lam = np.asarray(lambda_schedule(t_arr, s.t_max, lambda_mode, lambda_fixed))
        l_cd_t = T.tmean(cd_items)
        weighted_t = T.tmean(T.mul(cd_items, lam))
    else:
        v = model.forward(x_t / s.sigma_d, t_arr)
        l_cd_t = None
        weighted_t = None

    l_fm_t = fm_loss_for_schedule(s, v, x0, z, t_arr, fm_normalization) if use_fm else None

    if loss_mode == "fm_only":
        total = l_fm_t
        l_fm, l_cd, lam_eff = total.item(), 0.0, 0.0
    elif loss_mode == "chamfer_only":
        total = weighted_t
        l_fm, l_cd = 0.0, l_cd_t.item()
        lam_eff = weighted_t.item() / l_cd if l_cd > 0 else float(np.mean(lam))
    else:
        total = T.add(l_fm_t, weighted_t)
        l_fm, l_cd = l_fm_t.item(), l_cd_t.item()
        lam_eff = weighted_t.item() / l_cd if l_cd > 0 else float(np.mean(lam))
    breakdown = LossBreakdown(
        l_fm=l_fm, l_cd=l_cd, lambda_cd=lam_eff, l_total=l_fm + lam_eff * l_cd
    )
    return breakdown, total
