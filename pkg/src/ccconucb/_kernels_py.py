"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np

LINEAR_SUM = 0
SATURATING = 1


def _quad(X, Vinv):
    q = np.einsum("ij,ij->i", X @ Vinv, X)
    return np.maximum(q, 0.0)


def arm_bounds(X, theta, Vinv, H):
    """Return (center, halfwidth) arrays for each row of X."""
    return X @ theta, H * np.sqrt(_quad(X, Vinv))


def group_lower_values(X, offsets, theta, Vinv, H, kind, scale):
    n_groups = len(offsets) - 1
    if n_groups == 0:
        return np.empty(0)
    low = np.maximum(X @ theta - H * np.sqrt(_quad(X, Vinv)), 0.0)
    cum = np.concatenate(([0.0], np.cumsum(low)))
    sums = cum[offsets[1:]] - cum[offsets[:-1]]
    if kind == SATURATING:
        return scale * (1.0 - np.exp(-sums / scale))
    return sums


def scan_rows(X, wstar, theta, Vinv, H):
    if len(X) == 0:
        return 0.0, np.inf
    q = _quad(X, Vinv)
    c = X @ theta
    hw = H * np.sqrt(q)
    slack = np.minimum(wstar - (c - hw), (c + hw) - wstar)
    return float(q.sum()), float(slack.min())


def group_lower_total(X, offsets, is_a0, a0_value, theta, Vinv, H, kind, scale):
    vals = group_lower_values(X, offsets, theta, Vinv, H, kind, scale)
    mask = np.asarray(is_a0, dtype=bool)
    return float(np.where(mask, a0_value, vals).sum())


def ridge_update(V, Vinv, Y, theta, x, w):
    """In-place Sherman-Morrison step for one observation; returns 1 + x' Vinv x."""
    u = Vinv @ x
    denom = 1.0 + float(x @ u)
    V += np.outer(x, x)
    Y += w * x
    Vinv -= np.outer(u, u) / denom
    theta[:] = Vinv @ Y
    return denom
