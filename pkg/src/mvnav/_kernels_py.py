"""Pure numpy implementation of the planning kernels.

Used when the compiled extension is unavailable, and as the reference the
compiled version is tested against.  Signatures must stay identical to
``_kernels.pyx``.
"""
import numpy as np

from .kinematics import wrap_angle

BACKEND = "python"


def rollout(s0, u, prm):
    dt, beta, gamma = prm[0], prm[1], prm[2]
    H = u.shape[0]
    s = np.empty((H + 1,) + s0.shape)
    s[0] = s0
    for t in range(H):
        x, y, th, v = s[t, :, 0], s[t, :, 1], s[t, :, 2], s[t, :, 3]
        s[t + 1, :, 0] = x + v * np.cos(th) * dt
        s[t + 1, :, 1] = y + v * np.sin(th) * dt
        s[t + 1, :, 2] = wrap_angle(th + v * np.tan(u[t, :, 1]) * gamma * dt)
        s[t + 1, :, 3] = beta * v + u[t, :, 0] * dt
    return s


def _state_costs(s, tgt, obs, w, mar, eps, want_grad):
    """Cost terms summed over rows 1..H and their gradient w.r.t. each state."""
    H1, N, _ = s.shape
    terms = np.zeros(4)
    gs = np.zeros_like(s) if want_grad else None
    clamped = False
    pos = s[1:, :, :2]
    # target
    dpos = pos - tgt[None, :, :2]
    dist = np.sqrt((dpos ** 2).sum(-1))
    eth = wrap_angle(s[1:, :, 2] - tgt[None, :, 2])
    terms[0] = w[0] * dist.sum() + w[1] * np.abs(eth).sum()
    if want_grad:
        safe = np.where(dist > 0, dist, 1.0)
        gs[1:, :, :2] += w[0] * np.where(dist[..., None] > 0, dpos / safe[..., None], 0.0)
        gs[1:, :, 2] += w[1] * np.sign(eth)
    # vehicle-vehicle
    if N > 1:
        diff = pos[:, :, None, :] - pos[:, None, :, :]
        d = np.sqrt((diff ** 2).sum(-1))
        iu = np.triu(np.ones((N, N), dtype=bool), 1)
        act = iu[None] & (d < mar[0])
        if act.any():
            dc = np.maximum(d, eps)
            terms[1] = w[2] * np.where(act, 1.0 / dc - 1.0 / mar[0], 0.0).sum()
            clamped = clamped or bool((act & (d < eps)).any())
            if want_grad:
                live = act & (d >= eps)
                coef = np.where(live, -w[2] / np.where(live, d, 1.0) ** 3, 0.0)
                gij = coef[..., None] * diff
                gs[1:, :, :2] += gij.sum(axis=2) - gij.sum(axis=1)
    # vehicle-obstacle
    if obs.shape[0] > 0:
        diff = pos[:, :, None, :] - obs[None, None, :, :2]
        d = np.sqrt((diff ** 2).sum(-1))
        gap = d - obs[None, None, :, 2]
        act = gap < mar[1]
        if act.any():
            gc = np.maximum(gap, eps)
            terms[2] = w[3] * np.where(act, 1.0 / gc - 1.0 / mar[1], 0.0).sum()
            clamped = clamped or bool((act & (gap < eps)).any())
            if want_grad:
                live = act & (gap >= eps)
                coef = np.where(live, -w[3] / (np.where(live, gc, 1.0) ** 2 * np.where(live, d, 1.0)), 0.0)
                gs[1:, :, :2] += (coef[..., None] * diff).sum(axis=2)
    # velocity
    over = np.abs(s[1:, :, 3]) - mar[2]
    terms[3] = w[4] * np.maximum(over, 0.0).sum()
    if want_grad:
        gs[1:, :, 3] += np.where(over > 0, w[4] * np.sign(s[1:, :, 3]), 0.0)
    return terms, gs, clamped


def cost_terms(u, s0, tgt, obs, prm, w, mar, eps):
    """Return ``(terms[4], clamped)`` for controls ``u`` (H, N, 2)."""
    s = rollout(s0, u, prm)
    terms, _, clamped = _state_costs(s, tgt, obs, w, mar, eps, False)
    return terms, clamped


def cost_grad(u, s0, tgt, obs, prm, w, mar, eps):
    """Return ``(terms[4], grad (H, N, 2), clamped)``.

    The gradient is the exact adjoint of the rollout recursion.
    """
    dt, beta, gamma = prm[0], prm[1], prm[2]
    s = rollout(s0, u, prm)
    terms, gs, clamped = _state_costs(s, tgt, obs, w, mar, eps, True)
    H = u.shape[0]
    grad = np.empty_like(u)
    lam = gs[H].copy()
    for t in range(H - 1, -1, -1):
        th, v = s[t, :, 2], s[t, :, 3]
        phi = u[t, :, 1]
        c, sn, tn = np.cos(th), np.sin(th), np.tan(phi)
        grad[t, :, 0] = lam[:, 3] * dt
        grad[t, :, 1] = lam[:, 2] * v * gamma * dt / np.cos(phi) ** 2
        nxt = gs[t].copy()
        nxt[:, 0] += lam[:, 0]
        nxt[:, 1] += lam[:, 1]
        nxt[:, 2] += lam[:, 2] + (-lam[:, 0] * v * sn + lam[:, 1] * v * c) * dt
        nxt[:, 3] += (lam[:, 0] * c + lam[:, 1] * sn) * dt + lam[:, 2] * tn * gamma * dt + lam[:, 3] * beta
        lam = nxt
    return terms, grad, clamped
