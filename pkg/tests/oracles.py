"""Independent scalar reference implementations used as test oracles.

Plain Python loops with ``math`` only; nothing here imports the package's
kernels so agreement is meaningful.
"""
import math


def wrap(a):
    while a > math.pi:
        a -= 2 * math.pi
    while a <= -math.pi:
        a += 2 * math.pi
    return a


def step(s, u, dt, beta, gamma):
    x, y, th, v = s
    p, phi = u
    return (x + v * math.cos(th) * dt,
            y + v * math.sin(th) * dt,
            wrap(th + v * math.tan(phi) * gamma * dt),
            beta * v + p * dt)


def rollout(starts, controls, dt=0.2, beta=0.95, gamma=0.5):
    """``starts`` list of 4-tuples, ``controls[t][i]`` 2-tuples -> ``states[t][i]``."""
    states = [list(map(tuple, starts))]
    for row in controls:
        states.append([step(s, u, dt, beta, gamma) for s, u in zip(states[-1], row)])
    return states


def cost(states, targets, obstacles, w=(1.0, 1.0, 50.0, 50.0, 10.0), mar=(3.0, 2.0, 2.0), eps=1e-3):
    """Per-term cost over rows 1..H of ``states``; returns (target, veh, obs, vel)."""
    w_pos, w_or, w_v, w_o, w_vel = w
    r_v, r_o, v_mar = mar
    tc = vc = oc = vel = 0.0
    for row in states[1:]:
        n = len(row)
        for i in range(n):
            x, y, th, v = row[i]
            tx, ty, tth = targets[i]
            tc += w_pos * math.hypot(x - tx, y - ty) + w_or * abs(wrap(th - tth))
            vel += w_vel * max(abs(v) - v_mar, 0.0)
            for j in range(i + 1, n):
                d = math.hypot(x - row[j][0], y - row[j][1])
                if d < r_v:
                    vc += w_v * (1.0 / max(d, eps) - 1.0 / r_v)
            for ox, oy, r in obstacles:
                gap = math.hypot(x - ox, y - oy) - r
                if gap < r_o:
                    oc += w_o * (1.0 / max(gap, eps) - 1.0 / r_o)
    return tc, vc, oc, vel


def total(controls, starts, targets, obstacles, **kw):
    dyn = {k: kw.pop(k) for k in ("dt", "beta", "gamma") if k in kw}
    return sum(cost(rollout(starts, controls, **dyn), targets, obstacles, **kw))


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at flat list ``x``."""
    g = []
    for k in range(len(x)):
        xp = list(x)
        xm = list(x)
        xp[k] += h
        xm[k] -= h
        g.append((f(xp) - f(xm)) / (2 * h))
    return g
