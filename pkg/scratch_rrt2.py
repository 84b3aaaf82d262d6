"""Scratch 2: connect-style bidirectional RRT with single-step exploration,
dense motion checks. Candidate for planners.py."""
import time

import numpy as np

from scratch_rrt import demos, make_pred, LO, HI, MAX_NODES
from graspgen.metrics import channel_smoothness

EPS = 0.01
BETA = 0.5


def motion_free(a, b, free, checks, res):
    span = np.abs(b - a).max()
    k = max(1, int(np.ceil(span / res)))
    for i in range(1, k + 1):
        checks[0] += 1
        if not free(a + (b - a) * (i / k)):
            return False
    return True


def connect(nodes, parents, labels, n, idx, target, free, checks, res, greedy):
    q = nodes[idx]
    parent = idx
    label = labels[idx]
    while True:
        delta = target - q
        span = np.abs(delta).max()
        if span == 0.0:
            return parent, True, n
        if span <= EPS:
            q_new = target.copy()
            final = True
        else:
            q_new = q + delta * (EPS / span)
            final = False
        if n >= MAX_NODES or not motion_free(q, q_new, free, checks, res):
            return parent, False, n
        nodes[n] = q_new
        parents[n] = parent
        labels[n] = label
        parent = n
        q = q_new
        n += 1
        if final:
            return parent, True, n
        if not greedy:
            return parent, False, n


def plan(start, goal, pred, seed, res):
    rng = np.random.default_rng(seed)
    free = lambda q: not pred(q)
    checks = [0]
    dof = start.size
    nodes = np.empty((MAX_NODES, dof))
    parents = np.full(MAX_NODES, -1, int)
    labels = np.empty(MAX_NODES, int)
    nodes[0], labels[0] = start, 0
    nodes[1], labels[1] = goal, 1
    n = 2
    active = 0
    join = None
    while n < MAX_NODES and join is None:
        other = 1 - active
        biased = rng.uniform() < BETA
        target = (goal if active == 0 else start) if biased else rng.uniform(LO, HI)
        cand = np.where(labels[:n] == active)[0]
        near = int(cand[np.argmin(np.abs(nodes[cand] - target).max(axis=1))])
        last, _, n = connect(nodes, parents, labels, n, near, target, free, checks, res, greedy=biased)
        if n >= MAX_NODES:
            break
        ocand = np.where(labels[:n] == other)[0]
        onear = int(ocand[np.argmin(np.abs(nodes[ocand] - nodes[last]).max(axis=1))])
        olast, joined, n = connect(nodes, parents, labels, n, onear, nodes[last], free, checks, res, greedy=True)
        if joined:
            join = (last, olast) if active == 0 else (olast, last)
        active = other
    if join is None:
        return None, n, checks, rng
    a, b = join
    pa = []
    i = a
    while i >= 0:
        pa.append(nodes[i])
        i = parents[i]
    pa = pa[::-1]
    pb = []
    i = b
    while i >= 0:
        pb.append(nodes[i])
        i = parents[i]
    return np.asarray(pa + pb[1:]), n, checks, rng


def shortcut(path, free, attempts, rng, checks, res):
    path = [p for p in path]
    for _ in range(attempts):
        if len(path) < 3:
            break
        i, j = sorted(rng.choice(len(path), size=2, replace=False))
        if j - i < 2:
            continue
        if motion_free(path[i], path[j], free, checks, res):
            span = np.abs(path[j] - path[i]).max()
            k = max(1, int(np.ceil(span / EPS)))
            mid = [path[i] + (path[j] - path[i]) * (s / k) for s in range(1, k)]
            path = path[: i + 1] + mid + path[j:]
    return np.asarray(path)


if __name__ == "__main__":
    for R in (0.00125, 0.0015):
        res = EPS / 4.0
        ok = 0
        tot = 0
        vals = []
        tmax = 0.0
        t0 = time.time()
        fails = []
        for seed in range(6):
            for i, sc in enumerate(demos):
                tr = sc.demo.trajectory
                pred = make_pred(sc.demo.cloud, R)
                free = lambda q: not pred(q)
                t1 = time.time()
                path, n, checks, rng = plan(tr.frames[0].copy(), tr.frames[-1].copy(), pred, seed, res)
                tot += 1
                if path is None:
                    fails.append((seed, i, n))
                    tmax = max(tmax, time.time() - t1)
                    continue
                path = shortcut(path, free, 100, rng, checks, res)
                tmax = max(tmax, time.time() - t1)
                ok += 1
                pos, vel, acc, exc = channel_smoothness(path)
                dens = np.abs(np.diff(path, axis=0)).max(axis=1).max()
                vals.append((vel, acc, path.shape[0], dens, n))
        dt = time.time() - t0
        v = np.array([x[:2] for x in vals])
        print(f"R={R*1000:.2f}mm: {ok}/{tot}, {dt:.1f}s total, worst plan {tmax:.1f}s, fails {fails}")
        print(f"  vel_log [{v[:,0].min():.2f},{v[:,0].max():.2f}] mean {v[:,0].mean():.2f} | acc_log [{v[:,1].min():.2f},{v[:,1].max():.2f}] mean {v[:,1].mean():.2f}")
        print(f"  wps [{min(x[2] for x in vals)},{max(x[2] for x in vals)}], max spacing {max(x[3] for x in vals):.4f}, nodes max {max(x[4] for x in vals)}")
