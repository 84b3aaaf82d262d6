"""Scratch: compare single-tree greedy RRT vs bidirectional connect variants
on the 8 synthetic scenes before committing one into planners.py."""
import time

import numpy as np
from scipy.spatial import cKDTree

from graspgen.assets import toy_hand
from graspgen.demos import SyntheticDemoSpec, generate_synthetic_demos
from graspgen.kinematics import fk_actuator

hand = toy_hand()
demos = generate_synthetic_demos(hand, SyntheticDemoSpec(seed=0))
print("demos:", len(demos), "layout:", demos[0].demo.trajectory.layout)

LO, HI = hand.limits_lower, hand.limits_upper
EPS = 0.01
BETA = 0.5
MAX_NODES = 10000


def make_pred(cloud, radius):
    tree = cKDTree(cloud)
    def pred(q):
        kp = fk_actuator(hand, q)
        d, _ = tree.query(kp)
        return bool((d <= radius).any())
    return pred


def clearance(q, cloud):
    tree = cKDTree(cloud)
    d, _ = tree.query(fk_actuator(hand, q))
    return float(d.min())


# --- clearance audit at endpoints
for i, sc in enumerate(demos):
    tr = sc.demo.trajectory
    s, g = tr.frames[0], tr.frames[-1]
    print(f"scene {i}: start clr {clearance(s, sc.demo.cloud)*1000:.2f}mm  goal clr {clearance(g, sc.demo.cloud)*1000:.2f}mm  span {np.abs(g-s).max():.3f}")


def connect(nodes, parents, labels, n, idx, target, free, checks, greedy=True):
    """Walk from nodes[idx] toward target in EPS max-norm hops.
    Returns (last_idx, reached, n)."""
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
        checks[0] += 1
        if free(q_new) is False:
            return parent, False, n
        if n >= MAX_NODES:
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


def plan_single(start, goal, pred, seed):
    rng = np.random.default_rng(seed)
    free = lambda q: not pred(q)
    checks = [0]
    nodes = np.empty((MAX_NODES, start.size))
    parents = np.full(MAX_NODES, -1, int)
    labels = np.zeros(MAX_NODES, int)
    nodes[0] = start
    n = 1
    while n < MAX_NODES:
        target = goal if rng.uniform() < BETA else rng.uniform(LO, HI)
        near = int(np.argmin(np.abs(nodes[:n] - target).max(axis=1)))
        last, reached, n = connect(nodes, parents, labels, n, near, target, free, checks)
        if reached and target is goal:
            return True, n, checks[0]
    return False, n, checks[0]


def plan_bi(start, goal, pred, seed, greedy_extend):
    rng = np.random.default_rng(seed)
    free = lambda q: not pred(q)
    checks = [0]
    nodes = np.empty((MAX_NODES, start.size))
    parents = np.full(MAX_NODES, -1, int)
    labels = np.empty(MAX_NODES, int)
    nodes[0], labels[0] = start, 0
    nodes[1], labels[1] = goal, 1
    n = 2
    active = 0
    while n < MAX_NODES:
        other = 1 - active
        amask = labels[:n] == active
        omask = ~amask
        if rng.uniform() < BETA:
            target = nodes[1 - active if active == 0 else 0]  # other root
            target = goal if active == 0 else start
        else:
            target = rng.uniform(LO, HI)
        cand = np.where(amask)[0]
        near = int(cand[np.argmin(np.abs(nodes[cand] - target).max(axis=1))])
        last, _, n = connect(nodes, parents, labels, n, near, target, free, checks, greedy=greedy_extend)
        if n >= MAX_NODES:
            break
        ocand = np.where(labels[:n] == other)[0]
        onear = int(ocand[np.argmin(np.abs(nodes[ocand] - nodes[last]).max(axis=1))])
        olast, joined, n = connect(nodes, parents, labels, n, onear, nodes[last], free, checks, greedy=True)
        if joined:
            return True, n, checks[0]
        active = other
    return False, n, checks[0]


for radius in (0.001,):
    print(f"\n=== radius {radius*1000:.1f}mm ===")
    for name, fn in [
        ("single", lambda s, g, p, sd: plan_single(s, g, p, sd)),
        ("bi-extend", lambda s, g, p, sd: plan_bi(s, g, p, sd, False)),
        ("bi-greedy", lambda s, g, p, sd: plan_bi(s, g, p, sd, True)),
    ]:
        ok = 0
        tot_nodes = 0
        tot_checks = 0
        t0 = time.time()
        fails = []
        for i, sc in enumerate(demos):
            tr = sc.demo.trajectory
            pred = make_pred(sc.demo.cloud, radius)
            s, g = tr.frames[0].copy(), tr.frames[-1].copy()
            if pred(s) or pred(g):
                fails.append((i, "endpoint"))
                continue
            succ, nn, ch = fn(s, g, pred, 0)
            ok += succ
            tot_nodes += nn
            tot_checks += ch
            if not succ:
                fails.append((i, nn))
        dt = time.time() - t0
        print(f"{name:10s}: {ok}/8 ok, avg nodes {tot_nodes/8:.0f}, avg checks {tot_checks/8:.0f}, {dt:.1f}s, fails {fails}")
