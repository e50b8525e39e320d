"""Random small asset-transfer histories for cross-checking the checker."""
from __future__ import annotations

import random

from atsim.checker import Call
from atsim.core import Read, Transfer

from oracles import naive_apply


def random_history(rng: random.Random, max_ops: int = 8):
    """A history of at most ``max_ops`` calls, about half of them linearizable.

    Returns ``(calls, oracle_calls, q0, owners)`` where ``oracle_calls`` are
    the same calls as ``(pid, op_tuple, response, invoked, responded)``.
    """
    pids = list(range(1, rng.randint(1, 3) + 1))
    accounts = list(range(1, rng.randint(1, 3) + 1))
    q0 = {a: rng.randint(0, 5) for a in accounts}
    owners = {a: sorted(rng.sample(pids, rng.randint(1, len(pids)))) for a in accounts}
    n = rng.randint(1, max_ops)
    plan = [rng.choice(pids) for _ in range(n)]

    # per-process sequential intervals on a shared integer timeline
    points = sorted(rng.sample(range(4 * n + 4), 2 * n))
    rng.shuffle(points)
    spans: dict[int, list] = {p: [] for p in pids}
    it = iter(points)
    for p in plan:
        spans[p].append((next(it), next(it)))
    raw = []
    for p in pids:
        flat = sorted(t for span in spans[p] for t in span)
        for i in range(0, len(flat), 2):
            op = (("read", rng.choice(accounts)) if rng.random() < 0.4 else
                  ("transfer", rng.choice(accounts), rng.choice(accounts), rng.randint(0, 4)))
            raw.append([p, op, flat[i], flat[i + 1]])

    # responses from a linearization point inside each interval
    balances = dict(q0)
    for c in sorted(raw, key=lambda c: rng.uniform(c[2], c[3])):
        balances, resp = naive_apply(balances, c[0], c[1], owners)
        c.append(resp)
    if rng.random() < 0.5:
        c = rng.choice(raw)
        c[4] = (not c[4]) if isinstance(c[4], bool) else c[4] + rng.choice([-1, 1])
    for p in pids:
        mine = [c for c in raw if c[0] == p]
        if mine and rng.random() < 0.15:
            max(mine, key=lambda c: c[2])[3] = None

    calls, oracle_calls = [], []
    for i, (p, op, inv, resp_t, resp) in enumerate(raw):
        obj = Read(op[1]) if op[0] == "read" else Transfer(*op[1:])
        response = None if resp_t is None else resp
        calls.append(Call(f"c{i}", p, obj, response, inv, resp_t))
        oracle_calls.append((p, op, response, inv, resp_t))
    return calls, oracle_calls, q0, owners
