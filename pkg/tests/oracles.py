"""Independent reference implementations used to cross-check the package.

Nothing here imports the package's sequential specification or search:
the replay is a plain dictionary walk and the linearizability oracle tries
permutations one call at a time without any memoization.
"""
from __future__ import annotations

from typing import Optional


def naive_apply(balances: dict, pid: int, op: tuple, owners: dict):
    """One step of the asset-transfer type on ``("transfer", a, b, x)`` / ``("read", a)``."""
    kind = op[0]
    if kind == "read":
        return dict(balances), balances[op[1]]
    _, a, b, x = op
    after = dict(balances)
    if pid in owners.get(a, ()) and balances[a] >= x:
        after[a] = balances[a] - x
        after[b] = after[b] + x
        return after, True
    return after, False


def naive_replay(seq: list, q0: dict, owners: dict) -> bool:
    """Replay ``(pid, op_tuple, response)`` triples; True iff every response is reproduced."""
    balances = dict(q0)
    for pid, op, resp in seq:
        if op[1] not in balances or (op[0] == "transfer" and op[2] not in balances):
            return False
        balances, got = naive_apply(balances, pid, op, owners)
        if type(got) is not type(resp) or got != resp:
            return False
    return True


def brute_force_linearizable(calls: list, q0: dict, owners: dict) -> bool:
    """Try every order of ``calls`` that respects real-time precedence.

    Each call is ``(pid, op_tuple, response, invoked, responded)`` with
    ``responded=None`` for a pending call. Pending calls may be left out or
    placed anywhere after their invocation, with any response.
    """
    n = len(calls)

    def before(i: int, j: int) -> bool:
        ri = calls[i][4]
        return ri is not None and ri < calls[j][3]

    def rec(used: list, balances: dict) -> bool:
        if all(used[i] or calls[i][4] is None for i in range(n)):
            return True
        for j in range(n):
            if used[j]:
                continue
            if any(not used[i] and before(i, j) for i in range(n) if i != j):
                continue
            pid, op, resp, _, responded = calls[j]
            after, got = naive_apply(balances, pid, op, owners)
            if responded is not None and (type(got) is not type(resp) or got != resp):
                continue
            used[j] = True
            if rec(used, after):
                return True
            used[j] = False
        return False

    return rec([False] * n, dict(q0))


def interleavings(a: int, b: int) -> int:
    """Number of ways to interleave two sequences of a and b steps."""
    from math import comb

    return comb(a + b, a)


def multinomial(*parts: int) -> int:
    from math import factorial

    out = factorial(sum(parts))
    for p in parts:
        out //= factorial(p)
    return out


def replay_balance(records: list, q0: dict, account: int) -> Optional[int]:
    """Balance of ``account`` after crediting and debiting ``(src, dst, amt)`` triples in order."""
    bal = q0[account]
    for src, dst, amt in records:
        if src == account:
            bal -= amt
        if dst == account:
            bal += amt
    return bal
