"""Scheduling policies: which enabled event a world executes next."""
from __future__ import annotations

import random
from typing import Optional, Sequence


class Scheduler:
    def choose(self, world) -> int:
        """Index of the next event among ``world.n_enabled()`` candidates."""
        raise NotImplementedError


class FairRandom(Scheduler):
    """Uniformly random among enabled events, reproducible from the seed."""

    def __init__(self, seed: int):
        self.seed = seed
        self.rng = random.Random(seed)

    def choose(self, world) -> int:
        return self.rng.randrange(world.n_enabled())


class Scripted(Scheduler):
    """Follows an explicit list of choices, then falls back to the first enabled event.

    In the shared-memory model a choice is a pid; in the message-passing
    model it is an index into the canonical enabled list.
    """

    def __init__(self, steps: Sequence, by_pid: bool = False):
        self.steps = list(steps)
        self.by_pid = by_pid
        self.pos = 0

    def choose(self, world) -> int:
        if self.pos >= len(self.steps):
            return 0
        want = self.steps[self.pos]
        self.pos += 1
        if self.by_pid:
            events = world.enabled()
            for i, ev in enumerate(events):
                if ev == want:
                    return i
            raise ValueError(f"scripted step {want!r} is not enabled")
        if not 0 <= want < world.n_enabled():
            raise ValueError(f"scripted choice {want} out of range")
        return want


class Replay(Scheduler):
    """Takes a fixed prefix of choices, then always the first enabled event.

    Records how many events were enabled at every decision, which is what
    exhaustive enumeration needs to backtrack.
    """

    def __init__(self, prefix: Sequence[int]):
        self.prefix = list(prefix)
        self.choices: list[int] = []
        self.widths: list[int] = []

    def choose(self, world) -> int:
        i = len(self.choices)
        c = self.prefix[i] if i < len(self.prefix) else 0
        self.choices.append(c)
        self.widths.append(world.n_enabled())
        return c


def next_prefix(choices: list[int], widths: list[int]) -> Optional[list[int]]:
    """The lexicographically next schedule prefix, or None when the tree is exhausted."""
    for j in range(len(choices) - 1, -1, -1):
        if choices[j] + 1 < widths[j]:
            return choices[:j] + [choices[j] + 1]
    return None
