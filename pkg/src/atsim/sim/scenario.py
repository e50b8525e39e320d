"""Scenario description, JSON loading and validation."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

from ..core import OwnershipMap, operation_from_json

MODELS = ("shared_memory", "message_passing")
ALGORITHMS = {
    "shared_memory": ("fig1", "fig2", "fig3"),
    "message_passing": ("fig4", "baseline"),
}
BROADCAST_MODES = ("idealized", "quorum", "raw")
BYZANTINE_STRATEGIES = ("Equivocate", "DoubleSpendRace", "BadSeq", "ForgeOwner", "StaleDeps", "Silent")
POLICIES = ("fair_random", "exhaustive", "scripted")

DEFAULT_STEP_BOUND = 200_000
EXHAUSTIVE_MAX_STEPS = 20


class ConfigError(ValueError):
    """The scenario is malformed or violates a model constraint."""


@dataclass
class FaultPlan:
    """Which processes fail and how.

    ``crashes`` maps a pid to the number of its own atomic steps after which
    it halts, or to ``[steps, keep]``: at the crash only the first ``keep``
    of its still-undelivered outgoing messages survive (a crash mid-send).
    """

    crashes: dict[int, Any] = field(default_factory=dict)
    byzantine: dict[int, str] = field(default_factory=dict)

    def crash_point(self, pid: int) -> Optional[tuple[int, Optional[int]]]:
        c = self.crashes.get(pid)
        if c is None:
            return None
        if isinstance(c, (list, tuple)):
            return int(c[0]), int(c[1])
        return int(c), None

    @property
    def faulty(self) -> set[int]:
        return set(self.crashes) | set(self.byzantine)


@dataclass
class Policy:
    kind: str = "fair_random"
    seed: int = 0
    bound: int = EXHAUSTIVE_MAX_STEPS
    steps: list = field(default_factory=list)


@dataclass
class Scenario:
    id: str
    model: str
    algorithm: str
    n: int
    accounts: dict[int, int] = field(default_factory=dict)
    owners: dict[int, list[int]] = field(default_factory=dict)
    ops: dict[int, list] = field(default_factory=dict)
    random_ops: Optional[dict] = None
    faults: FaultPlan = field(default_factory=FaultPlan)
    policy: Policy = field(default_factory=Policy)
    broadcast: str = "idealized"
    f: int = 0
    services: dict[int, dict] = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    step_bound: int = DEFAULT_STEP_BOUND
    k: int = 0

    # -- construction ---------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            faults = d.get("faults", {})
            policy = d.get("policy", {})
            bcast = d.get("broadcast", "idealized")
            if isinstance(bcast, dict):
                mode, f = bcast.get("mode", "idealized"), int(bcast.get("f", 0))
            else:
                mode, f = bcast, int(d.get("f", 0))
            s = cls(
                id=str(d.get("id", "scenario")),
                model=d["model"],
                algorithm=d["algorithm"],
                n=int(d["n"]),
                accounts={int(a): int(v) for a, v in d.get("accounts", {}).items()},
                owners={int(a): [int(p) for p in ps] for a, ps in d.get("owners", {}).items()},
                ops={int(p): list(v) for p, v in d.get("ops", {}).items()},
                random_ops=d.get("random_ops"),
                faults=FaultPlan(
                    crashes={int(p): c for p, c in faults.get("crashes", {}).items()},
                    byzantine={int(p): str(v) for p, v in faults.get("byzantine", {}).items()},
                ),
                policy=Policy(
                    kind=policy.get("kind", "fair_random"),
                    seed=int(policy.get("seed", 0)),
                    bound=int(policy.get("bound", EXHAUSTIVE_MAX_STEPS)),
                    steps=list(policy.get("steps", [])),
                ),
                broadcast=mode,
                f=f,
                services={int(a): dict(v) for a, v in d.get("services", {}).items()},
                options=dict(d.get("options", {})),
                step_bound=int(d.get("step_bound", DEFAULT_STEP_BOUND)),
                k=int(d.get("k", 0)),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"malformed scenario: {exc!r}") from exc
        s.fill_defaults()
        s.validate()
        return s

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Scenario":
        """Load a scenario from a JSON file path or a bundled scenario name."""
        p = Path(path)
        if not p.exists():
            bundled = resources.files("atsim") / "scenarios" / f"{path}.json"
            if not bundled.is_file():
                raise ConfigError(f"no scenario file or bundled scenario named {str(path)!r}")
            text = bundled.read_text()
        else:
            text = p.read_text()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, policy=replace(self.policy, seed=int(seed)))

    def fill_defaults(self) -> None:
        if self.algorithm == "fig2":
            k = self.k or self.n
            self.k = k
            self.accounts = {1: 2 * k, 2: 0}
            self.owners = {1: list(range(1, k + 1)), 2: []}
            return
        if not self.accounts:
            self.accounts = {p: 10 for p in range(1, self.n + 1)}
        if not self.owners and self.model == "message_passing":
            self.owners = {a: [a] for a in self.accounts if 1 <= a <= self.n}
        for a in self.accounts:
            self.owners.setdefault(a, [])

    # -- derived views ----------------------------------------------------

    @property
    def q0(self) -> dict[int, int]:
        return dict(self.accounts)

    @property
    def mu(self) -> OwnershipMap:
        return OwnershipMap(self.owners)

    @property
    def pids(self) -> list[int]:
        return list(range(1, self.n + 1))

    @property
    def byzantine(self) -> set[int]:
        return set(self.faults.byzantine)

    @property
    def correct(self) -> set[int]:
        return set(self.pids) - self.faults.faulty

    @property
    def benign(self) -> set[int]:
        return set(self.pids) - self.byzantine

    def scripts(self) -> dict[int, list]:
        """Per-process operation scripts, expanding ``random_ops`` with the policy seed."""
        if self.algorithm == "fig2":
            props = self.ops or {p: [p * 10] for p in range(1, self.k + 1)}
            return {p: list(v) for p, v in props.items()}
        scripts = {p: list(self.ops.get(p, [])) for p in self.pids}
        if self.random_ops:
            rng = random.Random(f"ops:{self.id}:{self.policy.seed}")
            extra = random_scripts(self, rng, **self.random_ops)
            for p, ops in extra.items():
                scripts[p] = scripts.get(p, []) + ops
        return scripts

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.algorithm not in ALGORITHMS[self.model]:
            raise ConfigError(f"algorithm {self.algorithm!r} does not run in the {self.model} model")
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.broadcast not in BROADCAST_MODES:
            raise ConfigError(f"unknown broadcast mode {self.broadcast!r}")
        if self.policy.kind not in POLICIES:
            raise ConfigError(f"unknown scheduler policy {self.policy.kind!r}")
        if self.policy.kind == "exhaustive" and self.policy.bound > EXHAUSTIVE_MAX_STEPS:
            raise ConfigError(f"exhaustive enumeration is capped at {EXHAUSTIVE_MAX_STEPS} steps")
        pids = set(self.pids)
        for a, v in self.accounts.items():
            if v < 0:
                raise ConfigError(f"account {a} has a negative initial balance")
        for a, ps in self.owners.items():
            if a not in self.accounts:
                raise ConfigError(f"owner entry for unknown account {a}")
            if not set(ps) <= pids:
                raise ConfigError(f"account {a} has owners outside 1..{self.n}")
        crashes, byz = set(self.faults.crashes), set(self.faults.byzantine)
        if crashes & byz:
            raise ConfigError(f"processes {sorted(crashes & byz)} are both crashed and Byzantine")
        if not (crashes | byz) <= pids:
            raise ConfigError("fault plan names unknown processes")
        if byz and self.model != "message_passing":
            raise ConfigError("Byzantine strategies only apply in the message-passing model")
        for p, strat in self.faults.byzantine.items():
            if strat not in BYZANTINE_STRATEGIES:
                raise ConfigError(f"unknown Byzantine strategy {strat!r}")
        if self.model == "message_passing" and self.broadcast == "quorum":
            if self.n <= 3 * self.f:
                raise ConfigError(f"quorum broadcast requires N > 3f (N={self.n}, f={self.f})")
            if len(crashes | byz) > self.f:
                raise ConfigError(f"{len(crashes | byz)} faulty processes exceed f={self.f}")
        if self.algorithm == "fig1" and self.mu.sharing > 1:
            raise ConfigError("fig1 requires at most one owner per account")
        if self.model == "message_passing":
            # per-source streams: a single-owner account is named by its owner,
            # shared accounts take ids above N so the two never collide
            for a, ps in self.owners.items():
                if len(ps) == 1 and a != ps[0]:
                    raise ConfigError(f"single-owner account {a} must have id equal to its owner {ps[0]}")
                if len(ps) > 1 and a <= self.n:
                    raise ConfigError(f"shared account {a} needs an id above N={self.n}")
        if self.algorithm == "fig4":
            for a, ps in self.owners.items():
                if len(ps) > 1 and a not in self.services:
                    self.services[a] = {"mode": "correct"}
        for a, svc in self.services.items():
            if a not in self.accounts:
                raise ConfigError(f"sequence service for unknown account {a}")
            if svc.get("mode", "correct") not in ("correct", "compromised"):
                raise ConfigError(f"unknown service mode {svc.get('mode')!r}")
        if self.algorithm != "fig2":
            for p, ops in self.ops.items():
                if p not in pids:
                    raise ConfigError(f"ops for unknown process {p}")
                for op in ops:
                    if op and op[0] in ("transfer", "read"):
                        try:
                            o = operation_from_json(op)
                        except (ValueError, IndexError, TypeError) as exc:
                            raise ConfigError(f"bad operation {op!r}: {exc}") from exc
                        for acct in ([o.a, o.b] if op[0] == "transfer" else [o.a]):
                            if acct not in self.accounts:
                                raise ConfigError(f"operation {op!r} names unknown account {acct}")
                    elif not (op and op[0] == "attack"):
                        raise ConfigError(f"bad operation {op!r}")
        if self.step_bound < 1:
            raise ConfigError("step_bound must be positive")

    def to_dict(self) -> dict:
        return {
            "id": self.id, "model": self.model, "algorithm": self.algorithm, "n": self.n,
            "accounts": {str(a): v for a, v in self.accounts.items()},
            "owners": {str(a): ps for a, ps in self.owners.items()},
            "ops": {str(p): v for p, v in self.ops.items()},
            "random_ops": self.random_ops,
            "faults": {"crashes": {str(p): c for p, c in self.faults.crashes.items()},
                       "byzantine": {str(p): s for p, s in self.faults.byzantine.items()}},
            "policy": {"kind": self.policy.kind, "seed": self.policy.seed,
                       "bound": self.policy.bound, "steps": self.policy.steps},
            "broadcast": {"mode": self.broadcast, "f": self.f},
            "services": {str(a): v for a, v in self.services.items()},
            "options": self.options, "step_bound": self.step_bound, "k": self.k,
        }


def random_scripts(s: Scenario, rng: random.Random, per_process: int = 3, max_amount: int = 6,
                   read_ratio: float = 0.3, foreign_ratio: float = 0.1,
                   only: Optional[list] = None) -> dict[int, list]:
    """Random op scripts: transfers out of owned accounts plus reads of any account.

    ``foreign_ratio`` is the chance a transfer names an account the process
    does not own (such transfers must fail).
    """
    accounts = sorted(s.accounts)
    mu = s.mu
    targets = [p for p in s.pids if p not in s.byzantine] if only is None else list(only)
    out: dict[int, list] = {}
    for p in targets:
        owned = mu.accounts_of(p)
        ops = []
        for _ in range(per_process):
            if rng.random() < read_ratio or not accounts:
                ops.append(["read", rng.choice(accounts)])
                continue
            if owned and rng.random() >= foreign_ratio:
                a = rng.choice(owned)
            else:
                a = rng.choice(accounts)
            b = rng.choice(accounts)
            ops.append(["transfer", a, b, rng.randint(1, max_amount)])
        out[p] = ops
    return out
