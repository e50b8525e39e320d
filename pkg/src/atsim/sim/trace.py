"""Event traces: ordered ``{step, node, kind, data}`` records, stored as JSON lines."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterator, Optional, Union


def _plain(obj: Any) -> Any:
    if isinstance(obj, tuple):
        return [_plain(x) for x in obj]
    if isinstance(obj, list):
        return [_plain(x) for x in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted((_plain(x) for x in obj), key=lambda v: json.dumps(v, sort_keys=True))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    return obj


class Trace:
    """Append-only event log of one simulation run.

    ``step`` is the record's position in the log, so steps are strictly
    increasing. Scheduler ticks (one per atomic step) are carried inside the
    data of invocation and response records.
    """

    def __init__(self, scenario_id: str = "", seed: Optional[int] = None):
        self.scenario_id = scenario_id
        self.seed = seed
        self.records: list[dict] = []

    def add(self, node: Union[int, str], kind: str, data: Optional[dict] = None) -> dict:
        rec = {"step": len(self.records), "node": node, "kind": kind, "data": data or {}}
        self.records.append(rec)
        return rec

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[dict]:
        return iter(self.records)

    def of_kind(self, *kinds: str) -> list[dict]:
        return [r for r in self.records if r["kind"] in kinds]

    @property
    def end(self) -> dict:
        ends = self.of_kind("end")
        return ends[-1]["data"] if ends else {}

    def to_jsonl(self) -> str:
        return "".join(json.dumps(_plain(r), sort_keys=True, separators=(",", ":")) + "\n"
                       for r in self.records)

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str, scenario_id: str = "", seed: Optional[int] = None) -> "Trace":
        t = cls(scenario_id, seed)
        t.records = [json.loads(line) for line in text.splitlines() if line.strip()]
        return t

    @classmethod
    def read(cls, path: Union[str, Path]) -> "Trace":
        return cls.from_jsonl(Path(path).read_text())
