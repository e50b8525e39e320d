from .history import Call, History, history_from_trace
from .linearizability import (
    AssetTransferSpec,
    KConsensusSpec,
    RegisterSpec,
    SearchBoundExceeded,
    SnapshotSpec,
    Verdict,
    check_linearizable,
    witness_sequence,
)
from .monitors import monitors
from .relaxed import RelaxedVerdict, check_relaxed
from .suite import evaluate

__all__ = [
    "AssetTransferSpec", "Call", "History", "KConsensusSpec", "RegisterSpec", "RelaxedVerdict",
    "SearchBoundExceeded", "SnapshotSpec", "Verdict", "check_linearizable", "check_relaxed",
    "evaluate", "history_from_trace", "monitors", "witness_sequence",
]
