"""Asset transfer without consensus: algorithms, a deterministic simulator and checkers."""
from .core import (
    ArithmeticOverflow,
    AssetTransferError,
    NotOwner,
    OwnershipMap,
    Read,
    Transfer,
    TransferRecord,
    UnknownAccount,
    balance_of,
    replay_legal,
    seq_step,
)

__version__ = "0.1.0"

__all__ = [
    "ArithmeticOverflow", "AssetTransferError", "NotOwner", "OwnershipMap", "Read", "Transfer",
    "TransferRecord", "UnknownAccount", "balance_of", "replay_legal", "seq_step",
]
