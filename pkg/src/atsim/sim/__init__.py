from .engine import (
    BoundExceeded,
    MessagePassingWorld,
    SharedMemoryWorld,
    StepBoundExceeded,
    crash_variants,
    enumerate_schedules,
    run,
)
from .scenario import ConfigError, FaultPlan, Policy, Scenario
from .scheduler import FairRandom, Replay, Scripted
from .threaded import run_threaded
from .trace import Trace

__all__ = [
    "BoundExceeded", "ConfigError", "FairRandom", "FaultPlan", "MessagePassingWorld", "Policy",
    "Replay", "Scenario", "Scripted", "SharedMemoryWorld", "StepBoundExceeded", "Trace",
    "crash_variants", "enumerate_schedules", "run", "run_threaded",
]
