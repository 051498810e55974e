"""Time-slotted multi-server MEC offloading simulator and online controller."""

__version__ = "0.1.0"

from .config import SimConfig
from .controller import Policy, PolicyKind, RunResult, run
from .environment import Environment, SlotSample
from .model import Decision, QueueState, SlotRecord

__all__ = [
    "SimConfig", "Policy", "PolicyKind", "RunResult", "run",
    "Environment", "SlotSample", "Decision", "QueueState", "SlotRecord",
    "__version__",
]
