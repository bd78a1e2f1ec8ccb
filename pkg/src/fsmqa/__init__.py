"""Multi-hop QA with state-machine guided prompting."""

__version__ = "0.1.0"

from .fsm import FsmBudgets, FsmEvent, FsmState, transition

__all__ = ["FsmBudgets", "FsmEvent", "FsmState", "transition", "__version__"]
