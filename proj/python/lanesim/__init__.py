from ._lanesim import *  # noqa: F401,F403
from ._lanesim import ScenarioError, run_episode, validate_scenario

__all__ = [name for name in dir() if not name.startswith("_")]
