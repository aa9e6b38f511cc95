"""Option-critic agents with hindsight relabeling on goal tasks."""

try:
    from ._core import (
        Agent,
        ContractViolation,
        Environment,
        moving_average,
        resolved_config,
        run_experiment,
    )
except ImportError:
    # In-tree test runs load the extension from the build directory instead
    # of the installed package.
    from _core import (
        Agent,
        ContractViolation,
        Environment,
        moving_average,
        resolved_config,
        run_experiment,
    )

__all__ = [
    "Agent",
    "ContractViolation",
    "Environment",
    "moving_average",
    "resolved_config",
    "run_experiment",
]
