# Export command handlers
from . import decompose, ground_state, observables, simulate, verify_estimates
from .runner import CommandContext, execute

COMMANDS = {
    "simulate": simulate.run,
    "ground-state": ground_state.run,
    "decompose": decompose.run,
    "verify-estimates": verify_estimates.run,
    "observables": observables.run,
}

__all__ = ['COMMANDS', 'CommandContext', 'execute']
