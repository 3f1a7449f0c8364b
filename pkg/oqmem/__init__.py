"""oqmem: device models and Monte Carlo simulation for an optically heralded spin-qubit memory."""
from oqmem.config import Config
from oqmem.core.batch_processing import a_process_batch, process_batch
from oqmem.core.errors import OqmemError
from . import builtin, core, utils
from .builtin import devices, materials

__version__ = "0.1.0"

# --- User-facing aliases for convenience ---

# Submodules and entry points resolved on first access
def __getattr__(name):
    if name == "hubbard":
        return core.hubbard
    elif name == "register":
        return core.register
    elif name == "noise":
        return core.noise
    elif name == "interference":
        return core.interference
    elif name == "electrostatics":
        return core.electrostatics
    elif name == "rates":
        return core.rates
    elif name == "scenario":
        return core.scenario
    elif name == "run_scenario":
        return core.scenario.run_scenario
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

def __dir__():
    return sorted(list(globals().keys()) + [
        "hubbard", "register", "noise", "interference", "electrostatics", "rates", "scenario",
        "run_scenario",
    ])
