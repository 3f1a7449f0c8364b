from . import batch_processing, electrostatics, errors, hubbard, interference, noise, protocols, rates, register, scenario, units
