from . import records, rng
