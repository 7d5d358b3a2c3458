"""Bayesian orientation-distribution inference with symmetric Bingham mixtures."""

__version__ = "0.1.0"

from . import bingham, io, kde, mixture, predict, quat, rjmcmc, synthetic, tempering  # noqa: F401
from .bingham import BinghamComponent, NormalizerTable, build_table  # noqa: F401
from .mixture import Dataset, Hyperparams, MixtureState  # noqa: F401
from .quat import SymmetryGroup, symmetry_group  # noqa: F401
from .rjmcmc import ChainTrace, SamplerConfig  # noqa: F401
from .tempering import TemperatureLadder  # noqa: F401
