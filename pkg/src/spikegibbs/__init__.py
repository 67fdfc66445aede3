"""Gibbs sampling for RBMs with stochastic digital integrate-and-fire neurons."""

__version__ = "0.1.0"

from .errors import ArithmeticRangeError, ParameterError, ParseError
from .neuron import (PRESETS, NeuronConfig, NeuronState, SamplerParams,
                     exact_activation_probability, ideal_activation_probability,
                     sample_unit, step_if)
from .rng import RngStream, make_stream
