"""Numerical toolkit for quantum no-signalling games, their perfect strategies
and quantum graph colourings."""
from .games import (NotAChannelError, Rule, SupportRuleGame, WitnessRequired, check_perfect_strategy,
                    colouring_game, concurrency_game, homomorphism_game)
from .correlations import (CqnsCorrelation, MatrixUnitSystemFamily, QnsCorrelation,
                           StochasticOperatorMatrix)
from .graph import Graph
from .quantum_graphs import KrausFamily, OperatorAntiSystem, SymmetricSkewSubspace
from .colouring_rank import QuantumColouring, kd2_generators, lovasz_theta

__version__ = "0.1.0"
