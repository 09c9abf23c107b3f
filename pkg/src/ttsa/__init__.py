"""Two-time-scale stochastic approximation with arbitrary-norm contractions and Markovian noise."""

from . import engine, errors, games, geometry, markov_chain, mdp
from .engine import StepSchedule, TtsProblem, fit_rate, run_replications, tts_run
from .geometry import MoreauEnvelope, NormSpec
from .markov_chain import FiniteMarkovChain

__version__ = "0.1.0"

__all__ = [
    "FiniteMarkovChain", "MoreauEnvelope", "NormSpec", "StepSchedule", "TtsProblem",
    "engine", "errors", "fit_rate", "games", "geometry", "markov_chain", "mdp",
    "run_replications", "tts_run",
]
