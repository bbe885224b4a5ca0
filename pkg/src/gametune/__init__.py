"""Tournament-based performance tuning for interference-prone environments."""
from .engine import GameResult, GameSpec, Player, StopRule, play_game
from .simrunner import InterferenceModel, LandscapeSpec, SharedNoise, SimRunner
from .space import Configuration, ParameterDef, SearchSpace
from .tournament import TournamentConfig, TournamentReport, run_tournament

__version__ = "0.1.0"

__all__ = [
    "Configuration", "GameResult", "GameSpec", "InterferenceModel", "LandscapeSpec",
    "ParameterDef", "Player", "SearchSpace", "SharedNoise", "SimRunner", "StopRule",
    "TournamentConfig", "TournamentReport", "play_game", "run_tournament",
]
