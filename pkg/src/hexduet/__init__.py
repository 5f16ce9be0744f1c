"""hexduet: a two-agent instruction-following card game platform on a hex grid."""

from .cards import Card, is_valid_set
from .gamecore import (
    Action,
    GameConfig,
    GameState,
    Observation,
    apply_action,
    legal_actions,
    new_game,
    observe,
    replay_log,
    state_hash,
)
from .hexgrid import HexCoord, Pose, distance, neighbor, rotate, shortest_path, visible_set
from .mapgen import GameMap, GenConfig, MapPool, generate_map, validate_map

__all__ = [
    "Action",
    "Card",
    "GameConfig",
    "GameMap",
    "GameState",
    "GenConfig",
    "HexCoord",
    "MapPool",
    "Observation",
    "Pose",
    "apply_action",
    "distance",
    "generate_map",
    "is_valid_set",
    "legal_actions",
    "neighbor",
    "new_game",
    "observe",
    "replay_log",
    "rotate",
    "shortest_path",
    "state_hash",
    "validate_map",
    "visible_set",
]
