"""Server configuration: one YAML file supplies game rules, map generation,
lobby definitions, network settings and data paths.

Example:

    port: 8080
    data_dir: ./data
    map_pool_size: 6
    game:
      leader_steps_per_turn: 5
      follower_steps_per_turn: 10
      fog_range: 14
    mapgen:
      rows: 25
      cols: 25
      card_count: 21
    lobbies:
      - id: default
        pairing_policy: human_human
      - id: bots
        pairing_policy: bot_bot
      - id: practice
        pairing_policy: human_bot
        auto_bot: true
    tutorial_prompts:
      - "Welcome! Use the arrow keys to move."
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .gamecore import GameConfig
from .mapgen import GenConfig

PAIRING_POLICIES = ("human_human", "human_bot", "bot_bot")
ROOM_TYPES = ("game", "tutorial", "replay", "scenario")

DEFAULT_TUTORIAL_PROMPTS = [
    "Welcome! You are the leader: you see the whole map from above.",
    "Move with the arrow keys; each move or turn costs one step.",
    "Walk over a card to select it. A set needs three cards with all-different colors, shapes and counts.",
    "Type an instruction and press Enter to send it to your follower.",
    "Your follower sees only a small cone ahead of itself. Guide it precisely.",
]


@dataclass
class LobbyConfig:
    id: str
    pairing_policy: str = "human_human"
    auto_bot: bool = False  # spawn a server-side follower bot for waiting humans
    room_type: str = "game"
    scenario_file: Optional[str] = None

    def validate(self) -> None:
        if self.pairing_policy not in PAIRING_POLICIES:
            raise ValueError(f"lobby {self.id}: unknown pairing policy {self.pairing_policy!r}")
        if self.room_type not in ROOM_TYPES:
            raise ValueError(f"lobby {self.id}: unknown room type {self.room_type!r}")
        if self.room_type == "scenario" and not self.scenario_file:
            raise ValueError(f"lobby {self.id}: scenario rooms need a scenario_file")


def default_lobbies() -> list[LobbyConfig]:
    return [
        LobbyConfig(id="default", pairing_policy="human_human"),
        LobbyConfig(id="practice", pairing_policy="human_bot", auto_bot=True),
        LobbyConfig(id="tutorial", pairing_policy="human_bot", auto_bot=True, room_type="tutorial"),
        LobbyConfig(id="bots", pairing_policy="bot_bot"),
    ]


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: str = "./data"
    web_root: Optional[str] = None  # directory with the browser client build
    map_pool_size: int = 6
    map_pool_seed: int = 0
    ping_interval: float = 10.0
    max_missed_pongs: int = 3
    game: GameConfig = field(default_factory=GameConfig)
    mapgen: GenConfig = field(default_factory=GenConfig)
    lobbies: list[LobbyConfig] = field(default_factory=default_lobbies)
    tutorial_prompts: list[str] = field(default_factory=lambda: list(DEFAULT_TUTORIAL_PROMPTS))

    def validate(self) -> None:
        self.game.validate()
        self.mapgen.validate()
        seen = set()
        for lobby in self.lobbies:
            lobby.validate()
            if lobby.id in seen:
                raise ValueError(f"duplicate lobby id {lobby.id!r}")
            seen.add(lobby.id)

    @classmethod
    def load(cls, path: str) -> "ServerConfig":
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str = ".") -> "ServerConfig":
        cfg = cls()
        for key in ("host", "port", "data_dir", "web_root", "map_pool_size", "map_pool_seed",
                    "ping_interval", "max_missed_pongs"):
            if key in raw:
                setattr(cfg, key, raw[key])
        if "game" in raw:
            cfg.game = GameConfig.from_dict({**cfg.game.to_dict(), **raw["game"]})
        if "mapgen" in raw:
            cfg.mapgen = GenConfig.from_dict({**cfg.mapgen.to_dict(), **raw["mapgen"]})
        if "lobbies" in raw:
            cfg.lobbies = [LobbyConfig(**entry) for entry in raw["lobbies"]]
        if "tutorial_prompts" in raw:
            cfg.tutorial_prompts = list(raw["tutorial_prompts"])
        for key in ("data_dir", "web_root"):
            value = getattr(cfg, key)
            if value and not os.path.isabs(value):
                setattr(cfg, key, os.path.join(base_dir, value))
        for lobby in cfg.lobbies:
            if lobby.scenario_file and not os.path.isabs(lobby.scenario_file):
                lobby.scenario_file = os.path.join(base_dir, lobby.scenario_file)
        cfg.validate()
        return cfg
