"""Sweep observability settings and report self-play scores.

Usage: python scripts/selfplay_sweep.py [--games 20] [--fog 3 6 14] [--seed 0]

Shows how much the follower's fog radius matters to the scripted pair; handy
for picking defaults with bite when designing harder conditions.
"""

import argparse
import statistics

from hexduet.agents import FollowerBot, LeaderBot
from hexduet.client import LocalGame, run_bot_pair
from hexduet.gamecore import GameConfig
from hexduet.mapgen import GenConfig, generate_map


def run(games: int, fog: int, base_seed: int) -> list[int]:
    scores = []
    for i in range(games):
        game_map = generate_map(GenConfig(seed=base_seed + i))
        config = GameConfig(fog_range=fog)
        game = LocalGame(game_map, config, seed=game_map.seed)
        leader, follower = game.sessions()
        result, _ = run_bot_pair(leader, follower, LeaderBot(), FollowerBot(), timeout=120)
        scores.append(result.score)
    return scores


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--games", type=int, default=20)
    parser.add_argument("--fog", type=int, nargs="+", default=[3, 6, 14])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"{'fog':>4} {'mean':>6} {'median':>7} {'min':>4} {'max':>4}")
    for fog in args.fog:
        scores = run(args.games, fog, args.seed)
        print(f"{fog:>4} {sum(scores) / len(scores):>6.2f} "
              f"{statistics.median(scores):>7} {min(scores):>4} {max(scores):>4}")


if __name__ == "__main__":
    main()
