"""Render a generated map as ASCII for quick eyeballing.

Usage: python scripts/map_preview.py [--seed 0] [--rows 25] [--cols 25]

Legend: . grass  : path  ~ water  ^ mountain  / ramp  H house  T tree
        * streetlight  o rock  C card  L/F spawns
"""

import argparse

from hexduet.hexgrid import HexCoord
from hexduet.mapgen import GenConfig, generate_map

GLYPHS = {"grass": ".", "path": ":", "water": "~", "mountain": "^", "ramp": "/"}
PROP_GLYPHS = {"house": "H", "tree": "T", "streetlight": "*", "rock": "o"}


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--rows", type=int, default=25)
    parser.add_argument("--cols", type=int, default=25)
    args = parser.parse_args()

    game_map = generate_map(GenConfig(rows=args.rows, cols=args.cols, seed=args.seed))
    cards = {c.cell for c in game_map.initial_cards}
    for r in range(game_map.rows):
        row = [" " * r]  # shear rows to hint at the hex geometry
        for q in range(game_map.cols):
            cell = HexCoord(q, r)
            prop = game_map.prop_at(cell)
            if cell == game_map.leader_spawn:
                ch = "L"
            elif cell == game_map.follower_spawn:
                ch = "F"
            elif cell in cards:
                ch = "C"
            elif prop is not None:
                ch = PROP_GLYPHS[prop.kind]
            else:
                ch = GLYPHS[game_map.terrain_at(cell)]
            row.append(ch + " ")
        print("".join(row))
    print(f"\nseed {game_map.seed}: {len(game_map.initial_cards)} cards, "
          f"{len(game_map.props)} props")


if __name__ == "__main__":
    main()
