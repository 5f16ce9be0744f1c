"""Command-line entry points: server, selfplay, replay-dump."""

from __future__ import annotations

import argparse
import os
import statistics
import sys
import time

from . import ser
from .config import ServerConfig


def server_main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="server", description="Run the game server.")
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--port", type=int, help="override the configured port")
    parser.add_argument("--data-dir", help="override the configured data directory")
    parser.add_argument("--web-root", help="directory with the built browser client")
    args = parser.parse_args(argv)

    config = ServerConfig.load(args.config) if args.config else ServerConfig()
    if args.port is not None:
        config.port = args.port
    if args.data_dir is not None:
        config.data_dir = os.path.abspath(args.data_dir)
    if args.web_root is not None:
        config.web_root = os.path.abspath(args.web_root)

    from .server import run_server

    run_server(config)


def selfplay_main(argv=None) -> None:
    parser = argparse.ArgumentParser(
        prog="selfplay", description="Run scripted-agent games and print a score table."
    )
    parser.add_argument("--config", help="YAML config file (game + mapgen sections)")
    parser.add_argument("--games", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--record", action="store_true", help="persist event logs to the data dir")
    parser.add_argument("--data-dir", default="./data")
    parser.add_argument("--server", help="play through a running server (ws:// endpoint) instead of in-process")
    parser.add_argument("--lobby", default="bots", help="lobby id when using --server")
    args = parser.parse_args(argv)

    config = ServerConfig.load(args.config) if args.config else ServerConfig()

    from .agents import FollowerBot, LeaderBot
    from .client import LocalGame, run_bot_pair

    store = None
    if args.record:
        from .persistence import EventStore

        os.makedirs(args.data_dir, exist_ok=True)
        store = EventStore(os.path.join(args.data_dir, "events.db"))

    scores = []
    print(f"{'game':>6} {'seed':>8} {'score':>6} {'events':>7} {'secs':>6}")
    for i in range(args.games):
        t0 = time.time()
        if args.server:
            score, game_id, n_events = _networked_game(args.server, args.lobby)
            label = game_id
        else:
            from .mapgen import GenConfig, generate_map

            gen = GenConfig.from_dict({**config.mapgen.to_dict(), "seed": args.seed + i * 1000})
            game_map = generate_map(gen)
            game = LocalGame(game_map, config.game, seed=game_map.seed, record=args.record or store is not None)
            leader, follower = game.sessions()
            result, _ = run_bot_pair(leader, follower, LeaderBot(), FollowerBot())
            score, n_events, label = result.score, len(game.events), f"local-{args.seed + i * 1000}"
            if store is not None:
                _persist_local(store, game, label)
        scores.append(score)
        print(f"{i:>6} {label:>8.8} {score:>6} {n_events:>7} {time.time() - t0:>6.2f}")
    print(
        f"\n{args.games} games: total {sum(scores)}, mean {sum(scores) / len(scores):.2f}, "
        f"median {statistics.median(scores)}, min {min(scores)}, max {max(scores)}"
    )


def _persist_local(store, game, game_id: str) -> None:
    from .gamecore import state_hash

    store.create_game(game_id, "selfplay", "bot-leader", "bot-follower", time.time())
    for event in game.events:
        event.game_id = game_id
    store.append_events(game.events)
    store.finish_game(game_id, game.state.turn.score, state_hash(game.state), time.time())


def _networked_game(endpoint: str, lobby: str):
    import threading

    from .agents import FollowerBot, LeaderBot
    from .client import NetSession, drive_session

    sessions = {}

    def connect(name, leader_qualified, scores):
        sessions[name] = NetSession.connect(
            endpoint, lobby, display_name=name,
            leader_qualified=leader_qualified, recent_scores=scores, is_bot=True,
        )

    t1 = threading.Thread(target=connect, args=("bot-a", True, (5.0,)))
    t2 = threading.Thread(target=connect, args=("bot-b", False, ()))
    t1.start(), t2.start()
    t1.join(30), t2.join(30)
    leader = next(s for s in sessions.values() if s.role == "leader")
    follower = next(s for s in sessions.values() if s.role == "follower")
    results = {}

    def drive(name, session, bot):
        results[name] = drive_session(session, bot)
        session.close()

    threads = [
        threading.Thread(target=drive, args=("leader", leader, LeaderBot())),
        threading.Thread(target=drive, args=("follower", follower, FollowerBot())),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join(300)
    result = results["leader"]
    return result.score, leader.game_id, 0


def replay_dump_main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="replay-dump", description="Print a recorded event log.")
    parser.add_argument("--game", required=True, help="game id")
    parser.add_argument("--data-dir", default="./data")
    parser.add_argument("--verify", action="store_true", help="also fold the log and print the final state hash")
    args = parser.parse_args(argv)

    from .persistence import EventStore

    path = os.path.join(args.data_dir, "events.db")
    if not os.path.exists(path):
        print(f"no event store at {path}", file=sys.stderr)
        raise SystemExit(1)
    store = EventStore(path)
    events = store.events_for(args.game)
    if not events:
        print(f"no events for game {args.game!r}", file=sys.stderr)
        raise SystemExit(1)
    for event in events:
        print(ser.canonical_dumps(event.to_dict()))
    if args.verify:
        from .gamecore import replay_log, state_hash

        print(f"# replayed state hash: {state_hash(replay_log(events))}", file=sys.stderr)
        record = store.record(args.game)
        if record and record.get("final_hash"):
            match = record["final_hash"] == state_hash(replay_log(events))
            print(f"# recorded final hash: {record['final_hash']} ({'match' if match else 'MISMATCH'})",
                  file=sys.stderr)


if __name__ == "__main__":
    server_main()
