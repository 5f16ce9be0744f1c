import random
import threading
import time

import pytest

from hexduet.agents import FollowerBot, LeaderBot
from hexduet.client import (
    GameOverError,
    LocalGame,
    SingleAgentEnv,
    StepResult,
    drive_session,
    local_game,
    run_bot_pair,
)
from hexduet.gamecore import (
    FOLLOWER,
    LEADER,
    Action,
    GameConfig,
    legal_actions,
    replay_log,
    state_hash,
)
from hexduet.mapgen import GenConfig, generate_map

from conftest import build_map, card

SMALL_GEN = GenConfig(rows=15, cols=15, town_count=1, lake_count=1, lake_size_range=(3, 5),
                      mountain_count=1, mountain_size_range=(3, 4), card_count=8)


def small_map(seed=0):
    return generate_map(GenConfig(**{**SMALL_GEN.to_dict(), "seed": seed}))


def test_local_sessions_block_until_decision_point():
    m = build_map(cards=[card(1, (3, 3))], follower=(0, 6))
    game = LocalGame(m, GameConfig(), 1)
    leader, follower = game.sessions()
    got = {}

    def follower_side():
        got["noop"] = follower.step(Action("noop"))  # blocks through the leader turn
        got["end"] = follower.step(Action("end_turn"))

    t = threading.Thread(target=follower_side, daemon=True)
    t.start()
    time.sleep(0.1)
    assert "noop" not in got  # leader has not yielded yet
    res = leader.step(Action("end_turn"))  # returns once the follower yields back
    t.join(5.0)
    assert got["noop"].observation.turn["active_role"] == FOLLOWER
    assert res.observation.turn["active_role"] == LEADER
    assert res.observation.role == LEADER


def test_local_rejection_in_band():
    m = build_map(cards=[card(1, (3, 3))], follower=(0, 6), water=[(1, 0)])
    game = LocalGame(m, GameConfig(), 1)
    leader, _ = game.sessions()
    res = leader.step(Action("forward"))
    assert res.rejected and res.reject_reason == "illegal-move"
    assert not res.game_over


def test_local_wrong_turn_action_rejected():
    m = build_map(cards=[card(1, (3, 3))], follower=(0, 6))
    game = LocalGame(m, GameConfig(), 1)
    _, follower = game.sessions()
    res = follower.step(Action("forward"))
    assert res.rejected and res.reject_reason == "wrong-actor"


def test_step_after_game_over_raises():
    m = build_map(follower=(0, 6))
    game = LocalGame(m, GameConfig(initial_turns=1), 1)
    leader, follower = game.sessions()
    res = leader.step(Action("end_turn"))
    assert res.game_over
    with pytest.raises(GameOverError):
        leader.step(Action("noop"))


def test_local_game_helper_returns_session_pair():
    leader, follower = local_game(small_map(), GameConfig(), 3)
    assert leader.role == LEADER and follower.role == FOLLOWER
    assert leader.game_id == follower.game_id


def test_timer_fires_with_injected_clock():
    m = build_map(follower=(0, 6))
    clock = {"now": 0.0}
    game = LocalGame(m, GameConfig(), 1, record=True, clock=lambda: clock["now"])
    leader, follower = game.sessions()
    clock["now"] = 51.0  # past the 50 s leader deadline
    game.poke_clock()
    assert game.state.turn.active_role == FOLLOWER
    kinds = [e.kind for e in game.events]
    assert "timer_expired" in kinds


def test_random_legal_actions_10k_steps_invariants():
    rng = random.Random(1234)
    m = small_map(7)
    game = LocalGame(m, GameConfig(initial_turns=10_000), seed=7)
    state = game.state
    card_count = len(state.cards)
    probes = {
        "forward": Action("forward"),
        "backward": Action("backward"),
        "turn_left": Action("turn_left"),
        "turn_right": Action("turn_right"),
        "end_turn": Action("end_turn"),
        "send_instruction": Action("send_instruction", text="probe"),
        "mark_instruction_done": Action("mark_instruction_done"),
        "cancel_instructions": Action("cancel_instructions"),
        "noop": Action("noop"),
    }
    from hexduet.gamecore import apply_action

    start = time.time()
    for step_index in range(10_000):
        if state.over:
            break
        role = state.turn.active_role if rng.random() < 0.9 else rng.choice([LEADER, FOLLOWER])
        legal = sorted(legal_actions(state, role))
        if not legal:
            break
        kind = rng.choice(legal)
        state, _ = apply_action(state, role, probes[kind], now=0.0)
        # invariants
        assert len(state.cards) == card_count
        assert state.turn.score == state.turn.sets_collected
        assert state.map.traversable(state.leader_pose.cell)
        assert state.map.traversable(state.follower_pose.cell)
        assert state.leader_pose.cell != state.follower_pose.cell
        assert sum(1 for i in state.instructions if i.status == "active") <= 1
        budget = state.config.steps_for(state.turn.active_role)
        assert 0 <= state.turn.steps_remaining <= budget
    elapsed = time.time() - start
    assert elapsed < 5.0, f"10k steps took {elapsed:.1f}s"


def test_capture_log_replays_to_final_hash():
    m = small_map(2)
    game = LocalGame(m, GameConfig(), seed=m.seed, record=True)
    leader, follower = game.sessions()
    run_bot_pair(leader, follower, LeaderBot(), FollowerBot(), timeout=60)
    assert state_hash(replay_log(game.events)) == game.final_hash()


def test_selfplay_final_scores_match_sessions():
    m = small_map(4)
    game = LocalGame(m, GameConfig(), seed=m.seed)
    leader, follower = game.sessions()
    lr, fr = run_bot_pair(leader, follower, LeaderBot(), FollowerBot(), timeout=60)
    assert lr.score == fr.score == game.state.turn.score
    assert lr.game_over and fr.game_over


def test_env_wrapper_reward_is_score_delta():
    m = small_map(5)
    env = SingleAgentEnv(m, GameConfig(), role=FOLLOWER)
    obs = env.reset(seed=m.seed)
    assert obs.role == FOLLOWER
    assert obs.turn["active_role"] == FOLLOWER
    bot = FollowerBot()
    total_reward = 0.0
    done = False
    steps = 0
    while not done and steps < 5000:
        action = bot.decide(obs)
        obs, reward, done, info = env.step(action)
        assert not info["rejected"]
        total_reward += reward
        steps += 1
    assert done
    assert total_reward == env._last_score
    env.close()


def test_env_reset_starts_fresh_game():
    m = small_map(6)
    env = SingleAgentEnv(m, GameConfig(), role=LEADER)
    obs1 = env.reset(seed=1)
    obs2 = env.reset(seed=1)
    assert obs1.turn == obs2.turn
    env.close()
