import pytest

from hexduet.agents import (
    FollowerBot,
    InstructionParseError,
    LeaderBot,
    ObsWorld,
    parse_instruction,
)
from hexduet.client import LocalGame, run_bot_pair
from hexduet.gamecore import (
    FOLLOWER,
    LEADER,
    Action,
    GameConfig,
    apply_action,
    legal_actions,
    new_game,
    observe,
)
from hexduet.hexgrid import HexCoord
from hexduet.mapgen import GenConfig, generate_map

from conftest import build_map, card


def triple(cells):
    return [
        card(1, cells[0], "black", "plus", 1),
        card(2, cells[1], "blue", "torch", 2),
        card(3, cells[2], "green", "star", 3),
    ]


# --- grammar ---


def test_parse_basic_commands():
    cmds = parse_instruction("forward 3")
    assert len(cmds) == 1 and cmds[0].op == "move" and cmds[0].n == 3

    cmds = parse_instruction("goto 4 2; card 4 2")
    assert [c.op for c in cmds] == ["goto", "card"]
    assert cmds[0].cell == HexCoord(4, 2)

    cmds = parse_instruction("  TURN   LEFT ;wait; backward 1 ")
    assert [c.op for c in cmds] == ["turn", "wait", "move"]
    assert cmds[0].arg == "left"


def test_parse_rejects_free_form():
    for text in ["grab the red star please", "forward", "forward zero", "card 1", "", "  ; ; "]:
        with pytest.raises(InstructionParseError):
            parse_instruction(text)


def test_parse_rejects_zero_repeat():
    with pytest.raises(InstructionParseError):
        parse_instruction("forward 0")


# --- follower ---


def follower_game(cards=(), follower=(3, 3), config=None, **kw):
    cfg = config or GameConfig(fog_range=4)
    m = build_map(cards=list(cards), leader=(0, 0), follower=follower, **kw)
    return new_game(m, cfg, 11)


def play_follower_turn(state, bot, max_actions=40):
    """Run the follower bot through its turn, returning (state, actions)."""
    state, _ = apply_action(state, LEADER, Action("end_turn"))
    actions = []
    while not state.over and state.turn.active_role == FOLLOWER:
        action = bot.decide(observe(state, FOLLOWER))
        actions.append(action.kind)
        assert action.kind in legal_actions(state, FOLLOWER), f"illegal {action.kind}"
        state, _ = apply_action(state, FOLLOWER, action)
        if len(actions) > max_actions:
            raise AssertionError(f"follower did not finish: {actions}")
        if action.kind == "end_turn":
            break
    return state, actions


def test_follower_noops_off_turn():
    s = follower_game()
    bot = FollowerBot()
    assert bot.decide(observe(s, FOLLOWER)).kind == "noop"


def test_follower_ends_turn_without_instruction():
    s = follower_game()
    s, actions = play_follower_turn(s, FollowerBot())
    assert actions == ["end_turn"]


def test_follower_executes_goto_and_marks_done():
    s = follower_game()
    s, _ = apply_action(s, LEADER, Action("send_instruction", text="goto 5 3"))
    bot = FollowerBot()
    s, actions = play_follower_turn(s, bot)
    assert s.follower_pose.cell == HexCoord(5, 3)
    assert "mark_instruction_done" in actions
    assert s.instructions[0].status == "done"


def test_follower_collects_card_two_steps_ahead():
    s = follower_game(cards=triple([(5, 3), (6, 6), (1, 5)]))
    s, _ = apply_action(s, LEADER, Action("send_instruction", text="card 5 3"))
    s, actions = play_follower_turn(s, FollowerBot())
    assert actions[:2] == ["forward", "forward"]
    assert s.cards[0].selected


def test_follower_unparseable_waits_and_marks_done():
    s = follower_game()
    s, _ = apply_action(s, LEADER, Action("send_instruction", text="grab the red star please"))
    bot = FollowerBot()
    s, actions = play_follower_turn(s, bot)
    # wait maps to an end_turn; the instruction is marked done on the next turn
    assert actions == ["end_turn"]
    s, _ = apply_action(s, LEADER, Action("end_turn"))
    assert bot.decide(observe(s, FOLLOWER)).kind == "mark_instruction_done"


def test_follower_abandons_target_outside_fog():
    s = follower_game(cards=triple([(6, 6), (5, 3), (1, 5)]), config=GameConfig(fog_range=1))
    s, _ = apply_action(s, LEADER, Action("send_instruction", text="card 6 6"))
    s, actions = play_follower_turn(s, FollowerBot())
    assert actions[0] == "mark_instruction_done"  # abandoned immediately
    assert s.follower_pose.cell == HexCoord(3, 3)


def test_follower_turn_commands():
    s = follower_game()
    s, _ = apply_action(s, LEADER, Action("send_instruction", text="turn left; turn left"))
    s, actions = play_follower_turn(s, FollowerBot())
    assert actions[:3] == ["turn_left", "turn_left", "mark_instruction_done"]
    assert s.follower_pose.heading == 2


def test_follower_forward_n():
    s = follower_game()
    s, _ = apply_action(s, LEADER, Action("send_instruction", text="forward 2"))
    s, actions = play_follower_turn(s, FollowerBot())
    assert actions[:3] == ["forward", "forward", "mark_instruction_done"]
    assert s.follower_pose.cell == HexCoord(5, 3)


def test_follower_blocked_forward_abandons():
    s = follower_game(water=[(4, 3)])
    s, _ = apply_action(s, LEADER, Action("send_instruction", text="forward 2"))
    s, actions = play_follower_turn(s, FollowerBot())
    assert actions[0] == "mark_instruction_done"


# --- leader ---


def test_leader_assigns_adjacent_cards_to_follower():
    # three valid cards ring the follower; the leader is far away
    cards = triple([(3, 2), (4, 3), (3, 4)])
    s = follower_game(cards=cards, follower=(3, 3), config=GameConfig(fog_range=6))
    bot = LeaderBot()
    plan = bot.plan(observe(s, LEADER))
    assert sorted(tuple(c) for c in plan.follower_targets) == [(3, 2), (3, 4), (4, 3)]
    assert plan.leader_targets == []


def test_leader_no_valid_triple_repositions():
    cards = [
        card(1, (5, 3), "black", "plus", 1),
        card(2, (6, 6), "black", "plus", 1),
        card(3, (1, 5), "black", "plus", 1),
    ]
    s = follower_game(cards=cards)
    bot = LeaderBot()
    obs = observe(s, LEADER)
    plan = bot.plan(obs)
    assert plan.instruction is None and plan.follower_targets == []
    action = bot.decide(obs)
    assert action.kind in ("forward", "backward", "turn_left", "turn_right", "end_turn")


def test_leader_deterministic_tie_break():
    s = follower_game(cards=triple([(3, 2), (4, 3), (3, 4)]), follower=(3, 3))
    a = LeaderBot().plan(observe(s, LEADER))
    b = LeaderBot().plan(observe(s, LEADER))
    assert a.triple_ids == b.triple_ids
    assert a.follower_targets == b.follower_targets


def test_leader_instructions_parse_under_grammar():
    for seed in range(5):
        m = generate_map(GenConfig(seed=seed))
        s = new_game(m, GameConfig(), seed=m.seed)
        bot = LeaderBot()
        plan = bot.plan(observe(s, LEADER))
        if plan.instruction is not None:
            parse_instruction(plan.instruction)


# --- closed loop ---


def selfplay(seed, config=None):
    m = generate_map(GenConfig(seed=seed))
    game = LocalGame(m, config or GameConfig(), seed=m.seed, record=True)
    leader, follower = game.sessions()
    lr, fr = run_bot_pair(leader, follower, LeaderBot(), FollowerBot(), timeout=60)
    return game, lr


def test_selfplay_completes_and_scores():
    game, result = selfplay(0)
    assert result.game_over
    assert result.score >= 1


def test_selfplay_deterministic_event_logs():
    game_a, _ = selfplay(3)
    game_b, _ = selfplay(3)
    log_a = [(e.seq, e.actor, e.kind, e.payload) for e in game_a.events]
    log_b = [(e.seq, e.actor, e.kind, e.payload) for e in game_b.events]
    assert log_a == log_b


def test_selfplay_instructions_all_parse():
    game, _ = selfplay(1)
    sent = [e.payload["text"] for e in game.events if e.kind == "instruction_sent"]
    assert sent
    for text in sent:
        parse_instruction(text)


def test_obsworld_matches_map_passability():
    m = generate_map(GenConfig(seed=4, rows=15, cols=15, card_count=8))
    s = new_game(m, GameConfig(), 1)
    world = ObsWorld(observe(s, LEADER))
    for cell in m.all_cells():
        assert world.traversable(cell) == m.traversable(cell)
        for h in range(6):
            from hexduet.hexgrid import neighbor

            n = neighbor(cell, h)
            if m.in_bounds(n):
                assert world.step_allowed(cell, n) == m.step_allowed(cell, n)
