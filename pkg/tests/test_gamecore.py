import random

import pytest

from hexduet import ser
from hexduet.cards import Card
from hexduet.gamecore import (
    ACTIVE,
    CANCELLED,
    DONE,
    EV_CARD_TOGGLE,
    EV_GAME_OVER,
    EV_MOVE,
    EV_SET_COMPLETED,
    EV_TURN_TRANSITION,
    FOLLOWER,
    LEADER,
    QUEUED,
    STEPS_EXHAUSTED,
    TIMER_EXPIRED,
    Action,
    ActionRejected,
    GameConfig,
    ReplayError,
    apply_action,
    handle_timeout,
    legal_actions,
    mark_abandoned,
    new_game,
    observe,
    replay_log,
    replay_step,
    start_game,
    state_hash,
)
from hexduet.hexgrid import HexCoord, Pose

from conftest import build_map, card

CFG = GameConfig(fog_range=3, fov_degrees=210.0)


def fresh(cards=(), leader=(0, 0), follower=(0, 6), config=CFG, seed=7, **map_kw):
    m = build_map(cards=list(cards), leader=leader, follower=follower, **map_kw)
    return new_game(m, config, seed)


def act(state, actor, kind, now=0.0, text=None):
    return apply_action(state, actor, Action(kind, text=text), now=now)


def triple(at_cells):
    return [
        card(1, at_cells[0], "black", "plus", 1),
        card(2, at_cells[1], "blue", "torch", 2),
        card(3, at_cells[2], "green", "star", 3),
    ]


def test_new_game_defaults():
    s = fresh(cards=triple([(2, 0), (3, 0), (4, 0)]))
    assert s.turn.active_role == LEADER
    assert s.turn.turns_remaining == CFG.initial_turns
    assert s.turn.steps_remaining == CFG.leader_steps_per_turn
    assert s.turn.score == 0
    assert not s.over
    assert s.instructions == []
    assert len(s.cards) == 3


def test_new_game_zero_turns_is_over():
    cfg = GameConfig(initial_turns=0)
    s = fresh(config=cfg)
    assert s.over


def test_new_game_deterministic_serialization():
    m = build_map(cards=triple([(2, 0), (3, 0), (4, 0)]), follower=(0, 6))
    a = new_game(m, CFG, seed=9)
    b = new_game(m, CFG, seed=9)
    assert ser.canonical_bytes(a.to_dict()) == ser.canonical_bytes(b.to_dict())
    assert state_hash(a) == state_hash(b)


def test_new_game_rejects_invalid_map():
    m = build_map(water=[(0, 0)])
    with pytest.raises(ValueError):
        new_game(m, CFG, 1)


def test_forward_consumes_step_and_moves():
    s = fresh()
    s2, events = act(s, LEADER, "forward")
    assert s2.leader_pose == Pose(HexCoord(1, 0), 0)
    assert s2.turn.steps_remaining == CFG.leader_steps_per_turn - 1
    assert [e.kind for e in events] == [EV_MOVE]
    # original untouched
    assert s.leader_pose == Pose(HexCoord(0, 0), 0)


def test_turn_in_place_consumes_step():
    s = fresh()
    s2, _ = act(s, LEADER, "turn_left")
    assert s2.leader_pose == Pose(HexCoord(0, 0), 1)
    assert s2.turn.steps_remaining == CFG.leader_steps_per_turn - 1


def test_backward_moves_opposite_without_turning():
    s = fresh(leader=(2, 0))
    s2, _ = act(s, LEADER, "backward")
    assert s2.leader_pose == Pose(HexCoord(1, 0), 0)


def test_forward_into_water_rejected_state_unchanged():
    s = fresh(water=[(1, 0)])
    before = ser.canonical_bytes(s.to_dict())
    with pytest.raises(ActionRejected) as e:
        act(s, LEADER, "forward")
    assert e.value.code == "illegal-move"
    assert ser.canonical_bytes(s.to_dict()) == before


def test_forward_into_prop_rejected():
    s = fresh(props=[("tree", (1, 0), {})])
    with pytest.raises(ActionRejected):
        act(s, LEADER, "forward")


def test_forward_into_other_agent_rejected():
    s = fresh(follower=(1, 0))
    with pytest.raises(ActionRejected) as e:
        act(s, LEADER, "forward")
    assert e.value.code == "illegal-move"


def test_elevation_requires_ramp():
    s = fresh(mountain=[(1, 0)])
    with pytest.raises(ActionRejected):
        act(s, LEADER, "forward")
    s2 = fresh(mountain=[(2, 0)], ramp=[(1, 0)])
    s3, _ = act(s2, LEADER, "forward")
    s4, _ = act(s3, LEADER, "forward")
    assert s4.leader_pose.cell == HexCoord(2, 0)


def test_wrong_actor_rejected():
    s = fresh()
    with pytest.raises(ActionRejected) as e:
        act(s, FOLLOWER, "forward")
    assert e.value.code == "wrong-actor"


def test_noop_always_legal_no_events():
    s = fresh()
    s2, events = act(s, FOLLOWER, "noop")
    assert events == []
    assert s2 is s


def test_card_toggle_on_enter_and_deselect_on_reenter():
    s = fresh(cards=[card(1, (1, 0))])
    s2, events = act(s, LEADER, "forward")
    assert [e.kind for e in events] == [EV_MOVE, EV_CARD_TOGGLE]
    assert s2.cards[0].selected
    s3, _ = act(s2, LEADER, "forward")  # step off
    s4, events = act(s3, LEADER, "backward")  # step back on
    assert not s4.cards[0].selected
    assert events[1].payload["selected"] is False


def collect_set(s):
    """Leader walks over three valid cards in a row at (1,0),(2,0),(3,0)."""
    events = []
    for _ in range(3):
        s, evs = act(s, LEADER, "forward")
        events.extend(evs)
    return s, events


def test_set_resolution_scores_and_respawns():
    cfg = GameConfig(leader_steps_per_turn=5)
    s = fresh(cards=triple([(1, 0), (2, 0), (3, 0)]), config=cfg)
    s2, events = collect_set(s)
    kinds = [e.kind for e in events]
    assert EV_SET_COMPLETED in kinds
    assert s2.turn.score == 1
    assert s2.turn.sets_collected == 1
    assert len(s2.cards) == 3  # 3 removed, 3 spawned
    done = [e for e in events if e.kind == EV_SET_COMPLETED][0]
    assert done.payload["card_ids"] == [1, 2, 3]
    assert done.payload["bonus_turns"] == cfg.turn_bonus_schedule[0]
    assert s2.turn.turns_remaining == cfg.initial_turns + cfg.turn_bonus_schedule[0]
    for c in s2.cards:
        assert not c.selected
        assert c.id > 3
        assert s2.map.traversable(c.cell)
        assert c.cell not in (s2.leader_pose.cell, s2.follower_pose.cell)


def test_invalid_triple_does_not_resolve():
    cards = [
        card(1, (1, 0), "black", "plus", 1),
        card(2, (2, 0), "black", "torch", 2),  # repeated color
        card(3, (3, 0), "green", "star", 3),
    ]
    s = fresh(cards=cards)
    s2, _ = collect_set(s)
    assert s2.turn.score == 0
    assert len(s2.selected_cards()) == 3
    assert observe(s2, LEADER).selected_invalid


def test_two_selected_no_resolution():
    s = fresh(cards=triple([(1, 0), (2, 0), (5, 5)]) )
    s2, _ = act(s, LEADER, "forward")
    s3, _ = act(s2, LEADER, "forward")
    assert s3.turn.score == 0
    assert len(s3.selected_cards()) == 2
    assert not observe(s3, LEADER).selected_invalid


def test_bonus_schedule_clamps():
    cfg = GameConfig()
    assert cfg.bonus_for_set(1) == 6
    assert cfg.bonus_for_set(10) == 3
    assert cfg.bonus_for_set(16) == 1
    assert cfg.bonus_for_set(40) == 1


def test_send_instruction_consumes_no_steps():
    s = fresh()
    s2, _ = act(s, LEADER, "forward")
    steps = s2.turn.steps_remaining
    s3, events = act(s2, LEADER, "send_instruction", text="grab the red star")
    assert s3.turn.steps_remaining == steps
    assert [e.kind for e in events] == ["instruction_sent", "instruction_activated"]
    assert s3.instructions[0].status == ACTIVE
    s4, events = act(s3, LEADER, "send_instruction", text="then the torch")
    assert [e.kind for e in events] == ["instruction_sent"]
    assert s4.instructions[1].status == QUEUED


def test_send_instruction_with_zero_steps_left():
    cfg = GameConfig(leader_steps_per_turn=1)
    s = fresh(config=cfg)
    s2, events = act(s, LEADER, "forward")  # exhausts budget, flips turn
    assert s2.turn.active_role == FOLLOWER
    # leader can no longer send (not their turn), but cancel path is tested below
    with pytest.raises(ActionRejected):
        act(s2, LEADER, "send_instruction", text="hi")


def test_instruction_errors():
    s = fresh()
    with pytest.raises(ActionRejected) as e:
        act(s, LEADER, "send_instruction", text="   ")
    assert e.value.code == "empty-instruction-text"
    with pytest.raises(ActionRejected) as e:
        act(s, LEADER, "send_instruction", text="x" * 1001)
    assert e.value.code == "instruction-too-long"
    with pytest.raises(ActionRejected) as e:
        act(s, FOLLOWER, "send_instruction", text="hi")
    assert e.value.code == "wrong-actor"


def test_mark_done_activates_next():
    s = fresh()
    s, _ = act(s, LEADER, "send_instruction", text="one")
    s, _ = act(s, LEADER, "send_instruction", text="two")
    s, _ = act(s, LEADER, "end_turn")
    assert s.turn.active_role == FOLLOWER
    s2, events = act(s, FOLLOWER, "mark_instruction_done")
    assert [e.kind for e in events] == ["instruction_done", "instruction_activated"]
    assert s2.instructions[0].status == DONE
    assert s2.instructions[1].status == ACTIVE
    with pytest.raises(ActionRejected) as e:
        act(s2, LEADER, "mark_instruction_done")
    assert e.value.code == "wrong-actor"


def test_mark_done_without_active_rejected():
    s = fresh()
    s, _ = act(s, LEADER, "end_turn")
    with pytest.raises(ActionRejected) as e:
        act(s, FOLLOWER, "mark_instruction_done")
    assert e.value.code == "no-active-instruction"


def test_leader_cancels_during_follower_turn():
    s = fresh()
    s, _ = act(s, LEADER, "send_instruction", text="one")
    s, _ = act(s, LEADER, "send_instruction", text="two")
    s, _ = act(s, LEADER, "end_turn")
    assert s.turn.active_role == FOLLOWER
    s2, events = act(s, LEADER, "cancel_instructions")
    assert [e.kind for e in events] == ["instruction_cancelled"]
    assert events[0].payload["ids"] == [1, 2]
    assert all(i.status == CANCELLED for i in s2.instructions)


def test_cancel_with_nothing_rejected():
    s = fresh()
    with pytest.raises(ActionRejected):
        act(s, LEADER, "cancel_instructions")


def test_end_turn_flips_and_resets():
    s = fresh()
    s2, events = act(s, LEADER, "end_turn")
    assert s2.turn.active_role == FOLLOWER
    assert s2.turn.turns_remaining == CFG.initial_turns - 1
    assert s2.turn.steps_remaining == CFG.follower_steps_per_turn
    assert events[0].kind == EV_TURN_TRANSITION
    assert events[0].payload["reason"] == "end_turn_action"


def test_steps_exhaustion_triggers_transition():
    cfg = GameConfig(leader_steps_per_turn=2)
    s = fresh(config=cfg)
    s, _ = act(s, LEADER, "turn_left")
    s, events = act(s, LEADER, "turn_right")
    assert s.turn.active_role == FOLLOWER
    trans = [e for e in events if e.kind == EV_TURN_TRANSITION]
    assert trans and trans[0].payload["reason"] == STEPS_EXHAUSTED


def test_turn_exhaustion_game_over():
    cfg = GameConfig(initial_turns=1)
    s = fresh(config=cfg)
    s2, events = act(s, LEADER, "end_turn")
    assert s2.over
    assert [e.kind for e in events] == [EV_TURN_TRANSITION, EV_GAME_OVER]
    with pytest.raises(ActionRejected) as e:
        act(s2, FOLLOWER, "forward")
    assert e.value.code == "game-over"


def test_timer_expiry_flips_turn():
    s = fresh()
    deadline = s.turn.turn_deadline
    same, events = handle_timeout(s, now=deadline - 1.0)
    assert events == [] and same is s
    s2, events = handle_timeout(s, now=deadline + 0.1)
    assert [e.kind for e in events] == ["timer_expired", EV_TURN_TRANSITION]
    assert events[1].payload["reason"] == TIMER_EXPIRED
    assert s2.turn.active_role == FOLLOWER
    # new deadline is now + follower budget
    assert s2.turn.turn_deadline == pytest.approx(deadline + 0.1 + CFG.follower_turn_seconds)


def test_abandoned_marks_over():
    s = fresh()
    s2, events = mark_abandoned(s, LEADER)
    assert s2.over
    assert events[0].kind == "abandoned"
    assert events[0].payload["by"] == LEADER


def test_step_conservation_within_turn():
    rng = random.Random(5)
    s = fresh()
    accepted = 0
    while s.turn.active_role == LEADER and not s.over:
        kind = rng.choice(["forward", "backward", "turn_left", "turn_right"])
        try:
            s, _ = act(s, LEADER, kind)
            accepted += 1
        except ActionRejected:
            pass
    assert accepted == CFG.leader_steps_per_turn


def test_determinism_same_actions_same_hash():
    def run():
        s = fresh(cards=triple([(1, 0), (2, 0), (3, 0)]))
        s, _ = collect_set(s)
        s, _ = act(s, LEADER, "send_instruction", text="go")
        s, _ = act(s, LEADER, "end_turn")
        s, _ = act(s, FOLLOWER, "forward")
        return state_hash(s)

    assert run() == run()


def test_card_count_conserved_over_random_play():
    rng = random.Random(13)
    s = fresh(cards=triple([(1, 0), (2, 0), (3, 0)]))
    n = len(s.cards)
    for _ in range(300):
        if s.over:
            break
        role = s.turn.active_role
        kind = rng.choice(["forward", "backward", "turn_left", "turn_right", "end_turn"])
        try:
            s, _ = act(s, role, kind)
        except ActionRejected:
            continue
        assert len(s.cards) == n
        assert s.turn.score == s.turn.sets_collected


# --- replay ---


def scripted_game():
    s, events = start_game(build_map(cards=triple([(1, 0), (2, 0), (3, 0)]), follower=(0, 6)), CFG, 7)
    log = list(events)
    script = [
        (LEADER, "send_instruction", "pick things up"),
        (LEADER, "forward", None),
        (LEADER, "forward", None),
        (LEADER, "forward", None),
        (LEADER, "end_turn", None),
        (FOLLOWER, "mark_instruction_done", None),
        (FOLLOWER, "forward", None),
        (FOLLOWER, "end_turn", None),
        (LEADER, "turn_left", None),
        (LEADER, "end_turn", None),
    ]
    for actor, kind, text in script:
        s, evs = act(s, actor, kind, text=text)
        log.extend(evs)
    return s, log


def test_replay_base_case():
    m = build_map(cards=triple([(1, 0), (2, 0), (3, 0)]), follower=(0, 6))
    s, events = start_game(m, CFG, 7)
    replayed = replay_log(events)
    assert state_hash(replayed) == state_hash(new_game(m, CFG, 7))


def test_replay_full_log_matches_live_hash():
    live, log = scripted_game()
    assert state_hash(replay_log(log)) == state_hash(live)


def test_replay_prefix_matches_live_snapshots():
    m = build_map(cards=triple([(1, 0), (2, 0), (3, 0)]), follower=(0, 6))
    s, events = start_game(m, CFG, 7)
    log = list(events)
    snapshots = {len(log): state_hash(s)}
    for actor, kind, text in [
        (LEADER, "forward", None),
        (LEADER, "forward", None),
        (LEADER, "forward", None),
        (LEADER, "end_turn", None),
    ]:
        s, evs = act(s, actor, kind, text=text)
        log.extend(evs)
        snapshots[len(log)] = state_hash(s)
    # folding each prefix that ends on an action boundary equals the live snapshot
    state = None
    for k, event in enumerate(log, start=1):
        state = replay_step(state, event)
        if k in snapshots:
            assert state_hash(state) == snapshots[k]


def test_replay_detects_tampering():
    _, log = scripted_game()
    bad = [e for e in log]
    for e in bad:
        if e.kind == EV_MOVE:
            e.payload = dict(e.payload, steps_remaining=e.payload["steps_remaining"] + 1)
            break
    with pytest.raises(ReplayError):
        replay_log(bad)


def test_replay_requires_game_start_first():
    _, log = scripted_game()
    with pytest.raises(ReplayError):
        replay_log(log[1:])
    with pytest.raises(ReplayError):
        replay_log([])


# --- observations ---


def test_leader_observation_sees_everything():
    s = fresh(cards=triple([(1, 0), (2, 0), (3, 0)]))
    obs = observe(s, LEADER)
    assert len(obs.cells) == s.map.rows * s.map.cols
    assert len(obs.cards) == 3
    assert all("color" in c for c in obs.cards)
    assert obs.other_pose is not None


def test_follower_observation_fogged():
    s = fresh(follower=(3, 3))
    obs = observe(s, FOLLOWER)
    for cell in obs.cells:
        from hexduet.hexgrid import distance

        assert distance(cell, HexCoord(3, 3)) <= CFG.fog_range
    assert {tuple(t["cell"]) for t in obs.tiles} == {tuple(c) for c in obs.cells}


def test_follower_fog_range_zero_sees_own_cell_only():
    cfg = GameConfig(fog_range=0)
    s = fresh(config=cfg, follower=(3, 3))
    obs = observe(s, FOLLOWER)
    assert obs.cells == [HexCoord(3, 3)]


def test_follower_does_not_see_queued_instructions():
    s = fresh()
    s, _ = act(s, LEADER, "send_instruction", text="one")
    s, _ = act(s, LEADER, "send_instruction", text="two")
    obs = observe(s, FOLLOWER)
    statuses = {i["status"] for i in obs.instructions}
    assert QUEUED not in statuses
    assert len(obs.instructions) == 1
    leader_obs = observe(s, LEADER)
    assert len(leader_obs.instructions) == 2


def test_hide_card_patterns_masks_unselected():
    cfg = GameConfig(fog_range=6, hide_card_patterns=True)
    s = fresh(cards=triple([(1, 6), (2, 6), (3, 6)]), follower=(0, 6), config=cfg)
    s_sel, _ = act(s, LEADER, "end_turn")
    s_sel, _ = act(s_sel, FOLLOWER, "forward")  # select the card at (1,6)
    obs = observe(s_sel, FOLLOWER)
    for c in obs.cards:
        if c["selected"]:
            assert "color" in c
        else:
            assert "color" not in c and "shape" not in c and "count" not in c
    # leader still sees patterns
    assert all("color" in c for c in observe(s_sel, LEADER).cards)


def test_follower_sees_leader_only_within_fog():
    s = fresh(leader=(0, 0), follower=(6, 6))
    obs = observe(s, FOLLOWER)
    assert obs.other_pose is None
    near = fresh(leader=(5, 6), follower=(6, 6))
    # follower at heading 0 faces +q; leader at (5,6) is behind, rotate to face it
    s2, _ = act(near, LEADER, "end_turn")
    s3, _ = act(s2, FOLLOWER, "turn_left")
    s4, _ = act(s3, FOLLOWER, "turn_left")
    s5, _ = act(s4, FOLLOWER, "turn_left")
    obs = observe(s5, FOLLOWER)
    assert obs.other_pose is not None


def test_observation_time_remaining():
    s = fresh()
    obs = observe(s, LEADER, now=10.0)
    assert obs.turn["time_remaining"] == pytest.approx(CFG.leader_turn_seconds - 10.0)
    assert observe(s, LEADER).turn["time_remaining"] is None


# --- legal actions ---


def test_legal_actions_examples():
    s = fresh(water=[(1, 0)])
    legal = legal_actions(s, LEADER)
    assert "forward" not in legal
    assert "send_instruction" in legal and "end_turn" in legal
    assert legal_actions(s, FOLLOWER) == {"noop"}
    s2, _ = act(s, LEADER, "send_instruction", text="go")
    s3, _ = act(s2, LEADER, "end_turn")
    assert "cancel_instructions" in legal_actions(s3, LEADER)
    assert "mark_instruction_done" in legal_actions(s3, FOLLOWER)
    assert legal_actions(fresh(config=GameConfig(initial_turns=0)), LEADER) == set()


def test_legal_actions_agree_with_apply_action():
    rng = random.Random(99)
    s = fresh(cards=triple([(1, 0), (2, 0), (3, 0)]) )
    probes = {
        "forward": Action("forward"),
        "backward": Action("backward"),
        "turn_left": Action("turn_left"),
        "turn_right": Action("turn_right"),
        "end_turn": Action("end_turn"),
        "noop": Action("noop"),
        "send_instruction": Action("send_instruction", text="probe"),
        "mark_instruction_done": Action("mark_instruction_done"),
        "cancel_instructions": Action("cancel_instructions"),
    }
    for _ in range(400):
        if s.over:
            break
        for role in (LEADER, FOLLOWER):
            legal = legal_actions(s, role)
            for kind, action in probes.items():
                try:
                    apply_action(s, role, action, now=0.0)
                    ok = True
                except ActionRejected:
                    ok = False
                assert (kind in legal) == ok, f"{role} {kind} mismatch"
        role = s.turn.active_role
        choices = sorted(legal_actions(s, role))
        kind = rng.choice(choices)
        s, _ = apply_action(s, role, probes[kind], now=0.0)
