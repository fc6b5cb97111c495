import numpy as np
import pytest

from plangen.encode import (
    ActionIndexMap,
    decode_action,
    encode_goal_pair,
    encode_init,
    goal_action_map,
    goal_channel_counts,
    init_action_map,
    init_channel_counts,
    mask_goal,
    mask_init,
    stack,
)
from plangen.genmdp import TERMINATE, AtomAction, GenConfig, GenerationMDP
from plangen.pddl import GroundAction, atom_str


@pytest.fixture
def mdp(bw):
    return GenerationMDP(bw, "builtin:blocksworld", GenConfig(max_init_atoms=15, goal_spec=("on(block, block)",)))


def add(mdp, gs, text):
    ext = mdp.extended_state(gs)
    hits = [a for a in mdp.legal_atom_actions(gs) if atom_str(mdp.domain, ext.objects, a) == text]
    return mdp.step_init(gs, hits[0])


def step4(mdp):
    gs = mdp.new_episode()
    for text in ("(ontable ?v0-block)", "(on ?v0-block o1)", "(clear o2)", "(handempty)"):
        gs = add(mdp, gs, text)
    return gs


def test_step4_init_encoding(mdp):
    b = encode_init(step4(mdp), mdp)
    assert b.n == 4
    assert b.value("atoms(on)", "aux") == pytest.approx(1 / 15)
    assert b.value("objects", "aux") == pytest.approx(2 / 15)
    assert [b.value("virtual", "aux", (i,)) for i in range(4)] == [0, 0, 1, 1]
    assert b.value("on", "init", (1, 0)) == 1 and b.value("on", "init", (0, 1)) == 0
    assert b.value("handempty", "init") == 1
    assert b.value("type(block)", "aux", (3,)) == 1


def test_empty_state_encoding(mdp):
    b = encode_init(mdp.new_episode(), mdp)
    truth = [(r, c) for r, chans in enumerate(b.channels) for c, (_, prov) in enumerate(chans) if prov == "init"]
    assert all(not b.arrays[r][..., c].any() for r, c in truth)
    assert b.value("objects", "aux") == 0  # virtual objects are not counted
    assert b.n == 2


def test_channel_counts_by_hand(mdp):
    # arity 0: handempty + (objects, objects(block), 5 per-predicate counts)
    # arity 1: ontable, clear, holding + type(block) + virtual; arity 2: on
    assert init_channel_counts(mdp) == (8, 5, 1, 0)
    assert encode_init(mdp.new_episode(), mdp).in_channels == (8, 5, 1, 0)
    # goal: every predicate twice plus the type channel
    assert goal_channel_counts(mdp) == (2, 7, 2, 0)


def test_counts_are_clamped(bw):
    mdp = GenerationMDP(bw, "builtin:blocksworld", GenConfig(max_init_atoms=2, goal_spec=("on(block, block)",)))
    gs = add(mdp, add(mdp, mdp.new_episode(), "(ontable ?v0-block)"), "(on ?v0-block o1)")
    b = encode_init(gs, mdp)
    assert b.arrays[0].max() <= 1.0 and b.value("objects", "aux") == 1.0


def test_goal_pair_encoding(mdp, bw):
    gs = mdp.terminate_init(step4(mdp))
    b = encode_goal_pair(gs, mdp)
    for name in ("ontable", "clear", "holding"):
        r, ci = b.channel(name, "init")
        _, cg = b.channel(name, "goal")
        assert np.array_equal(b.arrays[r][..., ci], b.arrays[r][..., cg])
    gs = mdp.step_goal(gs, GroundAction(bw.action_index["unstack"], (1, 0)))
    b = encode_goal_pair(gs, mdp)
    assert b.value("holding", "goal", (1,)) == 1 and b.value("holding", "init", (1,)) == 0
    assert not any(name == "virtual" for chans in b.channels for name, _ in chans)
    assert b.in_channels == goal_channel_counts(mdp)


def test_phase_checks(mdp):
    with pytest.raises(ValueError):
        encode_goal_pair(mdp.new_episode(), mdp)
    with pytest.raises(ValueError):
        encode_init(mdp.terminate_init(step4(mdp)), mdp)
    with pytest.raises(ValueError):
        encode_init(mdp.new_episode(), mdp, breadth=1)


def test_encoding_equivariance(mdp):
    """Relabeling real objects permutes every tensor axis the same way."""
    from dataclasses import replace

    from plangen.pddl import Atom, State

    gs = step4(mdp)
    b = encode_init(gs, mdp)
    perm = [1, 0]  # swap o1 and o2
    objs = tuple(gs.s_ic.objects[p] for p in perm)
    inv = {old: new for new, old in enumerate(perm)}
    atoms = frozenset(Atom(a.pred, tuple(inv[i] for i in a.args)) for a in gs.s_ic.atoms)
    pb = encode_init(replace(gs, s_ic=State(objs, atoms)), mdp)
    full = perm + [2, 3]
    for r in range(len(b.arrays)):
        x = b.arrays[r]
        for axis in range(r):
            x = np.take(x, full, axis=axis)
        assert np.array_equal(x, pb.arrays[r])


def test_action_map_round_trip(mdp):
    amap = init_action_map(mdp, 3)
    assert amap.size == 1 + 3 + 9 + 3 + 3 + 1  # ontable, on, clear, handempty, holding, terminate
    for i in range(amap.size):
        assert amap.encode(decode_action(i, amap)) == i
    assert decode_action(amap.termination, amap) is TERMINATE
    with pytest.raises(IndexError):
        decode_action(amap.size, amap)
    with pytest.raises(ValueError):
        amap.encode(AtomAction(0, (5,)))
    g = goal_action_map(mdp, 3)
    assert isinstance(g.decode(0), GroundAction)
    with pytest.raises(ValueError):
        ActionIndexMap([1], 2, "lifted")


def test_masks(mdp, bw):
    gs = mdp.new_episode()
    amap = init_action_map(mdp, encode_init(gs, mdp).n)
    mask = mask_init(gs, mdp, amap)
    assert mask[amap.encode(AtomAction(bw.pred_index["handempty"], ()))]
    assert not mask[amap.encode(AtomAction(bw.pred_index["clear"], (0,)))]
    assert not mask[amap.termination]
    gs = step4(mdp)
    amap = init_action_map(mdp, 4)
    mask = mask_init(gs, mdp, amap)
    assert mask.sum() - mask[amap.termination] == len(mdp.legal_atom_actions(gs))

    budget = GenerationMDP(bw, "builtin:blocksworld", GenConfig(max_init_atoms=1, goal_spec=("on(block, block)",)))
    gs = add(budget, budget.new_episode(), "(ontable ?v0-block)")
    amap = init_action_map(budget, 3)
    mask = mask_init(gs, budget, amap)
    assert mask.sum() == 1 and mask[amap.termination]

    gs = mdp.terminate_init(step4(mdp))
    amap = goal_action_map(mdp, 2)
    mask = mask_goal(gs, mdp, amap)
    assert mask[amap.encode(GroundAction(bw.action_index["unstack"], (1, 0)))] and mask[amap.termination]
    assert mask.sum() == len(mdp.legal_goal_actions(gs)) + 1


def test_goal_deadlock_only_terminates(mdp):
    gs = mdp.terminate_init(step4(mdp))
    amap = goal_action_map(mdp, 2)
    mask = mask_goal(gs, mdp, amap, legal=[])
    assert mask.sum() == 1 and mask[amap.termination]


def test_masked_sampling_never_illegal(mdp):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        gs = mdp.new_episode()
        for _ in range(int(rng.integers(0, 10))):
            legal = mdp.legal_atom_actions(gs)
            if not legal:
                break
            gs = mdp.step_init(gs, legal[int(rng.integers(len(legal)))])
        amap = init_action_map(mdp, encode_init(gs, mdp).n)
        mask = mask_init(gs, mdp, amap)
        idx = int(rng.choice(np.flatnonzero(mask)))
        a = amap.decode(idx)
        if a is TERMINATE:
            continue
        mdp.step_init(gs, a)  # raises if illegal


def test_stack_requires_same_n(mdp):
    a = encode_init(mdp.new_episode(), mdp)
    b = encode_init(step4(mdp), mdp)
    assert stack([a, a])[1].shape == (2, 2, 5)
    with pytest.raises(ValueError):
        stack([a, b])
    with pytest.raises(ValueError):
        stack([])
