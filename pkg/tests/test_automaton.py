import random

import pytest

from rftsim.automaton import Automaton, TransitionKind, new_automaton
from rftsim.trace_io import TraceItem

A, B, C = 0x100, 0x104, 0x108


def step(auto, addr, size=4):
    return auto.step(TraceItem(addr, size))


# --- creation ---------------------------------------------------------------

def test_new_automaton_has_only_interpreter_state():
    auto = new_automaton()
    assert auto.num_states == 1
    assert auto.num_regions == 0
    assert auto.total == 0
    assert auto.cursor == 0


def test_fresh_automaton_counters_zero():
    auto = new_automaton()
    assert (auto.interp, auto.native, auto.region_transitions) == (0, 0, 0)
    assert auto.nte_executions == 0


# --- step resolution --------------------------------------------------------

def test_unknown_address_stays_interp():
    auto = new_automaton()
    assert step(auto, 0xDEAD) is TransitionKind.STAYED_INTERP
    assert auto.interp == 1 and auto.native == 0
    assert auto.nte_executions == 1


def test_entry_into_region_counts_interp_entry():
    auto = new_automaton()
    rid = auto.append_region([(A, 4), (B, 4), (C, 4)])
    assert step(auto, A) is TransitionKind.INTERP_TO_NATIVE
    stats = auto.region_stats(rid)
    assert stats.entries_from_interpreter == 1
    assert stats.head_executions == 1


def test_side_entry_counts_entry_but_not_head():
    auto = new_automaton()
    rid = auto.append_region([(A, 4), (B, 4), (C, 4)])
    step(auto, B)
    stats = auto.region_stats(rid)
    assert stats.entries_from_interpreter == 1
    assert stats.head_executions == 0
    # side entry runs to the tail but never completes a traversal
    step(auto, C)
    stats = auto.region_stats(rid)
    assert stats.tail_executions == 1
    assert stats.completed_traversals == 0


def test_internal_back_edge_is_stayed_native():
    auto = new_automaton()
    rid = auto.append_region([(A, 4), (B, 4), (C, 4)])
    assert step(auto, A) is TransitionKind.INTERP_TO_NATIVE
    assert step(auto, B) is TransitionKind.STAYED_NATIVE
    assert step(auto, C) is TransitionKind.STAYED_NATIVE
    # back edge to the head is created lazily, stays in the region
    assert step(auto, A) is TransitionKind.STAYED_NATIVE
    stats = auto.region_stats(rid)
    assert stats.head_executions == 2
    assert stats.entries_from_interpreter == 1
    assert stats.completed_traversals == 1


def test_region_exit_and_reentry():
    auto = new_automaton()
    auto.append_region([(A, 4), (B, 4)])
    step(auto, A)
    assert step(auto, 0x900) is TransitionKind.NATIVE_TO_INTERP
    assert step(auto, A) is TransitionKind.INTERP_TO_NATIVE
    assert auto.region_stats(0).entries_from_interpreter == 2


def test_region_to_region_transition():
    auto = new_automaton()
    auto.append_region([(A, 4), (B, 4)])
    auto.append_region([(C, 4)])
    step(auto, A)
    step(auto, B)
    assert step(auto, C) is TransitionKind.NATIVE_TO_NATIVE
    assert auto.region_transitions == 1
    assert auto.region_stats(1).entries_from_native == 1


def test_duplicate_address_resolves_to_earliest_region():
    auto = new_automaton()
    auto.append_region([(A, 4), (B, 4)])
    auto.append_region([(A, 4), (C, 4)])
    assert [auto.state_owner(s) for s in auto.states_at(A)] == [0, 1]
    step(auto, A)
    assert auto.region_stats(0).entries_from_interpreter == 1
    assert auto.region_stats(1).entries_from_interpreter == 0


def test_interrupted_traversal_not_completed():
    auto = new_automaton()
    rid = auto.append_region([(A, 4), (B, 4), (C, 4)])
    step(auto, A)
    step(auto, B)
    step(auto, 0x900)  # leaves before the tail
    step(auto, C)      # re-enters at the tail without a head execution
    stats = auto.region_stats(rid)
    assert stats.head_executions == 1
    assert stats.tail_executions == 1
    assert stats.completed_traversals == 0


def test_single_state_region_completes_every_landing():
    auto = new_automaton()
    rid = auto.append_region([(A, 4)])
    step(auto, A)
    step(auto, A)
    stats = auto.region_stats(rid)
    assert stats.head_executions == 2
    assert stats.completed_traversals == 2


# --- append_region ----------------------------------------------------------

def test_append_shape():
    auto = new_automaton()
    rid = auto.append_region([(A, 4), (B, 4), (C, 4)])
    dump = auto.dump()
    region = dump["regions"][rid]
    assert region["entry_address"] == A
    assert len(region["recorded_states"]) == 3
    states = {s["id"]: s for s in dump["states"]}
    assert states[region["entry_state"]]["address"] == A
    assert states[region["core_tail_state"]]["address"] == C
    edge_pairs = [(s["id"], e[1]) for s in dump["states"] for e in s["edges"]]
    assert sorted(edge_pairs) == [(1, 2), (2, 3)]


def test_append_same_recording_twice_duplicates():
    auto = new_automaton()
    auto.append_region([(A, 4), (B, 4), (C, 4)])
    auto.append_region([(A, 4), (B, 4), (C, 4)])
    owners = [auto.state_owner(s) for s in auto.states_at(A)]
    assert owners == [0, 1]


def test_append_with_expansion_matches_manual_graph():
    auto = new_automaton()
    rid = auto.append_region([(A, 4), (B, 4), (C, 4)],
                             expansion=[(0x10C, 4), (0x110, 4)],
                             expansion_successors={0x110: (A,), C: (0x10C,),
                                                   0x10C: (0x110,)})
    dump = auto.dump()
    region = dump["regions"][rid]
    assert len(region["recorded_states"]) == 3
    assert len(region["expansion_states"]) == 2
    # brute-force expected adjacency: consecutive recording edges plus the
    # supplied successor map
    ids = {dump["states"][s]["address"]: s for s in region["recorded_states"]
           + region["expansion_states"]}
    expected = {(ids[A], ids[B]), (ids[B], ids[C]), (ids[0x110], ids[A]),
                (ids[C], ids[0x10C]), (ids[0x10C], ids[0x110])}
    actual = {(s["id"], e[1]) for s in dump["states"] for e in s["edges"]}
    assert actual == expected


def test_append_empty_recording_rejected():
    with pytest.raises(ValueError, match="empty"):
        new_automaton().append_region([])


def test_append_expansion_overlapping_recording_rejected():
    auto = new_automaton()
    with pytest.raises(ValueError, match="duplicates"):
        auto.append_region([(A, 4)], expansion=[(A, 4)], expansion_successors={})


def test_region_stats_unknown_id():
    with pytest.raises(KeyError):
        new_automaton().region_stats(0)


def test_region_stats_fresh_region_zeroed():
    auto = new_automaton()
    rid = auto.append_region([(A, 4)])
    stats = auto.region_stats(rid)
    assert (stats.entries, stats.dynamic_instructions, stats.head_executions,
            stats.completed_traversals) == (0, 0, 0, 0)


# --- invariants -------------------------------------------------------------

def _check_invariants(auto):
    dump = auto.dump()
    assert auto.interp + auto.native == auto.total
    # execution count equals the sum of incoming edge traversals
    incoming = {s["id"]: 0 for s in dump["states"]}
    for s in dump["states"]:
        for _, target, count in s["edges"]:
            incoming[target] += count
    for s in dump["states"]:
        if s["id"] != 0:
            assert s["executions"] == incoming[s["id"]]
    # per-region dynamic counts
    for r in dump["regions"]:
        dyn = sum(dump["states"][sid]["executions"]
                  for sid in r["recorded_states"] + r["expansion_states"])
        assert dyn == r["dynamic_instructions"]
    assert sum(r["dynamic_instructions"] for r in dump["regions"]) == auto.native
    assert (sum(r["entries_from_native"] for r in dump["regions"])
            == auto.region_transitions)
    # address index holds every region state exactly once
    indexed = [sid for addr in {s["address"] for s in dump["states"][1:]}
               for sid in auto.states_at(addr)]
    assert sorted(indexed) == [s["id"] for s in dump["states"][1:]]


def test_invariants_after_random_walk():
    rng = random.Random(7)
    auto = new_automaton()
    addrs = [0x100 + 4 * i for i in range(12)]
    auto.append_region([(addrs[0], 4), (addrs[1], 4)])
    auto.append_region([(addrs[2], 4), (addrs[3], 4), (addrs[4], 4)])
    auto.append_region([(addrs[1], 4)])
    for _ in range(3000):
        step(auto, rng.choice(addrs + [0x900, 0x904]))
    _check_invariants(auto)


def test_replay_deterministic():
    rng = random.Random(3)
    seq = [rng.choice([A, B, C, 0x200, 0x204]) for _ in range(500)]

    def run():
        auto = new_automaton()
        auto.append_region([(A, 4), (B, 4)])
        auto.append_region([(C, 4), (0x200, 4)])
        for a in seq:
            step(auto, a)
        return auto.dump()

    assert run() == run()


def test_bulk_interp_matches_steps():
    auto1 = new_automaton()
    auto1.bulk_interp(5)
    auto2 = new_automaton()
    for i in range(5):
        step(auto2, 0x500 + 4 * i)
    assert (auto1.total, auto1.interp, auto1.nte_executions) == \
           (auto2.total, auto2.interp, auto2.nte_executions)


def test_bulk_interp_requires_interpreter_cursor():
    auto = new_automaton()
    auto.append_region([(A, 4)])
    step(auto, A)
    with pytest.raises(RuntimeError):
        auto.bulk_interp(1)


def test_run_native_stretch_equals_steps():
    rng = random.Random(11)
    addrs = [A, B, C, 0x200, 0x204, 0x900]
    seq = [rng.choice(addrs) for _ in range(2000)]
    sizes = [4] * len(seq)

    ref = new_automaton()
    ref.append_region([(A, 4), (B, 4), (C, 4)])
    ref.append_region([(0x200, 4), (0x204, 4)])
    for a in seq:
        step(ref, a)

    fast = new_automaton()
    fast.append_region([(A, 4), (B, 4), (C, 4)])
    fast.append_region([(0x200, 4), (0x204, 4)])
    i = 0
    kind = 0
    while i < len(seq):
        if kind >= 3:
            i, kind = fast.run_native_stretch(seq, sizes, i, len(seq))
        else:
            kind = fast.step_addr(seq[i], 4)
            i += 1
    assert fast.dump() == ref.dump()
