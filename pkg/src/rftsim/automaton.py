"""Executable region automaton.

States correspond to recorded instructions grouped into regions; one
distinguished state (id 0) accounts for every instruction executed outside
any region, i.e. interpreter-side.  The automaton is traversed one
instruction at a time and is lazily extended with new edges; whole regions
are appended by the simulation engine when a region formation technique
finishes a recording.

Transition resolution for an incoming instruction address, in order:

1. follow the current state's outgoing edge keyed by that address, if any;
2. otherwise, if any region state holds that address, create an edge from
   the current state to the one owned by the earliest-created region and
   follow it;
3. otherwise fall back to the interpreter state (no edge is created).

The same guest address may be materialised in several regions (code
duplication); rule 2 always prefers the earliest-created region,
mirroring an address map that keeps its first translation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Mapping, Optional, Sequence

from .trace_io import TraceItem

NTE_STATE = 0


class TransitionKind(IntEnum):
    """Classification of one consumed instruction by source/target side."""

    STAYED_INTERP = 0
    INTERP_TO_NATIVE = 1
    NATIVE_TO_INTERP = 2
    STAYED_NATIVE = 3
    NATIVE_TO_NATIVE = 4


_K = (TransitionKind.STAYED_INTERP, TransitionKind.INTERP_TO_NATIVE,
      TransitionKind.NATIVE_TO_INTERP, TransitionKind.STAYED_NATIVE,
      TransitionKind.NATIVE_TO_NATIVE)

INTERP_KINDS = (TransitionKind.STAYED_INTERP, TransitionKind.NATIVE_TO_INTERP)


class Region:
    """A formed region: its states plus raw execution counters.

    ``states`` lists the linearly recorded states in recording order;
    ``expansion_states`` holds states added by look-ahead expansion.  The
    head is the first recorded state and the core tail is the last
    recorded state, expansion or not: a traversal starts when the head
    executes and completes when the core tail executes before control
    leaves the region.
    """

    __slots__ = ("rid", "entry_state", "states", "core_tail_state",
                 "expansion_states", "entry_address", "entries_interp",
                 "entries_native", "dyn_count", "head_execs", "tail_execs",
                 "completions", "in_traversal")

    def __init__(self, rid: int, entry_state: int, states: list[int],
                 core_tail_state: int, expansion_states: list[int],
                 entry_address: int):
        self.rid = rid
        self.entry_state = entry_state
        self.states = states
        self.core_tail_state = core_tail_state
        self.expansion_states = expansion_states
        self.entry_address = entry_address
        self.entries_interp = 0
        self.entries_native = 0
        self.dyn_count = 0
        self.head_execs = 0
        self.tail_execs = 0
        self.completions = 0
        self.in_traversal = False

    @property
    def static_size(self) -> int:
        return len(self.states) + len(self.expansion_states)

    @property
    def entries(self) -> int:
        return self.entries_interp + self.entries_native


@dataclass(frozen=True)
class RegionStats:
    """Immutable counter snapshot for one region."""

    rid: int
    creation_index: int
    entry_address: int
    static_size: int
    recorded_size: int
    expansion_size: int
    entries_from_interpreter: int
    entries_from_native: int
    dynamic_instructions: int
    head_executions: int
    tail_executions: int
    completed_traversals: int

    @property
    def entries(self) -> int:
        return self.entries_from_interpreter + self.entries_from_native

    @property
    def completion_ratio(self) -> Optional[float]:
        if self.head_executions == 0:
            return None
        return self.completed_traversals / self.head_executions


class Automaton:
    """The region automaton plus its global execution counters.

    Mutated by exactly one simulation; never shared while running.
    """

    def __init__(self):
        # State id 0 is the interpreter (no-region) state; its address and
        # size slots are unused.
        self._addr: list[int] = [0]
        self._size: list[int] = [0]
        self._owner: list[int] = [-1]
        self._exec: list[int] = [0]
        self._edges: list[dict[int, list[int]]] = [{}]
        self._addr_index: dict[int, list[int]] = {}
        self._regions: list[Region] = []
        self._cur = NTE_STATE
        self._cur_edges = self._edges[0]
        self._cur_owner = -1
        self.total = 0
        self.interp = 0
        self.native = 0
        self.region_transitions = 0

    # -- introspection ------------------------------------------------

    @property
    def num_states(self) -> int:
        return len(self._addr)

    @property
    def num_regions(self) -> int:
        return len(self._regions)

    @property
    def nte_executions(self) -> int:
        return self._exec[0]

    @property
    def cursor(self) -> int:
        return self._cur

    def regions(self) -> Sequence[Region]:
        """Live region objects, creation order.  Treat as read-only."""
        return self._regions

    def state_owner(self, sid: int) -> int:
        """Region id owning a state, or -1 for the interpreter state."""
        return self._owner[sid]

    def state_address(self, sid: int) -> int:
        return self._addr[sid]

    def state_executions(self, sid: int) -> int:
        return self._exec[sid]

    def states_at(self, address: int) -> Sequence[int]:
        """State ids holding an address, ordered by owning region creation."""
        return self._addr_index.get(address, ())

    # -- stepping -------------------------------------------------------

    def step_addr(self, address: int, size: int) -> TransitionKind:
        """Consume one instruction; returns the transition performed.

        Kept argument-flat so the engine's inner loop avoids building
        per-item objects.  ``size`` is recorded only when a new edge's
        target needs it; states keep the size they were recorded with.
        """
        e = self._cur_edges.get(address)
        if e is None:
            cands = self._addr_index.get(address)
            if cands is None:
                # rule 3: interpreter fallback, no edge materialised
                self.total += 1
                self.interp += 1
                self._exec[0] += 1
                src = self._cur_owner
                if src >= 0:
                    self._regions[src].in_traversal = False
                    self._cur = NTE_STATE
                    self._cur_edges = self._edges[0]
                    self._cur_owner = -1
                    return _K[2]
                return _K[0]
            tid = cands[0]
            self._cur_edges[address] = [tid, 1]
        else:
            tid = e[0]
            e[1] += 1
        # edges only ever target region states
        self._exec[tid] += 1
        self.total += 1
        self.native += 1
        own = self._owner[tid]
        src = self._cur_owner
        r = self._regions[own]
        r.dyn_count += 1
        if own == src:
            kind = 3
        elif src < 0:
            kind = 1
            r.entries_interp += 1
        else:
            kind = 4
            self.region_transitions += 1
            r.entries_native += 1
            self._regions[src].in_traversal = False
        if tid == r.entry_state:
            r.head_execs += 1
            r.in_traversal = True
        if tid == r.core_tail_state:
            r.tail_execs += 1
            if r.in_traversal:
                r.completions += 1
                r.in_traversal = False
        self._cur = tid
        self._cur_edges = self._edges[tid]
        self._cur_owner = own
        return _K[kind]

    def step(self, item: TraceItem) -> TransitionKind:
        return self.step_addr(item[0], item[1])

    def bulk_interp(self, count: int) -> None:
        """Attribute ``count`` consecutive interpreter-side instructions at
        once.  Only legal while the cursor sits on the interpreter state
        and no address in the gap is held by any region; the engine uses
        this for region-free stretches where each step would be a plain
        interpreter self-transition."""
        if self._cur != NTE_STATE:
            raise RuntimeError("bulk interpreter accounting requires the interpreter state")
        self.total += count
        self.interp += count
        self._exec[0] += count

    def run_native_stretch(self, addrs: Sequence[int], sizes: Sequence[int],
                           i: int, end: int) -> tuple[int, int]:
        """Consume items ``addrs[i:end]`` while execution stays native.

        Semantically identical to calling :meth:`step_addr` per item, but
        with the loop state held in locals; returns ``(next_i, kind)``
        where ``kind`` is the transition of the last consumed item.  Stops
        after the first interpreter-side landing (so a region manager can
        resume observing) or at ``end``.  Only legal while the cursor is
        on a region state.
        """
        cur_edges = self._cur_edges
        cur_owner = self._cur_owner
        if cur_owner < 0:
            raise RuntimeError("native stretch requires a region-state cursor")
        edges_l = self._edges
        exec_l = self._exec
        owner_l = self._owner
        regions = self._regions
        index = self._addr_index
        r = regions[cur_owner]
        total = 0
        native = 0
        transitions = 0
        tid = self._cur
        kind = 3
        while i < end:
            a = addrs[i]
            e = cur_edges.get(a)
            if e is not None:
                e[1] += 1
                tid = e[0]
            else:
                cands = index.get(a)
                if cands is None:
                    # interpreter fallback ends the stretch
                    total += 1
                    self.interp += 1
                    exec_l[0] += 1
                    r.in_traversal = False
                    tid = NTE_STATE
                    cur_edges = edges_l[0]
                    cur_owner = -1
                    i += 1
                    kind = 2
                    break
                tid = cands[0]
                cur_edges[a] = [tid, 1]
            exec_l[tid] += 1
            total += 1
            native += 1
            own = owner_l[tid]
            if own != cur_owner:
                transitions += 1
                r.in_traversal = False
                r = regions[own]
                r.entries_native += 1
                cur_owner = own
            r.dyn_count += 1
            if tid == r.entry_state:
                r.head_execs += 1
                r.in_traversal = True
            if tid == r.core_tail_state:
                r.tail_execs += 1
                if r.in_traversal:
                    r.completions += 1
                    r.in_traversal = False
            cur_edges = edges_l[tid]
            i += 1
        self._cur = tid
        self._cur_edges = cur_edges
        self._cur_owner = cur_owner
        self.total += total
        self.native += native
        self.region_transitions += transitions
        return i, kind

    # -- growth ---------------------------------------------------------

    def append_region(self, recorded: Sequence[tuple[int, int]],
                      expansion: Sequence[tuple[int, int]] = (),
                      expansion_successors: Optional[Mapping[int, Iterable[int]]] = None,
                      ) -> int:
        """Install a finished recording as a new region; returns its id.

        ``recorded`` is the linear recording, in order, as (address, size)
        pairs; consecutive recorded states are wired with fresh edges.
        ``expansion`` lists additional (address, size) pairs, disjoint from
        the recorded addresses, wired according to ``expansion_successors``
        (address -> successor addresses, all within this region).  The
        cursor does not move.
        """
        if not recorded:
            raise ValueError("empty recording")
        rid = len(self._regions)
        addr_l = self._addr
        by_addr: dict[int, int] = {}
        state_ids: list[int] = []
        for a, s in recorded:
            sid = len(addr_l)
            addr_l.append(a)
            self._size.append(s)
            self._owner.append(rid)
            self._exec.append(0)
            self._edges.append({})
            state_ids.append(sid)
            if a not in by_addr:
                by_addr[a] = sid
        for i in range(len(state_ids) - 1):
            nxt = state_ids[i + 1]
            edges = self._edges[state_ids[i]]
            key = addr_l[nxt]
            if key not in edges:
                edges[key] = [nxt, 0]
        exp_ids: list[int] = []
        if expansion:
            rec_addrs = {a for a, _ in recorded}
            for a, s in expansion:
                if a in rec_addrs:
                    raise ValueError(f"expansion address {a:#x} duplicates the recording")
                if a in by_addr:
                    raise ValueError(f"duplicate expansion address {a:#x}")
                sid = len(addr_l)
                addr_l.append(a)
                self._size.append(s)
                self._owner.append(rid)
                self._exec.append(0)
                self._edges.append({})
                exp_ids.append(sid)
                by_addr[a] = sid
            for src_addr, targets in (expansion_successors or {}).items():
                src_sid = by_addr.get(src_addr)
                if src_sid is None:
                    raise ValueError(f"expansion successor source {src_addr:#x} not in region")
                edges = self._edges[src_sid]
                for t in targets:
                    t_sid = by_addr.get(t)
                    if t_sid is None:
                        raise ValueError(f"expansion successor target {t:#x} not in region")
                    if t not in edges:
                        edges[t] = [t_sid, 0]
        region = Region(rid=rid, entry_state=state_ids[0], states=state_ids,
                        core_tail_state=state_ids[-1], expansion_states=exp_ids,
                        entry_address=recorded[0][0])
        self._regions.append(region)
        index = self._addr_index
        for sid in state_ids:
            index.setdefault(addr_l[sid], []).append(sid)
        for sid in exp_ids:
            index.setdefault(addr_l[sid], []).append(sid)
        return rid

    # -- reporting --------------------------------------------------------

    def region_stats(self, rid: int) -> RegionStats:
        if not 0 <= rid < len(self._regions):
            raise KeyError(f"unknown region id {rid}")
        r = self._regions[rid]
        return RegionStats(
            rid=r.rid, creation_index=r.rid, entry_address=r.entry_address,
            static_size=r.static_size, recorded_size=len(r.states),
            expansion_size=len(r.expansion_states),
            entries_from_interpreter=r.entries_interp,
            entries_from_native=r.entries_native,
            dynamic_instructions=r.dyn_count,
            head_executions=r.head_execs, tail_executions=r.tail_execs,
            completed_traversals=r.completions)

    def all_region_stats(self) -> list[RegionStats]:
        return [self.region_stats(rid) for rid in range(len(self._regions))]

    def dump(self) -> dict:
        """Deterministic structure of all states, owners, edges and counters.

        Suitable for golden-file comparisons: state ids ascend, edges are
        sorted by key address.
        """
        states = []
        for sid in range(len(self._addr)):
            edges = [[a, tc[0], tc[1]] for a, tc in sorted(self._edges[sid].items())]
            states.append({
                "id": sid,
                "address": None if sid == NTE_STATE else self._addr[sid],
                "size": None if sid == NTE_STATE else self._size[sid],
                "region": None if self._owner[sid] < 0 else self._owner[sid],
                "executions": self._exec[sid],
                "edges": edges,
            })
        regions = []
        for r in self._regions:
            regions.append({
                "id": r.rid,
                "entry_address": r.entry_address,
                "entry_state": r.entry_state,
                "core_tail_state": r.core_tail_state,
                "recorded_states": list(r.states),
                "expansion_states": list(r.expansion_states),
                "entries_from_interpreter": r.entries_interp,
                "entries_from_native": r.entries_native,
                "dynamic_instructions": r.dyn_count,
                "head_executions": r.head_execs,
                "tail_executions": r.tail_execs,
                "completed_traversals": r.completions,
            })
        return {
            "total_instructions": self.total,
            "interpreted_instructions": self.interp,
            "native_instructions": self.native,
            "region_transitions": self.region_transitions,
            "states": states,
            "regions": regions,
        }


def new_automaton() -> Automaton:
    """Fresh automaton holding only the interpreter state."""
    return Automaton()
