"""Cone-type automaton: an acceptor of shortlex normal forms.

Two normal forms ``x`` and ``y`` have the same automaton cone type iff
``{u : x u is a normal form} = {u : y u is a normal form}``, i.e. iff they
reach the same state of the minimal DFA of the normal-form language.  The
DFA is obtained by exploring word-difference frames along admissible
letters and merging equivalent frames (Moore partition refinement).

By default the initial partition also separates frames by the set of
letters ``s`` with ``|x s| = |x| + 1``, so that a state determines its
geodesic extensions too.  Each state then lies inside one cone type, which
is all the renewal construction needs.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .shortlex import ShortlexEngine, get_engine
from .words import Presentation, Word, format_word

MISSING = -1


class NotNormalFormError(ValueError):
    """A word fell off the automaton: it is not a shortlex normal form."""


@dataclass
class ConeAutomaton:
    """Deterministic acceptor with per-state cone-type flags.

    ``transitions[s, x]`` is the next state or ``MISSING``.  ``representatives[s]``
    is the shortlex-least normal form reaching ``s``.
    """

    transitions: np.ndarray
    start: int = 0
    presentation: Presentation | None = None
    representatives: list = field(default_factory=list)
    frame_state: np.ndarray | None = None
    recurrent: np.ndarray | None = None
    large: np.ndarray | None = None
    recurrent_connected: bool | None = None
    ubiquity_radius: dict = field(default_factory=dict)
    probe_radius: int | None = None

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_letters(self) -> int:
        return self.transitions.shape[1]

    def step(self, state: int, x: int) -> int:
        return int(self.transitions[state, x])

    def admissible(self, state: int) -> tuple:
        return tuple(int(x) for x in np.flatnonzero(self.transitions[state] >= 0))

    def signature(self, state: int, length: int | None = None) -> Word:
        """Suffix of the state's representative (its shortest context)."""
        w = self.representatives[state] if self.representatives else ()
        return w if length is None else w[-length:] if length else ()

    def to_dict(self) -> dict:
        states = []
        for s in range(self.n_states):
            entry = {
                "id": s,
                "representative": format_word(self.representatives[s]) if self.representatives else None,
                "transitions": {
                    str(x): int(t) for x, t in enumerate(self.transitions[s]) if t >= 0
                },
                "start": s == self.start,
            }
            if self.recurrent is not None:
                entry["recurrent"] = bool(self.recurrent[s])
            if self.large is not None:
                entry["large"] = bool(self.large[s])
            if s in self.ubiquity_radius:
                entry["ubiquity_radius"] = self.ubiquity_radius[s]
            states.append(entry)
        return {
            "group": self.presentation.to_config() if self.presentation else None,
            "n_states": self.n_states,
            "start": self.start,
            "recurrent_connected": self.recurrent_connected,
            "probe_radius": self.probe_radius,
            "states": states,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_table(cls, table: Sequence[Sequence[int]], start: int = 0) -> "ConeAutomaton":
        """Wrap an explicit transition table (used for artificial automata)."""
        return cls(np.asarray(table, dtype=np.int64), start=start)


def _explore_frames(eng: ShortlexEngine) -> tuple[list[int], list[list[int]], list[tuple]]:
    order = [eng.start]
    index = {eng.start: 0}
    succ: list[list[int]] = []
    growing: list[tuple] = []
    queue = deque([eng.start])
    while queue:
        fid = queue.popleft()
        # letters s with |x s| = |x| + 1
        growing.append(tuple(not eng.action(fid, x)[0] for x in eng.letters))
        row = []
        for x in eng.letters:
            if eng.is_push(fid, x):
                nid = eng.edge(fid, x)[0]
                if nid not in index:
                    index[nid] = len(order)
                    order.append(nid)
                    queue.append(nid)
                row.append(index[nid])
            else:
                row.append(MISSING)
        succ.append(row)
    return order, succ, growing


def _minimize(succ: list[list[int]], start: int, labels: Sequence | None = None) -> list[int]:
    """Moore refinement starting from ``labels``; the start state stays alone."""
    n = len(succ)
    if labels is None:
        labels = [()] * n
    first: dict = {}
    cls = [first.setdefault((i == start, labels[i]), len(first)) for i in range(n)]
    n_cls = len(first)
    while True:
        keys: dict = {}
        new = []
        for i in range(n):
            sig = (cls[i],) + tuple(cls[j] if j >= 0 else -1 for j in succ[i])
            new.append(keys.setdefault(sig, len(keys)))
        if len(keys) == n_cls:
            return new
        cls, n_cls = new, len(keys)


def build_automaton(
    p: Presentation, engine: ShortlexEngine | None = None, geodesic_labels: bool = True
) -> ConeAutomaton:
    """DFA of the shortlex normal-form language of ``p``.

    With ``geodesic_labels`` the partition is refined so that a state also
    fixes which letters lengthen the element; otherwise the result is the
    plain minimal DFA.
    """
    eng = engine or get_engine(p)
    order, succ, growing = _explore_frames(eng)
    cls = _minimize(succ, 0, growing if geodesic_labels else None)
    # renumber classes in order of first discovery (shortlex order of representatives)
    renum: dict[int, int] = {}
    reps: list = []
    queue = deque([(0, ())])
    seen = {0}
    while queue:
        i, w = queue.popleft()
        if cls[i] not in renum:
            renum[cls[i]] = len(renum)
            reps.append(w)
        for x, j in enumerate(succ[i]):
            if j >= 0 and j not in seen:
                seen.add(j)
                queue.append((j, w + (x,)))
    n_states = len(renum)
    table = np.full((n_states, len(eng.letters)), MISSING, dtype=np.int64)
    for i, row in enumerate(succ):
        s = renum[cls[i]]
        for x, j in enumerate(row):
            if j >= 0:
                table[s, x] = renum[cls[j]]
    frame_state = np.full(max(order) + 1, MISSING, dtype=np.int64)
    for i, fid in enumerate(order):
        frame_state[fid] = renum[cls[i]]
    return ConeAutomaton(
        transitions=table,
        start=0,
        presentation=p,
        representatives=reps,
        frame_state=frame_state,
    )


def state_of(x: Iterable[int], A: ConeAutomaton) -> int:
    """State reached by feeding ``x`` from the start state."""
    s = A.start
    for letter in x:
        t = A.transitions[s, letter]
        if t < 0:
            raise NotNormalFormError(f"{format_word(tuple(x))} is not a normal form")
        s = int(t)
    return s


def in_cone(root: Sequence[int], y: Sequence[int]) -> bool:
    """Automaton-cone membership: ``root`` is a letter prefix of ``y``."""
    return len(root) <= len(y) and tuple(y[: len(root)]) == tuple(root)


def count_paths(A: ConeAutomaton, n: int) -> int:
    """Number of accepted words of length ``n``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    counts = [0] * A.n_states
    counts[A.start] = 1
    rows = [[int(t) for t in row if t >= 0] for row in A.transitions]
    for _ in range(n):
        nxt = [0] * A.n_states
        for s, c in enumerate(counts):
            if c:
                for t in rows[s]:
                    nxt[t] += c
        counts = nxt
    return sum(counts)


def reachable_states(A: ConeAutomaton) -> set:
    seen = {A.start}
    stack = [A.start]
    while stack:
        s = stack.pop()
        for t in A.transitions[s]:
            if t >= 0 and int(t) not in seen:
                seen.add(int(t))
                stack.append(int(t))
    return seen


def recurrence_classify(A: ConeAutomaton) -> bool:
    """Mark states lying on a directed cycle; return whether they form one SCC.

    The result is also stored on ``A`` (``recurrent``, ``recurrent_connected``).
    """
    n = A.n_states
    rows, cols = np.nonzero(A.transitions >= 0)
    dst = A.transitions[rows, cols]
    graph = csr_matrix((np.ones(len(rows)), (rows, dst)), shape=(n, n))
    _, labels = connected_components(graph, directed=True, connection="strong")
    sizes = np.bincount(labels, minlength=labels.max() + 1)
    self_loop = np.zeros(n, dtype=bool)
    self_loop[rows[dst == rows]] = True
    recurrent = (sizes[labels] > 1) | self_loop
    recurrent[A.start] = recurrent[A.start] and bool(np.any(A.transitions == A.start))
    A.recurrent = recurrent
    A.recurrent_connected = bool(recurrent.any()) and len(set(labels[recurrent])) == 1
    return A.recurrent_connected


def _type_distance(A: ConeAutomaton, ball, target: int, states: np.ndarray) -> np.ndarray:
    """Graph distance inside the ball from every vertex to the nearest ``target`` vertex."""
    dist = np.full(len(ball), -1, dtype=np.int64)
    queue = deque(int(i) for i in np.flatnonzero(states == target))
    for i in queue:
        dist[i] = 0
    while queue:
        i = queue.popleft()
        for j in ball.neighbors[i]:
            if j >= 0 and dist[j] < 0:
                dist[j] = dist[i] + 1
                queue.append(j)
    return dist


def ubiquity_radius(A: ConeAutomaton, ball, target: int) -> int | None:
    """Smallest R such that every R-ball inside ``ball`` meets a ``target`` vertex.

    Only centers ``x`` with ``B_R(x)`` contained in ``ball`` are tested, so
    distances computed within the ball are exact.  Returns None if no
    ``R <= ball.radius`` works.
    """
    states = np.array([state_of(w, A) for w in ball.words])
    dist = _type_distance(A, ball, target, states)
    level = np.asarray(ball.level)
    for R in range(ball.radius + 1):
        centers = level <= ball.radius - R
        d = dist[centers]
        if np.all((d >= 0) & (d <= R)):
            return R
    return None


def mark_large_and_ubiquitous(A: ConeAutomaton, probe_radius: int, ball=None) -> ConeAutomaton:
    """Set the largeness flags and probe ubiquity radii of recurrent states.

    Recurrent cone types of surface and free groups are large (each
    contains a neighborhood of a boundary point), so largeness is set
    structurally; artificial automata get no large states.
    """
    if A.recurrent is None:
        recurrence_classify(A)
    structural = A.presentation is not None and A.presentation.kind in ("surface", "free")
    A.large = A.recurrent.copy() if structural else np.zeros(A.n_states, dtype=bool)
    A.probe_radius = probe_radius
    if A.presentation is None:
        return A
    if ball is None or ball.radius != probe_radius:
        from .oracle import bfs_oracle

        ball = bfs_oracle(A.presentation, probe_radius)
    for s in np.flatnonzero(A.recurrent):
        A.ubiquity_radius[int(s)] = ubiquity_radius(A, ball, int(s))
    return A


def choose_target_type(A: ConeAutomaton, visit_counts: Sequence[int] | None = None) -> int:
    """Large ubiquitous state with the most visits (ties: smallest id)."""
    eligible = [
        s for s in range(A.n_states)
        if A.large is not None and A.large[s] and A.ubiquity_radius.get(s) is not None
    ]
    if not eligible:
        raise ValueError("no large ubiquitous cone type available")
    if visit_counts is None:
        return eligible[0]
    return max(eligible, key=lambda s: (visit_counts[s], -s))


def two_cycle_fixture() -> ConeAutomaton:
    """Artificial automaton whose recurrent states form two disjoint cycles."""
    # start -> 1 <-> 2 and start -> 3 <-> 4 over a two-letter alphabet
    table = [
        [1, 3],
        [2, MISSING],
        [1, MISSING],
        [MISSING, 4],
        [MISSING, 3],
    ]
    return ConeAutomaton.from_table(table)


def build_classified(p: Presentation, probe_radius: int | None = None, ball=None) -> ConeAutomaton:
    """Build, classify recurrence and mark largeness/ubiquity in one go."""
    A = build_automaton(p)
    recurrence_classify(A)
    if probe_radius is None:
        probe_radius = 5 if p.kind == "surface" else 6
    mark_large_and_ubiquitous(A, probe_radius, ball)
    return A
