"""Exact shortlex normal forms via word differences.

Let ``w`` be a shortlex normal form and ``s`` a letter.  The normal form
``u`` of ``w s`` fellow-travels ``w``: the differences ``w[:t]^-1 u[:t]``
all lie in a fixed finite set ``D``.  For the standard surface-group
presentation ``D`` is the set of elements spelled by subwords of length
at most ``2g`` of cyclic permutations of the relator (the cells between
two nearby geodesics form a ladder of ``4g``-gons).  Free groups need only
the identity.

Reading ``w`` letter by letter we keep, for every reachable difference,
the lexicographically least ``u``-prefix realizing it.  Only the rank
order of those prefixes matters, so the whole layer is a finite object
(a *frame*) and layer transitions are memoized.  A position is a stack of
letters and frames; multiplying by a letter either pushes or follows
back-pointers until the two paths meet again at difference ``e``.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from .oracle import ElementIndex
from .words import Presentation, Word, free_reduce, inverse

IDENTITY = 0


def difference_set(p: Presentation) -> ElementIndex:
    """Elements spelled by relator subwords of length <= 2g (id 0 = e)."""
    index = ElementIndex(p)
    index.add(())
    if p.kind == "free":
        return index
    cyc = p.cyclic_relators()
    for k in range(1, 2 * p.genus + 1):
        for c in sorted({c[:k] for c in cyc}):
            index.add(c)
    return index


class _Frame:
    __slots__ = ("main", "short", "edges", "actions")

    # short[s] is the index into the previous frame's main from which the
    # product with s is one letter shorter, or -1
    def __init__(self, main: tuple, short: tuple, n_letters: int):
        self.main = main
        self.short = short or (-1,) * n_letters
        self.edges = [None] * n_letters
        self.actions = [None] * n_letters


class ShortlexEngine:
    """Memoized word-difference machine for one presentation.

    ``differences`` may be passed explicitly (any finite set containing
    the true word differences gives the same normal forms); the default is
    :func:`difference_set`.
    """

    def __init__(self, p: Presentation, differences: ElementIndex | None = None):
        self.presentation = p
        self.letters = p.letters
        nl = len(self.letters)
        self.n_letters = nl
        index = differences if differences is not None else difference_set(p)
        self.differences = index
        nd = len(index)
        # step[d][x][y] = id of x^-1 d y, or -1 if outside the set
        step = []
        for d in range(nd):
            wd = index.words[d]
            step.append(tuple(
                tuple(index.find(free_reduce((x ^ 1,) + wd + (y,))) for y in self.letters)
                for x in self.letters
            ))
        self._step = step
        # id of x s: u may stop one letter early iff this difference was reachable
        self._xs = [[index.find(free_reduce((x, s))) for s in self.letters] for x in self.letters]
        # id of s y^-1: the difference d with d y = s
        self._sy = [[index.find(free_reduce((s, y ^ 1))) for y in self.letters] for s in self.letters]
        self.frames: list[_Frame] = []
        self._frame_ids: dict = {}
        self.start = self._intern((IDENTITY,), ())

    def _intern(self, main: tuple, short: tuple) -> int:
        key = (main, short)
        fid = self._frame_ids.get(key)
        if fid is None:
            fid = len(self.frames)
            self.frames.append(_Frame(main, short, self.n_letters))
            self._frame_ids[key] = fid
        return fid

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def edge(self, fid: int, x: int) -> tuple:
        """Transition on reading ``x``: ``(next_frame, pred_index, pred_letter)``."""
        fr = self.frames[fid]
        e = fr.edges[x]
        if e is None:
            step = self._step
            seen: dict = {}
            preds = []
            ys = []
            order = []
            for i, d in enumerate(fr.main):
                row = step[d][x]
                for y in self.letters:
                    d2 = row[y]
                    if d2 >= 0 and d2 not in seen:
                        seen[d2] = len(order)
                        order.append(d2)
                        preds.append(i)
                        ys.append(y)
            prev = {d: i for i, d in enumerate(fr.main)}
            short = tuple(prev.get(d, -1) for d in self._xs[x])
            nid = self._intern(tuple(order), short)
            e = fr.edges[x] = (nid, tuple(preds), tuple(ys))
        return e

    def action(self, fid: int, s: int) -> tuple:
        """How to multiply a normal form ending in frame ``fid`` by ``s``.

        Returns ``(shorter, index, letter)``: if ``shorter`` the result is
        one letter shorter and ``index`` points into the previous frame;
        otherwise ``index`` points into this frame and ``letter`` is
        appended.
        """
        fr = self.frames[fid]
        a = fr.actions[s]
        if a is None:
            j = fr.short[s]
            if j >= 0:
                a = (True, j, -1)
            else:
                sy = self._sy[s]
                pos = {d: i for i, d in enumerate(fr.main)}
                best = None
                for y in self.letters:
                    i = pos.get(sy[y])
                    if i is not None and (best is None or (i, y) < best):
                        best = (i, y)
                if best is None:  # pragma: no cover - e is always in main
                    raise RuntimeError("no multiplication candidate")
                a = (False, best[0], best[1])
            fr.actions[s] = a
        return a

    def is_push(self, fid: int, s: int) -> bool:
        shorter, i, y = self.action(fid, s)
        return not shorter and self.frames[fid].main[i] == IDENTITY and y == s

    # -- convenience -------------------------------------------------
    def position(self, word: Iterable[int] = ()) -> "Position":
        pos = Position(self)
        pos.mul_word(word)
        return pos

    def normal_form(self, w: Sequence[int]) -> Word:
        w = tuple(w)
        if any(not 0 <= x < self.n_letters for x in w):
            raise ValueError(f"word uses letters outside the {self.n_letters}-letter alphabet")
        return self.position(w).word()

    def mul(self, x: Sequence[int], w: Sequence[int]) -> Word:
        """Normal form of ``x w`` where ``x`` is already a normal form."""
        pos = Position(self)
        pos.load_normal_form(x)
        pos.mul_word(w)
        return pos.word()


class Position:
    """A group element held as its shortlex normal form plus frame stack."""

    __slots__ = ("engine", "letters", "frames", "preds", "ys", "_journal")

    def __init__(self, engine: ShortlexEngine):
        self.engine = engine
        self.letters: list[int] = []
        self.frames: list[int] = [engine.start]
        self.preds: list = [None]
        self.ys: list = [None]
        self._journal = None

    def __len__(self) -> int:
        return len(self.letters)

    def copy(self) -> "Position":
        other = Position.__new__(Position)
        other.engine = self.engine
        other.letters = self.letters.copy()
        other.frames = self.frames.copy()
        other.preds = self.preds.copy()
        other.ys = self.ys.copy()
        other._journal = None
        return other

    def word(self) -> Word:
        return tuple(self.letters)

    @property
    def frame(self) -> int:
        return self.frames[-1]

    def _push(self, x: int) -> None:
        nid, preds, ys = self.engine.edge(self.frames[-1], x)
        self.letters.append(x)
        self.frames.append(nid)
        self.preds.append(preds)
        self.ys.append(ys)

    def _truncate(self, t: int) -> None:
        j = self._journal
        if j is not None:
            for k in range(t, min(len(self.letters), j[0])):
                j[1].setdefault(k, self.letters[k])
        del self.letters[t:]
        del self.frames[t + 1 :]
        del self.preds[t + 1 :]
        del self.ys[t + 1 :]

    def load_normal_form(self, w: Sequence[int]) -> None:
        """Reset to ``w``, which must already be a shortlex normal form."""
        self._truncate(0)
        eng = self.engine
        for x in w:
            if not eng.is_push(self.frames[-1], x):
                raise ValueError("word is not in shortlex normal form")
            self._push(x)

    def mul_letter(self, s: int) -> int:
        """Right-multiply by one letter; return the length of the prefix kept."""
        eng = self.engine
        fid = self.frames[-1]
        fr = eng.frames[fid]
        a = fr.actions[s]
        if a is None:
            a = eng.action(fid, s)
        shorter, i, y = a
        if shorter:
            t = len(self.letters) - 1
            tail: list[int] = []
        else:
            t = len(self.letters)
            if fr.main[i] == IDENTITY:
                self._push(y)
                return t
            tail = [y]
        frames = self.frames
        efr = eng.frames
        while efr[frames[t]].main[i] != IDENTITY:
            tail.append(self.ys[t][i])
            i = self.preds[t][i]
            t -= 1
        self._truncate(t)
        for x in reversed(tail):
            self._push(x)
        return t

    def mul_word(self, w: Iterable[int]) -> int:
        """Right-multiply by a word; return the common prefix length of old and new forms."""
        w = tuple(w)
        if len(w) == 1:
            return self.mul_letter(w[0])
        old_len = len(self.letters)
        self._journal = (old_len, {})
        try:
            low = old_len
            for s in w:
                keep = self.mul_letter(s)
                if keep < low:
                    low = keep
            saved = self._journal[1]
        finally:
            self._journal = None
        # letters popped and pushed back unchanged are part of the common prefix
        letters = self.letters
        k = low
        while k < old_len and k < len(letters) and saved.get(k, letters[k]) == letters[k]:
            k += 1
        return k

    def distance(self) -> int:
        return len(self.letters)


def normal_form(w: Sequence[int], p: Presentation) -> Word:
    return get_engine(p).normal_form(w)


def mul(x: Sequence[int], w: Sequence[int], p: Presentation) -> Word:
    return get_engine(p).mul(x, w)


def distance(x: Sequence[int]) -> int:
    return len(x)


_ENGINES: dict[Presentation, ShortlexEngine] = {}


def get_engine(p: Presentation) -> ShortlexEngine:
    eng = _ENGINES.get(p)
    if eng is None:
        eng = _ENGINES[p] = ShortlexEngine(p)
    return eng


def is_normal_form(w: Sequence[int], p: Presentation) -> bool:
    eng = get_engine(p)
    fid = eng.start
    for x in w:
        if not eng.is_push(fid, x):
            return False
        fid = eng.edge(fid, x)[0]
    return True


__all__ = [
    "ShortlexEngine",
    "Position",
    "difference_set",
    "normal_form",
    "mul",
    "distance",
    "get_engine",
    "is_normal_form",
    "inverse",
]
