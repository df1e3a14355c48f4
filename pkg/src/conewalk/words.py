"""Letters, words and presentations for surface groups and free groups.

A letter is a small integer ``2 * generator + (1 if inverse else 0)``, so
the global shortlex base order is ``a1 < A1 < b1 < B1 < a2 < ...`` and the
inverse of a letter is ``letter ^ 1``.  Words are tuples of letters.

Generator ``2i`` is printed as ``a{i+1}`` and generator ``2i+1`` as
``b{i+1}``; upper case denotes the inverse, e.g. ``a1b1A1B1``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

Word = tuple  # tuple[int, ...]

_TOKEN = re.compile(r"([aAbB])(\d+)")


class PresentationError(ValueError):
    """Raised for invalid group specifications."""


def inverse_letter(x: int) -> int:
    return x ^ 1


def generator_of(x: int) -> int:
    return x >> 1


def sign_of(x: int) -> int:
    return -1 if x & 1 else 1


def make_letter(generator: int, sign: int = 1) -> int:
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return 2 * generator + (0 if sign == 1 else 1)


def inverse(w: Sequence[int]) -> Word:
    """Formal inverse: reverse the word and invert every letter."""
    return tuple(x ^ 1 for x in reversed(w))


def free_reduce(w: Iterable[int]) -> Word:
    """Cancel adjacent letter/inverse pairs until none remain."""
    out: list[int] = []
    for x in w:
        if out and out[-1] == x ^ 1:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def is_freely_reduced(w: Sequence[int]) -> bool:
    return all(w[i] != w[i + 1] ^ 1 for i in range(len(w) - 1))


def shortlex_key(w: Sequence[int]) -> tuple:
    return (len(w), tuple(w))


def letter_name(x: int) -> str:
    g = x >> 1
    base = "a" if g % 2 == 0 else "b"
    if x & 1:
        base = base.upper()
    return f"{base}{g // 2 + 1}"


def format_word(w: Sequence[int]) -> str:
    return "".join(letter_name(x) for x in w)


def parse_word(s: str) -> Word:
    """Parse ``"a1b1A1B1"`` into letter codes.  Whitespace is ignored."""
    s = "".join(s.split())
    letters = []
    pos = 0
    for m in _TOKEN.finditer(s):
        if m.start() != pos:
            raise ValueError(f"cannot parse word {s!r} at offset {pos}")
        ch, idx = m.group(1), int(m.group(2))
        if idx < 1:
            raise ValueError(f"generator index must be >= 1 in {s!r}")
        g = 2 * (idx - 1) + (0 if ch in "aA" else 1)
        letters.append(2 * g + (1 if ch.isupper() else 0))
        pos = m.end()
    if pos != len(s):
        raise ValueError(f"cannot parse word {s!r} at offset {pos}")
    return tuple(letters)


@dataclass(frozen=True)
class Presentation:
    """Standard presentation of a surface group or a free group.

    For ``kind="surface"`` the single relator is the product of the
    commutators ``a_i b_i a_i^-1 b_i^-1``; free groups have no relator.
    """

    kind: str
    rank: int  # genus for surfaces, number of generators for free groups
    relator: Word = field(init=False)

    def __post_init__(self) -> None:
        if self.kind == "surface":
            if self.rank < 2:
                raise PresentationError("surface groups need genus >= 2")
            rel = []
            for i in range(self.rank):
                a, b = 4 * i, 4 * i + 2
                rel += [a, b, a ^ 1, b ^ 1]
            object.__setattr__(self, "relator", tuple(rel))
        elif self.kind == "free":
            if self.rank < 2:
                raise PresentationError("free groups need rank >= 2")
            object.__setattr__(self, "relator", ())
        else:
            raise PresentationError(f"unknown group kind {self.kind!r}")

    @classmethod
    def surface(cls, genus: int) -> "Presentation":
        return cls("surface", genus)

    @classmethod
    def free(cls, rank: int) -> "Presentation":
        return cls("free", rank)

    @classmethod
    def from_config(cls, spec: dict) -> "Presentation":
        """Accept ``{"kind": "surface", "genus": 2}`` or ``{"kind": "free", "rank": 2}``."""
        if "group" in spec:
            spec = spec["group"]
        kind = spec.get("kind")
        if kind == "surface":
            return cls.surface(int(spec["genus"]))
        if kind == "free":
            return cls.free(int(spec["rank"]))
        raise PresentationError(f"unknown group kind {kind!r}")

    def to_config(self) -> dict:
        if self.kind == "surface":
            return {"kind": "surface", "genus": self.rank}
        return {"kind": "free", "rank": self.rank}

    @property
    def n_generators(self) -> int:
        return 2 * self.rank if self.kind == "surface" else self.rank

    @property
    def letters(self) -> Word:
        """All signed letters in shortlex base order."""
        return tuple(range(2 * self.n_generators))

    @property
    def genus(self) -> int:
        if self.kind != "surface":
            raise AttributeError("free groups have no genus")
        return self.rank

    @property
    def generators(self) -> Word:
        return tuple(2 * g for g in range(self.n_generators))

    def cyclic_relators(self) -> list[Word]:
        """All distinct cyclic permutations of the relator and its inverse."""
        if not self.relator:
            return []
        out = []
        seen = set()
        for r in (self.relator, inverse(self.relator)):
            for i in range(len(r)):
                c = r[i:] + r[:i]
                if c not in seen:
                    seen.add(c)
                    out.append(c)
        return out

    def __str__(self) -> str:
        if self.kind == "surface":
            return f"surface(genus={self.rank})"
        return f"free(rank={self.rank})"


LENGTH_REDUCING = "length_reducing"
SHORTLEX_FLATTENING = "shortlex_flattening"


@dataclass(frozen=True)
class RewriteRule:
    lhs: Word
    rhs: Word
    kind: str


def build_rules(p: Presentation) -> list[RewriteRule]:
    """Dehn rules plus half-relator flattening rules.

    For every cyclic permutation ``r = u v`` of the relator or its inverse
    this gives ``u -> v^-1`` with ``|u| = 2g + 1`` (length reducing) and,
    for ``|u| = 2g``, ``u -> v^-1`` whenever ``v^-1`` is shortlex smaller.
    Free-reduction rules are implicit and not listed.  The result is
    ordered with length-reducing rules first.
    """
    if p.kind == "free":
        return []
    g = p.genus
    reducing: dict[Word, Word] = {}
    flattening: dict[Word, Word] = {}
    for r in p.cyclic_relators():
        u, v = r[: 2 * g + 1], r[2 * g + 1 :]
        reducing.setdefault(u, inverse(v))
        u, v = r[: 2 * g], r[2 * g :]
        vi = inverse(v)
        if vi < u:
            flattening.setdefault(u, vi)
    rules = [RewriteRule(l, r, LENGTH_REDUCING) for l, r in sorted(reducing.items())]
    rules += [RewriteRule(l, r, SHORTLEX_FLATTENING) for l, r in sorted(flattening.items())]
    return rules


def free_reduction_rules(p: Presentation) -> list[RewriteRule]:
    """The schemata ``x x^-1 -> empty`` for every generator ``x``."""
    out = []
    for g in range(p.n_generators):
        x = 2 * g
        out.append(RewriteRule((x, x ^ 1), (), LENGTH_REDUCING))
        out.append(RewriteRule((x ^ 1, x), (), LENGTH_REDUCING))
    return out


def apply_rules(w: Sequence[int], rules: Sequence[RewriteRule], max_steps: int = 1_000_000) -> Word:
    """Rewrite ``w`` with free reduction and ``rules`` until irreducible.

    Leftmost match wins; ties at the same position follow rule order.
    Every step strictly decreases ``(length, word)`` in shortlex order,
    which is asserted.
    """
    pattern, table = _compile_rules(tuple(rules))
    cur = free_reduce(w)
    s = _encode(cur)
    for _ in range(max_steps):
        m = pattern.search(s) if table else None
        if m is None:
            return _decode(s)
        nxt = _encode(free_reduce(_decode(s[: m.start()] + table[m.group(0)] + s[m.end() :])))
        assert (len(nxt), nxt) < (len(s), s), "rewrite did not decrease"
        s = nxt
    raise RuntimeError("rewriting did not terminate within max_steps")


def _encode(w: Sequence[int]) -> str:
    return "".join(chr(48 + x) for x in w)


def _decode(s: str) -> Word:
    return tuple(ord(c) - 48 for c in s)


_PATTERN_CACHE: dict[tuple, tuple] = {}


def _compile_rules(rules: tuple) -> tuple:
    hit = _PATTERN_CACHE.get(rules)
    if hit is None:
        table: dict[str, str] = {}
        for rule in rules:
            table.setdefault(_encode(rule.lhs), _encode(rule.rhs))
        # alternation order = rule priority for matches at the same offset
        alts = "|".join(re.escape(k) for k in table)
        hit = _PATTERN_CACHE[rules] = (re.compile(alts) if table else None, table)
    return hit


def dehn_reduce(w: Sequence[int], p: Presentation) -> Word:
    """Dehn's algorithm: free reduction plus length-reducing relator rules.

    For surface groups of genus >= 2 a word represents the identity iff
    this returns the empty word.
    """
    if p.kind == "free":
        return free_reduce(w)
    rules = [r for r in _rules_cached(p) if r.kind == LENGTH_REDUCING]
    return apply_rules(w, rules)


_RULE_CACHE: dict[Presentation, list[RewriteRule]] = {}


def _rules_cached(p: Presentation) -> list[RewriteRule]:
    rules = _RULE_CACHE.get(p)
    if rules is None:
        rules = _RULE_CACHE[p] = build_rules(p)
    return rules


def is_identity(w: Sequence[int], p: Presentation) -> bool:
    return not dehn_reduce(w, p)


def words_equal(u: Sequence[int], v: Sequence[int], p: Presentation) -> bool:
    return is_identity(tuple(u) + inverse(v), p)
