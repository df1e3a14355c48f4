"""Breadth-first exploration of the Cayley graph, used as an exact oracle.

Elements are identified without any normal-form machinery: candidate
words are bucketed by their images under a few homomorphisms onto the
free group ``<p, q>`` (realized by integer 2x2 matrices), and every
bucket hit is confirmed with Dehn's algorithm.  Levels are expanded in
shortlex order, so the first word reaching an element is its shortlex
normal form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .words import Presentation, Word, words_equal

# Sanov matrices: a faithful image of the free group of rank 2 in SL(2, Z)
_P = (1, 2, 0, 1)
_Q = (1, 0, 2, 1)
_P_INV = (1, -2, 0, 1)
_Q_INV = (1, 0, -2, 1)
_I = (1, 0, 0, 1)


class OracleBudgetError(MemoryError):
    """Raised when the requested ball exceeds the element budget."""


def _mat_mul(m, n):
    a, b, c, d = m
    e, f, g, h = n
    return (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


def _word_matrix(word: str) -> tuple:
    table = {"p": _P, "q": _Q, "P": _P_INV, "Q": _Q_INV}
    m = _I
    for ch in word:
        m = _mat_mul(m, table[ch])
    return m


def _quotient_maps(p: Presentation) -> list[dict[int, str]]:
    """Homomorphisms onto <p, q>, each given by generator images."""
    n = p.n_generators
    if p.kind == "free":
        # the identity-like map on the first two generators and some mixes
        images = [["p", "q"], ["pq", "qp"], ["pp", "qpq"]]
        maps = []
        for img in images:
            gen_img = {}
            for g in range(n):
                gen_img[g] = img[g % 2] if g < 2 else img[g % 2] * (g // 2 + 1)
            maps.append(gen_img)
        return maps
    genus = p.genus
    # each handle gets a commuting pair, or two handles get swapped pairs
    choices = [("p", "q"), ("q", "p"), ("pq", "p"), ("p", "pq"), ("qp", "q")]
    maps = []
    for k, (u, v) in enumerate(choices):
        gen_img = {}
        for i in range(genus):
            j = (i + k) % genus
            if genus >= 2 and i < 2 * (genus // 2):
                # pair handle i with its partner: (u, v) then (v, u)
                if i % 2 == 0:
                    gen_img[2 * i], gen_img[2 * i + 1] = u, v
                else:
                    gen_img[2 * i], gen_img[2 * i + 1] = v, u
            else:
                gen_img[2 * i], gen_img[2 * i + 1] = u * (j + 1), u * (j + 2)
        maps.append(gen_img)
    # commuting-pair maps see each handle separately
    for k in range(3):
        gen_img = {}
        for i in range(genus):
            base = ["p", "q", "pq", "qpp"][(i + k) % 4]
            gen_img[2 * i], gen_img[2 * i + 1] = base, base * 2
        maps.append(gen_img)
    return maps


def _inverse_image(s: str) -> str:
    return "".join(c.swapcase() for c in reversed(s))


class WordHasher:
    """Group-invariant bucket key for words.

    Equal group elements always get equal keys; distinct elements may
    collide, so callers confirm bucket hits with :func:`words_equal`.
    For free groups the key is the freely reduced word itself, which is
    exact (``self.exact``).
    """

    def __init__(self, p: Presentation):
        self.presentation = p
        self.exact = p.kind == "free"
        maps = _quotient_maps(p)
        self.letter_mats = []
        for x in p.letters:
            g = x >> 1
            mats = []
            for gen_img in maps:
                img = gen_img.get(g, "")
                if x & 1:
                    img = _inverse_image(img)
                mats.append(_word_matrix(img))
            self.letter_mats.append(tuple(mats))
        self.identity = () if self.exact else tuple(_I for _ in maps)

    def step(self, key: tuple, x: int) -> tuple:
        if self.exact:
            return key[:-1] if key and key[-1] == x ^ 1 else key + (x,)
        return tuple(_mat_mul(k, m) for k, m in zip(key, self.letter_mats[x]))

    def key(self, w) -> tuple:
        k = () if self.exact else self.identity
        for x in w:
            k = self.step(k, x)
        return k


class ElementIndex:
    """Exact dictionary from group elements to integer ids."""

    def __init__(self, p: Presentation):
        self.presentation = p
        self.hasher = WordHasher(p)
        self.words: list = []
        self._buckets: dict = {}

    def __len__(self) -> int:
        return len(self.words)

    def find(self, w, key=None) -> int:
        if key is None:
            key = self.hasher.key(w)
        bucket = self._buckets.get(key, ())
        if self.hasher.exact:
            return bucket[0] if bucket else -1
        for idx in bucket:
            if words_equal(w, self.words[idx], self.presentation):
                return idx
        return -1

    def add(self, w, key=None) -> int:
        """Insert ``w`` if its element is new; return the element id."""
        if key is None:
            key = self.hasher.key(w)
        idx = self.find(w, key)
        if idx < 0:
            idx = len(self.words)
            self.words.append(tuple(w))
            self._buckets.setdefault(key, []).append(idx)
        return idx


@dataclass
class BallOracle:
    """The ball of radius ``radius`` about the identity.

    ``words[i]`` is the shortlex normal form of element ``i``; ``level[i]``
    its word length; ``spheres[n]`` the number of elements at distance n.
    ``neighbors[i][x]`` is the element reached by right multiplication
    with letter ``x`` when it lies inside the ball, else -1.
    """

    presentation: Presentation
    radius: int
    words: list = field(default_factory=list)
    level: list = field(default_factory=list)
    spheres: list = field(default_factory=list)
    neighbors: list = field(default_factory=list)
    _keys: list = field(default_factory=list, repr=False)
    _buckets: dict = field(default_factory=dict, repr=False)
    hasher: WordHasher | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def distances(self) -> dict:
        """Map normal-form word -> distance from the identity."""
        return dict(zip(self.words, self.level))

    def _find(self, key: tuple, w) -> int:
        bucket = self._buckets.get(key, ())
        if self.hasher.exact:
            return bucket[0] if bucket else -1
        for idx in bucket:
            if words_equal(w, self.words[idx], self.presentation):
                return idx
        return -1

    def lookup(self, w) -> int:
        """Element id of word ``w`` if its element lies in the ball, else -1.

        Exact: bucket candidates are confirmed with Dehn's algorithm.
        """
        w = tuple(w)
        return self._find(self.hasher.key(w), w)

    def distance(self, w) -> int:
        """Word-metric length of ``w``; raises KeyError outside the ball."""
        idx = self.lookup(w)
        if idx < 0:
            raise KeyError("element lies outside the oracle ball")
        return self.level[idx]

    def sphere(self, n: int) -> int:
        return self.spheres[n]


def bfs_oracle(
    p: Presentation, radius: int, max_elements: int = 2_000_000, store_neighbors: bool = True
) -> BallOracle:
    """Exact ball of the Cayley graph by breadth-first search.

    Raises :class:`OracleBudgetError` if the ball would exceed
    ``max_elements`` elements.  Without ``store_neighbors`` only words,
    levels and sphere sizes are kept (``neighbors`` stays empty).
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    hasher = WordHasher(p)
    ball = BallOracle(p, radius, hasher=hasher)
    letters = p.letters

    def add(w: Word, key: tuple, lvl: int) -> int:
        if len(ball.words) >= max_elements:
            raise OracleBudgetError(
                f"ball of radius {radius} exceeds budget of {max_elements} elements"
            )
        idx = len(ball.words)
        ball.words.append(w)
        ball.level.append(lvl)
        ball._keys.append(key)
        if store_neighbors:
            ball.neighbors.append([-1] * len(letters))
        ball._buckets.setdefault(key, []).append(idx)
        return idx

    add((), hasher.identity, 0)
    ball.spheres.append(1)
    frontier = [0]
    for n in range(radius):
        nxt = []
        for idx in frontier:  # frontier is in shortlex order
            w = ball.words[idx]
            key = ball._keys[idx]
            for x in letters:
                if w and w[-1] == x ^ 1:
                    continue  # the parent, recorded when it was expanded
                c = w + (x,)
                ckey = hasher.step(key, x)
                j = ball._find(ckey, c)
                if j < 0:
                    j = add(c, ckey, n + 1)
                    nxt.append(j)
                if store_neighbors:
                    ball.neighbors[idx][x] = j
                    if ball.level[j] == n + 1:
                        ball.neighbors[j][x ^ 1] = idx
        ball.spheres.append(len(nxt))
        frontier = nxt
    if not store_neighbors:
        return ball
    # remaining edges all start on the outer sphere
    for idx in range(len(ball.words) - ball.spheres[-1], len(ball.words)):
        nb = ball.neighbors[idx]
        for x in letters:
            if nb[x] < 0:
                nb[x] = ball._find(hasher.step(ball._keys[idx], x), ball.words[idx] + (x,))
    return ball
