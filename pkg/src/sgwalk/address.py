"""Symbolic and exact geometric addressing on the Sierpinski gasket.

Words over {0,1,2} are stored packed: the base-3 integer ``code`` (first
letter most significant) together with an explicit ``length`` so that
``0``, ``00`` and ``000`` stay distinct.

Points are kept in the lattice basis p1 = (1, 0), p2 = (1/2, sqrt(3)/2):
the triple ``(a, b, n)`` is the plane point (a*p1 + b*p2) / 2**n.  All
identity tests are integer comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union

# Corner offsets of the unit cell in lattice coordinates.
CORNERS = ((0, 0), (1, 0), (0, 1))
SQRT3_2 = math.sqrt(3.0) / 2.0


@dataclass(frozen=True, order=True)
class Word:
    """Finite address w = w_1...w_n; the empty word is the root o."""

    length: int
    code: int = 0

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("word length must be >= 0")
        if not 0 <= self.code < 3**self.length:
            raise ValueError(f"code {self.code} out of range for length {self.length}")

    @classmethod
    def parse(cls, text: str) -> "Word":
        text = text.strip()
        if text in ("", "o", "root"):
            return cls(0, 0)
        if any(ch not in "012" for ch in text):
            raise ValueError(f"word {text!r} has letters outside {{0,1,2}}")
        return cls(len(text), int(text, 3))

    @classmethod
    def from_letters(cls, letters: Iterable[int]) -> "Word":
        code = 0
        n = 0
        for letter in letters:
            if letter not in (0, 1, 2):
                raise ValueError(f"letter {letter!r} not in {{0,1,2}}")
            code = 3 * code + letter
            n += 1
        return cls(n, code)

    @property
    def letters(self) -> tuple[int, ...]:
        out = []
        c = self.code
        for _ in range(self.length):
            c, r = divmod(c, 3)
            out.append(r)
        return tuple(reversed(out))

    @property
    def last(self) -> int:
        if self.length == 0:
            raise ValueError("the root has no letters")
        return self.code % 3

    @property
    def parent(self) -> "Word":
        if self.length == 0:
            raise ValueError("the root has no father")
        return Word(self.length - 1, self.code // 3)

    def child(self, i: int) -> "Word":
        return Word(self.length + 1, 3 * self.code + i)

    def children(self) -> tuple["Word", "Word", "Word"]:
        return tuple(self.child(i) for i in range(3))

    def ancestor(self, level: int) -> "Word":
        if not 0 <= level <= self.length:
            raise ValueError(f"no ancestor at level {level} for word of length {self.length}")
        return Word(level, self.code // 3 ** (self.length - level))

    def is_prefix_of(self, other: "Word") -> bool:
        return other.length >= self.length and other.ancestor(self.length) == self

    def extend(self, letters: Iterable[int]) -> "Word":
        w = self
        for letter in letters:
            w = w.child(letter)
        return w

    def __len__(self) -> int:
        return self.length

    def __str__(self) -> str:
        return "".join(str(d) for d in self.letters)

    def __repr__(self) -> str:
        return f"Word({str(self)!r})"


WordLike = Union[Word, str, Sequence[int]]


def as_word(w: WordLike) -> Word:
    if isinstance(w, Word):
        return w
    if isinstance(w, str):
        return Word.parse(w)
    return Word.from_letters(w)


def words(n: int) -> Iterator[Word]:
    """All 3**n words of length n in lexicographic order."""
    for code in range(3**n):
        yield Word(n, code)


@dataclass(frozen=True)
class LatticePoint:
    """The plane point (a*p1 + b*p2) / 2**level, stored in lowest terms."""

    a: int
    b: int
    level: int = 0

    def __post_init__(self):
        a, b, n = self.a, self.b, self.level
        if n < 0:
            raise ValueError("level must be >= 0")
        while n > 0 and a % 2 == 0 and b % 2 == 0:
            a //= 2
            b //= 2
            n -= 1
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "level", n)

    def at_level(self, n: int) -> tuple[int, int]:
        """Integer coordinates over the common denominator 2**n."""
        if n < self.level:
            raise ValueError(f"point needs level >= {self.level}")
        s = 1 << (n - self.level)
        return self.a * s, self.b * s

    def in_unit_triangle(self) -> bool:
        return self.a >= 0 and self.b >= 0 and self.a + self.b <= (1 << self.level)

    def xy(self) -> tuple[float, float]:
        scale = 2.0**-self.level
        return ((self.a + 0.5 * self.b) * scale, SQRT3_2 * self.b * scale)

    def __str__(self) -> str:
        return f"{self.a}/2^{self.level},{self.b}/2^{self.level}"


def _cell_origin(w: Word) -> tuple[int, int]:
    """f_w(p0) in lattice units of 2**-|w|."""
    a = b = 0
    for letter in w.letters:
        a, b = 2 * a, 2 * b
        if letter == 1:
            a += 1
        elif letter == 2:
            b += 1
    return a, b


def cell_vertices(w: WordLike) -> tuple[LatticePoint, LatticePoint, LatticePoint]:
    """Corners f_w(p0), f_w(p1), f_w(p2) of the cell K_w."""
    w = as_word(w)
    a, b = _cell_origin(w)
    return tuple(LatticePoint(a + da, b + db, w.length) for da, db in CORNERS)


def vertex_point(w: WordLike) -> LatticePoint:
    """p_w = f_{w_1...w_{n-1}}(p_{w_n}), the image of w under Phi_n."""
    w = as_word(w)
    if w.length == 0:
        raise ValueError("the root has no image under Phi")
    return cell_vertices(w)[w.last]


def boundary_point(prefix: WordLike, depth: int) -> LatticePoint:
    """Corner approximation of Phi(xi) from a prefix of the infinite word xi.

    The point returned lies in K_{xi_1...xi_depth}, so it is within
    2**-depth of Phi(xi).  The corner used is xi_{depth+1} when the prefix
    is long enough and xi_depth otherwise.
    """
    w = as_word(prefix)
    if w.length < depth:
        raise ValueError(f"prefix of length {w.length} shorter than depth {depth}")
    head = w.ancestor(depth)
    if w.length > depth:
        corner = w.ancestor(depth + 1).last
    elif depth > 0:
        corner = head.last
    else:
        corner = 0
    return cell_vertices(head)[corner]


def barycenter(w: WordLike) -> tuple[float, float]:
    """Euclidean barycenter of the corner set of K_w."""
    pts = [p.xy() for p in cell_vertices(w)]
    return (sum(p[0] for p in pts) / 3.0, sum(p[1] for p in pts) / 3.0)


def phi_classes(n: int) -> dict[LatticePoint, list[Word]]:
    """Partition of W_n by equal image under Phi_n."""
    classes: dict[LatticePoint, list[Word]] = {}
    for w in words(n):
        classes.setdefault(vertex_point(w), []).append(w)
    return classes


def vertex_count(n: int) -> int:
    """|V_n| with V_1 = {p0, p1, p2}."""
    return (3**n + 3) // 2
