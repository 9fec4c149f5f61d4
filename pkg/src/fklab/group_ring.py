"""Exact arithmetic in the integral group rings Z(Z^d) and Z(F_r).

Group elements are plain hashable tuples interpreted through a :class:`Group`:

* ``Z^d``: a length-``d`` tuple of exponents, identity ``(0,) * d``.
* ``F_r``: a reduced run-length word ``((gen, exp), ...)`` with ``gen`` in
  ``1..r`` and ``exp != 0``; adjacent runs never share a generator. The
  identity is the empty tuple.

Elements of the group ring are finitely supported integer coefficient maps
(:class:`GroupRingElement`) and matrices over them (:class:`GroupRingMatrix`).
Everything here is exact, using Python integers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import GroupMismatchError, ParseError, ResourceCeilingError, ShapeError

DEFAULT_SUPPORT_CEILING = 5_000_000

_ZD_NAMES = ("x", "y", "z", "w")
_FREE_NAMES = ("a", "b", "c")


@dataclass(frozen=True)
class Group:
    """Group descriptor: ``Group("Zd", d)`` or ``Group("Free", r)``."""

    kind: str
    rank: int

    def __post_init__(self):
        if self.kind not in ("Zd", "Free"):
            raise ValueError(f"unknown group family {self.kind!r}")
        if self.rank < 1:
            raise ValueError("group rank must be positive")

    def __str__(self) -> str:
        return f"Z^{self.rank}" if self.kind == "Zd" else f"F_{self.rank}"

    @property
    def is_abelian(self) -> bool:
        return self.kind == "Zd" or self.rank == 1

    @property
    def generator_names(self) -> tuple[str, ...]:
        if self.kind == "Zd":
            if self.rank <= len(_ZD_NAMES):
                return _ZD_NAMES[: self.rank]
            return tuple(f"x{i}" for i in range(1, self.rank + 1))
        if self.rank <= len(_FREE_NAMES):
            return _FREE_NAMES[: self.rank]
        return tuple(f"g{i}" for i in range(1, self.rank + 1))

    def generator_index(self, name: str) -> int | None:
        """1-based index of a generator name; ``x1..xd``/``g1..gr`` aliases accepted."""
        names = self.generator_names
        if name in names:
            return names.index(name) + 1
        prefix = "x" if self.kind == "Zd" else "g"
        m = re.fullmatch(prefix + r"(\d+)", name)
        if m:
            return int(m.group(1))
        return None

    def identity(self) -> tuple:
        return (0,) * self.rank if self.kind == "Zd" else ()

    def generator(self, i: int, exp: int = 1) -> tuple:
        """The element ``s_i^exp`` for 1-based generator index ``i``."""
        if not 1 <= i <= self.rank:
            raise ValueError(f"generator {i} out of range for {self}")
        if self.kind == "Zd":
            v = [0] * self.rank
            v[i - 1] = exp
            return tuple(v)
        return ((i, exp),) if exp else ()

    def mul(self, g: tuple, h: tuple) -> tuple:
        if self.kind == "Zd":
            return tuple(a + b for a, b in zip(g, h))
        return _free_mul(g, h)

    def inv(self, g: tuple) -> tuple:
        if self.kind == "Zd":
            return tuple(-a for a in g)
        return tuple((s, -e) for s, e in reversed(g))

    def word_length(self, g: tuple) -> int:
        if self.kind == "Zd":
            return sum(abs(a) for a in g)
        return sum(abs(e) for _, e in g)

    def sort_key(self, g: tuple):
        if self.kind == "Zd":
            return g
        letters = []
        for s, e in g:
            letters.extend([(s, 0 if e > 0 else 1)] * abs(e))
        return (len(letters), tuple(letters))

    def validate(self, g) -> tuple:
        g = tuple(g)
        if self.kind == "Zd":
            if len(g) != self.rank or not all(isinstance(a, (int, np.integer)) for a in g):
                raise GroupMismatchError(f"{g!r} is not an element of {self}")
            return tuple(int(a) for a in g)
        prev = None
        for run in g:
            if len(run) != 2:
                raise GroupMismatchError(f"{g!r} is not a reduced word in {self}")
            s, e = run
            if not 1 <= s <= self.rank or e == 0 or s == prev:
                raise GroupMismatchError(f"{g!r} is not a reduced word in {self}")
            prev = s
        return tuple((int(s), int(e)) for s, e in g)

    def format(self, g: tuple) -> str:
        names = self.generator_names
        parts = []
        runs = enumerate(g, start=1) if self.kind == "Zd" else iter(g)
        for s, e in runs:
            if e == 0:
                continue
            parts.append(names[s - 1] if e == 1 else f"{names[s - 1]}^{e}")
        return "*".join(parts)


def Zd(d: int) -> Group:
    return Group("Zd", d)


def Free(r: int) -> Group:
    return Group("Free", r)


_GROUP_RE = re.compile(r"^\s*(Zd|Free)\s*\(\s*(\d+)\s*\)\s*$")


def parse_group(text: str) -> Group:
    """``"Zd(2)"`` or ``"Free(2)"``."""
    m = _GROUP_RE.match(text)
    if not m or int(m.group(2)) < 1:
        raise ParseError(f"bad group descriptor {text!r}; expected Zd(d) or Free(r)")
    return Group(m.group(1), int(m.group(2)))


def _free_mul(g: tuple, h: tuple) -> tuple:
    if not g:
        return h
    if not h:
        return g
    left = list(g)
    i = 0
    while left and i < len(h) and left[-1][0] == h[i][0]:
        s, e = left.pop()
        e += h[i][1]
        i += 1
        if e:
            left.append((s, e))
            break
    return tuple(left) + h[i:]


class GroupRingElement:
    """Finitely supported map ``Group -> Z``; immutable."""

    __slots__ = ("group", "_coeffs", "_hash")

    def __init__(self, group: Group, coeffs: Mapping | Iterable = (), *, _trusted: bool = False):
        self.group = group
        if _trusted:
            self._coeffs = coeffs
        else:
            items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
            acc: dict = {}
            for g, c in items:
                g = group.validate(g)
                acc[g] = acc.get(g, 0) + int(c)
            self._coeffs = {g: c for g, c in acc.items() if c}
        self._hash = None

    @classmethod
    def constant(cls, group: Group, c: int) -> "GroupRingElement":
        return cls(group, {group.identity(): c} if c else {}, _trusted=True)

    @classmethod
    def monomial(cls, group: Group, g, c: int = 1) -> "GroupRingElement":
        return cls(group, {group.validate(g): int(c)} if c else {}, _trusted=True)

    @property
    def coeffs(self) -> Mapping:
        return MappingProxyType(self._coeffs)

    @property
    def support(self) -> list:
        return sorted(self._coeffs, key=self.group.sort_key)

    def items(self) -> Iterator[tuple[tuple, int]]:
        for g in self.support:
            yield g, self._coeffs[g]

    def __getitem__(self, g) -> int:
        return self._coeffs.get(tuple(g), 0)

    def __len__(self) -> int:
        return len(self._coeffs)

    def __bool__(self) -> bool:
        return bool(self._coeffs)

    def __eq__(self, other) -> bool:
        if isinstance(other, int):
            other = GroupRingElement.constant(self.group, other)
        if not isinstance(other, GroupRingElement):
            return NotImplemented
        return self.group == other.group and self._coeffs == other._coeffs

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.group, frozenset(self._coeffs.items())))
        return self._hash

    def _coerce(self, other) -> "GroupRingElement":
        if isinstance(other, (int, np.integer)):
            return GroupRingElement.constant(self.group, int(other))
        if not isinstance(other, GroupRingElement):
            raise TypeError(f"cannot combine GroupRingElement with {type(other).__name__}")
        if other.group != self.group:
            raise GroupMismatchError(f"{self.group} vs {other.group}")
        return other

    def __add__(self, other):
        other = self._coerce(other)
        acc = dict(self._coeffs)
        for g, c in other._coeffs.items():
            v = acc.get(g, 0) + c
            if v:
                acc[g] = v
            else:
                acc.pop(g, None)
        return GroupRingElement(self.group, acc, _trusted=True)

    __radd__ = __add__

    def __neg__(self):
        return GroupRingElement(self.group, {g: -c for g, c in self._coeffs.items()}, _trusted=True)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, np.integer)):
            other = int(other)
            if not other:
                return GroupRingElement(self.group, {}, _trusted=True)
            return GroupRingElement(self.group, {g: c * other for g, c in self._coeffs.items()}, _trusted=True)
        return multiply(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, np.integer)):
            return self * other
        return multiply(self._coerce(other), self)

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not defined in the group ring")
        result = GroupRingElement.constant(self.group, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def adjoint(self) -> "GroupRingElement":
        return adjoint(self)

    def __repr__(self) -> str:
        return f"GroupRingElement({self.group}, {format_element(self)!r})"

    def __str__(self) -> str:
        return format_element(self)


def multiply(f: GroupRingElement, g: GroupRingElement, *, support_limit: int = DEFAULT_SUPPORT_CEILING) -> GroupRingElement:
    """Convolution product ``f * g``."""
    if f.group != g.group:
        raise GroupMismatchError(f"{f.group} vs {g.group}")
    group = f.group
    if not f or not g:
        return GroupRingElement(group, {}, _trusted=True)
    if group.kind == "Zd" and len(f) * len(g) > 4096:
        return _zd_multiply_dense(f, g, support_limit)
    acc: dict = {}
    mul = group.mul
    for a, ca in f._coeffs.items():
        for b, cb in g._coeffs.items():
            k = mul(a, b)
            acc[k] = acc.get(k, 0) + ca * cb
    if len(acc) > support_limit:
        raise ResourceCeilingError("support", len(acc), support_limit)
    return GroupRingElement(group, {k: c for k, c in acc.items() if c}, _trusted=True)


def _zd_dense(f: GroupRingElement) -> tuple[np.ndarray, np.ndarray]:
    keys = np.array(list(f._coeffs), dtype=np.int64).reshape(len(f), f.group.rank)
    lo = keys.min(axis=0)
    hi = keys.max(axis=0)
    arr = np.zeros(tuple(hi - lo + 1), dtype=object)
    for k, c in zip(keys - lo, f._coeffs.values()):
        arr[tuple(k)] = c
    return lo, arr


def _zd_from_dense(group: Group, lo: np.ndarray, arr: np.ndarray) -> GroupRingElement:
    idx = np.argwhere(arr != 0)
    coeffs = {tuple(int(v) for v in row + lo): arr[tuple(row)] for row in idx}
    return GroupRingElement(group, coeffs, _trusted=True)


def _zd_convolve(small: GroupRingElement, lo_big: np.ndarray, big: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keys = np.array(list(small._coeffs), dtype=np.int64).reshape(len(small), small.group.rank)
    lo_s = keys.min(axis=0)
    hi_s = keys.max(axis=0)
    out = np.zeros(tuple(np.array(big.shape) + hi_s - lo_s), dtype=object)
    for k, c in zip(keys - lo_s, small._coeffs.values()):
        sl = tuple(slice(o, o + s) for o, s in zip(k, big.shape))
        out[sl] += big * c
    return lo_big + lo_s, out


def _zd_multiply_dense(f, g, support_limit):
    small, large = (f, g) if len(f) <= len(g) else (g, f)
    lo, arr = _zd_dense(large)
    lo, out = _zd_convolve(small, lo, arr)
    if out.size > 8 * support_limit:
        raise ResourceCeilingError("support", out.size, support_limit)
    result = _zd_from_dense(f.group, lo, out)
    if len(result) > support_limit:
        raise ResourceCeilingError("support", len(result), support_limit)
    return result


def adjoint(f: GroupRingElement) -> GroupRingElement:
    """``f* = sum_g f(g^-1) g`` (integer coefficients, so no conjugation)."""
    inv = f.group.inv
    return GroupRingElement(f.group, {inv(g): c for g, c in f._coeffs.items()}, _trusted=True)


def trace_tau(f: GroupRingElement) -> int:
    """Coefficient at the identity."""
    return f._coeffs.get(f.group.identity(), 0)


def l1_norm(f: GroupRingElement) -> int:
    return sum(abs(c) for c in f._coeffs.values())


def linf_coeff(f: GroupRingElement) -> int:
    return max((abs(c) for c in f._coeffs.values()), default=0)


def l2_norm_sq(f: GroupRingElement) -> int:
    return sum(c * c for c in f._coeffs.values())


class GroupRingMatrix:
    """An ``m x n`` matrix over ``Z(Group)``; immutable."""

    __slots__ = ("group", "m", "n", "_rows")

    def __init__(self, group: Group, rows: Iterable[Iterable]):
        built = []
        for row in rows:
            r = []
            for e in row:
                if isinstance(e, (int, np.integer)):
                    e = GroupRingElement.constant(group, int(e))
                elif not isinstance(e, GroupRingElement):
                    raise TypeError(f"matrix entry of type {type(e).__name__}")
                elif e.group != group:
                    raise GroupMismatchError(f"entry over {e.group} in a matrix over {group}")
                r.append(e)
            built.append(tuple(r))
        if not built or not built[0]:
            raise ShapeError("matrix dimensions must be positive")
        if any(len(r) != len(built[0]) for r in built):
            raise ShapeError("ragged matrix rows")
        self.group = group
        self.m = len(built)
        self.n = len(built[0])
        self._rows = tuple(built)

    @classmethod
    def scalar(cls, f: GroupRingElement) -> "GroupRingMatrix":
        return cls(f.group, [[f]])

    @classmethod
    def identity(cls, group: Group, n: int, c: int = 1) -> "GroupRingMatrix":
        return cls(group, [[c if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def zeros(cls, group: Group, m: int, n: int) -> "GroupRingMatrix":
        return cls(group, [[0] * n for _ in range(m)])

    @property
    def shape(self) -> tuple[int, int]:
        return self.m, self.n

    @property
    def rows(self) -> tuple[tuple[GroupRingElement, ...], ...]:
        return self._rows

    def __getitem__(self, ij: tuple[int, int]) -> GroupRingElement:
        i, j = ij
        return self._rows[i][j]

    def entries(self) -> Iterator[tuple[int, int, GroupRingElement]]:
        for i, row in enumerate(self._rows):
            for j, e in enumerate(row):
                yield i, j, e

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupRingMatrix):
            return NotImplemented
        return self.group == other.group and self._rows == other._rows

    def __hash__(self) -> int:
        return hash((self.group, self._rows))

    def __add__(self, other: "GroupRingMatrix") -> "GroupRingMatrix":
        if self.shape != other.shape:
            raise ShapeError(f"cannot add {self.shape} and {other.shape}")
        return GroupRingMatrix(self.group, [[a + b for a, b in zip(r, s)] for r, s in zip(self._rows, other._rows)])

    def __sub__(self, other: "GroupRingMatrix") -> "GroupRingMatrix":
        return self + (-other)

    def __neg__(self) -> "GroupRingMatrix":
        return GroupRingMatrix(self.group, [[-a for a in r] for r in self._rows])

    def __mul__(self, other):
        if isinstance(other, (int, np.integer)):
            return GroupRingMatrix(self.group, [[a * int(other) for a in r] for r in self._rows])
        return mat_multiply(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return mat_multiply(self, other)

    def adjoint(self) -> "GroupRingMatrix":
        return mat_adjoint(self)

    def tilde(self) -> "GroupRingMatrix":
        """Transpose without adjoint."""
        return GroupRingMatrix(self.group, [[self._rows[i][j] for i in range(self.m)] for j in range(self.n)])

    def max_word_length(self) -> int:
        wl = self.group.word_length
        return max((wl(g) for _, _, e in self.entries() for g in e._coeffs), default=0)

    def __repr__(self) -> str:
        return f"GroupRingMatrix({self.group}, {format_matrix(self)!r})"

    def __str__(self) -> str:
        return format_matrix(self)


def as_matrix(F) -> GroupRingMatrix:
    return GroupRingMatrix.scalar(F) if isinstance(F, GroupRingElement) else F


def mat_multiply(F: GroupRingMatrix, G: GroupRingMatrix, *, support_limit: int = DEFAULT_SUPPORT_CEILING) -> GroupRingMatrix:
    F, G = as_matrix(F), as_matrix(G)
    if F.group != G.group:
        raise GroupMismatchError(f"{F.group} vs {G.group}")
    if F.n != G.m:
        raise ShapeError(f"cannot multiply {F.shape} by {G.shape}")
    zero = GroupRingElement(F.group, {}, _trusted=True)
    rows = []
    for i in range(F.m):
        row = []
        for j in range(G.n):
            acc = zero
            for k in range(F.n):
                a, b = F[i, k], G[k, j]
                if a and b:
                    acc = acc + multiply(a, b, support_limit=support_limit)
            row.append(acc)
        rows.append(row)
    return GroupRingMatrix(F.group, rows)


def mat_adjoint(F: GroupRingMatrix) -> GroupRingMatrix:
    """``(F*)_{jk} = (F_{kj})*``."""
    F = as_matrix(F)
    return GroupRingMatrix(F.group, [[adjoint(F[k, j]) for k in range(F.m)] for j in range(F.n)])


def mat_trace(F: GroupRingMatrix) -> int:
    F = as_matrix(F)
    if F.m != F.n:
        raise ShapeError(f"trace of a non-square {F.m}x{F.n} matrix")
    return sum(trace_tau(F[j, j]) for j in range(F.n))


def mat_l2_norm_sq(F: GroupRingMatrix) -> int:
    """``Tr (x) tau(F* F)``, the sum of squared coefficients of all entries."""
    return sum(l2_norm_sq(e) for _, _, e in as_matrix(F).entries())


def mat_l1_bound(F: GroupRingMatrix) -> int:
    """Max of row and column sums of entry l1 norms; bounds the operator norm of every lift."""
    F = as_matrix(F)
    norms = [[l1_norm(F[i, j]) for j in range(F.n)] for i in range(F.m)]
    row = max(sum(r) for r in norms)
    col = max(sum(norms[i][j] for i in range(F.m)) for j in range(F.n))
    return max(row, col)


def moment(F: GroupRingMatrix, k: int, *, support_limit: int = DEFAULT_SUPPORT_CEILING) -> int:
    """``Tr (x) tau((F* F)^k)``, exactly."""
    if k < 1:
        raise ValueError("moment order must be >= 1")
    return moment_sequence(F, k, support_limit=support_limit)[k]


def moment_sequence(F: GroupRingMatrix, k_max: int, *, support_limit: int = DEFAULT_SUPPORT_CEILING) -> list[int]:
    """Exact moments ``[m_0, ..., m_kmax]`` with ``m_k = Tr (x) tau((F*F)^k)`` and ``m_0 = n``.

    Uses ``m_2j = ||P_j||^2`` and ``m_{2j+1} = ||F P_j||^2`` with ``P_j = (F*F)^j``,
    so only half powers are ever formed. For a single entry over ``Z^d`` the
    ring is commutative and ``m_k = ||f^k||^2`` directly.
    """
    F = as_matrix(F)
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    if F.group.kind == "Zd" and F.shape == (1, 1):
        return _zd_scalar_moments(F[0, 0], k_max, support_limit)
    out = [F.n]
    G = mat_multiply(mat_adjoint(F), F, support_limit=support_limit)
    P = GroupRingMatrix.identity(F.group, F.n)
    j = 0
    while len(out) <= k_max:
        if j > 0:
            out.append(mat_l2_norm_sq(P))
            if len(out) > k_max:
                break
        out.append(mat_l2_norm_sq(mat_multiply(F, P, support_limit=support_limit)))
        j += 1
        if len(out) <= k_max:
            P = mat_multiply(P, G, support_limit=support_limit)
    return out[: k_max + 1]


def _zd_scalar_moments(f: GroupRingElement, k_max: int, support_limit: int) -> list[int]:
    out = [1]
    if not f:
        return out + [0] * k_max
    lo = np.zeros(f.group.rank, dtype=np.int64)
    cur = np.ones((1,) * f.group.rank, dtype=object)
    for _ in range(k_max):
        lo, cur = _zd_convolve(f, lo, cur)
        if cur.size > 8 * support_limit:
            raise ResourceCeilingError("support", cur.size, support_limit)
        out.append(int((cur * cur).sum()))
    return out


# --- text grammar -----------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z][A-Za-z0-9]*)|(.))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        if m.group(1) is not None:
            tokens.append(("int", m.group(1), m.start(1)))
        elif m.group(2) is not None:
            tokens.append(("name", m.group(2), m.start(2)))
        elif m.group(3) is not None:
            ch = m.group(3)
            if ch not in "+-*^[];,":
                raise ParseError(f"unexpected character {ch!r}", m.start(3))
            tokens.append(("op", ch, m.start(3)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, group: Group):
        self.text = text
        self.group = group
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, v, pos = self.take()
        if v != value or kind == "end":
            raise ParseError(f"expected {value!r}, found {v or 'end of input'!r}", pos)

    def element(self) -> GroupRingElement:
        acc: dict = {}
        sign = 1
        kind, v, _ = self.peek()
        if kind == "op" and v in "+-":
            self.take()
            sign = -1 if v == "-" else 1
        while True:
            g, c = self.term()
            acc[g] = acc.get(g, 0) + sign * c
            kind, v, _ = self.peek()
            if kind == "op" and v in "+-":
                self.take()
                sign = -1 if v == "-" else 1
                continue
            break
        return GroupRingElement(self.group, {g: c for g, c in acc.items() if c}, _trusted=True)

    def term(self) -> tuple[tuple, int]:
        kind, v, pos = self.peek()
        if kind == "int":
            self.take()
            c = int(v)
            k2, v2, _ = self.peek()
            if k2 == "op" and v2 == "*":
                self.take()
                return self.mono(), c
            return self.group.identity(), c
        if kind == "name":
            return self.mono(), 1
        raise ParseError(f"expected a term, found {v or 'end of input'!r}", pos)

    def mono(self) -> tuple:
        g = self.factor()
        while True:
            kind, v, _ = self.peek()
            if kind == "op" and v == "*":
                self.take()
                g = self.group.mul(g, self.factor())
            else:
                return g

    def factor(self) -> tuple:
        kind, v, pos = self.take()
        if kind != "name":
            raise ParseError(f"expected a generator, found {v or 'end of input'!r}", pos)
        idx = self.group.generator_index(v)
        if idx is None or not 1 <= idx <= self.group.rank:
            raise ParseError(f"generator {v!r} out of range for {self.group}", pos)
        exp = 1
        k2, v2, _ = self.peek()
        if k2 == "op" and v2 == "^":
            self.take()
            neg = False
            k3, v3, p3 = self.take()
            if k3 == "op" and v3 == "-":
                neg = True
                k3, v3, p3 = self.take()
            if k3 != "int":
                raise ParseError("expected an integer exponent", p3)
            exp = -int(v3) if neg else int(v3)
        return self.group.generator(idx, exp)

    def finish(self):
        kind, v, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {v!r}", pos)


def parse_element(text: str, group: Group) -> GroupRingElement:
    """Parse ``expr := term (('+'|'-') term)*`` into a canonical element."""
    p = _Parser(text, group)
    f = p.element()
    p.finish()
    return f


def parse_matrix(text: str, group: Group) -> GroupRingMatrix:
    """Parse ``[e11, e12; e21, e22]``; a bare expression is read as a 1x1 matrix."""
    p = _Parser(text, group)
    kind, v, _ = p.peek()
    if not (kind == "op" and v == "["):
        f = p.element()
        p.finish()
        return GroupRingMatrix.scalar(f)
    p.take()
    rows = [[p.element()]]
    while True:
        kind, v, pos = p.take()
        if kind == "op" and v == ",":
            rows[-1].append(p.element())
        elif kind == "op" and v == ";":
            rows.append([p.element()])
        elif kind == "op" and v == "]":
            break
        else:
            raise ParseError(f"expected ',', ';' or ']', found {v or 'end of input'!r}", pos)
    p.finish()
    if any(len(r) != len(rows[0]) for r in rows):
        raise ParseError("ragged matrix rows", None)
    return GroupRingMatrix(group, rows)


def format_element(f: GroupRingElement) -> str:
    if not f:
        return "0"
    group = f.group
    ident = group.identity()
    out = []
    for g, c in f.items():
        if g == ident:
            body = str(abs(c))
        elif abs(c) == 1:
            body = group.format(g)
        else:
            body = f"{abs(c)}*{group.format(g)}"
        if not out:
            out.append(body if c > 0 else f"-{body}")
        else:
            out.append(f" + {body}" if c > 0 else f" - {body}")
    return "".join(out)


def format_matrix(F: GroupRingMatrix) -> str:
    return "[" + "; ".join(", ".join(format_element(e) for e in row) for row in F.rows) + "]"
