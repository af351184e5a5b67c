"""Monotone access formulas and their LSSS matrices.

Grammar (``AND`` binds tighter than ``OR``; keywords are case-insensitive)::

    formula := term ("OR" term)*
    term    := factor ("AND" factor)*
    factor  := ATTR | "(" formula ")"

Matrix rows are indexed from 0.  Entries are kept as small signed integers
and reduced mod p whenever they take part in arithmetic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Union

from .errors import PolicyNotSatisfied, PolicySyntaxError, UnknownAttribute, UnsupportedParameters
from .groups import ORDER

MAX_ROWS = 512

_TOKEN = re.compile(r"\s*(?:(\()|(\))|([A-Za-z0-9_.:@#+\-/]+))")


@dataclass(frozen=True)
class Leaf:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Gate:
    op: str  # "AND" | "OR"
    left: "Formula"
    right: "Formula"

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


Formula = Union[Leaf, Gate]


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            offset = len(text) - len(text[pos:].lstrip())
            raise PolicySyntaxError(f"unexpected character {text[offset]!r}", offset)
        start = m.start(m.lastindex)
        word = m.group(m.lastindex)
        if m.lastindex == 3 and word.upper() in ("AND", "OR"):
            out.append((word.upper(), start))
        elif m.lastindex == 3:
            out.append(("ATTR", start, word))
        else:
            out.append((word, start))
        pos = m.end()
    out.append(("EOF", len(text)))
    return out


def parse_formula(text: str, universe: Iterable[str] | None = None) -> Formula:
    """Parse ``text`` into an AND/OR tree.

    When ``universe`` is given every leaf must belong to it.
    """
    toks = _tokenize(text)
    i = 0

    def peek():
        return toks[i]

    def take():
        nonlocal i
        tok = toks[i]
        i += 1
        return tok

    def factor():
        tok = take()
        if tok[0] == "ATTR":
            return Leaf(tok[2])
        if tok[0] == "(":
            node = formula()
            close = take()
            if close[0] != ")":
                raise PolicySyntaxError("expected ')'", close[1])
            return node
        what = "end of input" if tok[0] == "EOF" else repr(tok[0])
        raise PolicySyntaxError(f"expected attribute or '(', found {what}", tok[1])

    def term():
        node = factor()
        while peek()[0] == "AND":
            take()
            node = Gate("AND", node, factor())
        return node

    def formula():
        node = term()
        while peek()[0] == "OR":
            take()
            node = Gate("OR", node, term())
        return node

    root = formula()
    if peek()[0] != "EOF":
        raise PolicySyntaxError(f"unexpected {peek()[0]!r}", peek()[1])
    if universe is not None:
        known = set(universe)
        missing = sorted({a for a in leaves(root) if a not in known})
        if missing:
            raise UnknownAttribute(f"attributes outside the universe: {', '.join(missing)}")
    return root


def leaves(f: Formula) -> list[str]:
    """Leaf attributes in left-to-right order (duplicates kept)."""
    if isinstance(f, Leaf):
        return [f.name]
    return leaves(f.left) + leaves(f.right)


def evaluate(f: Formula, attributes) -> bool:
    if isinstance(f, Leaf):
        return f.name in attributes
    if f.op == "AND":
        return evaluate(f.left, attributes) and evaluate(f.right, attributes)
    return evaluate(f.left, attributes) or evaluate(f.right, attributes)


def format_formula(f: Formula) -> str:
    """Canonical text that parses back to the same tree."""
    s = str(f)
    return s[1:-1] if isinstance(f, Gate) else s


@dataclass(frozen=True)
class LsssPolicy:
    """Share-generating matrix with row labels.

    ``rows[i]`` is the attribute of row ``i``; ``rho[i]`` counts how many
    rows up to and including ``i`` carry that same attribute (1-based), and
    ``tau`` is the largest such count.
    """

    matrix: tuple[tuple[int, ...], ...]
    rows: tuple[str, ...]
    formula: str = ""

    def __post_init__(self):
        if not self.matrix or len(self.matrix) != len(self.rows):
            raise ValueError("matrix and row labels must be non-empty and aligned")
        width = len(self.matrix[0])
        if width < 1 or any(len(r) != width for r in self.matrix):
            raise ValueError("ragged policy matrix")

    @property
    def n1(self) -> int:
        return len(self.matrix)

    @property
    def n2(self) -> int:
        return len(self.matrix[0])

    @cached_property
    def rho(self) -> tuple[int, ...]:
        seen: dict[str, int] = {}
        out = []
        for attr in self.rows:
            seen[attr] = seen.get(attr, 0) + 1
            out.append(seen[attr])
        return tuple(out)

    @property
    def tau(self) -> int:
        return max(self.rho)

    def dump(self) -> str:
        """Deterministic text form used by golden tests."""
        lines = [f"formula: {self.formula}", f"shape: {self.n1}x{self.n2} tau={self.tau}"]
        for i, (row, attr, r) in enumerate(zip(self.matrix, self.rows, self.rho)):
            cells = " ".join(f"{v:>2d}" for v in row)
            lines.append(f"{i:>3d} [{cells}] {attr} rho={r}")
        return "\n".join(lines) + "\n"


def compile_lsss(f: Formula | str, max_rows: int = MAX_ROWS) -> LsssPolicy:
    """Lewko-Waters conversion of a monotone formula to an LSSS matrix."""
    if isinstance(f, str):
        f = parse_formula(f)
    n_leaves = len(leaves(f))
    if n_leaves > max_rows:
        raise UnsupportedParameters(f"policy has {n_leaves} rows, limit is {max_rows}")

    labelled: list[tuple[list[int], str]] = []
    counter = 1
    stack = [(f, [1])]
    while stack:
        node, vec = stack.pop()
        if isinstance(node, Leaf):
            labelled.append((vec, node.name))
            continue
        if node.op == "OR":
            left, right = vec, vec
        else:
            padded = vec + [0] * (counter - len(vec))
            left = padded + [1]
            right = [0] * counter + [-1]
            counter += 1
        # right pushed first so rows come out in left-to-right leaf order
        stack.append((node.right, right))
        stack.append((node.left, left))

    width = counter
    matrix = tuple(tuple(v + [0] * (width - len(v))) for v, _ in labelled)
    rows = tuple(a for _, a in labelled)
    return LsssPolicy(matrix, rows, format_formula(f))


ReconPlan = tuple  # tuple[tuple[int, int], ...]: (row index, coefficient mod p)


def _solve(policy: LsssPolicy, attributes, p: int):
    """Coefficients over the rows whose attribute is held, or None."""
    attrs = set(attributes)
    idx = [i for i, a in enumerate(policy.rows) if a in attrs]
    if not idx:
        return None
    n2, k = policy.n2, len(idx)
    # augmented system  M_S^T * gamma = e_1, one equation per matrix column
    aug = [[policy.matrix[i][c] % p for i in idx] + [1 if c == 0 else 0] for c in range(n2)]
    pivots = []
    r = 0
    for col in range(k):
        piv = next((j for j in range(r, n2) if aug[j][col]), None)
        if piv is None:
            continue
        aug[r], aug[piv] = aug[piv], aug[r]
        inv = pow(aug[r][col], -1, p)
        aug[r] = [v * inv % p for v in aug[r]]
        for j in range(n2):
            if j != r and aug[j][col]:
                fac = aug[j][col]
                aug[j] = [(a - fac * b) % p for a, b in zip(aug[j], aug[r])]
        pivots.append(col)
        r += 1
        if r == n2:
            break
    if any(aug[j][k] for j in range(r, n2)):
        return None
    gamma = [0] * k
    for row, col in enumerate(pivots):
        gamma[col] = aug[row][k]
    return tuple((idx[c], g) for c, g in enumerate(gamma) if g)


def satisfies(policy: LsssPolicy, attributes, p: int = ORDER) -> bool:
    """True iff (1,0,...,0) is in the span of the rows labelled by ``attributes``."""
    return _solve(policy, attributes, p) is not None


def recon_coefficients(policy: LsssPolicy, attributes, p: int = ORDER) -> ReconPlan:
    """Reconstruction constants with sum(gamma_i * M_i) = (1,0,...,0) mod p."""
    plan = _solve(policy, attributes, p)
    if plan is None:
        raise PolicyNotSatisfied("attribute set does not satisfy the access policy")
    return plan


def check_plan(policy: LsssPolicy, plan: ReconPlan, p: int = ORDER) -> bool:
    acc = [0] * policy.n2
    for i, g in plan:
        for c, v in enumerate(policy.matrix[i]):
            acc[c] = (acc[c] + g * v) % p
    return acc == [1] + [0] * (policy.n2 - 1)
