"""k-ary maximum/minimum inner product over sparse 0/1 vectors.

Vectors are sorted coordinate tuples.  The brute-force solvers are the
reference inner solvers of the reduction pipeline; the external fast solvers
they stand in for plug in through the same IpSolver interface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, Sequence

from .errors import ContractError, ResourceLimitError

Vector = tuple[int, ...]

DEFAULT_TUPLE_BUDGET = 5_000_000


@dataclass(frozen=True)
class IPInstance:
    """k families of sparse 0/1 vectors in dimension d."""

    k: int
    families: tuple[tuple[Vector, ...], ...]
    d: int

    def __post_init__(self):
        if len(self.families) != self.k:
            raise ContractError("family count must equal k")
        for fam in self.families:
            for vec in fam:
                if any(c < 0 or c >= self.d for c in vec):
                    raise ContractError("coordinate out of range")
                if any(a >= b for a, b in zip(vec, vec[1:])):
                    raise ContractError("coordinates must be strictly increasing")

    @property
    def m_ip(self) -> int:
        return sum(len(v) for fam in self.families for v in fam)

    def dump(self) -> str:
        lines = [f"dim {self.d}"]
        for i, fam in enumerate(self.families):
            for vec in fam:
                lines.append(f"vec {i} " + " ".join(str(c) for c in vec))
        return "\n".join(lines) + "\n"


def parse_ip_instance(text: str, k: int | None = None) -> IPInstance:
    d = None
    fams: dict[int, list[Vector]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "dim":
            d = int(parts[1])
        elif parts[0] == "vec":
            fam = int(parts[1])
            fams.setdefault(fam, []).append(tuple(sorted(int(c) for c in parts[2:])))
        else:
            raise ContractError(f"line {line_no}: unknown directive {parts[0]!r}")
    if d is None:
        raise ContractError("missing 'dim' line")
    nfam = k if k is not None else (max(fams) + 1 if fams else 0)
    families = tuple(tuple(fams.get(i, [])) for i in range(nfam))
    return IPInstance(nfam, families, d)


def inner_product(vectors: Sequence[Vector]) -> int:
    """Size of the common support, by merge intersection of sorted lists."""
    if not vectors:
        return 0
    acc = vectors[0]
    for vec in vectors[1:]:
        if not acc:
            return 0
        merged = []
        i = j = 0
        while i < len(acc) and j < len(vec):
            a, b = acc[i], vec[j]
            if a == b:
                merged.append(a)
                i += 1
                j += 1
            elif a < b:
                i += 1
            else:
                j += 1
        acc = merged
    return len(acc)


def _brute_force(instance: IPInstance, kind: str, budget: int):
    count = math.prod(len(f) for f in instance.families)
    if count > budget:
        raise ResourceLimitError(
            f"{count} tuples exceed the brute-force budget of {budget}"
        )
    if count == 0:
        return None
    best_val = None
    best_key = None
    for key in product(*(range(len(f)) for f in instance.families)):
        val = inner_product([instance.families[i][j] for i, j in enumerate(key)])
        if (
            best_val is None
            or (val > best_val if kind == "max" else val < best_val)
        ):
            best_val, best_key = val, key
    return best_val, best_key


def brute_force_kmaxip(
    instance: IPInstance, budget: int = DEFAULT_TUPLE_BUDGET
) -> tuple[int, tuple[int, ...]] | None:
    """Exact maximum and lexicographically least witness (vector indices)."""
    return _brute_force(instance, "max", budget)


def brute_force_kminip(
    instance: IPInstance, budget: int = DEFAULT_TUPLE_BUDGET
) -> tuple[int, tuple[int, ...]] | None:
    return _brute_force(instance, "min", budget)


def densify(
    instance: IPInstance, budget: int = 50_000_000
) -> tuple[tuple[tuple[int, ...], ...], ...]:
    """Dense 0/1 rows, value preserving; inverse of sparsify."""
    total = instance.d * sum(len(f) for f in instance.families)
    if total > budget:
        raise ResourceLimitError(f"{total} dense cells exceed budget {budget}")
    out = []
    for fam in instance.families:
        rows = []
        for vec in fam:
            row = [0] * instance.d
            for c in vec:
                row[c] = 1
            rows.append(tuple(row))
        out.append(tuple(rows))
    return tuple(out)


def sparsify(dense_families: Sequence[Sequence[Sequence[int]]], d: int) -> IPInstance:
    families = tuple(
        tuple(tuple(i for i, bit in enumerate(row) if bit) for row in fam)
        for fam in dense_families
    )
    return IPInstance(len(families), families, d)


@dataclass(frozen=True)
class IpSolver:
    """A value oracle for k-IP with a declared approximation ratio.

    For max kind the returned value lies in [OPT/c, OPT]; for min kind in
    [OPT, c*OPT].  ``solve`` returns None when some family is empty.
    """

    kind: str  # "max" | "min"
    ratio: float
    solve: Callable[[IPInstance], int | None]


def exact_solver(kind: str, budget: int = DEFAULT_TUPLE_BUDGET) -> IpSolver:
    brute = brute_force_kmaxip if kind == "max" else brute_force_kminip

    def solve(instance: IPInstance) -> int | None:
        res = brute(instance, budget)
        return None if res is None else res[0]

    return IpSolver(kind, 1.0, solve)


def approx_wrapper(exact: IpSolver, c: float) -> IpSolver:
    """Degrade an exact solver to a deterministic c-approximation sitting at
    the worst end of the allowed interval (test oracle for ratio preservation)."""
    if c < 1:
        raise ContractError("approximation ratio must be >= 1")

    def solve(instance: IPInstance) -> int | None:
        opt = exact.solve(instance)
        if opt is None:
            return None
        if exact.kind == "max":
            val = math.ceil(opt / c)
            return max(min(val, opt), math.ceil(opt / c))
        val = math.floor(opt * c)
        return min(max(val, opt), math.floor(opt * c))

    return IpSolver(exact.kind, c * exact.ratio, solve)


def make_ip_solver(kind: str, spec: str) -> IpSolver:
    """Build a solver from a CLI-style spec: 'exact' or 'approx:<c>'."""
    if spec == "exact":
        return exact_solver(kind)
    if spec.startswith("approx:"):
        c = float(spec.split(":", 1)[1])
        return approx_wrapper(exact_solver(kind), c)
    raise ContractError(f"unknown ip solver spec {spec!r}")
