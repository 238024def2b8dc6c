"""The Hybrid Problem: k set families over a universe partitioned into 2^k
typed parts, its Basic single-type form, and the deterministic prime-residue
universe reduction that makes complementing sets affordable.

Universe elements are identified with 0..|U|-1 in canonical order; set and
part membership is cached as integer bitmasks, so the set algebra runs on
machine words.  Types tau are packed ints with family i at bit i.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Sequence

from .errors import ContractError, ResourceLimitError
from .ip import IPInstance, IpSolver

MAX_MATERIALIZED_UNIVERSE = 5_000_000


def _mask_of(members) -> int:
    mask = 0
    for u in members:
        mask |= 1 << u
    return mask


def _bits_of(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


class HybridInstance:
    """Immutable hybrid problem instance.

    ``element_types[u]`` is the packed type of element ``u``; ``families`` is
    a tuple of k tuples of frozensets of element indices.  ``labels`` and
    ``set_labels`` are optional names used by dumps and witness back-maps.
    """

    def __init__(
        self,
        k: int,
        kind: str,
        element_types: Sequence[int],
        families: Sequence[Sequence[frozenset[int]]],
        labels: Sequence[str] | None = None,
        set_labels: Sequence[Sequence[str]] | None = None,
    ):
        if kind not in ("max", "min"):
            raise ContractError(f"kind must be max or min, got {kind!r}")
        if len(families) != k:
            raise ContractError("family count must equal k")
        self.k = k
        self.kind = kind
        self.element_types = tuple(element_types)
        size = len(self.element_types)
        for tau in self.element_types:
            if not 0 <= tau < (1 << k):
                raise ContractError(f"type {tau} out of range for k={k}")
        self.families = tuple(tuple(frozenset(s) for s in fam) for fam in families)
        for fam in self.families:
            for s in fam:
                for u in s:
                    if not 0 <= u < size:
                        raise ContractError(f"set element {u} outside universe")
        self.labels = tuple(labels) if labels is not None else None
        self.set_labels = (
            tuple(tuple(sl) for sl in set_labels) if set_labels is not None else None
        )
        self.part_masks = [0] * (1 << k)
        for u, tau in enumerate(self.element_types):
            self.part_masks[tau] |= 1 << u
        self.set_masks = tuple(
            tuple(_mask_of(s) for s in fam) for fam in self.families
        )

    @property
    def size(self) -> int:
        return len(self.element_types)

    @property
    def m_h(self) -> int:
        return sum(len(s) for fam in self.families for s in fam)

    def part(self, tau: int) -> list[int]:
        return [u for u, t in enumerate(self.element_types) if t == tau]

    def label(self, u: int) -> str:
        return self.labels[u] if self.labels is not None else str(u)

    def dump(self) -> str:
        lines = []
        for u in range(self.size):
            bits = "".join(
                str(self.element_types[u] >> i & 1) for i in range(self.k)
            )
            lines.append(f"universe {self.label(u)} {bits}")
        for i, fam in enumerate(self.families):
            for j, s in enumerate(fam):
                name = (
                    self.set_labels[i][j]
                    if self.set_labels is not None
                    else f"s{j}"
                )
                members = " ".join(self.label(u) for u in sorted(s))
                lines.append(f"set {i} {name} {members}".rstrip())
        return "\n".join(lines) + "\n"


def val(
    instance: HybridInstance, chosen: Sequence[int]
) -> tuple[dict[int, int], int]:
    """Per-type and total value of one set per family (by set index)."""
    if len(chosen) != instance.k:
        raise ContractError("need one chosen set per family")
    masks = [instance.set_masks[i][j] for i, j in enumerate(chosen)]
    full = (1 << instance.size) - 1
    per_tau = {}
    total = 0
    for tau in range(1 << instance.k):
        acc = instance.part_masks[tau]
        for i in range(instance.k):
            acc &= masks[i] if tau >> i & 1 else full & ~masks[i]
            if not acc:
                break
        c = acc.bit_count()
        if c:
            per_tau[tau] = c
        total += c
    return per_tau, total


def hybrid_baseline(instance: HybridInstance) -> tuple[int, tuple[int, ...]] | None:
    """Exhaustive optimum over all family tuples; the test oracle and the
    heavy-set fallback of solve_hybrid."""
    if any(not fam for fam in instance.families):
        return None
    best_val = None
    best_key = None
    for key in product(*(range(len(f)) for f in instance.families)):
        _, total = val(instance, key)
        if best_val is None or (
            total > best_val if instance.kind == "max" else total < best_val
        ):
            best_val, best_key = total, key
    return best_val, best_key


@dataclass(frozen=True)
class BasicInstance:
    """Hybrid instance collapsed to a single constraint type."""

    k: int
    kind: str
    tau: int
    size: int
    families: tuple[tuple[frozenset[int], ...], ...]

    def val(self, chosen: Sequence[int]) -> int:
        sets = [self.families[i][j] for i, j in enumerate(chosen)]
        acc = set(range(self.size))
        for i in range(self.k):
            acc = acc & sets[i] if self.tau >> i & 1 else acc - sets[i]
        return len(acc)


def hybrid_to_basic(instance: HybridInstance, tau: int) -> BasicInstance:
    """Convert to an equivalent Basic instance of type ``tau`` by
    complementing sets on every part that disagrees with ``tau``.

    Total tuple values are preserved exactly; sparsity may grow up to
    n * |U|, which is why this runs after the universe reduction.
    """
    size = instance.size
    full = (1 << size) - 1
    agree = []
    for i in range(instance.k):
        mask = 0
        for t in range(1 << instance.k):
            if (t >> i & 1) == (tau >> i & 1):
                mask |= instance.part_masks[t]
        agree.append(mask)
    fams = []
    for i in range(instance.k):
        new_sets = []
        for smask in instance.set_masks[i]:
            new_mask = (smask & agree[i]) | (full & ~agree[i] & ~smask)
            new_sets.append(frozenset(_bits_of(new_mask)))
        fams.append(tuple(new_sets))
    return BasicInstance(instance.k, instance.kind, tau, size, tuple(fams))


def basic_to_ip(basic: BasicInstance) -> IPInstance:
    if basic.tau != (1 << basic.k) - 1:
        raise ContractError("IP encoding expects the all-ones type")
    families = tuple(
        tuple(tuple(sorted(s)) for s in fam) for fam in basic.families
    )
    return IPInstance(basic.k, families, basic.size)


# --- deterministic universe reduction ---------------------------------------

def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def prime_support(t: int) -> tuple[int, ...]:
    """First t primes at or above max(2, ceil(2 t log2 t)), ascending."""
    if t < 1:
        raise ContractError("t must be at least 1")
    lo = max(2, math.ceil(2 * t * math.log2(t)) if t > 1 else 2)
    primes = []
    n = lo
    while len(primes) < t:
        if _is_prime(n):
            primes.append(n)
        n += 1
    return tuple(primes)


def hash_element(u: int, primes: Sequence[int]) -> frozenset[tuple[int, int]]:
    """Residues of ``u`` modulo every support prime: {(slot, u mod p_slot)}."""
    if u < 0:
        raise ContractError("element index must be nonnegative")
    return frozenset((i, u % p) for i, p in enumerate(primes))


def collision_number(u: int, v: int, primes: Sequence[int]) -> int:
    return len(hash_element(u, primes) & hash_element(v, primes))


@dataclass(frozen=True)
class UniverseReduction:
    """Bookkeeping of one universe reduction: multiplicity t, the prime
    support (when any part was hashed), per-part mode, the exact offset Delta
    for the all-negative type, and the a-priori error bound."""

    t: int
    primes: tuple[int, ...] | None
    part_modes: tuple[str, ...]  # "copy" | "hash" per packed type
    delta: int
    e_bound: int


def error_bound(k: int, s: int, universe_size: int) -> int:
    """A-priori bound on |t*Val - Val' - Delta| over all tuples: collisions
    within the union of k sets of size <= s, summed over the 2^k parts."""
    return (
        2 ** (k + 1) * (k * s) ** 2 * math.ceil(math.log2(max(2, universe_size)))
    )


def universe_reduce(
    instance: HybridInstance, t: int
) -> tuple[HybridInstance, UniverseReduction]:
    """Shrink each part: small parts become t verbatim copies, large parts are
    hashed to prime-residue coordinates.  Returns the reduced instance and the
    offset/bound bookkeeping.

    The copy case also applies whenever t copies are no larger than the
    residue space, which keeps Delta >= 0 for tiny t where the prime support
    overshoots the paper's window.
    """
    if t < 1:
        raise ContractError("t must be at least 1")
    k = instance.k
    copy_threshold = 4 * t * math.log2(t) if t > 1 else 0.0
    part_elements = {tau: instance.part(tau) for tau in range(1 << k)}
    primes: tuple[int, ...] | None = None
    residue_space = None

    def ensure_primes():
        nonlocal primes, residue_space
        if primes is None:
            primes = prime_support(t)
            residue_space = sum(primes)

    modes = []
    for tau in range(1 << k):
        n_part = len(part_elements[tau])
        if n_part == 0 or n_part <= copy_threshold:
            modes.append("copy")
            continue
        ensure_primes()
        modes.append("copy" if t * n_part <= residue_space else "hash")

    new_types: list[int] = []
    new_labels: list[str] = []
    h_map: dict[int, tuple[int, ...]] = {}
    for tau in range(1 << k):
        elements = part_elements[tau]
        if modes[tau] == "copy":
            if t * len(elements) + len(new_types) > MAX_MATERIALIZED_UNIVERSE:
                raise ResourceLimitError(
                    f"reduced universe would exceed {MAX_MATERIALIZED_UNIVERSE} elements"
                )
            for pos, u in enumerate(elements):
                base = len(new_types)
                new_types.extend([tau] * t)
                new_labels.extend(f"{instance.label(u)}*{c}" for c in range(t))
                h_map[u] = tuple(range(base, base + t))
        else:
            ensure_primes()
            if residue_space + len(new_types) > MAX_MATERIALIZED_UNIVERSE:
                raise ResourceLimitError(
                    f"reduced universe would exceed {MAX_MATERIALIZED_UNIVERSE} elements"
                )
            slot_base = []
            for i, p in enumerate(primes):
                slot_base.append(len(new_types))
                new_types.extend([tau] * p)
                new_labels.extend(f"t{tau}p{i}r{j}" for j in range(p))
            for pos, u in enumerate(elements):
                h_map[u] = tuple(
                    slot_base[i] + (pos % p) for i, p in enumerate(primes)
                )

    new_families = tuple(
        tuple(
            frozenset(nu for u in s for nu in h_map[u]) for s in fam
        )
        for fam in instance.families
    )
    reduced = HybridInstance(
        k,
        instance.kind,
        new_types,
        new_families,
        labels=new_labels,
        set_labels=instance.set_labels,
    )
    n_zero = len(part_elements[0])
    n_zero_new = sum(1 for tau in new_types if tau == 0)
    delta = t * n_zero - n_zero_new
    assert delta >= 0, "Delta must be nonnegative"
    s = max((len(s) for fam in instance.families for s in fam), default=0)
    bound = error_bound(k, s, instance.size)
    return reduced, UniverseReduction(t, primes, tuple(modes), delta, bound)


# --- hybrid solve through IP -------------------------------------------------

@dataclass(frozen=True)
class SolveConfig:
    """Mode and thresholds for solve_hybrid and the reduction pipeline.

    ``s_max`` is the heavy-set cutoff: sets larger than this are brute-forced
    before the universe reduction.  ``t_override`` forces the multiplicity
    (testing only; the default rule guarantees exact recovery).
    """

    mode: str = "exact"  # "exact" | "approx"
    c: float = 1.0
    eps: float | None = None
    s_max: int = 8
    t_override: int | None = None
    top_k_override: int | None = None  # testing only, see solve_cross_free_lift

    def __post_init__(self):
        if self.mode not in ("exact", "approx"):
            raise ContractError(f"unknown mode {self.mode!r}")
        if self.s_max < 1:
            raise ContractError("s_max must be positive")
        if self.mode == "exact":
            if self.c != 1.0:
                raise ContractError("exact mode requires ratio c = 1")
        else:
            if self.c < 1.0:
                raise ContractError("approximation ratio must be >= 1")
            if self.eps is None or not 0 < self.eps < 0.5:
                raise ContractError("approx mode requires eps in (0, 1/2)")

    @staticmethod
    def exact(s_max: int = 8, **kw) -> "SolveConfig":
        return SolveConfig(mode="exact", s_max=s_max, **kw)

    @staticmethod
    def approx(c: float, eps: float, s_max: int = 8, **kw) -> "SolveConfig":
        return SolveConfig(mode="approx", c=c, eps=eps, s_max=s_max, **kw)


def select_t(config: SolveConfig, k: int, s_eff: int, universe_size: int) -> tuple[int, int]:
    """Multiplicity from the error bound: exact mode needs the bound to fit
    strictly inside half a multiple of t, approx mode inside eps*t."""
    bound = error_bound(k, max(1, s_eff), universe_size)
    if config.t_override is not None:
        return config.t_override, bound
    if config.mode == "exact":
        return 2 * bound + 1, bound
    return max(1, math.ceil(bound / config.eps)), bound


def solve_hybrid(
    instance: HybridInstance, ip_solver: IpSolver, config: SolveConfig
) -> int | None:
    value, _ = solve_hybrid_with_info(instance, ip_solver, config)
    return value


def solve_hybrid_with_info(
    instance: HybridInstance, ip_solver: IpSolver, config: SolveConfig
) -> tuple[int | None, dict]:
    """Heavy-set elimination, universe reduction, Basic conversion at the
    all-ones type, one IP solver call, and rounding recovery."""
    if ip_solver.kind != instance.kind:
        raise ContractError("ip solver kind does not match instance kind")
    if config.mode == "exact" and ip_solver.ratio != 1.0:
        raise ContractError("exact mode requires an exact ip solver")
    info: dict = {"universe": instance.size, "m_h": instance.m_h}
    if any(not fam for fam in instance.families):
        return None, info

    better = max if instance.kind == "max" else min

    # step 1: brute-force heavy sets, then drop them
    heavy_best: int | None = None
    heavy = [
        (i, j)
        for i, fam in enumerate(instance.families)
        for j, s in enumerate(fam)
        if len(s) > config.s_max
    ]
    info["heavy_sets"] = len(heavy)
    for i, j in heavy:
        other = [range(len(f)) if q != i else (j,) for q, f in enumerate(instance.families)]
        for key in product(*other):
            _, total = val(instance, key)
            heavy_best = total if heavy_best is None else better(heavy_best, total)

    light_sets = [
        [j for j, s in enumerate(fam) if len(s) <= config.s_max]
        for fam in instance.families
    ]
    if any(not idxs for idxs in light_sets):
        return heavy_best, info

    light = HybridInstance(
        instance.k,
        instance.kind,
        instance.element_types,
        [
            [instance.families[i][j] for j in idxs]
            for i, idxs in enumerate(light_sets)
        ],
    )

    # step 2: pick t and reduce the universe
    s_eff = max(
        (len(s) for fam in light.families for s in fam), default=0
    )
    t, bound = select_t(config, light.k, min(s_eff, config.s_max), light.size)
    info["t"] = t
    info["e_bound"] = bound
    tau_ones = (1 << light.k) - 1

    copy_threshold = 4 * t * math.log2(t) if t > 1 else 0.0
    all_copy = all(
        light.part_masks[tau].bit_count() <= copy_threshold
        for tau in range(1 << light.k)
    )
    if all_copy:
        # Every part is duplicated t times verbatim, so the reduced instance
        # is the original scaled by t with Delta = 0 and zero collision error;
        # solving the unscaled encoding and rescaling is the same computation.
        info["delta"] = 0
        info["reduced_universe"] = t * light.size
        info["copy_fast_path"] = True
        alg_unit = ip_solver.solve(basic_to_ip(hybrid_to_basic(light, tau_ones)))
        if alg_unit is None:
            return heavy_best, info
        alg = Fraction(alg_unit)
    else:
        reduced, red = universe_reduce(light, t)
        info["delta"] = red.delta
        info["reduced_universe"] = reduced.size
        info["copy_fast_path"] = False
        alg_prime = ip_solver.solve(basic_to_ip(hybrid_to_basic(reduced, tau_ones)))
        if alg_prime is None:
            return heavy_best, info
        alg = Fraction(alg_prime + red.delta, t)

    # step 3: recover the original-scale value
    if config.mode == "exact":
        light_val = int((2 * alg.numerator + alg.denominator) // (2 * alg.denominator))
    elif instance.kind == "max":
        light_val = math.ceil(alg - Fraction(config.eps))
    else:
        light_val = math.floor(alg + Fraction(config.eps))
    light_val = max(0, light_val)

    return (light_val if heavy_best is None else better(heavy_best, light_val)), info
