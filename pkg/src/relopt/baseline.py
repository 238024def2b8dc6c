"""Exact reference solver: brute-force the leading variables, finish the last
two with a color-decomposition count.

The two-variable base case groups the counting domain by the truth pattern of
its unary-like atoms and counts pair patterns only for pairs occurring in some
positive record; absent pairs are recovered from the complement identity
``C(x; a, 0) = |Y_a| - sum_b C(x; a, b)``.  This module is also the
correctness oracle for everything else in the package.

All inputs are immutable; the outer loop over the leading variable touches
disjoint table slices, so it parallelizes with an associative max/min merge
(kept single-threaded here).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import UnsupportedShapeError
from .formula import Atom, Expr, OptFormula, atoms_of, eval_expr_table
from .structure import ObjectId, RelationalStructure

# Base case switches to a naive double loop beyond this many atoms per class;
# keeps the color memo tables small.
COLOR_ATOM_CAP = 20

Domains = Mapping[str, Sequence[ObjectId]]


class OptResult(NamedTuple):
    value: int
    witness: tuple[ObjectId, ...]


@dataclass
class ValueTable:
    """Values of all optimization tuples: entries[(x1, ..., xk)] = count."""

    entries: dict[tuple[ObjectId, ...], int]

    def dump(self, structure: RelationalStructure) -> str:
        lines = []
        for key in sorted(self.entries):
            labs = " ".join(structure.labels[x] for x in key)
            lines.append(f"{labs} {self.entries[key]}")
        return "\n".join(lines) + ("\n" if lines else "")


def resolve_domains(
    structure: RelationalStructure,
    formula: OptFormula,
    domains: Domains | None,
) -> dict[str, tuple[ObjectId, ...]]:
    everything = tuple(range(structure.n))
    out = {}
    for v in formula.opt_vars + formula.count_vars:
        if domains is not None and v in domains:
            out[v] = tuple(sorted(set(domains[v])))
        else:
            out[v] = everything
    return out


class ProjectedAtom:
    """Records of one atom grouped by the values of its fixed variables.

    ``query(assignment)`` returns the set of value tuples for the atom's free
    variables (in ``free_vars`` order, restricted to variables the atom
    actually uses) that make the atom true under the assignment.
    """

    def __init__(
        self,
        structure: RelationalStructure,
        atom: Atom,
        fixed_vars: Iterable[str],
        free_vars: Sequence[str],
    ):
        fixed = set(fixed_vars)
        args = atom.args
        self.fixed_key = tuple(sorted({v for v in args if v in fixed}))
        self.present_free = tuple(v for v in free_vars if v in args)
        by_fixed: dict[tuple, set[tuple]] = {}
        for rec in structure.relation(atom.pred).records:
            vals: dict[str, ObjectId] = {}
            ok = True
            for v, x in zip(args, rec):
                if vals.setdefault(v, x) != x:
                    ok = False
                    break
            if not ok:
                continue
            key = tuple(vals[v] for v in self.fixed_key)
            free_val = tuple(vals[v] for v in self.present_free)
            by_fixed.setdefault(key, set()).add(free_val)
        self.by_fixed = by_fixed

    def query(self, assignment: Mapping[str, ObjectId]) -> set[tuple]:
        key = tuple(assignment[v] for v in self.fixed_key)
        return self.by_fixed.get(key, set())


def _atom_truth(
    structure: RelationalStructure, atom: Atom, assignment: Mapping[str, ObjectId]
) -> bool:
    rec = tuple(assignment[v] for v in atom.args)
    return rec in structure.relation(atom.pred).records


class _Evaluator:
    """Shared state for one baseline_values run."""

    def __init__(
        self,
        structure: RelationalStructure,
        formula: OptFormula,
        domains: dict[str, tuple[ObjectId, ...]],
    ):
        self.structure = structure
        self.formula = formula
        self.domains = domains
        self.order = formula.opt_vars + formula.count_vars
        self.atoms = tuple(dict.fromkeys(atoms_of(formula.body)))
        u, w = self.order[-2], self.order[-1]
        assigned = set(self.order[:-2])
        self.u_var, self.w_var = u, w
        self.fixed_atoms = []
        self.u_atoms = []
        self.w_atoms = []
        self.mixed_atoms = []
        for atom in self.atoms:
            vs = set(atom.args)
            if u in vs and w in vs:
                self.mixed_atoms.append(atom)
            elif u in vs:
                self.u_atoms.append(atom)
            elif w in vs:
                self.w_atoms.append(atom)
            else:
                self.fixed_atoms.append(atom)
        self.use_colors = (
            len(self.u_atoms) <= COLOR_ATOM_CAP
            and len(self.w_atoms) <= COLOR_ATOM_CAP
            and len(self.mixed_atoms) <= COLOR_ATOM_CAP
        )
        if self.use_colors:
            self.u_proj = [
                ProjectedAtom(structure, a, assigned, (u,)) for a in self.u_atoms
            ]
            self.w_proj = [
                ProjectedAtom(structure, a, assigned, (w,)) for a in self.w_atoms
            ]
            self.mixed_proj = [
                ProjectedAtom(structure, a, assigned, (u, w)) for a in self.mixed_atoms
            ]
        self._phi_memo: dict[tuple, bool] = {}

    def _phi(self, fixed_bits, u_bits, w_bits, m_bits) -> bool:
        key = (fixed_bits, u_bits, w_bits, m_bits)
        hit = self._phi_memo.get(key)
        if hit is not None:
            return hit
        values: dict[Atom, bool] = {}
        for i, a in enumerate(self.fixed_atoms):
            values[a] = bool(fixed_bits >> i & 1)
        for i, a in enumerate(self.u_atoms):
            values[a] = bool(u_bits >> i & 1)
        for i, a in enumerate(self.w_atoms):
            values[a] = bool(w_bits >> i & 1)
        for i, a in enumerate(self.mixed_atoms):
            values[a] = bool(m_bits >> i & 1)
        out = eval_expr_table(self.formula.body, values)
        self._phi_memo[key] = out
        return out

    def base_case(self, asn: dict[str, ObjectId]) -> dict[ObjectId, int]:
        """psi(u) = #{w : body} for every u in its domain, in linear time."""
        dom_u = self.domains[self.u_var]
        dom_w = self.domains[self.w_var]
        if not self.use_colors:
            out = {}
            for uv in dom_u:
                asn[self.u_var] = uv
                cnt = 0
                for wv in dom_w:
                    asn[self.w_var] = wv
                    values = {a: _atom_truth(self.structure, a, asn) for a in self.atoms}
                    cnt += eval_expr_table(self.formula.body, values)
                asn.pop(self.w_var, None)
                out[uv] = cnt
            asn.pop(self.u_var, None)
            return out

        fixed_bits = 0
        for i, a in enumerate(self.fixed_atoms):
            if _atom_truth(self.structure, a, asn):
                fixed_bits |= 1 << i

        u_sets = [p.query(asn) for p in self.u_proj]
        w_sets = [p.query(asn) for p in self.w_proj]

        # group the counting domain by w-color
        w_color: dict[ObjectId, int] = {}
        color_count: dict[int, int] = {}
        for wv in dom_w:
            bits = 0
            for i, s in enumerate(w_sets):
                if (wv,) in s:
                    bits |= 1 << i
            w_color[wv] = bits
            color_count[bits] = color_count.get(bits, 0) + 1

        # pairs that make at least one mixed atom true
        dom_u_set = set(dom_u)
        dom_w_set = set(dom_w)
        pair_bits: dict[tuple[ObjectId, ObjectId], int] = {}
        for i, p in enumerate(self.mixed_proj):
            for pair in p.query(asn):
                uv, wv = pair
                if uv in dom_u_set and wv in dom_w_set:
                    pair_bits[uv, wv] = pair_bits.get((uv, wv), 0) | 1 << i

        # per-u counters C(u; alpha, beta) for beta != 0
        counters: dict[ObjectId, dict[tuple[int, int], int]] = {}
        for (uv, wv), m_bits in pair_bits.items():
            key = (w_color[wv], m_bits)
            c = counters.setdefault(uv, {})
            c[key] = c.get(key, 0) + 1

        out = {}
        for uv in dom_u:
            u_bits = 0
            for i, s in enumerate(u_sets):
                if (uv,) in s:
                    u_bits |= 1 << i
            cnt = 0
            pos = counters.get(uv, {})
            pos_per_color: dict[int, int] = {}
            for (alpha, m_bits), c in pos.items():
                pos_per_color[alpha] = pos_per_color.get(alpha, 0) + c
                if self._phi(fixed_bits, u_bits, alpha, m_bits):
                    cnt += c
            for alpha, total in color_count.items():
                if self._phi(fixed_bits, u_bits, alpha, 0):
                    cnt += total - pos_per_color.get(alpha, 0)
            out[uv] = cnt
        return out

    def run(self, depth: int, asn: dict[str, ObjectId]):
        """Returns a dict over remaining-opt-variable tuples, or an int when
        only counting variables remain."""
        remaining = len(self.order) - depth
        k = self.formula.k
        if remaining == 2:
            per_u = self.base_case(asn)
            if depth <= k - 1:  # order[depth] is an optimization variable
                return {(uv,): c for uv, c in per_u.items()}
            return sum(per_u.values())
        var = self.order[depth]
        if depth < k:
            table: dict[tuple, int] = {}
            for o in self.domains[var]:
                asn[var] = o
                sub = self.run(depth + 1, asn)
                if isinstance(sub, dict):
                    for key, val in sub.items():
                        table[(o,) + key] = val
                else:
                    table[(o,)] = sub
            if self.domains[var]:
                del asn[var]
            return table
        total = 0
        for o in self.domains[var]:
            asn[var] = o
            total += self.run(depth + 1, asn)
        if self.domains[var]:
            del asn[var]
        return total


def baseline_values(
    structure: RelationalStructure,
    formula: OptFormula,
    domains: Domains | None = None,
) -> ValueTable:
    """Val(x1,...,xk) for every optimization tuple over the given domains."""
    if formula.k + formula.ell < 2:
        raise UnsupportedShapeError("need at least two variables in total")
    doms = resolve_domains(structure, formula, domains)
    ev = _Evaluator(structure, formula, doms)
    table = ev.run(0, {})
    assert isinstance(table, dict)
    return ValueTable(table)


def baseline_opt(
    structure: RelationalStructure,
    formula: OptFormula,
    domains: Domains | None = None,
) -> OptResult | None:
    """Optimum and lexicographically least witness; None if no tuple exists."""
    table = baseline_values(structure, formula, domains)
    return opt_of_table(table.entries, formula.kind)


def opt_of_table(
    entries: Mapping[tuple[ObjectId, ...], int], kind: str
) -> OptResult | None:
    best: OptResult | None = None
    for key in sorted(entries):
        val = entries[key]
        if best is None or (val > best.value if kind == "max" else val < best.value):
            best = OptResult(val, key)
    return best


def guard_holds(
    structure: RelationalStructure,
    guard: Sequence[tuple[Atom, bool]],
    assignment: Mapping[str, ObjectId],
) -> bool:
    return all(_atom_truth(structure, a, assignment) == want for a, want in guard)


def baseline_opt_restricted(
    structure: RelationalStructure,
    formula: OptFormula,
    guard: Sequence[tuple[Atom, bool]],
    domains: Domains | None = None,
) -> OptResult | None:
    """Optimum over optimization tuples satisfying all guard literals.

    The guard literals must mention optimization variables only.  This is the
    domain-restricted semantics the decomposition steps need: for minimization
    a conjunction inside the body would masquerade excluded tuples as value 0,
    so exclusion must happen at the tuple level instead.
    """
    for atom, _ in guard:
        if not set(atom.args) <= set(formula.opt_vars):
            raise ValueError(f"guard atom {atom} uses non-optimization variables")
    table = baseline_values(structure, formula, domains)
    opt_vars = formula.opt_vars
    best: OptResult | None = None
    for key in sorted(table.entries):
        asn = dict(zip(opt_vars, key))
        if not guard_holds(structure, guard, asn):
            continue
        val = table.entries[key]
        if best is None or (
            val > best.value if formula.kind == "max" else val < best.value
        ):
            best = OptResult(val, key)
    return best


def naive_values(
    structure: RelationalStructure,
    formula: OptFormula,
    domains: Domains | None = None,
) -> ValueTable:
    """Plain nested-loop evaluation; exponential, for cross-checks only."""
    from .formula import evaluate_body
    from itertools import product

    doms = resolve_domains(structure, formula, domains)
    opt_doms = [doms[v] for v in formula.opt_vars]
    cnt_doms = [doms[v] for v in formula.count_vars]
    entries = {}
    for xs in product(*opt_doms):
        asn = dict(zip(formula.opt_vars, xs))
        total = 0
        for ys in product(*cnt_doms):
            asn.update(zip(formula.count_vars, ys))
            total += evaluate_body(formula, structure, asn)
        entries[xs] = total
    return ValueTable(entries)
