"""The simplification chain for single-counting-variable formulas: hyperedge
removal, cross-edge elimination with grouped top-K re-solving, parallel-edge
removal, conversion to the Hybrid Problem, and the end-to-end driver.

Guard handling: each removal step excludes some optimization tuples from the
main problem and hands them to exactly solved side problems.  For maximization
a conjunction of negated literals inside the body would do, but a masked tuple
evaluates to 0, which is not neutral for minimization.  Guards therefore
travel beside the body as explicit (atom, expected) literals and every solver
in the chain skips tuples that fail them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Mapping, Sequence

from .baseline import (
    OptResult,
    ProjectedAtom,
    _atom_truth,
    baseline_opt,
    baseline_opt_restricted,
    baseline_values,
    resolve_domains,
)
from .errors import ContractError, ResourceLimitError, UnsupportedShapeError
from .fastcount import multi_counting_opt
from .formula import (
    And,
    Atom,
    Const,
    Expr,
    Not,
    OptFormula,
    Or,
    atoms_of,
    classify,
    conjoin,
    conjuncts,
    disjoin,
    eval_expr_table,
    map_atoms,
    substitute_atoms,
)
from .hybrid import HybridInstance, SolveConfig, solve_hybrid_with_info
from .ip import IpSolver
from .structure import ObjectId, Relation, RelationalStructure

Guard = tuple[tuple[Atom, bool], ...]
Domains = Mapping[str, Sequence[ObjectId]]

SLOT_SEP = "@"
COPY_SEP = "#"
DEFAULT_R_CAP = 4
SIGMA_CAP = 1 << 16
PIPELINE_S_MAX = 1_000_000  # desk-scale sets are never "heavy" by default


def _fresh(name: str, taken) -> str:
    while name in taken:
        name = "_" + name
    return name


def combine_results(kind: str, results) -> OptResult | None:
    """Optimum over sub-results, ties broken by lexicographic witness."""
    best = None
    for res in results:
        if res is None:
            continue
        if best is None:
            best = res
        elif kind == "max":
            if res.value > best.value or (
                res.value == best.value and res.witness < best.witness
            ):
                best = res
        else:
            if res.value < best.value or (
                res.value == best.value and res.witness < best.witness
            ):
                best = res
    return best


# --- repeated-variable and orientation normalization ------------------------

def normalize_formula(
    structure: RelationalStructure, formula: OptFormula
) -> tuple[RelationalStructure, OptFormula]:
    """Collapse atoms with repeated variables into derived lower-arity
    predicates and orient every opt/count binary atom as (x, y).

    After this pass every atom has pairwise distinct arguments, so an atom is
    a hyperedge exactly when it has three or more arguments.
    """
    new_relations = dict(structure.relations)
    derived: dict[tuple, str] = {}
    opt = set(formula.opt_vars)
    cnt = set(formula.count_vars)

    def rewrite(atom: Atom) -> Atom:
        args = atom.args
        distinct = tuple(dict.fromkeys(args))
        if len(distinct) != len(args):
            pattern = tuple(distinct.index(v) for v in args)
            key = ("collapse", atom.pred, pattern)
            name = derived.get(key)
            if name is None:
                name = _fresh(
                    f"{atom.pred}_d{''.join(str(p) for p in pattern)}", new_relations
                )
                derived[key] = name
                rel = structure.relation(atom.pred)
                recs = set()
                for rec in rel.records:
                    vals = {}
                    ok = True
                    for pos, x in zip(pattern, rec):
                        if vals.setdefault(pos, x) != x:
                            ok = False
                            break
                    if ok:
                        recs.add(tuple(vals[i] for i in range(len(distinct))))
                new_relations[name] = Relation(name, len(distinct), frozenset(recs))
            atom = Atom(name, distinct)
        if (
            len(atom.args) == 2
            and atom.args[0] in cnt
            and atom.args[1] in opt
        ):
            key = ("reverse", atom.pred)
            name = derived.get(key)
            if name is None:
                name = _fresh(f"{atom.pred}_rev", new_relations)
                derived[key] = name
                rel = new_relations[atom.pred]
                recs = frozenset((b, a) for a, b in rel.records)
                new_relations[name] = Relation(name, 2, recs)
            atom = Atom(name, (atom.args[1], atom.args[0]))
        return atom

    body = map_atoms(formula.body, rewrite)
    if body == formula.body:
        return structure, formula
    return (
        RelationalStructure(structure.labels, new_relations),
        formula.with_body(body),
    )


# --- positive-cross-edge exact solver ---------------------------------------

class _CountOverY:
    """Counts #{y : body} for a full assignment of the optimization variables
    in O(candidate neighbourhood) after one shared indexing pass."""

    def __init__(self, structure: RelationalStructure, formula: OptFormula):
        self.structure = structure
        self.formula = formula
        self.y = formula.count_vars[0]
        self.atoms = tuple(dict.fromkeys(atoms_of(formula.body)))
        fixed_vars = set(formula.opt_vars)
        self.fixed_atoms = [a for a in self.atoms if self.y not in a.args]
        self.y_atoms = [a for a in self.atoms if self.y in a.args]
        self.y_proj = [
            ProjectedAtom(structure, a, fixed_vars, (self.y,)) for a in self.y_atoms
        ]
        self._memo: dict[tuple, bool] = {}

    def _phi(self, fixed_bits: int, y_bits: int) -> bool:
        key = (fixed_bits, y_bits)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        values = {a: bool(fixed_bits >> i & 1) for i, a in enumerate(self.fixed_atoms)}
        for i, a in enumerate(self.y_atoms):
            values[a] = bool(y_bits >> i & 1)
        out = eval_expr_table(self.formula.body, values)
        self._memo[key] = out
        return out

    def count(self, asn: Mapping[str, ObjectId], dom_y: Sequence[ObjectId]) -> int:
        fixed_bits = 0
        for i, a in enumerate(self.fixed_atoms):
            if _atom_truth(self.structure, a, asn):
                fixed_bits |= 1 << i
        y_sets = [p.query(asn) for p in self.y_proj]
        dom = set(dom_y)
        candidates: dict[ObjectId, int] = {}
        for i, s in enumerate(y_sets):
            for (yv,) in s:
                if yv in dom:
                    candidates[yv] = candidates.get(yv, 0) | 1 << i
        total = sum(1 for bits in candidates.values() if self._phi(fixed_bits, bits))
        if self._phi(fixed_bits, 0):
            total += len(dom) - len(candidates)
        return total


def solve_positive_cross_edge(
    structure: RelationalStructure,
    formula: OptFormula,
    forced: Atom,
    domains: Domains | None = None,
    extra_guard: Guard = (),
    include_edgeless_pairs: bool = True,
) -> OptResult | None:
    """Exact solver for bodies of the shape E(x_i, x_j) & phi'.

    With ``include_edgeless_pairs`` (the formula semantics) every tuple
    participates and pairs without the forced edge have value 0.  The
    decomposition passes False to optimize over forced-edge tuples only, plus
    an accumulated guard.  Uses the heavy/heavy/light-light degree split.
    """
    if formula.ell != 1:
        raise ContractError("positive-cross-edge solver needs exactly one count variable")
    if forced not in conjuncts(formula.body):
        raise ContractError("forced atom must be a top-level conjunct of the body")
    if len(forced.args) != 2 or forced.args[0] == forced.args[1]:
        raise ContractError("forced atom must be binary over two distinct variables")
    xi, xj = forced.args
    if xi not in formula.opt_vars or xj not in formula.opt_vars:
        raise ContractError("forced atom must relate two optimization variables")

    doms = resolve_domains(structure, formula, domains)
    m = structure.m
    erel = structure.relation(forced.pred)

    def is_heavy(v: ObjectId) -> bool:
        d = structure.degree(v)
        return d * d >= m

    guard_all: Guard = tuple(extra_guard) + ((forced, True),)
    others = [v for v in formula.opt_vars if v not in (xi, xj)]
    counter = _CountOverY(structure, formula)
    candidates: list[OptResult] = []

    def sub_opt(fixed: dict[str, ObjectId]) -> OptResult | None:
        sub_domains = dict(doms)
        for var, v in fixed.items():
            sub_domains[var] = (v,)
        if include_edgeless_pairs:
            guard = tuple(extra_guard)
            if not guard:
                return baseline_opt(structure, formula, sub_domains)
            return baseline_opt_restricted(structure, formula, guard, sub_domains)
        return baseline_opt_restricted(structure, formula, guard_all, sub_domains)

    def run_core(other_asn: dict[str, ObjectId]):
        # case 1 and 2: a heavy endpoint is brute-forced with the baseline
        for var in (xi, xj):
            for v in doms[var]:
                if is_heavy(v):
                    res = sub_opt({**other_asn, var: v})
                    if res is not None:
                        candidates.append(res)
        # case 3: light-light pairs carrying the forced edge
        di, dj = set(doms[xi]), set(doms[xj])
        for a, b in sorted(erel.records):
            if a not in di or b not in dj or is_heavy(a) or is_heavy(b):
                continue
            asn = {**other_asn, xi: a, xj: b}
            if extra_guard and not all(
                _atom_truth(structure, g, asn) == want for g, want in extra_guard
            ):
                continue
            value = counter.count(asn, doms[formula.count_vars[0]])
            witness = tuple(asn[v] for v in formula.opt_vars)
            candidates.append(OptResult(value, witness))
        # light-light pairs without the edge all have value 0
        if include_edgeless_pairs:
            xi_light = [v for v in doms[xi] if not is_heavy(v)]
            xj_light = [v for v in doms[xj] if not is_heavy(v)]
            for a in xi_light:
                done = False
                for b in xj_light:
                    if (a, b) in erel.records:
                        continue
                    asn = {**other_asn, xi: a, xj: b}
                    if extra_guard and not all(
                        _atom_truth(structure, g, asn) == want
                        for g, want in extra_guard
                    ):
                        continue
                    witness = tuple(asn[v] for v in formula.opt_vars)
                    candidates.append(OptResult(0, witness))
                    done = True
                    break
                if done:
                    break

    if others:
        for combo in product(*(doms[v] for v in others)):
            run_core(dict(zip(others, combo)))
    else:
        run_core({})
    return combine_results(formula.kind, candidates)


# --- step 1: hyperedge removal ----------------------------------------------

@dataclass(frozen=True)
class SideProblem:
    structure: RelationalStructure
    formula: OptFormula
    forced: Atom


@dataclass(frozen=True)
class DecompositionPlan:
    """Main simplified instance plus exactly solvable side problems; the
    original optimum is the combiner over all sub-optima."""

    main_structure: RelationalStructure
    main_core: OptFormula  # body without the guard literals
    main_guard: Guard
    side_problems: tuple[SideProblem, ...]
    combiner: str

    @property
    def main_formula(self) -> OptFormula:
        guard_expr = [
            Atom(a.pred, a.args) if want else Not(Atom(a.pred, a.args))
            for a, want in self.main_guard
        ]
        return self.main_core.with_body(
            conjoin(guard_expr + [self.main_core.body])
        )


def remove_hyperedges(
    structure: RelationalStructure, formula: OptFormula
) -> DecompositionPlan:
    """Replace hyperpredicates by false in the main problem, guarded by
    non-adjacency in a fresh co-occurrence relation N; every pair of
    optimization variables gets an exactly solvable side problem."""
    if formula.ell != 1:
        raise ContractError("hyperedge removal expects exactly one count variable")
    structure, formula = normalize_formula(structure, formula)
    hyper = [a for a in dict.fromkeys(atoms_of(formula.body)) if len(a.args) >= 3]
    if not hyper:
        return DecompositionPlan(structure, formula, (), (), formula.kind)

    opt = set(formula.opt_vars)
    n_records = set()
    for atom in hyper:
        rel = structure.relation(atom.pred)
        opt_positions = [p for p, v in enumerate(atom.args) if v in opt]
        for rec in rel.records:
            vals = [rec[p] for p in opt_positions]
            for a in vals:
                for b in vals:
                    n_records.add((a, b))
    n_name = _fresh("N", structure.relations)
    relations = dict(structure.relations)
    relations[n_name] = Relation(n_name, 2, frozenset(n_records))
    main_structure = RelationalStructure(structure.labels, relations)

    phi0 = substitute_atoms(
        formula.body, {a: Const(False) for a in hyper}
    )
    guard = tuple(
        (Atom(n_name, (formula.opt_vars[i], formula.opt_vars[j])), False)
        for i in range(formula.k)
        for j in range(i + 1, formula.k)
    )
    sides = tuple(
        SideProblem(
            main_structure,
            formula.with_body(And(atom, formula.body)),
            atom,
        )
        for atom, _ in guard
    )
    return DecompositionPlan(
        main_structure, formula.with_body(phi0), guard, sides, formula.kind
    )


# --- step 2: cross-edge elimination (the grouped lift) -----------------------

@dataclass(frozen=True)
class GroupPartition:
    """Greedy partition of the light vertices; the same partition applies to
    every optimization variable's domain.  Total degree per group is at most
    twice the threshold."""

    threshold: int
    groups: tuple[tuple[ObjectId, ...], ...]


def build_group_partition(
    structure: RelationalStructure, light: Sequence[ObjectId], threshold: int
) -> GroupPartition:
    groups = []
    cur: list[ObjectId] = []
    cur_deg = 0
    for v in sorted(light):
        cur.append(v)
        cur_deg += structure.degree(v)
        if cur_deg > threshold:
            groups.append(tuple(cur))
            cur, cur_deg = [], 0
    if cur:
        groups.append(tuple(cur))
    return GroupPartition(threshold, tuple(groups))


InnerSolver = Callable[[RelationalStructure, OptFormula, Domains], "int | None"]


def solve_cross_free_lift(
    structure: RelationalStructure,
    formula: OptFormula,
    inner: InnerSolver,
    guard: Guard = (),
    kind_config: SolveConfig | None = None,
    stats_out: dict | None = None,
) -> OptResult | None:
    """Eliminate cross edges: exact side problems per cross atom, heavy-vertex
    brute force, grouped relaxed scoring through ``inner``, and exact top-K
    re-solving under the guarded main body."""
    if formula.ell != 1:
        raise ContractError("the lift expects exactly one count variable")
    k = formula.k
    opt = set(formula.opt_vars)
    cross = [
        a
        for a in dict.fromkeys(atoms_of(formula.body))
        if len(a.args) == 2
        and a.args[0] in opt
        and a.args[1] in opt
        and a.args[0] != a.args[1]
    ]
    candidates: list[OptResult] = []

    # (1) exact side problems, one per cross atom
    for atom in cross:
        side = solve_positive_cross_edge(
            structure,
            formula.with_body(And(atom, formula.body)),
            atom,
            extra_guard=guard,
            include_edgeless_pairs=False,
        )
        if side is not None:
            candidates.append(side)

    core = formula.with_body(
        substitute_atoms(formula.body, {a: Const(False) for a in cross})
    )
    full_guard: Guard = tuple(guard) + tuple((a, False) for a in cross)

    # (2) heavy vertices: fix and solve the residual problem with the baseline
    m, n = structure.m, structure.n
    threshold = math.ceil(m ** (1.0 / (k + 1))) if m else 0
    heavy = [v for v in range(n) if structure.degree(v) >= threshold]
    heavy_set = set(heavy)
    for v in heavy:
        for var in formula.opt_vars:
            res = baseline_opt_restricted(
                structure, core, full_guard, domains={var: (v,)}
            )
            if res is not None:
                candidates.append(res)

    # (3) group the light vertices
    light = [v for v in range(n) if v not in heavy_set]
    partition = build_group_partition(structure, light, threshold)
    g = len(partition.groups)
    if stats_out is not None:
        stats_out.update(
            threshold=threshold, heavy=len(heavy), groups=g, m=m, n=n
        )

    if g:
        # (4) score every group combination on the relaxed body
        scored = []
        for combo in product(range(g), repeat=k):
            domains = {
                var: partition.groups[ci]
                for var, ci in zip(formula.opt_vars, combo)
            }
            value = inner(structure, core, domains)
            if value is not None:
                scored.append((value, combo))
        fp_bound = math.comb(k, 2) * m * (n ** (k - 2) if k >= 2 else 0)
        top_k = min(g**k, fp_bound + 1)
        if kind_config is not None and kind_config.top_k_override is not None:
            top_k = kind_config.top_k_override
        reverse = formula.kind == "max"
        scored.sort(key=lambda vc: ((-vc[0] if reverse else vc[0]), vc[1]))
        selected = scored[:top_k]
        if stats_out is not None:
            stats_out.update(combos=len(scored), top_k=top_k)
            stats_out["psi1_scores"] = list(scored)

        # (5) exact re-solve of the selected combinations under the guard
        for _, combo in selected:
            domains = {
                var: partition.groups[ci]
                for var, ci in zip(formula.opt_vars, combo)
            }
            res = baseline_opt_restricted(structure, core, full_guard, domains)
            if res is not None:
                candidates.append(res)

    return combine_results(formula.kind, candidates)


# --- step 3: parallel-edge removal -------------------------------------------

def _slot_label(label: str, slot: int) -> str:
    return f"{label}{SLOT_SEP}{slot + 1}"


def _copy_label(label: str, pattern_index: int) -> str:
    return f"{label}{COPY_SEP}{pattern_index}"


def remove_parallel_edges(
    structure: RelationalStructure,
    formula: OptFormula,
    r_cap: int = DEFAULT_R_CAP,
) -> tuple[RelationalStructure, OptFormula]:
    """Combine the r binary opt/count predicates into one edge predicate.

    Every object v is cloned once per optimization slot (labelled ``v@i``,
    marked by a fresh unary predicate per slot) and copied once per color
    tuple alpha in ({0,1}^r)^k (labelled ``v#j``, marked C_j).  An edge
    (x-clone at slot i, copy y_alpha) exists iff alpha_i is the exact color of
    (x, y) or alpha_i = 0 with a nonzero color.  Slot markers keep the shared
    object domain from mixing slots; tuple values are preserved under the
    slot-clone back-map.
    """
    if formula.ell != 1:
        raise ContractError("parallel-edge removal expects one count variable")
    structure, formula = normalize_formula(structure, formula)
    k = formula.k
    y = formula.count_vars[0]
    opt = set(formula.opt_vars)
    atoms = tuple(dict.fromkeys(atoms_of(formula.body)))
    for a in atoms:
        if len(a.args) >= 3:
            raise ContractError("hyperpredicates must be removed first")
        if len(a.args) == 2 and set(a.args) <= opt:
            raise ContractError("cross predicates must be removed first")
    edge_preds = sorted(
        {a.pred for a in atoms if len(a.args) == 2 and a.args[1] == y}
    )
    r = len(edge_preds)
    if r > r_cap:
        raise ResourceLimitError(
            f"{r} parallel edge predicates would blow the universe up by "
            f"2^{r * k}; raise r_cap only if that is affordable"
        )
    patterns = list(product(range(1 << r), repeat=k))

    # colors of all (object, object) pairs over the edge predicates
    pair_color: dict[tuple[ObjectId, ObjectId], int] = {}
    for bit, pred in enumerate(edge_preds):
        for a, b in structure.relation(pred).records:
            pair_color[a, b] = pair_color.get((a, b), 0) | 1 << bit

    n = structure.n
    labels: list[str] = []
    clone_id: dict[tuple[ObjectId, int], int] = {}
    copy_id: dict[tuple[ObjectId, int], int] = {}
    for v in range(n):
        for i in range(k):
            clone_id[v, i] = len(labels)
            labels.append(_slot_label(structure.labels[v], i))
    for v in range(n):
        for pi in range(len(patterns)):
            copy_id[v, pi] = len(labels)
            labels.append(_copy_label(structure.labels[v], pi))

    relations: dict[str, frozenset] = {}
    arities: dict[str, int] = {}
    taken = set(structure.relations)

    slot_names = []
    for i in range(k):
        name = _fresh(f"slot{i + 1}", taken)
        taken.add(name)
        slot_names.append(name)
        relations[name] = frozenset((clone_id[v, i],) for v in range(n))
        arities[name] = 1
    copy_names = []
    for pi in range(len(patterns)):
        name = _fresh(f"C{pi}", taken)
        taken.add(name)
        copy_names.append(name)
        relations[name] = frozenset((copy_id[v, pi],) for v in range(n))
        arities[name] = 1

    # original unary predicates are inherited by clones and copies
    unary_preds = sorted(
        {a.pred for a in atoms if len(a.args) == 1}
    )
    for pred in unary_preds:
        members = structure.unary_members(pred)
        recs = set()
        for v in members:
            recs.update((clone_id[v, i],) for i in range(k))
            recs.update((copy_id[v, pi],) for pi in range(len(patterns)))
        relations[pred] = frozenset(recs)
        arities[pred] = 1

    e_name = _fresh("E", taken)
    taken.add(e_name)
    edges = set()
    for (v, w), color in pair_color.items():
        for i in range(k):
            vc = clone_id[v, i]
            for pi, alpha in enumerate(patterns):
                if alpha[i] == color or alpha[i] == 0:
                    edges.add((vc, copy_id[w, pi]))
    relations[e_name] = frozenset(edges)
    arities[e_name] = 2

    rels = {
        name: Relation(name, arities[name], recs)
        for name, recs in relations.items()
    }
    new_structure = RelationalStructure(tuple(labels), rels)

    disjuncts = []
    for pi, alpha in enumerate(patterns):
        parts: list[Expr] = [Atom(copy_names[pi], (y,))]
        for i, xvar in enumerate(formula.opt_vars):
            e_atom = Atom(e_name, (xvar, y))
            parts.append(e_atom if alpha[i] else Not(e_atom))
        sub = {}
        for a in atoms:
            if len(a.args) == 2 and a.args[1] == y:
                i = formula.opt_vars.index(a.args[0])
                bit = edge_preds.index(a.pred)
                sub[a] = Const(bool(alpha[i] >> bit & 1))
        parts.append(substitute_atoms(formula.body, sub))
        disjuncts.append(conjoin(parts))
    slot_atoms: list[Expr] = [
        Atom(slot_names[i], (xvar,))
        for i, xvar in enumerate(formula.opt_vars)
    ]
    body = conjoin(slot_atoms + [disjoin(disjuncts)])
    return new_structure, formula.with_body(body)


def slotted_domains(
    original: RelationalStructure,
    transformed: RelationalStructure,
    formula: OptFormula,
) -> dict[str, tuple[ObjectId, ...]]:
    """Domains mapping each optimization variable to its slot clones, in
    original object order (the tuple back-map of remove_parallel_edges)."""
    out = {}
    for i, var in enumerate(formula.opt_vars):
        out[var] = tuple(
            transformed.index(_slot_label(original.labels[v], i))
            for v in range(original.n)
        )
    return out


# --- step 4: conversion to the Hybrid Problem --------------------------------

@dataclass(frozen=True)
class HybridBackMap:
    """Witness and value back-map for one unary assignment: which object each
    family vector came from, which (object, type) each universe element is,
    and the per-variable unary assignment itself."""

    family_objects: tuple[tuple[ObjectId, ...], ...]
    elements: tuple[tuple[ObjectId, int], ...]
    sigma: tuple[frozenset[str], ...]


@dataclass(frozen=True)
class _Disjunct:
    required_true: frozenset[str]   # unary predicates of y pinned true
    required_false: frozenset[str]
    pinned_bits: tuple[tuple[int, int], ...]  # (slot, bit) from E literals
    x_literals: tuple[tuple[int, str, bool], ...]  # (slot, pred, expected)
    rest: Expr


def _top_literals(expr: Expr, formula: OptFormula, e_pred: str | None):
    y = formula.count_vars[0]
    req_true: set[str] = set()
    req_false: set[str] = set()
    pinned: list[tuple[int, int]] = []
    xlits: list[tuple[int, str, bool]] = []
    rest: list[Expr] = []
    for part in conjuncts(expr):
        inner = part.arg if isinstance(part, Not) else part
        want = not isinstance(part, Not)
        if isinstance(inner, Atom):
            if len(inner.args) == 1 and inner.args[0] == y:
                (req_true if want else req_false).add(inner.pred)
                continue
            if (
                len(inner.args) == 2
                and inner.pred == e_pred
                and inner.args[1] == y
                and inner.args[0] in formula.opt_vars
            ):
                pinned.append((formula.opt_vars.index(inner.args[0]), int(want)))
                continue
            if len(inner.args) == 1 and inner.args[0] in formula.opt_vars:
                xlits.append(
                    (formula.opt_vars.index(inner.args[0]), inner.pred, want)
                )
                continue
        rest.append(part)
    return _Disjunct(
        frozenset(req_true),
        frozenset(req_false),
        tuple(pinned),
        tuple(xlits),
        conjoin(rest) if rest else Const(True),
    )


class _RestEvaluator:
    """Evaluates a disjunct remainder given the y color, the unary assignment
    of the optimization variables, and the edge pattern tau."""

    def __init__(self, formula: OptFormula, e_pred: str | None):
        self.formula = formula
        self.e_pred = e_pred
        self.y = formula.count_vars[0]
        self._memo: dict = {}

    def eval(self, expr: Expr, y_preds: frozenset[str], sigma, tau: int) -> bool:
        key = (id(expr), y_preds, sigma, tau)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        out = self._eval(expr, y_preds, sigma, tau)
        self._memo[key] = out
        return out

    def _eval(self, expr: Expr, y_preds, sigma, tau) -> bool:
        if isinstance(expr, Const):
            return expr.value
        if isinstance(expr, Not):
            return not self._eval(expr.arg, y_preds, sigma, tau)
        if isinstance(expr, And):
            return self._eval(expr.left, y_preds, sigma, tau) and self._eval(
                expr.right, y_preds, sigma, tau
            )
        if isinstance(expr, Or):
            return self._eval(expr.left, y_preds, sigma, tau) or self._eval(
                expr.right, y_preds, sigma, tau
            )
        if isinstance(expr, Atom):
            if len(expr.args) == 1:
                var = expr.args[0]
                if var == self.y:
                    return expr.pred in y_preds
                slot = self.formula.opt_vars.index(var)
                return expr.pred in sigma[slot]
            if len(expr.args) == 2 and expr.pred == self.e_pred:
                slot = self.formula.opt_vars.index(expr.args[0])
                return bool(tau >> slot & 1)
            raise ContractError(f"atom {expr} outside the hybrid-conforming shape")
        raise TypeError(f"not an expression: {expr!r}")


def to_hybrid(
    structure: RelationalStructure,
    formula: OptFormula,
    domains: Domains | None = None,
) -> list[tuple[HybridInstance, HybridBackMap]]:
    """Rewrite a unary-plus-single-edge formula as Hybrid Problem instances,
    one per realized unary assignment of the optimization variables.

    Universe elements are the (y, tau) pairs for which the per-object Boolean
    function of the k edge bits is satisfied; the family sets collect the
    elements whose object is adjacent to the member.  Tuple values are
    preserved instance-wise under the back-map.
    """
    if formula.ell != 1:
        raise ContractError("hybrid conversion expects one count variable")
    y = formula.count_vars[0]
    opt = set(formula.opt_vars)
    atoms = tuple(dict.fromkeys(atoms_of(formula.body)))
    e_pred = None
    for a in atoms:
        if len(a.args) == 1:
            continue
        if len(a.args) == 2 and a.args[0] in opt and a.args[1] == y:
            if e_pred is None:
                e_pred = a.pred
            elif e_pred != a.pred:
                raise ContractError("more than one edge predicate left")
            continue
        raise ContractError(f"atom {a} is not unary or a forward edge")

    doms = resolve_domains(structure, formula, domains)
    k = formula.k

    x_preds = sorted(
        {a.pred for a in atoms if len(a.args) == 1 and a.args[0] in opt}
    )
    y_preds_all = sorted(
        {a.pred for a in atoms if len(a.args) == 1 and a.args[0] == y}
    )
    membership = {p: structure.unary_members(p) for p in set(x_preds) | set(y_preds_all)}

    def x_color(v: ObjectId) -> frozenset[str]:
        return frozenset(p for p in x_preds if v in membership[p])

    def y_key(v: ObjectId) -> frozenset[str]:
        return frozenset(p for p in y_preds_all if v in membership[p])

    realized: list[list[frozenset[str]]] = []
    members_by_color: list[dict[frozenset[str], list[ObjectId]]] = []
    for var in formula.opt_vars:
        groups: dict[frozenset[str], list[ObjectId]] = {}
        for v in doms[var]:
            groups.setdefault(x_color(v), []).append(v)
        realized.append(sorted(groups, key=sorted))
        members_by_color.append(groups)
    count = math.prod(len(r) for r in realized)
    if count > SIGMA_CAP:
        raise ResourceLimitError(
            f"{count} unary assignments exceed the cap of {SIGMA_CAP}"
        )

    body = formula.body
    parts = conjuncts(body)
    or_part: Expr | None = None
    outer: list[Expr] = []
    for p in parts:
        if isinstance(p, Or) and or_part is None:
            or_part = p
        else:
            outer.append(p)
    if or_part is not None:

        def flatten(e: Expr) -> list[Expr]:
            if isinstance(e, Or):
                return flatten(e.left) + flatten(e.right)
            return [e]

        disjunct_exprs = [conjoin(outer + [d]) for d in flatten(or_part)]
    else:
        disjunct_exprs = [body]
    disjuncts = [_top_literals(d, formula, e_pred) for d in disjunct_exprs]

    by_required: dict[str, list[int]] = {}
    free_disjuncts: list[int] = []
    for di, d in enumerate(disjuncts):
        if d.required_true:
            by_required.setdefault(min(d.required_true), []).append(di)
        else:
            free_disjuncts.append(di)

    edge_rel = structure.relation(e_pred) if e_pred is not None else None
    evaluator = _RestEvaluator(formula, e_pred)
    y_domain = doms[y]
    y_keys = {v: y_key(v) for v in y_domain}

    out: list[tuple[HybridInstance, HybridBackMap]] = []
    sat_memo: dict[tuple, tuple[int, ...]] = {}
    for sigma in product(*realized):
        fam_objects = tuple(
            tuple(members_by_color[i][sigma[i]]) for i in range(k)
        )
        elements: list[tuple[ObjectId, int]] = []
        types: list[int] = []
        labels: list[str] = []
        for v in y_domain:
            key = y_keys[v]
            memo_key = (key, sigma)
            taus = sat_memo.get(memo_key)
            if taus is None:
                found = []
                cand = set(free_disjuncts)
                for p in key:
                    cand.update(by_required.get(p, ()))
                for tau in range(1 << k):
                    ok = False
                    for di in cand:
                        d = disjuncts[di]
                        if not d.required_true <= key or d.required_false & key:
                            continue
                        if any(
                            (tau >> slot & 1) != want for slot, want in d.pinned_bits
                        ):
                            continue
                        if any(
                            (pred in sigma[slot]) != want
                            for slot, pred, want in d.x_literals
                        ):
                            continue
                        if evaluator.eval(d.rest, key, sigma, tau):
                            ok = True
                            break
                    if ok:
                        found.append(tau)
                taus = tuple(found)
                sat_memo[memo_key] = taus
            for tau in taus:
                elements.append((v, tau))
                types.append(tau)
                labels.append(f"{structure.labels[v]}:{tau}")

        index_of = {el: i for i, el in enumerate(elements)}
        neighbors: dict[ObjectId, list[int]] = {}
        if edge_rel is not None:
            for a, b in edge_rel.records:
                lst = neighbors.setdefault(a, [])
                for tau in range(1 << k):
                    i = index_of.get((b, tau))
                    if i is not None:
                        lst.append(i)
        families = []
        set_labels = []
        for i in range(k):
            fam = []
            labs = []
            for v in fam_objects[i]:
                fam.append(frozenset(neighbors.get(v, ())))
                labs.append(structure.labels[v])
            families.append(fam)
            set_labels.append(labs)
        inst = HybridInstance(
            k,
            formula.kind,
            types,
            families,
            labels=labels,
            set_labels=set_labels,
        )
        out.append(
            (inst, HybridBackMap(fam_objects, tuple(elements), sigma))
        )
    return out


# --- prepared inner solver ----------------------------------------------------

def _subselect(inst: HybridInstance, picks: Sequence[Sequence[int]]) -> HybridInstance:
    """Sub-instance over the same universe, sharing the cached masks."""
    sub = object.__new__(HybridInstance)
    sub.k = inst.k
    sub.kind = inst.kind
    sub.element_types = inst.element_types
    sub.families = tuple(
        tuple(inst.families[i][j] for j in idxs) for i, idxs in enumerate(picks)
    )
    sub.labels = inst.labels
    sub.set_labels = None
    sub.part_masks = inst.part_masks
    sub.set_masks = tuple(
        tuple(inst.set_masks[i][j] for j in idxs) for i, idxs in enumerate(picks)
    )
    return sub


class HybridInner:
    """The inner solver of the lift: parallel-edge removal, hybrid conversion
    and the hybrid-through-IP solve, prepared once per (structure, formula)
    and re-run on sub-domains per group combination."""

    def __init__(self, ip_solver: IpSolver, config: SolveConfig):
        self.ip_solver = ip_solver
        self.config = config
        self._prepared: dict = {}
        self.last_info: dict = {}

    def _prepare(self, structure: RelationalStructure, formula: OptFormula):
        key = (id(structure), formula)
        prep = self._prepared.get(key)
        if prep is not None:
            return prep
        transformed, tf = remove_parallel_edges(structure, formula)
        slot_doms = slotted_domains(structure, transformed, tf)
        instances = to_hybrid(transformed, tf, domains=slot_doms)
        per_sigma = []
        for inst, back in instances:
            maps = []
            for i in range(tf.k):
                pos = {}
                for j, clone in enumerate(back.family_objects[i]):
                    label = transformed.labels[clone]
                    orig = label.rsplit(SLOT_SEP, 1)[0]
                    pos[structure.index(orig)] = j
                maps.append(pos)
            per_sigma.append((inst, maps))
        prep = (tf.k, per_sigma, {"universe": max((i.size for i, _ in instances), default=0)})
        self._prepared[key] = prep
        return prep

    def __call__(
        self,
        structure: RelationalStructure,
        formula: OptFormula,
        domains: Domains,
    ) -> int | None:
        k, per_sigma, info = self._prepare(structure, formula)
        self.last_info = info
        better = max if formula.kind == "max" else min
        best: int | None = None
        for inst, maps in per_sigma:
            picks = []
            ok = True
            for i, var in enumerate(formula.opt_vars):
                idxs = [maps[i][v] for v in domains[var] if v in maps[i]]
                if not idxs:
                    ok = False
                    break
                picks.append(idxs)
            if not ok:
                continue
            sub = _subselect(inst, picks)
            value, sub_info = solve_hybrid_with_info(sub, self.ip_solver, self.config)
            info.setdefault("t", sub_info.get("t"))
            info.setdefault("delta", sub_info.get("delta"))
            if value is not None:
                best = value if best is None else better(best, value)
        return best


# --- end-to-end driver --------------------------------------------------------

@dataclass
class ReductionTrace:
    """Per-stage statistics of one reduce_and_solve run."""

    path: str = ""
    stages: list[tuple[str, dict]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    witness: tuple[ObjectId, ...] | None = None

    def add(self, name: str, **stats):
        self.stages.append((name, stats))

    def render(self) -> str:
        lines = [f"path {self.path}"]
        for name, stats in self.stages:
            kv = " ".join(f"{key}={value}" for key, value in sorted(stats.items()))
            lines.append(f"stage {name} {kv}".rstrip())
        for w in self.warnings:
            lines.append(f"warning {w}")
        return "\n".join(lines) + "\n"


def reduce_and_solve(
    structure: RelationalStructure,
    formula: OptFormula,
    ip_solver: IpSolver,
    config: SolveConfig | None = None,
) -> tuple[int | None, ReductionTrace]:
    """Route an instance through the full pipeline.

    Two or more counting variables go to the multi-counting solver; a single
    optimization variable is a baseline base case; everything else runs
    hyperedge removal, the grouped cross-edge lift with the hybrid-through-IP
    inner solver, and exact side problems.
    """
    if config is None:
        config = (
            SolveConfig(mode="exact", s_max=PIPELINE_S_MAX)
            if ip_solver.ratio == 1.0
            else SolveConfig(
                mode="approx", c=ip_solver.ratio, eps=0.1, s_max=PIPELINE_S_MAX
            )
        )
    if ip_solver.kind != formula.kind:
        raise ContractError("ip solver kind does not match the formula")
    classify(formula, structure)
    trace = ReductionTrace()
    trace.add("input", m=structure.m, n=structure.n, k=formula.k, ell=formula.ell)

    if formula.ell >= 2:
        trace.path = "multicount"
        res = multi_counting_opt(structure, formula)
        if res is None:
            return None, trace
        trace.witness = res.witness
        return res.value, trace

    if formula.k == 1:
        trace.path = "baseline"
        res = baseline_opt(structure, formula)
        if res is None:
            return None, trace
        trace.witness = res.witness
        return res.value, trace

    trace.path = "reduction"
    structure0, formula0 = normalize_formula(structure, formula)
    plan = remove_hyperedges(structure0, formula0)
    trace.add(
        "hyperedge-removal",
        m=plan.main_structure.m,
        n=plan.main_structure.n,
        sides=len(plan.side_problems),
    )

    candidates: list[OptResult] = []
    for side in plan.side_problems:
        res = solve_positive_cross_edge(
            side.structure,
            side.formula,
            side.forced,
            include_edgeless_pairs=False,
        )
        if res is not None:
            candidates.append(res)

    inner = HybridInner(ip_solver, config)
    lift_stats: dict = {}
    try:
        main = solve_cross_free_lift(
            plan.main_structure,
            plan.main_core,
            inner,
            guard=plan.main_guard,
            kind_config=config,
            stats_out=lift_stats,
        )
    except ResourceLimitError as exc:
        trace.warnings.append(f"falling back to baseline: {exc}")
        main = baseline_opt_restricted(
            plan.main_structure, plan.main_core, plan.main_guard
        )
    lift_stats.pop("psi1_scores", None)
    trace.add("cross-free-lift", **lift_stats)
    if inner.last_info:
        trace.add("hybrid", **{k: v for k, v in inner.last_info.items() if v is not None})
    if main is not None:
        candidates.append(main)

    best = combine_results(formula.kind, candidates)
    if best is None:
        return None, trace
    trace.witness = best.witness
    return best.value, trace
