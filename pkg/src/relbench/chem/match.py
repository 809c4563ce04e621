"""Subgraph monomorphism, graph isomorphism, and maximum common substructure.

Matching semantics: atoms agree on element, charge, and aromatic flag; a
pattern bond maps onto a target bond when both are aromatic or both carry the
same concrete order.  Extra target bonds are allowed (substructure matching
is not induced), and hydrogen counts are ignored on purpose so a terminal
pattern atom can land anywhere.

The set-MCS grows connected edge subgraphs of the smallest-by-bonds anchor
molecule, pruning any branch whose subgraph stops being common to every other
molecule (monotone) or whose reachable-edge bound cannot beat the best found.
This searches the common-subgraph space directly, so the result is exact for
the whole set whenever the search completes inside its time budget.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .graph import MolGraph


def _atoms_compatible(p, t) -> bool:
    return p.element == t.element and p.charge == t.charge and p.aromatic == t.aromatic


def _bonds_compatible(pb, tb) -> bool:
    if pb.aromatic or tb.aromatic:
        return pb.aromatic and tb.aromatic
    return pb.order == tb.order


def _match_order(pattern: MolGraph) -> list[int]:
    """Pattern atom order where every atom after the first touches a prior one."""
    n = pattern.n_atoms
    start = max(range(n), key=pattern.degree)
    order = [start]
    seen = {start}
    frontier = [start]
    while len(order) < n:
        candidates = [
            j for i in order for j, _ in pattern.neighbors(i) if j not in seen
        ]
        if not candidates:  # disconnected pattern: start a new component
            rest = [i for i in range(n) if i not in seen]
            nxt = max(rest, key=pattern.degree)
        else:
            nxt = max(candidates, key=pattern.degree)
        order.append(nxt)
        seen.add(nxt)
    return order


def find_embedding(pattern: MolGraph, target: MolGraph) -> dict[int, int] | None:
    """One injective, bond-preserving embedding of pattern into target."""
    np_, nt = pattern.n_atoms, target.n_atoms
    if np_ > nt or pattern.n_bonds > target.n_bonds:
        return None
    order = _match_order(pattern)
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def candidates(u: int):
        anchored = [
            (v, b) for v, b in pattern.neighbors(u) if v in mapping
        ]
        if anchored:
            v0, b0 = anchored[0]
            pool = [
                t for t, tb in target.neighbors(mapping[v0]) if _bonds_compatible(b0, tb)
            ]
        else:
            pool = range(nt)
        for t in pool:
            if t in used or not _atoms_compatible(pattern.atoms[u], target.atoms[t]):
                continue
            if target.degree(t) < pattern.degree(u):
                continue
            ok = True
            for v, pb in pattern.neighbors(u):
                if v in mapping:
                    tb = target.bond_between(mapping[v], t)
                    if tb is None or not _bonds_compatible(pb, tb):
                        ok = False
                        break
            if ok:
                yield t

    def backtrack(idx: int) -> bool:
        if idx == len(order):
            return True
        u = order[idx]
        for t in candidates(u):
            mapping[u] = t
            used.add(t)
            if backtrack(idx + 1):
                return True
            del mapping[u]
            used.remove(t)
        return False

    return dict(mapping) if backtrack(0) else None


def is_subgraph(pattern: MolGraph, target: MolGraph) -> bool:
    """True iff pattern embeds injectively into target, preserving attributes."""
    return find_embedding(pattern, target) is not None


def isomorphic(a: MolGraph, b: MolGraph) -> bool:
    """Attributed graph isomorphism (equal counts + monomorphism)."""
    if a.n_atoms != b.n_atoms or a.n_bonds != b.n_bonds:
        return False
    return is_subgraph(a, b)


# ---------------------------------------------------------------------------
# Maximum common substructure over a set
# ---------------------------------------------------------------------------


@dataclass
class McsResult:
    subgraph: MolGraph | None
    n_atoms: int
    n_bonds: int
    exact: bool  # False when the time budget cut the search short


def _edge_signature(mol: MolGraph, bond) -> tuple:
    a, b = mol.atoms[bond.a], mol.atoms[bond.b]
    ka = (a.element, a.charge, a.aromatic)
    kb = (b.element, b.charge, b.aromatic)
    return (min(ka, kb), max(ka, kb), bond.order if not bond.aromatic else "ar")


def mcs_of_set(
    mols: list[MolGraph],
    min_atoms: int = 8,
    time_budget: float = 30.0,
) -> McsResult:
    """Connected common subgraph maximizing bonds, then atoms.

    Returns subgraph=None when nothing with at least `min_atoms` atoms is
    common to every molecule.
    """
    if len(mols) < 2:
        raise ValueError("need at least two molecules")
    anchor_idx = min(range(len(mols)), key=lambda i: (mols[i].n_bonds, mols[i].n_atoms))
    anchor = mols[anchor_idx]
    others = [m for i, m in enumerate(mols) if i != anchor_idx]
    deadline = time.monotonic() + time_budget

    # Edges whose signature is absent from any other molecule can never be in
    # a common subgraph.
    other_sigs = []
    for m in others:
        other_sigs.append({_edge_signature(m, b) for b in m.bonds})
    feasible = [
        i
        for i, b in enumerate(anchor.bonds)
        if all(_edge_signature(anchor, b) in sigs for sigs in other_sigs)
    ]
    feasible_set = set(feasible)

    adj_edges: list[set[int]] = [set() for _ in range(anchor.n_atoms)]
    for i in feasible:
        b = anchor.bonds[i]
        adj_edges[b.a].add(i)
        adj_edges[b.b].add(i)

    best = {"key": (0, 0), "edges": None}
    state = {"exact": True}

    def is_common(edge_ids: list[int]) -> bool:
        sub = anchor.edge_subgraph(edge_ids)
        return all(is_subgraph(sub, m) for m in others)

    def potential(edge_ids: set[int], banned: set[int]) -> int:
        """Upper bound: edges reachable from the current atoms, minus banned."""
        atoms = set()
        for e in edge_ids:
            atoms.add(anchor.bonds[e].a)
            atoms.add(anchor.bonds[e].b)
        seen_e = set(edge_ids)
        stack = list(atoms)
        seen_a = set(atoms)
        while stack:
            a = stack.pop()
            for e in adj_edges[a]:
                if e in banned or e in seen_e:
                    continue
                seen_e.add(e)
                nb = anchor.bonds[e].other(a)
                if nb not in seen_a:
                    seen_a.add(nb)
                    stack.append(nb)
        return len(seen_e)

    def grow(edges: list[int], boundary: list[int], banned: set[int]) -> None:
        if time.monotonic() > deadline:
            state["exact"] = False
            return
        sub_atoms = set()
        for e in edges:
            sub_atoms.add(anchor.bonds[e].a)
            sub_atoms.add(anchor.bonds[e].b)
        key = (len(edges), len(sub_atoms))
        if key > best["key"]:
            best["key"], best["edges"] = key, list(edges)
        if potential(set(edges), banned) <= best["key"][0]:
            return
        local_banned = set(banned)
        for idx, e in enumerate(boundary):
            if e in local_banned:
                continue
            new_edges = edges + [e]
            if is_common(new_edges):
                b = anchor.bonds[e]
                extra = [
                    x
                    for a in (b.a, b.b)
                    for x in adj_edges[a]
                    if x not in local_banned and x != e and x not in new_edges
                ]
                new_boundary = [x for x in boundary[idx + 1 :] if x not in local_banned]
                for x in extra:
                    if x not in new_boundary:
                        new_boundary.append(x)
                grow(new_edges, new_boundary, set(local_banned))
            local_banned.add(e)  # branches after this one must exclude e

    for root in feasible:
        if time.monotonic() > deadline:
            state["exact"] = False
            break
        if not is_common([root]):
            continue
        b = anchor.bonds[root]
        boundary = sorted(
            (x for x in (adj_edges[b.a] | adj_edges[b.b]) if x > root),
        )
        # Roots are processed in increasing order; subgraphs whose minimum
        # edge is smaller were enumerated in an earlier root's pass.
        grow([root], [x for x in boundary if x in feasible_set], {x for x in feasible if x < root})

    if best["edges"] is None:
        return McsResult(None, 0, 0, state["exact"])
    sub = anchor.edge_subgraph(best["edges"])
    if sub.n_atoms < min_atoms:
        return McsResult(None, sub.n_atoms, sub.n_bonds, state["exact"])
    return McsResult(sub, sub.n_atoms, sub.n_bonds, state["exact"])
