"""Functional-group counting and the minimal ring basis.

Ring perception is a Horton-style minimum cycle basis: shortest candidate
cycles through every (vertex, edge) pair, greedily kept while GF(2)
independent over edge space.  A basis ring counts as aromatic when all its
atoms carry the aromatic flag, or when its bond orders alternate single and
double perfectly around the cycle (so kekulized input still counts).
"""

from __future__ import annotations

from .graph import MolGraph

FG_KINDS = ("carboxylic_acid", "aromatic_ring", "alcohol", "primary_amine", "ketone")


def _shortest_paths(mol: MolGraph, source: int) -> tuple[list[int], list[int]]:
    """BFS distances and parents with deterministic (index-order) tie-breaks."""
    n = mol.n_atoms
    dist = [-1] * n
    parent = [-1] * n
    dist[source] = 0
    queue = [source]
    while queue:
        nxt = []
        for a in sorted(queue):
            for b in sorted(j for j, _ in mol.neighbors(a)):
                if dist[b] < 0:
                    dist[b] = dist[a] + 1
                    parent[b] = a
                    nxt.append(b)
        queue = nxt
    return dist, parent


def min_cycle_basis(mol: MolGraph) -> list[list[int]]:
    """Minimum cycle basis as atom cycles (each a closed walk without repeat)."""
    n_edges = mol.n_bonds
    dim = n_edges - mol.n_atoms + (1 if mol.connected() else _n_components(mol))
    if dim <= 0:
        return []
    edge_index = {}
    for idx, bond in enumerate(mol.bonds):
        edge_index[(bond.a, bond.b)] = idx
        edge_index[(bond.b, bond.a)] = idx

    candidates: list[tuple[int, int, list[int]]] = []  # (length, counter, atoms)
    seen_masks: set[int] = set()
    for v in range(mol.n_atoms):
        dist, parent = _shortest_paths(mol, v)

        def path_to(x: int) -> list[int]:
            out = [x]
            while out[-1] != v:
                out.append(parent[out[-1]])
            return out

        for bond in mol.bonds:
            x, y = bond.a, bond.b
            if dist[x] < 0 or dist[y] < 0 or parent[x] == y or parent[y] == x:
                continue
            px, py = path_to(x), path_to(y)
            if set(px) & set(py) != {v}:
                continue
            cycle = px[::-1] + py[:-1]
            mask = 0
            for a, b in zip(cycle, cycle[1:] + cycle[:1]):
                mask ^= 1 << edge_index[(a, b)]
            if mask not in seen_masks:
                seen_masks.add(mask)
                candidates.append((len(cycle), len(candidates), cycle))

    candidates.sort(key=lambda t: (t[0], t[1]))
    basis: list[list[int]] = []
    pivots: dict[int, int] = {}  # pivot bit -> reduced mask
    for _, _, cycle in candidates:
        mask = 0
        for a, b in zip(cycle, cycle[1:] + cycle[:1]):
            mask ^= 1 << edge_index[(a, b)]
        while mask:
            top = mask.bit_length() - 1
            if top not in pivots:
                pivots[top] = mask
                basis.append(cycle)
                break
            mask ^= pivots[top]
        if len(basis) == dim:
            break
    return basis


def _n_components(mol: MolGraph) -> int:
    seen: set[int] = set()
    comps = 0
    for start in range(mol.n_atoms):
        if start in seen:
            continue
        comps += 1
        stack = [start]
        seen.add(start)
        while stack:
            for j, _ in mol.neighbors(stack.pop()):
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
    return comps


def _ring_is_aromatic(mol: MolGraph, cycle: list[int]) -> bool:
    if all(mol.atoms[i].aromatic for i in cycle):
        return True
    if len(cycle) % 2:
        return False
    orders = [
        mol.bond_between(a, b).order
        for a, b in zip(cycle, cycle[1:] + cycle[:1])
    ]
    if any(mol.bond_between(a, b).aromatic for a, b in zip(cycle, cycle[1:] + cycle[:1])):
        return False
    return (
        all(o in (1, 2) for o in orders)
        and all(orders[i] != orders[(i + 1) % len(orders)] for i in range(len(orders)))
    )


def _is_sp3_carbon(mol: MolGraph, i: int) -> bool:
    atom = mol.atoms[i]
    if atom.element != "C" or atom.aromatic:
        return False
    return all(b.order == 1 and not b.aromatic for _, b in mol.neighbors(i))


def count_fg(mol: MolGraph, kind: str) -> int:
    """Occurrences of one functional-group kind."""
    if kind == "aromatic_ring":
        return sum(1 for cycle in min_cycle_basis(mol) if _ring_is_aromatic(mol, cycle))

    count = 0
    if kind == "carboxylic_acid":
        for i, atom in enumerate(mol.atoms):
            if atom.element != "C" or atom.aromatic:
                continue
            double_o = any(
                b.order == 2 and mol.atoms[j].element == "O" for j, b in mol.neighbors(i)
            )
            hydroxyl = any(
                b.order == 1
                and not b.aromatic
                and mol.atoms[j].element == "O"
                and mol.atoms[j].hcount >= 1
                for j, b in mol.neighbors(i)
            )
            if double_o and hydroxyl:
                count += 1
        return count
    if kind == "ketone":
        for i, atom in enumerate(mol.atoms):
            if atom.element != "C" or atom.aromatic:
                continue
            double_o = any(
                b.order == 2 and mol.atoms[j].element == "O" for j, b in mol.neighbors(i)
            )
            carbons = sum(1 for j, _ in mol.neighbors(i) if mol.atoms[j].element == "C")
            if double_o and carbons == 2:
                count += 1
        return count
    if kind == "alcohol":
        for i, atom in enumerate(mol.atoms):
            if atom.element != "O" or atom.aromatic or atom.hcount < 1 or atom.charge:
                continue
            nbrs = list(mol.neighbors(i))
            if len(nbrs) == 1 and nbrs[0][1].order == 1 and _is_sp3_carbon(mol, nbrs[0][0]):
                count += 1
        return count
    if kind == "primary_amine":
        for i, atom in enumerate(mol.atoms):
            if atom.element != "N" or atom.aromatic or atom.hcount != 2 or atom.charge:
                continue
            nbrs = list(mol.neighbors(i))
            if (
                len(nbrs) == 1
                and nbrs[0][1].order == 1
                and not nbrs[0][1].aromatic
                and mol.atoms[nbrs[0][0]].element == "C"
            ):
                count += 1
        return count
    raise ValueError(f"unknown functional group kind {kind!r}")
