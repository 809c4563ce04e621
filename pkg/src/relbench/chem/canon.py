"""Canonical atom ranking and deterministic kekulization.

Ranking is classic partition refinement plus backtracking individualization:
refine colors by neighborhood until stable, then, while any color class has
more than one member, branch on each member of the first such class and keep
the branch whose fully-refined labeling minimizes the graph signature.  The
minimum over branches makes the result a function of the abstract graph, so
isomorphic inputs get identical labelings regardless of atom order.

Kekulization assigns each aromatic atom that still needs a double bond a
partner via backtracking matching, visiting atoms and neighbors in canonical
order of the flagged graph; the chosen Kekule pattern is therefore invariant
under input atom permutations too.
"""

from __future__ import annotations

from typing import Sequence

from .graph import ChemError, MolGraph, allowed_valence

_AROMATIC_BOND_KEY = 9  # sorts after concrete orders


def _bond_key(order: int, aromatic: bool, use_aromatic: bool) -> int:
    return _AROMATIC_BOND_KEY if (use_aromatic and aromatic) else order


def _initial_colors(mol: MolGraph, use_aromatic: bool) -> list[int]:
    keys = []
    for i, atom in enumerate(mol.atoms):
        bonds = sorted(_bond_key(b.order, b.aromatic, use_aromatic) for _, b in mol.neighbors(i))
        keys.append((
            atom.element,
            atom.charge,
            atom.hcount,
            atom.aromatic if use_aromatic else False,
            len(bonds),
            tuple(bonds),
        ))
    return _densify(keys)


def _densify(keys: list) -> list[int]:
    order = {k: c for c, k in enumerate(sorted(set(keys)))}
    return [order[k] for k in keys]


def _refine(mol: MolGraph, colors: list[int], use_aromatic: bool) -> list[int]:
    n = mol.n_atoms
    while True:
        keys = []
        for i in range(n):
            nbr = sorted(
                (_bond_key(b.order, b.aromatic, use_aromatic), colors[j])
                for j, b in mol.neighbors(i)
            )
            keys.append((colors[i], tuple(nbr)))
        new = _densify(keys)
        if len(set(new)) == len(set(colors)):
            return new
        colors = new


def _signature(mol: MolGraph, colors: list[int], use_aromatic: bool):
    pos = colors  # discrete: color == position
    atoms = [None] * mol.n_atoms
    for i, atom in enumerate(mol.atoms):
        atoms[pos[i]] = (
            atom.element,
            atom.charge,
            atom.hcount,
            atom.aromatic if use_aromatic else False,
        )
    edges = sorted(
        (min(pos[b.a], pos[b.b]), max(pos[b.a], pos[b.b]), _bond_key(b.order, b.aromatic, use_aromatic))
        for b in mol.bonds
    )
    return tuple(atoms), tuple(edges)


def canonical_ranks(mol: MolGraph, use_aromatic: bool = False) -> list[int]:
    """Permutation-invariant atom ranks (0..n-1), ties fully broken."""
    if mol.n_atoms == 0:
        return []
    best: dict = {"sig": None, "colors": None}

    def descend(colors: list[int]) -> None:
        colors = _refine(mol, colors, use_aromatic)
        groups: dict[int, list[int]] = {}
        for i, c in enumerate(colors):
            groups.setdefault(c, []).append(i)
        target = None
        for c in sorted(groups):
            if len(groups[c]) > 1:
                target = c
                break
        if target is None:
            sig = _signature(mol, colors, use_aromatic)
            if best["sig"] is None or sig < best["sig"]:
                best["sig"], best["colors"] = sig, list(colors)
            return
        for atom in groups[target]:
            branched = [(c, 1 if (c == target and i != atom) else 0) for i, c in enumerate(colors)]
            descend(_densify(branched))

    descend(_initial_colors(mol, use_aromatic))
    return best["colors"]


# ---------------------------------------------------------------------------
# Kekulization
# ---------------------------------------------------------------------------


def double_bond_needs(mol: MolGraph, bracket_h: Sequence[bool]) -> list[int]:
    """Per-atom count of aromatic double bonds required (0 or 1).

    Also resolves implicit hydrogen counts on aromatic atoms: an unbracketed
    aromatic atom takes one double bond whenever its valence slack allows,
    and the remaining slack becomes hydrogens.
    """
    needs = [0] * mol.n_atoms
    for i, atom in enumerate(mol.atoms):
        if not atom.aromatic:
            continue
        sigma = mol.sigma_sum(i, aromatic_as_one=True)
        valence = allowed_valence(atom.element, atom.charge)
        if bracket_h[i]:
            slack = valence - sigma - atom.hcount
            if slack not in (0, 1):
                raise ChemError(
                    f"aromatic atom {i} ({atom.element}) cannot take {slack} double bonds"
                )
            needs[i] = slack
        else:
            slack = valence - sigma
            if slack < 0:
                raise ChemError(f"valence exceeded at aromatic atom {i} ({atom.element})")
            needs[i] = 1 if slack >= 1 else 0
            atom.hcount = slack - needs[i]
    return needs


def kekulize(mol: MolGraph, needs: Sequence[int]) -> None:
    """Assign order 2 to a perfect matching over atoms needing a double bond.

    Atoms and neighbors are visited in canonical order of the aromatic-flagged
    graph so the Kekule pattern does not depend on input atom order.
    """
    pending = [i for i, need in enumerate(needs) if need]
    if not pending:
        return
    ranks = canonical_ranks(mol, use_aromatic=True)
    matched: dict[int, int] = {}

    order = sorted(pending, key=lambda i: ranks[i])

    def backtrack(idx: int) -> bool:
        while idx < len(order) and order[idx] in matched:
            idx += 1
        if idx == len(order):
            return True
        i = order[idx]
        nbrs = sorted(
            (j for j, b in mol.neighbors(i) if b.aromatic and needs[j] and j not in matched),
            key=lambda j: ranks[j],
        )
        for j in nbrs:
            matched[i] = j
            matched[j] = i
            if backtrack(idx + 1):
                return True
            del matched[i]
            del matched[j]
        return False

    if not backtrack(0):
        raise ChemError("kekulization failed: no valid alternating bond pattern")
    for i, j in matched.items():
        if i < j:
            mol.bond_between(i, j).order = 2
