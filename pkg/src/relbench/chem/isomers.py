"""Exhaustive constitutional-isomer enumeration under the fixed valence model.

Backtracking over the upper-triangle bond-order matrix of the heavy-atom
multiset, with valence budgets, a connectivity check, and a symmetry
constraint that discards assignments an adjacent same-element vertex swap
would lexicographically increase (the canonical representative always
survives).  Remaining duplicates collapse through canonical SMILES.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import Atom, ChemError, Formula, MolGraph, allowed_valence, parse_formula
from .smiles import canonical_smiles

MAX_HEAVY_ATOMS = 10

_ELEMENT_ORDER = ("C", "N", "O", "S", "P", "B", "F", "Cl", "Br", "I")


@dataclass(frozen=True)
class IsomerEnumeration:
    members: frozenset[str]
    complete: bool  # False when the cap stopped the search


def enumerate_isomers(formula: Formula | str, cap: int = 100) -> IsomerEnumeration:
    """All connected valence-legal molecules with the given formula.

    Emits kekulized canonical SMILES.  Enumeration stops once `cap` distinct
    members are found, flagging the result incomplete.
    """
    if isinstance(formula, str):
        formula = parse_formula(formula)
    h_total = formula.count("H")
    elements: list[str] = []
    for e in _ELEMENT_ORDER:
        elements.extend([e] * formula.count(e))
    known = sum(formula.count(e) for e in _ELEMENT_ORDER) + h_total
    if known != sum(c for _, c in formula.counts):
        raise ChemError(f"formula {formula.hill()} has elements outside the supported set")
    n = len(elements)
    if n == 0:
        raise ChemError("formula has no heavy atoms")
    if n > MAX_HEAVY_ATOMS:
        raise ChemError(f"enumeration supports at most {MAX_HEAVY_ATOMS} heavy atoms")

    val = [allowed_valence(e, 0) for e in elements]
    twice_bonds = sum(val) - h_total
    if twice_bonds < 0 or twice_bonds % 2:
        return IsomerEnumeration(frozenset(), True)
    budget_total = twice_bonds // 2
    if n == 1:
        if budget_total == 0:
            mol = MolGraph()
            mol.add_atom(Atom(elements[0], 0, h_total))
            return IsomerEnumeration(frozenset({canonical_smiles(mol)}), True)
        return IsomerEnumeration(frozenset(), True)
    if budget_total < n - 1:
        return IsomerEnumeration(frozenset(), True)

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    # Consecutive identical elements: swapping them must not lexicographically
    # increase the adjacency matrix.
    sym_pairs = [u for u in range(n - 1) if elements[u] == elements[u + 1]]
    adj = [[0] * n for _ in range(n)]
    deg = [0] * n
    found: set[str] = set()
    complete = True

    def emit() -> None:
        # Connectivity.
        seen = {0}
        stack = [0]
        while stack:
            a = stack.pop()
            for b in range(n):
                if adj[a][b] and b not in seen:
                    seen.add(b)
                    stack.append(b)
        if len(seen) != n:
            return
        mol = MolGraph()
        for i, e in enumerate(elements):
            mol.add_atom(Atom(e, 0, val[i] - deg[i]))
        for i, j in pairs:
            if adj[i][j]:
                mol.add_bond(i, j, adj[i][j])
        found.add(canonical_smiles(mol))

    def assign(k: int, budget: int) -> bool:
        """Returns False when the cap fired and the search must stop."""
        if len(found) > cap:
            return False
        if k == len(pairs):
            if budget == 0:
                emit()
            return len(found) <= cap
        i, j = pairs[k]
        remaining_after = len(pairs) - k - 1
        max_o = min(3, val[i] - deg[i], val[j] - deg[j], budget)
        for o in range(max_o + 1):
            if budget - o > 3 * remaining_after:
                continue
            # Symmetry: while rows are tied, entries of the later twin may not
            # exceed the earlier twin's.
            violated = False
            broken: list[int] = []
            for u in sym_pairs:
                v = u + 1
                if tied[u] != -1:
                    continue
                ref = None
                if j == v and i < u:
                    ref = adj[i][u]
                elif i == v and j > v:
                    ref = adj[u][j]
                if ref is None:
                    continue
                if o > ref:
                    violated = True
                    break
                if o < ref:
                    tied[u] = k
                    broken.append(u)
            if not violated:
                adj[i][j] = adj[j][i] = o
                deg[i] += o
                deg[j] += o
                # An atom whose incident pairs are all decided must be bonded.
                last_for_i = j == n - 1
                if not (last_for_i and deg[i] == 0):
                    if not assign(k + 1, budget - o):
                        for u in broken:
                            tied[u] = -1
                        adj[i][j] = adj[j][i] = 0
                        deg[i] -= o
                        deg[j] -= o
                        return False
                adj[i][j] = adj[j][i] = 0
                deg[i] -= o
                deg[j] -= o
            for u in broken:
                tied[u] = -1
        return True

    tied = {u: -1 for u in sym_pairs}  # -1 = still tied; else index that broke it
    if not assign(0, budget_total):
        return IsomerEnumeration(frozenset(sorted(found)[:cap]), False)
    return IsomerEnumeration(frozenset(found), complete)
