"""Attributed molecular graphs with a fixed-valence model.

Atoms carry element, formal charge, a resolved total hydrogen count, and an
aromatic flag; bonds carry a concrete order (1/2/3, assigned during
kekulization for aromatic input) plus an aromatic flag.  The valence model is
deliberately small: C4, N3, O2, S2, P3, B3, halogens 1, with +/-1 charge
adjustments.  Hypervalent atoms are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence


class ChemError(ValueError):
    """Molecular input violating the supported grammar or valence model."""


_BASE_VALENCE = {
    "B": 3, "C": 4, "N": 3, "O": 2, "P": 3, "S": 2,
    "F": 1, "Cl": 1, "Br": 1, "I": 1,
}

ORGANIC_SUBSET = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
AROMATIC_ELEMENTS = ("B", "C", "N", "O", "P", "S")

HILL_H = "H"


def allowed_valence(element: str, charge: int) -> int:
    if element not in _BASE_VALENCE:
        raise ChemError(f"unknown element {element!r}")
    base = _BASE_VALENCE[element]
    if charge == 0:
        return base
    if abs(charge) != 1:
        raise ChemError(f"charge {charge:+d} on {element} is unsupported")
    if element in ("N", "P"):
        return base + charge
    if element in ("O", "S"):
        return base + charge
    if element in ("C", "B"):
        return base - 1
    raise ChemError(f"charge {charge:+d} on {element} is unsupported")


@dataclass
class Atom:
    element: str
    charge: int = 0
    hcount: int = 0
    aromatic: bool = False


@dataclass
class Bond:
    a: int
    b: int
    order: int
    aromatic: bool = False

    def other(self, i: int) -> int:
        return self.b if i == self.a else self.a


class MolGraph:
    """Small mutable molecular graph with an adjacency index."""

    def __init__(self) -> None:
        self.atoms: list[Atom] = []
        self.bonds: list[Bond] = []
        self._adj: list[dict[int, int]] = []  # neighbor atom -> bond index

    # -- construction -------------------------------------------------------

    def add_atom(self, atom: Atom) -> int:
        self.atoms.append(atom)
        self._adj.append({})
        return len(self.atoms) - 1

    def add_bond(self, a: int, b: int, order: int, aromatic: bool = False) -> int:
        if a == b:
            raise ChemError("self-bonds are not allowed")
        if b in self._adj[a]:
            raise ChemError(f"duplicate bond between atoms {a} and {b}")
        self.bonds.append(Bond(a, b, order, aromatic))
        idx = len(self.bonds) - 1
        self._adj[a][b] = idx
        self._adj[b][a] = idx
        return idx

    # -- queries ------------------------------------------------------------

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def neighbors(self, i: int) -> Iterator[tuple[int, Bond]]:
        for j, bidx in self._adj[i].items():
            yield j, self.bonds[bidx]

    def bond_between(self, a: int, b: int) -> Bond | None:
        idx = self._adj[a].get(b)
        return None if idx is None else self.bonds[idx]

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    def sigma_sum(self, i: int, aromatic_as_one: bool = False) -> int:
        """Sum of bond orders at atom i (aromatic bonds optionally count 1)."""
        total = 0
        for _, bond in self.neighbors(i):
            total += 1 if (aromatic_as_one and bond.aromatic) else bond.order
        return total

    def connected(self) -> bool:
        if not self.atoms:
            return True
        seen = {0}
        stack = [0]
        while stack:
            for j in self._adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.n_atoms

    # -- derived graphs ------------------------------------------------------

    def copy(self) -> "MolGraph":
        out = MolGraph()
        for atom in self.atoms:
            out.add_atom(replace(atom))
        for bond in self.bonds:
            out.add_bond(bond.a, bond.b, bond.order, bond.aromatic)
        return out

    def kekulized_copy(self) -> "MolGraph":
        """Same concrete bond orders with every aromatic flag cleared."""
        out = self.copy()
        for atom in out.atoms:
            atom.aromatic = False
        for bond in out.bonds:
            bond.aromatic = False
        return out

    def induced_subgraph(self, atom_ids: Sequence[int]) -> "MolGraph":
        """Subgraph on `atom_ids` with all bonds among them; H recomputed."""
        order = sorted(set(atom_ids))
        index = {a: i for i, a in enumerate(order)}
        out = MolGraph()
        for a in order:
            src = self.atoms[a]
            out.add_atom(Atom(src.element, src.charge, 0, src.aromatic))
        for bond in self.bonds:
            if bond.a in index and bond.b in index:
                out.add_bond(index[bond.a], index[bond.b], bond.order, bond.aromatic)
        for i in range(out.n_atoms):
            atom = out.atoms[i]
            slack = allowed_valence(atom.element, atom.charge) - out.sigma_sum(i)
            atom.hcount = max(slack, 0)
        return out

    def edge_subgraph(self, bond_ids: Sequence[int]) -> "MolGraph":
        atoms: set[int] = set()
        for bidx in bond_ids:
            atoms.add(self.bonds[bidx].a)
            atoms.add(self.bonds[bidx].b)
        order = sorted(atoms)
        index = {a: i for i, a in enumerate(order)}
        out = MolGraph()
        for a in order:
            src = self.atoms[a]
            out.add_atom(Atom(src.element, src.charge, 0, src.aromatic))
        for bidx in sorted(bond_ids):
            bond = self.bonds[bidx]
            out.add_bond(index[bond.a], index[bond.b], bond.order, bond.aromatic)
        for i in range(out.n_atoms):
            atom = out.atoms[i]
            slack = allowed_valence(atom.element, atom.charge) - out.sigma_sum(i)
            atom.hcount = max(slack, 0)
        return out


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Formula:
    counts: tuple[tuple[str, int], ...]

    @staticmethod
    def from_counts(counts: dict[str, int]) -> "Formula":
        return Formula(tuple(sorted((e, c) for e, c in counts.items() if c > 0)))

    def count(self, element: str) -> int:
        return dict(self.counts).get(element, 0)

    @property
    def heavy_atoms(self) -> int:
        return sum(c for e, c in self.counts if e != HILL_H)

    def hill(self) -> str:
        """Hill-order formula string (C, H, then alphabetical)."""
        d = dict(self.counts)
        parts = []
        for e in ("C", "H"):
            if d.get(e):
                parts.append(e + (str(d[e]) if d[e] > 1 else ""))
                d.pop(e)
        for e in sorted(d):
            parts.append(e + (str(d[e]) if d[e] > 1 else ""))
        return "".join(parts)

    def __str__(self) -> str:  # pragma: no cover
        return self.hill()


_HALOGENS = ("F", "Cl", "Br", "I")


def formula_of(mol: MolGraph) -> Formula:
    counts: dict[str, int] = {}
    h = 0
    for atom in mol.atoms:
        counts[atom.element] = counts.get(atom.element, 0) + 1
        h += atom.hcount
    if h:
        counts[HILL_H] = counts.get(HILL_H, 0) + h
    return Formula.from_counts(counts)


def dbe_of(formula: Formula) -> float:
    """Degree of unsaturation: C - (H+X)/2 + N/2 + 1 (trivalent P counts as N)."""
    c = formula.count("C")
    n = formula.count("N") + formula.count("P")
    h = formula.count("H")
    x = sum(formula.count(e) for e in _HALOGENS)
    return c - (h + x) / 2 + n / 2 + 1


def parse_formula(text: str) -> Formula:
    import re

    counts: dict[str, int] = {}
    pos = 0
    for m in re.finditer(r"([A-Z][a-z]?)(\d*)", text):
        if not m.group(0):
            continue
        if m.start() != pos:
            raise ChemError(f"bad formula {text!r}")
        pos = m.end()
        counts[m.group(1)] = counts.get(m.group(1), 0) + int(m.group(2) or 1)
    if pos != len(text) or not counts:
        raise ChemError(f"bad formula {text!r}")
    for e in counts:
        if e != HILL_H and e not in _BASE_VALENCE:
            raise ChemError(f"unknown element {e!r} in formula {text!r}")
    return Formula.from_counts(counts)
