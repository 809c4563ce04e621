"""Hashed linear-path fingerprints and Tanimoto similarity."""

from __future__ import annotations

import hashlib

from .graph import MolGraph

N_BITS = 2048
MAX_PATH_BONDS = 7

_BOND_TOKEN = {1: "-", 2: "=", 3: "#"}


def _atom_token(mol: MolGraph, i: int) -> str:
    atom = mol.atoms[i]
    return atom.element.lower() if atom.aromatic else atom.element


def _bond_token(bond) -> str:
    return ":" if bond.aromatic else _BOND_TOKEN[bond.order]


def path_fingerprint(mol: MolGraph, max_bonds: int = MAX_PATH_BONDS, n_bits: int = N_BITS) -> frozenset[int]:
    """Bits for every simple linear path of 0..max_bonds bonds."""
    strings: set[str] = set()
    for i in range(mol.n_atoms):
        strings.add(_atom_token(mol, i))

    def extend(path: list[int], text: str) -> None:
        last = path[-1]
        if len(path) > max_bonds:
            return
        for j, bond in mol.neighbors(last):
            if j in path:
                continue
            candidate = text + _bond_token(bond) + _atom_token(mol, j)
            # Store each undirected path once, via its lexicographically
            # smaller reading direction.
            reverse = _reverse_path(mol, path + [j])
            strings.add(min(candidate, reverse))
            extend(path + [j], candidate)

    for i in range(mol.n_atoms):
        extend([i], _atom_token(mol, i))
    bits = {
        int.from_bytes(hashlib.blake2b(s.encode(), digest_size=8).digest(), "big") % n_bits
        for s in strings
    }
    return frozenset(bits)


def _reverse_path(mol: MolGraph, path: list[int]) -> str:
    out = [_atom_token(mol, path[-1])]
    for a, b in zip(reversed(path[1:]), reversed(path[:-1])):
        out.append(_bond_token(mol.bond_between(a, b)))
        out.append(_atom_token(mol, b))
    return "".join(out)


def tanimoto(a: frozenset[int], b: frozenset[int]) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)
