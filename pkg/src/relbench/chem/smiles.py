"""SMILES parsing, writing, and canonical forms.

Supported grammar: organic-subset atoms, aromatic lowercase, bracket atoms
with an H count and a +/-1 charge, bond symbols ``- = # :``, branches, and
ring closures (digits and %nn).  Stereo marks, isotopes, atom classes, and
dot-disconnected fragments are rejected.  Aromatic input is kekulized at
parse time (flags are kept), so every returned graph carries concrete bond
orders; canonical comparison drops the flags entirely.
"""

from __future__ import annotations

import re
from heapq import heappop, heappush

from .canon import canonical_ranks, double_bond_needs, kekulize
from .graph import (
    AROMATIC_ELEMENTS,
    Atom,
    ChemError,
    MolGraph,
    ORGANIC_SUBSET,
    allowed_valence,
)

_TWO_LETTER = ("Cl", "Br")
_AROMATIC_TOKENS = tuple(e.lower() for e in AROMATIC_ELEMENTS)
_BOND_SYMBOLS = {"-": 1, "=": 2, "#": 3, ":": 1}

_BRACKET_RE = re.compile(
    r"^(?P<symbol>[A-Z][a-z]?|b|c|n|o|p|s)"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>\+|-|\+1|-1)?$"
)


def parse_smiles(text: str) -> MolGraph:
    """Parse a SMILES string into a kekulized, aromatic-flagged MolGraph."""
    if not text or not text.strip():
        raise ChemError("empty SMILES")
    text = text.strip()
    mol = MolGraph()
    bracket_h: list[bool] = []
    prev: int | None = None
    pending: str | None = None
    stack: list[int] = []
    rings: dict[int, tuple[int, str | None]] = {}
    pos = 0
    n = len(text)

    def add_parsed_atom(element: str, aromatic: bool, hcount: int, charge: int, bracketed: bool) -> None:
        nonlocal prev, pending
        if element == "H":
            raise ChemError("explicit hydrogen atoms are unsupported; use bracket H counts")
        if element not in ORGANIC_SUBSET:
            raise ChemError(f"unknown element {element!r}")
        if aromatic and element not in AROMATIC_ELEMENTS:
            raise ChemError(f"element {element!r} cannot be aromatic")
        idx = mol.add_atom(Atom(element, charge, hcount, aromatic))
        bracket_h.append(bracketed)
        if prev is not None:
            _make_bond(mol, prev, idx, pending)
        elif pending is not None:
            raise ChemError("bond symbol before any atom")
        pending = None
        prev = idx

    def close_ring(num: int) -> None:
        nonlocal pending
        if prev is None:
            raise ChemError("ring closure before any atom")
        if num in rings:
            other, sym0 = rings.pop(num)
            if other == prev:
                raise ChemError(f"ring {num} closes on its own atom")
            if sym0 is not None and pending is not None and sym0 != pending:
                raise ChemError(f"ring {num} bond symbols disagree")
            _make_bond(mol, other, prev, sym0 if sym0 is not None else pending)
        else:
            rings[num] = (prev, pending)
        pending = None

    while pos < n:
        ch = text[pos]
        if ch == ".":
            raise ChemError("disconnected SMILES are unsupported")
        if ch in "@/\\":
            raise ChemError("stereochemistry marks are unsupported")
        if ch == "(":
            if pending is not None:
                raise ChemError("bond symbol before a branch opening")
            if prev is None:
                raise ChemError("branch before any atom")
            stack.append(prev)
            pos += 1
            continue
        if ch == ")":
            if pending is not None:
                raise ChemError("dangling bond symbol before ')'")
            if not stack:
                raise ChemError("unbalanced branch parentheses")
            prev = stack.pop()
            pos += 1
            continue
        if ch in _BOND_SYMBOLS:
            if pending is not None:
                raise ChemError("two bond symbols in a row")
            pending = ch
            pos += 1
            continue
        if ch.isdigit():
            close_ring(int(ch))
            pos += 1
            continue
        if ch == "%":
            if pos + 2 >= n + 1 or not text[pos + 1 : pos + 3].isdigit():
                raise ChemError("%% ring closure needs two digits")
            close_ring(int(text[pos + 1 : pos + 3]))
            pos += 3
            continue
        if ch == "[":
            end = text.find("]", pos)
            if end < 0:
                raise ChemError("unterminated bracket atom")
            m = _BRACKET_RE.match(text[pos + 1 : end])
            if not m:
                raise ChemError(f"unsupported bracket atom {text[pos:end + 1]!r}")
            sym = m.group("symbol")
            aromatic = sym[0].islower()
            element = sym.capitalize() if aromatic else sym
            hpart = m.group("hcount")
            hcount = 0 if hpart is None else (1 if hpart == "H" else int(hpart[1:]))
            cpart = m.group("charge") or ""
            charge = 0 if not cpart else (1 if cpart.startswith("+") else -1)
            add_parsed_atom(element, aromatic, hcount, charge, bracketed=True)
            pos = end + 1
            continue
        if text[pos : pos + 2] in _TWO_LETTER:
            add_parsed_atom(text[pos : pos + 2], False, 0, 0, bracketed=False)
            pos += 2
            continue
        if ch in _AROMATIC_TOKENS:
            add_parsed_atom(ch.upper(), True, 0, 0, bracketed=False)
            pos += 1
            continue
        if ch.isupper():
            add_parsed_atom(ch, False, 0, 0, bracketed=False)
            pos += 1
            continue
        raise ChemError(f"unexpected character {ch!r} at position {pos}")

    if stack:
        raise ChemError("unbalanced branch parentheses")
    if pending is not None:
        raise ChemError("dangling bond symbol at end of input")
    if rings:
        num = sorted(rings)[0]
        raise ChemError(f"ring {num} never closes")
    if not mol.atoms:
        raise ChemError("empty SMILES")

    needs = double_bond_needs(mol, bracket_h)
    for i, atom in enumerate(mol.atoms):
        if atom.aromatic:
            continue
        sigma = mol.sigma_sum(i)
        valence = allowed_valence(atom.element, atom.charge)
        if bracket_h[i]:
            if sigma + atom.hcount > valence:
                raise ChemError(
                    f"valence {sigma + atom.hcount} exceeds {valence} at atom {i} ({atom.element})"
                )
        else:
            if sigma > valence:
                raise ChemError(f"valence {sigma} exceeds {valence} at atom {i} ({atom.element})")
            atom.hcount = valence - sigma
    kekulize(mol, needs)
    return mol


def _make_bond(mol: MolGraph, a: int, b: int, sym: str | None) -> None:
    if sym == ":":
        if not (mol.atoms[a].aromatic and mol.atoms[b].aromatic):
            raise ChemError("':' bond requires two aromatic atoms")
        mol.add_bond(a, b, 1, aromatic=True)
        return
    if sym is None and mol.atoms[a].aromatic and mol.atoms[b].aromatic:
        mol.add_bond(a, b, 1, aromatic=True)
        return
    mol.add_bond(a, b, _BOND_SYMBOLS.get(sym, 1))


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------


def _implied_hcount(mol: MolGraph, i: int, aromatic_mode: bool) -> int:
    atom = mol.atoms[i]
    valence = allowed_valence(atom.element, atom.charge)
    if aromatic_mode and atom.aromatic:
        slack = valence - mol.sigma_sum(i, aromatic_as_one=True)
        return slack - (1 if slack >= 1 else 0)
    return valence - mol.sigma_sum(i)


def _atom_token(mol: MolGraph, i: int, aromatic_mode: bool) -> str:
    atom = mol.atoms[i]
    lower = aromatic_mode and atom.aromatic
    sym = atom.element.lower() if lower else atom.element
    needs_bracket = (
        atom.charge != 0
        or atom.element not in ORGANIC_SUBSET
        or atom.hcount != _implied_hcount(mol, i, aromatic_mode)
    )
    if not needs_bracket:
        return sym
    h = "" if atom.hcount == 0 else ("H" if atom.hcount == 1 else f"H{atom.hcount}")
    charge = "" if atom.charge == 0 else ("+" if atom.charge > 0 else "-")
    return f"[{sym}{h}{charge}]"


def _bond_token(mol: MolGraph, a: int, b: int, aromatic_mode: bool) -> str:
    bond = mol.bond_between(a, b)
    if aromatic_mode and bond.aromatic:
        return ""
    if bond.order == 2:
        return "="
    if bond.order == 3:
        return "#"
    if aromatic_mode and mol.atoms[a].aromatic and mol.atoms[b].aromatic:
        return "-"  # a genuine single bond between two aromatic systems
    return ""


def write_smiles(mol: MolGraph, order: list[int] | None = None, aromatic_mode: bool = True) -> str:
    """Serialize; `order` (a rank per atom) fixes root and traversal order."""
    n = mol.n_atoms
    if n == 0:
        raise ChemError("cannot write an empty molecule")
    rank = order if order is not None else list(range(n))
    root = min(range(n), key=lambda i: rank[i])

    # Pass 1: preorder walk fixing tree children and ring-closure bonds.
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    opens_at: dict[int, list[int]] = {i: [] for i in range(n)}   # atom -> bond ids
    closes_at: dict[int, list[int]] = {i: [] for i in range(n)}
    seen = {root}
    order_pos = {root: 0}
    ring_bonds = set()
    stack = [root]
    parent: dict[int, int | None] = {root: None}
    while stack:
        u = stack.pop()
        for v, bond in sorted(mol.neighbors(u), key=lambda t: rank[t[0]]):
            if v not in seen:
                seen.add(v)
                parent[v] = u
                order_pos[v] = len(order_pos)
                children[u].append(v)
                stack.append(v)
            elif v != parent[u]:
                bidx = mol._adj[u][v]
                if bidx not in ring_bonds:
                    ring_bonds.add(bidx)
    if len(seen) != n:
        raise ChemError("cannot write a disconnected molecule")
    for bidx in ring_bonds:
        bond = mol.bonds[bidx]
        first, second = sorted((bond.a, bond.b), key=lambda x: order_pos[x])
        opens_at[first].append(bidx)
        closes_at[second].append(bidx)
    for atom in opens_at:
        opens_at[atom].sort(key=lambda bidx: order_pos[mol.bonds[bidx].other(atom)])

    # Pass 2: emit tokens; ring numbers are the smallest free at opening time.
    free: list[int] = []
    next_num = 1
    numbers: dict[int, int] = {}

    def digit(num: int) -> str:
        return str(num) if num < 10 else f"%{num:02d}"

    out: list[str] = []

    def emit(u: int) -> None:
        nonlocal next_num
        out.append(_atom_token(mol, u, aromatic_mode))
        for bidx in opens_at[u]:
            num = heappop(free) if free else next_num
            if num == next_num:
                next_num += 1
            numbers[bidx] = num
            other = mol.bonds[bidx].other(u)
            out.append(_bond_token(mol, u, other, aromatic_mode) + digit(num))
        for bidx in closes_at[u]:
            num = numbers.pop(bidx)
            out.append(digit(num))
            heappush(free, num)
        kids = children[u]
        for v in kids[:-1]:
            out.append("(" + _bond_token(mol, u, v, aromatic_mode))
            emit(v)
            out.append(")")
        for v in kids[-1:]:
            out.append(_bond_token(mol, u, v, aromatic_mode))
            emit(v)

    import sys

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 4 * n + 100))
    try:
        emit(root)
    finally:
        sys.setrecursionlimit(old_limit)
    return "".join(out)


def canonical_smiles(mol: MolGraph) -> str:
    """Canonical kekulized form: equal strings iff the kekulized graphs match."""
    kek = mol.kekulized_copy()
    ranks = canonical_ranks(kek, use_aromatic=False)
    return write_smiles(kek, order=ranks, aromatic_mode=False)


def canonicalize(text: str) -> str:
    """Parse then canonicalize; raises ChemError on invalid input."""
    return canonical_smiles(parse_smiles(text))
