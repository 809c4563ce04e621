"""Molecular graph kernel and the chemistry task generators/scorers."""

from .graph import Atom, Bond, ChemError, Formula, MolGraph, dbe_of, formula_of, parse_formula
from .smiles import canonical_smiles, canonicalize, parse_smiles, write_smiles

__all__ = [
    "Atom",
    "Bond",
    "ChemError",
    "Formula",
    "MolGraph",
    "canonical_smiles",
    "canonicalize",
    "dbe_of",
    "formula_of",
    "parse_formula",
    "parse_smiles",
    "write_smiles",
]
