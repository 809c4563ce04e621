"""Number-matrix and number-tensor completion tasks with 8-way answer sets.

Seven rules of increasing relational complexity:

* A1 row-constant, A2 row progression with a shared increment, A3 rows that
  permute one shared value set, A4 signed row sums (one sign per column) --
  all on ``n x n`` grids.
* A5/A6 "moving" rules on ``n x n x K`` tensors: every cell of slice ``l >= 1``
  is the sum of a fixed predecessor stencil in slice ``l-1`` (toroidal
  indices); A6 uses five predecessors and reduces modulo ``modulus``.
* A7 self-consistent neighborhood sums: every cell equals the sum of its four
  toroidal in-slice neighbors mod a prime ``p``.  Fixed points are sampled
  directly from the nullspace of (adjacency - I) over GF(p); naive sweep
  iteration provably cycles for these moduli, so there is nothing to iterate.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Mapping, Sequence

import numpy as np

from .core import ChoiceIndex, SeededRng, TaskInstance, make_instance

MATRIX_RULES = ("A1", "A2", "A3", "A4")
TENSOR_RULES = ("A5", "A6", "A7")

# Predecessor offsets (dl, di, dj), applied as (l+dl, (i+di) % n, (j+dj) % n).
# Recovered by exhaustive search against the two worked tensor examples; the
# A5 set is unique modulo toroidal wrap.
STENCILS = {
    "A5": ((-1, 0, 0), (-1, 1, 0), (-1, -1, 0), (-1, 0, -1)),
    "A6": ((-1, 0, 0), (-1, 1, 0), (-1, -1, 0), (-1, 0, -1), (-1, 0, 1)),
}

DEFAULT_MODULUS_A6 = 11
DEFAULT_PRIME_A7 = 7
DEFAULT_MAXVAL_A7 = 20


class IntegrityError(ValueError):
    """An instance's stored cells violate its governing rule."""


@dataclass(frozen=True)
class RuleSpec:
    """Rule code plus the constants that parameterize it."""

    code: str
    increment: int | None = None           # A2
    signs: tuple[int, ...] | None = None   # A4, one sign per summed column
    window: int | None = None              # A5/A6 stencil size
    modulus: int | None = None             # A6
    p: int | None = None                   # A7 prime
    maxval: int | None = None              # A7 distractor range


@dataclass(frozen=True)
class Grid:
    n: int
    cells: tuple[tuple[int, ...], ...]
    missing: tuple[int, int]


@dataclass(frozen=True)
class Cube:
    n: int
    k_slices: int
    cells: tuple[tuple[tuple[int, ...], ...], ...]
    missing: tuple[int, int, int]


@dataclass(frozen=True)
class CandidateSet:
    values: tuple[int, ...]
    correct_index: int

    def __post_init__(self):
        if len(self.values) != 8 or len(set(self.values)) != 8:
            raise ValueError("candidate set must hold 8 pairwise-distinct values")
        if not 0 <= self.correct_index < 8:
            raise ValueError("correct_index out of range")


# ---------------------------------------------------------------------------
# Candidates
# ---------------------------------------------------------------------------


def build_candidates(correct: int, value_domain: tuple[int, int], rng: SeededRng) -> CandidateSet:
    """8 distinct values containing `correct`, shuffled, uniform distractors."""
    lo, hi = value_domain
    lo, hi = min(lo, correct), max(hi, correct)
    if hi - lo + 1 < 8:
        raise ValueError(f"domain [{lo}, {hi}] too narrow for 8 distinct candidates")
    if hi - lo + 1 <= 512:
        pool = [v for v in range(lo, hi + 1) if v != correct]
        distractors = rng.sample(pool, 7)
    else:
        chosen = {correct}
        while len(chosen) < 8:
            chosen.add(rng.randint(lo, hi))
        distractors = sorted(chosen - {correct})
    values = distractors + [correct]
    rng.shuffle(values)
    return CandidateSet(values=tuple(values), correct_index=values.index(correct))


# ---------------------------------------------------------------------------
# Prompt rendering
# ---------------------------------------------------------------------------

_HEADER = "Only return the missing number!"


def _cell_str(value: int | None) -> str:
    return "?" if value is None else str(value)


def render_matrix_prompt(grid: Grid, candidates: CandidateSet, style: str = "rows") -> str:
    mi, mj = grid.missing
    rows = [[None if (i, j) == (mi, mj) else grid.cells[i][j] for j in range(grid.n)] for i in range(grid.n)]
    if style == "rows":
        body = "; ".join(
            f"row {i + 1}: " + ", ".join(_cell_str(v) for v in row) for i, row in enumerate(rows)
        )
    elif style == "pipes":
        body = " | ".join("[" + ", ".join(_cell_str(v) for v in row) + "]" for row in rows)
    else:
        raise ValueError(f"unknown prompt style {style!r}")
    answers = "\n".join(f"Answer #{k}: {v}" for k, v in enumerate(candidates.values))
    return f"{_HEADER}\n{body}\nAnswer set:\n{answers}"


def render_tensor_prompt(cube: Cube, candidates: CandidateSet) -> str:
    mk, mi, mj = cube.missing
    blocks = []
    for l in range(cube.k_slices):
        lines = [f"Slice l={l}:"]
        for i in range(cube.n):
            vals = [
                _cell_str(None if (l, i, j) == (mk, mi, mj) else cube.cells[l][i][j])
                for j in range(cube.n)
            ]
            lines.append(f"  row {i + 1}: " + ", ".join(vals))
        blocks.append("\n".join(lines))
    answers = "\n".join(f"Answer #{k}: {v}" for k, v in enumerate(candidates.values))
    return (
        "Complete the Raven's progressive tensor:\n"
        f"{_HEADER}\n" + "\n\n".join(blocks) + "\n\nAnswer set:\n" + answers
    )


# ---------------------------------------------------------------------------
# Matrix generation (A1-A4)
# ---------------------------------------------------------------------------


def _sample_rule(code: str, n: int, value_domain: tuple[int, int], rng: SeededRng) -> RuleSpec:
    lo, hi = value_domain
    if code == "A2":
        sign = rng.choice((1, -1))
        return RuleSpec(code=code, increment=sign * rng.randint(1, 9))
    if code == "A4":
        while True:
            signs = tuple(rng.choice((1, -1)) for _ in range(n - 1))
            # An all-minus column assignment forces a negative sum whenever the
            # sampling domain is non-negative; resample it away.
            if not (lo >= 0 and all(s == -1 for s in signs)):
                return RuleSpec(code=code, signs=signs)
    if code == "A5":
        return RuleSpec(code=code, window=4)
    if code == "A6":
        return RuleSpec(code=code, window=5, modulus=DEFAULT_MODULUS_A6)
    if code == "A7":
        return RuleSpec(code=code, p=DEFAULT_PRIME_A7, maxval=DEFAULT_MAXVAL_A7)
    return RuleSpec(code=code)


def _fill_matrix(rule: RuleSpec, n: int, value_domain: tuple[int, int], rng: SeededRng) -> list[list[int]]:
    lo, hi = value_domain
    if rule.code == "A1":
        return [[rng.randint(lo, hi)] * n for _ in range(n)]
    if rule.code == "A2":
        inc = rule.increment
        starts = [rng.randint(lo, hi) for _ in range(n)]
        return [[start + inc * j for j in range(n)] for start in starts]
    if rule.code == "A3":
        if hi - lo + 1 < n:
            raise ValueError(f"domain [{lo}, {hi}] cannot supply {n} distinct values")
        values = rng.sample(range(lo, hi + 1), n)
        rows = []
        for _ in range(n):
            row = list(values)
            rng.shuffle(row)
            rows.append(row)
        return rows
    if rule.code == "A4":
        rows = []
        for _ in range(n):
            head = [rng.randint(lo, hi) for _ in range(n - 1)]
            rows.append(head + [sum(s * v for s, v in zip(rule.signs, head))])
        return rows
    raise ValueError(f"{rule.code} is not a matrix rule")


def gen_matrix_task(
    rule: RuleSpec | str,
    n: int,
    value_domain: tuple[int, int],
    rng: SeededRng,
    *,
    prompt_style: str = "rows",
) -> TaskInstance:
    """Generate one A1-A4 grid task with an 8-candidate answer set."""
    if isinstance(rule, str):
        rule = _sample_rule(rule, n, value_domain, rng.split("rule"))
    if rule.code not in MATRIX_RULES:
        raise ValueError(f"{rule.code} is not a matrix rule")
    if n < 3:
        raise ValueError("n must be at least 3")
    cells = _fill_matrix(rule, n, value_domain, rng.split("cells"))
    pos = rng.split("missing").randint(0, n * n - 1)
    missing = (pos // n, pos % n)
    grid = Grid(n=n, cells=tuple(tuple(r) for r in cells), missing=missing)
    correct = cells[missing[0]][missing[1]]
    lo, hi = value_domain
    if rule.code == "A4":
        w = max(8, (hi - lo + 1) // 2)
        cand_domain = (correct - w, correct + w)
    else:
        cand_domain = value_domain
    candidates = build_candidates(correct, cand_domain, rng.split("candidates"))

    gen_params: dict[str, Any] = {
        "rule": rule.code,
        "n": n,
        "value_lo": lo,
        "value_hi": hi,
        "cells": [list(r) for r in cells],
        "missing": list(missing),
        "candidates": list(candidates.values),
        "prompt_style": prompt_style,
    }
    if rule.increment is not None:
        gen_params["increment"] = rule.increment
    if rule.signs is not None:
        gen_params["signs"] = list(rule.signs)

    prompt = render_matrix_prompt(grid, candidates, style=prompt_style)
    return make_instance(
        rule.code,
        rc=1 if rule.code == "A1" else 2 if rule.code == "A2" else n,
        oc_params={"digits": float(len(str(hi))), "prompt_len": float(len(prompt))},
        prompt=prompt,
        answer=ChoiceIndex(index=candidates.correct_index),
        gen_params=gen_params,
        seed=rng.seed,
    )


# ---------------------------------------------------------------------------
# Tensor generation (A5-A7)
# ---------------------------------------------------------------------------


def _stencil_sum(cells: Sequence[Sequence[Sequence[int]]], n: int, l: int, i: int, j: int, code: str) -> int:
    return sum(cells[l + dl][(i + di) % n][(j + dj) % n] for dl, di, dj in STENCILS[code])


def _fill_tensor_moving(rule: RuleSpec, n: int, K: int, rng: SeededRng, init_hi: int) -> list[list[list[int]]]:
    first = [[rng.randint(0, init_hi) for _ in range(n)] for _ in range(n)]
    cells = [first]
    for l in range(1, K):
        cells.append([[0] * n for _ in range(n)])
        for i in range(n):
            for j in range(n):
                s = _stencil_sum(cells, n, l, i, j, rule.code)
                cells[l][i][j] = s % rule.modulus if rule.code == "A6" else s
    return cells


@lru_cache(maxsize=32)
def _neighbor_sum_nullspace(n: int, p: int) -> tuple[tuple[int, ...], ...]:
    """Basis of {x : x == 4-neighbor toroidal sum of x (mod p)} on an n x n grid."""
    m = n * n
    mat = np.zeros((m, m), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            r = i * n + j
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                mat[r][((i + di) % n) * n + (j + dj) % n] += 1
            mat[r][r] -= 1
    mat %= p
    # Gauss-Jordan over GF(p).
    mat = mat.copy()
    pivots = []
    row = 0
    for col in range(m):
        sel = None
        for r in range(row, m):
            if mat[r, col] % p:
                sel = r
                break
        if sel is None:
            continue
        mat[[row, sel]] = mat[[sel, row]]
        inv = pow(int(mat[row, col]), p - 2, p)
        mat[row] = (mat[row] * inv) % p
        for r in range(m):
            if r != row and mat[r, col] % p:
                mat[r] = (mat[r] - mat[r, col] * mat[row]) % p
        pivots.append(col)
        row += 1
    free_cols = [c for c in range(m) if c not in pivots]
    basis = []
    for fc in free_cols:
        vec = np.zeros(m, dtype=np.int64)
        vec[fc] = 1
        for r, pc in enumerate(pivots):
            vec[pc] = (-mat[r, fc]) % p
        basis.append(tuple(int(v) for v in vec))
    return tuple(basis)


def _sample_neighbor_sum_slice(n: int, p: int, rng: SeededRng) -> list[list[int]]:
    basis = _neighbor_sum_nullspace(n, p)
    flat = np.zeros(n * n, dtype=np.int64)
    for vec in basis:
        flat = (flat + rng.randint(0, p - 1) * np.asarray(vec, dtype=np.int64)) % p
    return [[int(flat[i * n + j]) for j in range(n)] for i in range(n)]


def neighbor_sum_residuals(cells: Sequence[Sequence[Sequence[int]]], n: int, p: int) -> int:
    """Number of cells violating the A7 constraint (0 == fixed point)."""
    bad = 0
    for sl in cells:
        for i in range(n):
            for j in range(n):
                s = (sl[(i - 1) % n][j] + sl[(i + 1) % n][j] + sl[i][(j - 1) % n] + sl[i][(j + 1) % n]) % p
                if sl[i][j] != s:
                    bad += 1
    return bad


def gen_tensor_task(rule: RuleSpec | str, n: int, K: int, rng: SeededRng) -> TaskInstance:
    """Generate one A5-A7 tensor task with an 8-candidate answer set."""
    if isinstance(rule, str):
        rule = _sample_rule(rule, n, (0, 0), rng.split("rule"))
    if rule.code not in TENSOR_RULES:
        raise ValueError(f"{rule.code} is not a tensor rule")
    if n < 3:
        raise ValueError("n must be at least 3")
    if K < 2:
        raise ValueError("K must be at least 2")

    gen_params: dict[str, Any] = {"rule": rule.code, "n": n, "K": K}
    if rule.code == "A5":
        cells = _fill_tensor_moving(rule, n, K, rng.split("cells"), init_hi=10)
    elif rule.code == "A6":
        cells = _fill_tensor_moving(rule, n, K, rng.split("cells"), init_hi=rule.modulus - 1)
        gen_params["modulus"] = rule.modulus
    else:
        p = rule.p or DEFAULT_PRIME_A7
        crng = rng.split("cells")
        cells = [_sample_neighbor_sum_slice(n, p, crng.split(str(l))) for l in range(K)]
        if neighbor_sum_residuals(cells, n, p) != 0:
            raise IntegrityError("sampled A7 tensor is not a fixed point")
        gen_params["p"] = p
        gen_params["maxval"] = rule.maxval or DEFAULT_MAXVAL_A7

    pos = rng.split("missing").randint(0, K * n * n - 1)
    missing = (pos // (n * n), (pos // n) % n, pos % n)
    cube = Cube(
        n=n,
        k_slices=K,
        cells=tuple(tuple(tuple(r) for r in sl) for sl in cells),
        missing=missing,
    )
    correct = cells[missing[0]][missing[1]][missing[2]]
    if rule.code == "A5":
        w = max(8, abs(correct))
        cand_domain = (max(0, correct - w), correct + w)
    elif rule.code == "A6":
        cand_domain = (0, max(rule.modulus - 1, 8))
    else:
        cand_domain = (0, max(gen_params["maxval"], 8))
    candidates = build_candidates(correct, cand_domain, rng.split("candidates"))

    gen_params["cells"] = [[list(r) for r in sl] for sl in cells]
    gen_params["missing"] = list(missing)
    gen_params["candidates"] = list(candidates.values)

    prompt = render_tensor_prompt(cube, candidates)
    return make_instance(
        rule.code,
        rc={"A5": 4, "A6": 5, "A7": 6}[rule.code],
        oc_params={"slices": float(K), "prompt_len": float(len(prompt))},
        prompt=prompt,
        answer=ChoiceIndex(index=candidates.correct_index),
        gen_params=gen_params,
        seed=rng.seed,
    )


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------


def _grid_from_params(gp: Mapping[str, Any]) -> tuple[list[list[int]], tuple[int, int]]:
    return [list(r) for r in gp["cells"]], tuple(gp["missing"])


def solve_rule_oracle(instance: TaskInstance) -> int:
    """Re-derive the hidden value from the governing rule, never reading it.

    Raises IntegrityError when the visible cells already violate the rule.
    """
    code = instance.task_code
    gp = instance.gen_params
    if code in MATRIX_RULES:
        cells, (mi, mj) = _grid_from_params(gp)
        n = gp["n"]
        complete = [r for i, r in enumerate(cells) if i != mi]
        if code == "A1":
            row = [v for j, v in enumerate(cells[mi]) if j != mj]
            if len(set(row)) != 1:
                raise IntegrityError("A1 row is not constant")
            return row[0]
        if code == "A2":
            inc = complete[0][1] - complete[0][0]
            for r in complete:
                if any(r[j + 1] - r[j] != inc for j in range(n - 1)):
                    raise IntegrityError("A2 rows disagree on the increment")
            return cells[mi][mj - 1] + inc if mj > 0 else cells[mi][mj + 1] - inc
        if code == "A3":
            values = set(complete[0])
            if len(values) != n:
                raise IntegrityError("A3 row values are not distinct")
            for r in complete:
                if set(r) != values:
                    raise IntegrityError("A3 rows do not share one value set")
            present = {v for j, v in enumerate(cells[mi]) if j != mj}
            leftover = values - present
            if len(leftover) != 1:
                raise IntegrityError("A3 missing value is not unique")
            return leftover.pop()
        signs = gp["signs"]
        for r in complete:
            if sum(s * v for s, v in zip(signs, r)) != r[-1]:
                raise IntegrityError("A4 signed row sum fails on a complete row")
        row = cells[mi]
        if mj == n - 1:
            return sum(s * v for s, v in zip(signs, row))
        partial = sum(s * v for k, (s, v) in enumerate(zip(signs, row)) if k != mj)
        return signs[mj] * (row[-1] - partial)

    if code in TENSOR_RULES:
        cells = gp["cells"]
        n, K = gp["n"], gp["K"]
        mk, mi, mj = gp["missing"]
        if code in ("A5", "A6"):
            mod = gp.get("modulus")
            if mk > 0:
                s = _stencil_sum(cells, n, mk, mi, mj, code)
                return s % mod if code == "A6" else s
            # Invert the successor cell's equation; the stencil never reuses
            # the (i, j) position inside its own slice, so the three remaining
            # terms are all visible.
            others = sum(
                cells[0][(mi + di) % n][(mj + dj) % n]
                for dl, di, dj in STENCILS[code]
                if (di, dj) != (0, 0)
            )
            wanted = cells[1][mi][mj] - others
            return wanted % mod if code == "A6" else wanted
        p = gp["p"]
        sl = cells[mk]
        return (
            sl[(mi - 1) % n][mj] + sl[(mi + 1) % n][mj] + sl[mi][(mj - 1) % n] + sl[mi][(mj + 1) % n]
        ) % p

    raise ValueError(f"{code} is not an algebra task")


def oracle_value(instance: TaskInstance) -> int:
    """The stored correct candidate (what the solver is expected to return)."""
    return instance.gen_params["candidates"][instance.answer.index]


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

_ANSWER_INDEX_RE = re.compile(r"[Aa]nswer\s*#\s*(\d+)")
_INT_RE = re.compile(r"-?\d+")
_MARKER_RE = re.compile(r"final|answer", re.IGNORECASE)


def _extract_values(text: str, candidates: Sequence[int]) -> tuple[list[int], int]:
    """Distinct candidate values referenced in `text` (by value or by index)."""
    hits: list[int] = []
    spans = []
    for m in _ANSWER_INDEX_RE.finditer(text):
        spans.append(m.span())
        k = int(m.group(1))
        if 0 <= k < len(candidates) and candidates[k] not in hits:
            hits.append(candidates[k])
    n_ints = 0
    for m in _INT_RE.finditer(text):
        if any(a <= m.start() < b for a, b in spans):
            continue
        n_ints += 1
        v = int(m.group(0))
        if v in candidates and v not in hits:
            hits.append(v)
    return hits, n_ints


def parse_choice_response(text: str, candidates: Sequence[int]) -> int | None:
    """Candidate value named by the response, or None when ambiguous/absent.

    A response naming two or more distinct candidates is accepted only when a
    final/answer marker singles one of them out; otherwise it is unparseable,
    which keeps scoring deterministic.
    """
    hits, n_ints = _extract_values(text, candidates)
    if len(hits) == 1:
        return hits[0]
    if not hits:
        ints = [int(m.group(0)) for m in _INT_RE.finditer(text)]
        if len(ints) == 1:
            return ints[0]
        return None
    last = None
    for m in _MARKER_RE.finditer(text):
        last = m.end()
    if last is not None:
        tail_hits, _ = _extract_values(text[last:], candidates)
        if len(tail_hits) == 1:
            return tail_hits[0]
    return None


def score_choice(instance: TaskInstance, response_text: str) -> dict[str, Any]:
    """Score an 8-choice response: correct / incorrect / unparseable."""
    if not isinstance(instance.answer, ChoiceIndex):
        raise ValueError("instance does not carry a choice answer")
    candidates = instance.gen_params["candidates"]
    value = parse_choice_response(response_text, candidates)
    truth = candidates[instance.answer.index]
    if value is None:
        return {"score": 0.0, "outcome": "unparseable", "parsed": None}
    outcome = "correct" if value == truth else "incorrect"
    return {"score": 1.0 if value == truth else 0.0, "outcome": outcome, "parsed": value}
