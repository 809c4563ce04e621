"""Shared task-instance model, splittable deterministic randomness, and JSONL persistence.

Every generator produces :class:`TaskInstance` objects and every scorer consumes
them, so this module is the single source of truth for the dataset schema and
for the per-task relational-complexity (RC) bookkeeping.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Any, ClassVar, Iterable, Mapping, Sequence, Union

import numpy as np

TASK_CODES = (
    "A1", "A2", "A3", "A4", "A5", "A6", "A7",
    "B1", "B2",
    "C1", "C2", "C3", "C4",
)

TASK_DOMAIN = {
    **{code: "algebra" for code in ("A1", "A2", "A3", "A4", "A5", "A6", "A7")},
    "B1": "biology",
    "B2": "biology",
    **{code: "chemistry" for code in ("C1", "C2", "C3", "C4")},
}

_MAX_SEED = 2**64


class DatasetError(ValueError):
    """Raised when a dataset file violates the JSONL record schema."""


# ---------------------------------------------------------------------------
# Splittable RNG
# ---------------------------------------------------------------------------


class SeededRng:
    """Deterministic random stream keyed by a 64-bit seed and a split path.

    ``split(label)`` derives a child stream whose draws are independent of any
    sibling's, which lets per-instance generation fan out with no shared
    state.  The same (seed, path) pair always replays the same stream, and the
    numpy generator is derived from the same key so vectorised draws are

    equally reproducible.
    """

    __slots__ = ("seed", "path", "_py", "_np")

    def __init__(self, seed: int, path: Sequence[str] = ()):
        seed = int(seed)
        if not 0 <= seed < _MAX_SEED:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.path: tuple[str, ...] = tuple(str(p) for p in path)
        self._py: random.Random | None = None
        self._np: np.random.Generator | None = None

    def _derive(self, tag: bytes) -> int:
        h = hashlib.blake2b(digest_size=16, person=tag)
        h.update(self.seed.to_bytes(8, "little"))
        for label in self.path:
            h.update(b"/")
            h.update(label.encode("utf-8"))
        return int.from_bytes(h.digest(), "little")

    @property
    def py(self) -> random.Random:
        if self._py is None:
            self._py = random.Random(self._derive(b"rel-py"))
        return self._py

    @property
    def np(self) -> np.random.Generator:
        if self._np is None:
            self._np = np.random.Generator(np.random.PCG64(self._derive(b"rel-np")))
        return self._np

    def split(self, label: str) -> "SeededRng":
        return SeededRng(self.seed, self.path + (str(label),))

    def child_seed(self, label: str) -> int:
        """A fresh 64-bit seed for a child stream.

        `new_rng(child_seed(label))` reproduces the child instance standalone,
        which is how sweep generators hand each instance its own stored seed.
        """
        return self.split(label)._derive(b"rel-seed") % _MAX_SEED

    # Thin draw helpers so callers never touch .py/.np directly for scalars.
    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in the inclusive range [lo, hi]."""
        if lo > hi:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return self.py.randint(lo, hi)

    def random(self) -> float:
        return self.py.random()

    def uniform(self, lo: float, hi: float) -> float:
        return self.py.uniform(lo, hi)

    def choice(self, seq: Sequence[Any]) -> Any:
        return self.py.choice(seq)

    def sample(self, seq: Sequence[Any], k: int) -> list[Any]:
        return self.py.sample(seq, k)

    def shuffle(self, items: list[Any]) -> None:
        self.py.shuffle(items)

    def __repr__(self) -> str:  # pragma: no cover
        return f"SeededRng(seed={self.seed}, path={'/'.join(self.path)!r})"


def new_rng(seed: int) -> SeededRng:
    """Root stream for a generation run."""
    return SeededRng(seed)


# ---------------------------------------------------------------------------
# Answer specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChoiceIndex:
    """Index of the correct entry in an attached candidate list."""

    index: int
    variant: ClassVar[str] = "choice_index"

    def to_dict(self) -> dict[str, Any]:
        return {"variant": self.variant, "index": self.index}


@dataclass(frozen=True)
class YesNoTaxa:
    """Presence flag plus the exact set of taxa involved (empty when absent)."""

    flag: bool
    taxa: frozenset[str] = frozenset()
    variant: ClassVar[str] = "yes_no_taxa"

    def to_dict(self) -> dict[str, Any]:
        return {"variant": self.variant, "flag": self.flag, "taxa": sorted(self.taxa)}


@dataclass(frozen=True)
class Letter:
    letter: str
    variant: ClassVar[str] = "letter"

    def to_dict(self) -> dict[str, Any]:
        return {"variant": self.variant, "letter": self.letter}


@dataclass(frozen=True)
class SmilesSet:
    """Set of canonical SMILES strings (pairwise distinct by construction)."""

    smiles: frozenset[str]
    variant: ClassVar[str] = "smiles_set"

    def __post_init__(self):
        object.__setattr__(self, "smiles", frozenset(self.smiles))

    def to_dict(self) -> dict[str, Any]:
        return {"variant": self.variant, "smiles": sorted(self.smiles)}


@dataclass(frozen=True)
class Smiles:
    smiles: str
    variant: ClassVar[str] = "smiles"

    def to_dict(self) -> dict[str, Any]:
        return {"variant": self.variant, "smiles": self.smiles}


@dataclass(frozen=True)
class MotifMap:
    """One canonical motif per molecule index plus the global target count."""

    motifs: tuple[tuple[int, str], ...]
    target: int
    fg_kind: str
    variant: ClassVar[str] = "motif_map"

    def __post_init__(self):
        object.__setattr__(self, "motifs", tuple(sorted((int(i), s) for i, s in dict(self.motifs).items())))

    def as_mapping(self) -> dict[int, str]:
        return dict(self.motifs)

    def to_dict(self) -> dict[str, Any]:
        return {
            "variant": self.variant,
            "motifs": {str(i): s for i, s in self.motifs},
            "target": self.target,
            "fg_kind": self.fg_kind,
        }


AnswerSpec = Union[ChoiceIndex, YesNoTaxa, Letter, SmilesSet, Smiles, MotifMap]

_ANSWER_TYPES = {cls.variant: cls for cls in (ChoiceIndex, YesNoTaxa, Letter, SmilesSet, Smiles, MotifMap)}


def answer_from_dict(d: Mapping[str, Any]) -> AnswerSpec:
    try:
        variant = d["variant"]
        cls = _ANSWER_TYPES[variant]
    except KeyError as exc:
        raise DatasetError(f"unknown answer variant in {d!r}") from exc
    if cls is ChoiceIndex:
        return ChoiceIndex(index=int(d["index"]))
    if cls is YesNoTaxa:
        return YesNoTaxa(flag=bool(d["flag"]), taxa=frozenset(d.get("taxa", ())))
    if cls is Letter:
        return Letter(letter=str(d["letter"]))
    if cls is SmilesSet:
        return SmilesSet(smiles=frozenset(d["smiles"]))
    if cls is Smiles:
        return Smiles(smiles=str(d["smiles"]))
    return MotifMap(
        motifs=tuple((int(i), str(s)) for i, s in d["motifs"].items()),
        target=int(d["target"]),
        fg_kind=str(d["fg_kind"]),
    )


# ---------------------------------------------------------------------------
# Task instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskInstance:
    """One generated question, self-describing enough to re-verify and score."""

    id: str
    domain: str
    task_code: str
    rc: int
    oc_params: dict[str, float]
    prompt: str
    answer: AnswerSpec
    gen_params: dict[str, Any]
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "domain": self.domain,
            "task_code": self.task_code,
            "rc": self.rc,
            "oc_params": self.oc_params,
            "prompt": self.prompt,
            "answer": self.answer.to_dict(),
            "gen_params": self.gen_params,
            "seed": self.seed,
        }


def _canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def instance_id(task_code: str, gen_params: Mapping[str, Any], seed: int) -> str:
    """Content hash, stable across runs, used to join generation and evaluation."""
    payload = _canonical_json({"task_code": task_code, "gen_params": gen_params, "seed": seed})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def expected_rc(task_code: str, gen_params: Mapping[str, Any]) -> int:
    """Recompute the task's RC law from its generation parameters.

    Kept independent of the generators so stored rc values can be audited.
    C3 has no scalar law in the source material; rc carries the isomer-universe
    size while (n_isomers, n_observed) both live in gen_params.
    """
    if task_code == "A1":
        return 1
    if task_code == "A2":
        return 2
    if task_code in ("A3", "A4"):
        return int(gen_params["n"])
    if task_code == "A5":
        return 4
    if task_code == "A6":
        return 5
    if task_code == "A7":
        return 6
    if task_code == "B1":
        return int(gen_params["n_ht"])
    if task_code == "B2":
        return int(gen_params["k"])
    if task_code in ("C1", "C2"):
        return 2
    if task_code == "C3":
        return int(gen_params["n_isomers"])
    if task_code == "C4":
        return int(gen_params["n_molecules"])
    raise ValueError(f"unknown task code {task_code!r}")


def make_instance(
    task_code: str,
    *,
    rc: int,
    oc_params: Mapping[str, float],
    prompt: str,
    answer: AnswerSpec,
    gen_params: Mapping[str, Any],
    seed: int,
) -> TaskInstance:
    """Assemble an instance, enforcing the RC law and a non-empty prompt."""
    if task_code not in TASK_DOMAIN:
        raise ValueError(f"unknown task code {task_code!r}")
    if not prompt:
        raise ValueError("prompt must be non-empty")
    law = expected_rc(task_code, gen_params)
    if rc != law:
        raise ValueError(f"{task_code}: rc={rc} violates the task's RC law (expected {law})")
    return TaskInstance(
        id=instance_id(task_code, dict(gen_params), seed),
        domain=TASK_DOMAIN[task_code],
        task_code=task_code,
        rc=int(rc),
        oc_params=dict(oc_params),
        prompt=prompt,
        answer=answer,
        gen_params=dict(gen_params),
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_REQUIRED_KEYS = ("id", "domain", "task_code", "rc", "oc_params", "prompt", "answer", "gen_params", "seed")


def save_dataset(instances: Iterable[TaskInstance], path: str) -> int:
    """Write one JSONL record per instance; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(_canonical_json(inst.to_dict()))
            fh.write("\n")
            count += 1
    return count


def instance_from_dict(record: Mapping[str, Any]) -> TaskInstance:
    missing = [k for k in _REQUIRED_KEYS if k not in record]
    if missing:
        raise DatasetError(f"record missing keys {missing}")
    if record["task_code"] not in TASK_DOMAIN:
        raise DatasetError(f"unknown task code {record['task_code']!r}")
    return TaskInstance(
        id=str(record["id"]),
        domain=str(record["domain"]),
        task_code=str(record["task_code"]),
        rc=int(record["rc"]),
        oc_params={str(k): float(v) for k, v in record["oc_params"].items()},
        prompt=str(record["prompt"]),
        answer=answer_from_dict(record["answer"]),
        gen_params=dict(record["gen_params"]),
        seed=int(record["seed"]),
    )


def load_dataset(path: str) -> list[TaskInstance]:
    """Read a JSONL dataset; errors name the offending 1-based line."""
    instances = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                instances.append(instance_from_dict(record))
            except (json.JSONDecodeError, DatasetError, KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"line {lineno}: {exc}") from exc
    return instances
