"""Local fitness landscapes, epistatic coefficients, and structure questions.

A local landscape assigns a measured fitness to every combination of k focal
mutations on a fixed background.  The unnormalized Walsh-Hadamard (Mobius)
transform turns the table into interaction coefficients W(S); coefficients
whose magnitude exceeds a salience threshold (a fixed fraction of the
landscape's dynamic range) drive a coarse structural classification, which is
then verbalized into a multiple-choice question.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .core import Letter, SeededRng, TaskInstance, make_instance, new_rng

# Fraction of the dynamic range below which coefficients are treated as
# structurally absent.  Exposed so sensitivity can be probed.
SALIENCE_FRACTION = 0.12

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"


@dataclass(frozen=True)
class LocalLandscape:
    """Fitness over {0,1}^k; genotype bit i (left to right) = mutation i+1."""

    k: int
    labels: tuple[str, ...]
    fitness: dict[str, float]
    background_id: str = ""

    def __post_init__(self):
        if len(self.labels) != self.k:
            raise ValueError("need one label per focal mutation")
        want = {format(m, f"0{self.k}b") for m in range(2**self.k)}
        if set(self.fitness) != want:
            raise ValueError("fitness table must cover all 2^k genotypes")


@dataclass(frozen=True)
class WalshSpectrum:
    k: int
    coefficients: dict[frozenset[int], float]  # subsets of {1..k}
    delta: float
    tau: float

    def w(self, *mutations: int) -> float:
        return self.coefficients[frozenset(mutations)]


@dataclass(frozen=True)
class StructureLabel:
    name: str
    s2_star: tuple[int, int] | None
    s3_star: tuple[int, int, int] | None
    independent: tuple[int, ...]


CLASSES_BY_K = {
    2: ("positive", "negative", "independent"),
    3: ("dominant_pair_independent", "three_way_modulation", "hub", "independent"),
    4: (
        "dominant_pair_independent",
        "trio_modulation_one_independent",
        "hub_one_independent",
        "broad_coupling",
        "independent",
    ),
    # k >= 5 uses the dominant-structure summary classes.
    5: (
        "summary_mostly_independent",
        "summary_additional_group",
        "summary_broadly_coupled",
        "independent",
    ),
}


def classes_for_k(k: int) -> tuple[str, ...]:
    return CLASSES_BY_K[min(k, 5)] if k >= 2 else ()


# ---------------------------------------------------------------------------
# Transform
# ---------------------------------------------------------------------------


def _mask_of(genotype: str) -> int:
    m = 0
    for i, ch in enumerate(genotype):
        if ch == "1":
            m |= 1 << i
    return m


def mobius_coefficients(land: LocalLandscape) -> WalshSpectrum:
    """W(S) = sum over T <= S of (-1)^{|S|-|T|} f(1_T), for every subset S."""
    k = land.k
    size = 2**k
    w = [0.0] * size
    for genotype, value in land.fitness.items():
        w[_mask_of(genotype)] = value
    for bit in range(k):
        step = 1 << bit
        for mask in range(size):
            if mask & step:
                w[mask] -= w[mask ^ step]
    values = land.fitness.values()
    delta = max(values) - min(values)
    coeffs = {
        frozenset(i + 1 for i in range(k) if mask & (1 << i)): w[mask]
        for mask in range(size)
    }
    return WalshSpectrum(k=k, coefficients=coeffs, delta=delta, tau=SALIENCE_FRACTION * delta)


def reconstruct_fitness(spec: WalshSpectrum) -> dict[str, float]:
    """Inverse transform: f(1_T) = sum over S <= T of W(S)."""
    k = spec.k
    size = 2**k
    f = [0.0] * size
    for subset, value in spec.coefficients.items():
        mask = 0
        for i in subset:
            mask |= 1 << (i - 1)
        f[mask] = value
    for bit in range(k):
        step = 1 << bit
        for mask in range(size):
            if mask & step:
                f[mask] += f[mask ^ step]
    return {format(mask, f"0{k}b")[::-1]: f[mask] for mask in range(size)}


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


def _argmax_subset(spec: WalshSpectrum, subsets: Iterable[frozenset[int]]) -> frozenset[int]:
    # Lexicographically smallest subset wins exact ties, for determinism.
    best, best_mag = None, -1.0
    for s in sorted(subsets, key=sorted):
        mag = abs(spec.coefficients[s])
        if mag > best_mag:
            best, best_mag = s, mag
    return best


def interaction_score(spec: WalshSpectrum, mutation: int) -> float:
    """I(i): the largest interaction magnitude any subset containing i reaches."""
    return max(
        (abs(v) for s, v in spec.coefficients.items() if mutation in s and len(s) >= 2),
        default=0.0,
    )


def classify_structure(spec: WalshSpectrum, k: int | None = None) -> StructureLabel:
    """Map a spectrum to the coarse structure class appropriate for its k."""
    k = spec.k if k is None else k
    if k < 2:
        raise ValueError("classification needs k >= 2")
    coeffs = spec.coefficients
    tau = spec.tau
    salient = {s for s, v in coeffs.items() if len(s) >= 2 and abs(v) > tau}
    indep = tuple(i for i in range(1, k + 1) if interaction_score(spec, i) < tau)

    pairs = [s for s in coeffs if len(s) == 2]
    s2 = _argmax_subset(spec, pairs)
    trios = [s for s in coeffs if len(s) == 3 and s2 <= s]
    s3 = _argmax_subset(spec, trios) if trios else None

    def label(name: str) -> StructureLabel:
        return StructureLabel(
            name=name,
            s2_star=tuple(sorted(s2)),
            s3_star=tuple(sorted(s3)) if s3 else None,
            independent=indep,
        )

    if k == 2:
        w = coeffs[frozenset({1, 2})]
        if abs(w) <= tau:
            return label("independent")
        return label("positive" if w > 0 else "negative")

    if not salient:
        return label("independent")

    salient_pairs = [s for s in salient if len(s) == 2]

    if k == 3:
        if frozenset({1, 2, 3}) in salient:
            return label("three_way_modulation")
        if len(salient_pairs) >= 2:
            # With three mutations any two pairs share one: a hub.
            return label("hub")
        return label("dominant_pair_independent")

    if k == 4:
        if not indep:
            return label("broad_coupling")
        core = [i for i in range(1, 5) if i not in indep]
        if len(core) <= 2:
            return label("dominant_pair_independent")
        core_trio = frozenset(core)
        if core_trio in salient:
            return label("trio_modulation_one_independent")
        if len([s for s in salient_pairs if s <= core_trio]) >= 2:
            return label("hub_one_independent")
        return label("dominant_pair_independent")

    # k >= 5: summarize the dominant structure.
    remainder = [i for i in range(1, k + 1) if s3 is None or i not in s3]
    r_indep = [i for i in remainder if i in indep]
    if 2 * len(r_indep) >= len(remainder):
        return label("summary_mostly_independent")
    coupled = set(remainder) - set(r_indep)
    if any(s <= coupled for s in salient):
        return label("summary_additional_group")
    return label("summary_broadly_coupled")


# ---------------------------------------------------------------------------
# Verbalization and question building
# ---------------------------------------------------------------------------


def _hub_mutation(spec: WalshSpectrum, label: StructureLabel) -> int:
    counts: dict[int, int] = {}
    for s, v in spec.coefficients.items():
        if len(s) == 2 and abs(v) > spec.tau:
            for i in s:
                counts[i] = counts.get(i, 0) + 1
    if counts:
        return min(i for i, c in counts.items() if c == max(counts.values()))
    return label.s2_star[0]


def _option_text(class_name: str, k: int, names: Sequence[str], spec: WalshSpectrum, label: StructureLabel) -> str:
    p1, p2 = (names[i - 1] for i in label.s2_star)
    third = None
    if label.s3_star:
        third = names[[i for i in label.s3_star if i not in label.s2_star][0] - 1]
    if k == 2:
        if class_name == "positive":
            return (
                f"{p1} and {p2} modify each other's effects — the double mutation fitness is "
                "HIGHER than predicted by adding each mutation's individual effect."
            )
        if class_name == "negative":
            return (
                f"{p1} and {p2} modify each other's effects — the double mutation fitness is "
                "LOWER than predicted by adding each mutation's individual effect."
            )
        return (
            f"{p1} and {p2} act independently — the double mutation fitness is well "
            "predicted by adding each mutation's individual effect."
        )
    if class_name == "independent":
        return (
            "All mutations act approximately independently — every combination's fitness "
            "is well predicted by adding the individual effects."
        )
    if class_name == "dominant_pair_independent":
        rest = "the remaining mutations act" if k > 3 else None
        if k == 3:
            other = names[[i for i in (1, 2, 3) if i not in label.s2_star][0] - 1]
            return (
                f"{p1} and {p2} interact strongly with each other, while {other} acts "
                "approximately independently of both."
            )
        return (
            f"{p1} and {p2} interact strongly with each other, while {rest} "
            "approximately independently."
        )
    if class_name == "three_way_modulation":
        return (
            f"{third} modulates the joint effect of {p1} and {p2} — the three mutations "
            "show an irreducible three-way interaction."
        )
    if class_name == "hub":
        hub = names[_hub_mutation(spec, label) - 1]
        return (
            f"{hub} participates in multiple pairwise interactions with the other "
            "mutations, without a strong irreducible three-way effect."
        )
    if class_name == "trio_modulation_one_independent":
        lone = names[(label.independent or (4,))[0] - 1]
        return (
            f"{third} modulates the joint effect of {p1} and {p2}, while {lone} acts "
            "approximately independently."
        )
    if class_name == "hub_one_independent":
        hub = names[_hub_mutation(spec, label) - 1]
        lone = names[(label.independent or (4,))[0] - 1]
        return (
            f"{hub} participates in multiple pairwise interactions with the other "
            f"mutations, while {lone} acts approximately independently."
        )
    if class_name == "broad_coupling":
        return (
            "All four mutations are broadly coupled — no single pair or trio explains "
            "the fitness pattern."
        )
    lead = f"{p1} and {p2} form the leading interacting pair and {third} is the strongest associated third mutation"
    if class_name == "summary_mostly_independent":
        return f"{lead}, while the remaining mutations are mostly independent."
    if class_name == "summary_additional_group":
        return f"{lead}, while the remaining mutations form an additional interacting group of their own."
    if class_name == "summary_broadly_coupled":
        return f"{lead}, and the remaining mutations are broadly coupled with this dominant structure."
    raise ValueError(f"no verbalization for class {class_name!r}")


def _genotype_name(genotype: str, labels: Sequence[str]) -> str:
    present = [labels[i] for i, ch in enumerate(genotype) if ch == "1"]
    return " + ".join(present) if present else "wild-type"


def option_classes(correct: str, k: int) -> list[str]:
    """Fixed-order option classes: 3 for k=2, 4 for k>=3."""
    canon = list(classes_for_k(k))
    if k == 2 or len(canon) == 4:
        return canon
    # k == 4 has five possible labels; keep the correct one plus the first
    # three other canonical classes, preserving canonical order.
    chosen = [correct] + [c for c in canon if c != correct][:3]
    return [c for c in canon if c in chosen]


def gen_b2(source: LocalLandscape, rng: SeededRng | int) -> TaskInstance:
    """Build the multiple-choice structure question for one local landscape."""
    if isinstance(rng, int):
        rng = new_rng(rng)
    land = source
    spec = mobius_coefficients(land)
    truth = classify_structure(spec)
    classes = option_classes(truth.name, land.k)
    letters = [chr(ord("A") + i) for i in range(len(classes))]
    correct_letter = letters[classes.index(truth.name)]

    rows = [
        f"{_genotype_name(g, land.labels)}  {land.fitness[g]:.6f}"
        for g in sorted(land.fitness)
    ]
    options = "\n\n".join(
        f"{letter}. {_option_text(name, land.k, land.labels, spec, truth)}"
        for letter, name in zip(letters, classes)
    )
    prompt = (
        f"A protein has been measured with the following mutations at {land.k} positions.\n"
        f"Below are the measured fitness values for all {2**land.k} combinations:\n"
        "Genotype  Fitness\n" + "\n".join(rows) + "\n"
        "Which of the following is the best explanation of the full table?\n"
        f"{options}\n\n"
        "Answer with just the letter."
    )
    gen_params: dict[str, Any] = {
        "k": land.k,
        "labels": list(land.labels),
        "fitness": {g: land.fitness[g] for g in sorted(land.fitness)},
        "background_id": land.background_id,
        "class": truth.name,
        "option_classes": classes,
        "tau": spec.tau,
        "delta": spec.delta,
    }
    return make_instance(
        "B2",
        rc=land.k,
        oc_params={"prompt_len": float(len(prompt)), "n_options": float(len(classes))},
        prompt=prompt,
        answer=Letter(letter=correct_letter),
        gen_params=gen_params,
        seed=rng.seed,
    )


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def parse_letter_response(text: str, n_options: int) -> str | None:
    """The single option letter named by the response, else None."""
    allowed = "".join(chr(ord("a") + i) for i in range(n_options))
    found = {m.group(1).upper() for m in re.finditer(rf"\b([{allowed}{allowed.upper()}])\b", text)}
    if len(found) == 1:
        return found.pop()
    return None


def score_b2(instance: TaskInstance, response_text: str) -> dict[str, Any]:
    if not isinstance(instance.answer, Letter):
        raise ValueError("instance does not carry a letter answer")
    n_options = len(instance.gen_params["option_classes"])
    parsed = parse_letter_response(response_text, n_options)
    if parsed is None:
        return {"score": 0.0, "outcome": "unparseable", "parsed": None}
    correct = parsed == instance.answer.letter
    return {
        "score": 1.0 if correct else 0.0,
        "outcome": "correct" if correct else "incorrect",
        "parsed": parsed,
    }


# ---------------------------------------------------------------------------
# Sources: measured tables and synthesis
# ---------------------------------------------------------------------------


def load_fitness_table(path: str) -> tuple[list[LocalLandscape], int]:
    """Load (background_id, genotype, label_1..label_k, fitness) CSV blocks.

    Backgrounds with an incomplete 2^k genotype block are skipped; returns
    (landscapes, number skipped).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        label_cols = sorted(
            (c for c in reader.fieldnames or () if re.fullmatch(r"label_\d+", c)),
            key=lambda c: int(c.split("_")[1]),
        )
        if not label_cols or "background_id" not in (reader.fieldnames or ()):
            raise ValueError("fitness CSV must have background_id, genotype, label_*, fitness columns")
        k = len(label_cols)
        blocks: dict[str, dict[str, float]] = {}
        labels: dict[str, tuple[str, ...]] = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                genotype = row["genotype"].strip()
                if not re.fullmatch(r"[01]{%d}" % k, genotype):
                    raise ValueError(f"bad genotype {genotype!r}")
                bg = row["background_id"].strip()
                blocks.setdefault(bg, {})[genotype] = float(row["fitness"])
                labels.setdefault(bg, tuple(row[c].strip() for c in label_cols))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
    landscapes, skipped = [], 0
    for bg, table in blocks.items():
        if len(table) == 2**k:
            landscapes.append(LocalLandscape(k=k, labels=labels[bg], fitness=table, background_id=bg))
        else:
            skipped += 1
    return landscapes, skipped


def _mutation_names(k: int, rng: SeededRng) -> tuple[str, ...]:
    positions = rng.sample(range(5, 300), k)
    names = []
    for pos in positions:
        wt = rng.choice(AMINO_ACIDS)
        mut = rng.choice([a for a in AMINO_ACIDS if a != wt])
        names.append(f"{wt}{pos}{mut}")
    return tuple(names)


def _sketch_interactions(target: str, k: int, scale: float) -> dict[frozenset[int], float]:
    pair = frozenset({1, 2})
    if target in ("independent", ):
        return {}
    if target == "positive":
        return {pair: 2.0 * scale}
    if target == "negative":
        return {pair: -2.0 * scale}
    if target == "dominant_pair_independent":
        return {pair: 2.0 * scale}
    if target in ("three_way_modulation", "trio_modulation_one_independent"):
        return {pair: 2.0 * scale, frozenset({1, 2, 3}): 1.5 * scale}
    if target in ("hub", "hub_one_independent"):
        return {pair: 2.0 * scale, frozenset({1, 3}): 1.5 * scale}
    if target == "broad_coupling":
        return {pair: 2.0 * scale, frozenset({3, 4}): 1.6 * scale, frozenset({1, 3}): 1.4 * scale}
    if target == "summary_mostly_independent":
        return {pair: 2.0 * scale, frozenset({1, 2, 3}): 1.5 * scale}
    if target == "summary_additional_group":
        out = {pair: 2.0 * scale, frozenset({1, 2, 3}): 1.5 * scale}
        for i in range(4, k):
            out[frozenset({i, i + 1})] = 1.6 * scale
        return out
    if target == "summary_broadly_coupled":
        out = {pair: 2.0 * scale, frozenset({1, 2, 3}): 1.5 * scale}
        for i in range(4, k + 1):
            out[frozenset({3, i})] = 1.6 * scale
        return out
    raise ValueError(f"unknown structure sketch {target!r}")


def synth_landscape(
    k: int,
    sketch: str,
    noise: float,
    rng: SeededRng | int,
    *,
    background_id: str = "synthetic",
) -> LocalLandscape:
    """Inverse-transform a target spectrum into a landscape of known class.

    Construction is verified by classification; main-effect magnitudes shrink
    across retries so salient interactions stay above the threshold.
    """
    if isinstance(rng, int):
        rng = new_rng(rng)
    if k < 2:
        raise ValueError("k must be >= 2")
    if sketch not in classes_for_k(k):
        raise ValueError(f"class {sketch!r} is not defined for k={k}")
    labels = _mutation_names(k, rng.split("names"))
    for attempt in range(8):
        arng = rng.split(f"attempt{attempt}")
        main_scale = 0.8 / (1.6**attempt)
        coeffs: dict[frozenset[int], float] = {frozenset(): 5.0}
        for i in range(1, k + 1):
            coeffs[frozenset({i})] = arng.choice((1, -1)) * arng.uniform(0.5, 1.0) * main_scale
        coeffs.update(_sketch_interactions(sketch, k, 1.0))
        full = {frozenset(i + 1 for i in range(k) if m & (1 << i)): 0.0 for m in range(2**k)}
        full.update(coeffs)
        fitness = reconstruct_fitness(WalshSpectrum(k=k, coefficients=full, delta=0.0, tau=0.0))
        if noise:
            fitness = {g: v + arng.uniform(-noise, noise) for g, v in fitness.items()}
        land = LocalLandscape(k=k, labels=labels, fitness=fitness, background_id=background_id)
        if classify_structure(mobius_coefficients(land)).name == sketch:
            return land
    raise ValueError(f"could not synthesize class {sketch!r} at k={k} with noise={noise}")
