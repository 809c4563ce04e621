"""Random phylogenies, Jukes-Cantor sequence evolution, and the homoplasy task.

The task generator builds a rooted binary tree, evolves a nucleotide alignment
down it, and (for positive instances) overwrites one contiguous column block
with a shared motif for a set of taxa whose pairwise topological distance is
at least 3 -- i.e. taxa too far apart for the shared block to be explained by
recent common ancestry.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .core import SeededRng, TaskInstance, YesNoTaxa, make_instance, new_rng

NUCLEOTIDES = "ACGT"

BRANCH_LENGTH_RANGE = (0.1, 1.0)
MIN_PAIRWISE_DISTANCE = 3
REJECTION_CAP = 10_000


class NewickError(ValueError):
    """Malformed Newick text."""


class ParameterError(ValueError):
    """Requested parameters cannot be satisfied (e.g. taxa spread infeasible)."""


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------


@dataclass
class PhyloTree:
    """Rooted binary tree stored as flat parent/children arrays.

    Node 0 is the root.  `length[i]` is the branch length of the edge above
    node `i` (0.0 for the root unless parsing kept a fragment's parent edge).
    """

    parent: list[int]
    children: list[list[int]]
    length: list[float]
    label: list[str | None]

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    def leaves(self) -> list[int]:
        return [i for i, ch in enumerate(self.children) if not ch]

    def leaf_labels(self) -> list[str]:
        return [self.label[i] for i in self.leaves()]

    def node_of(self, label: str) -> int:
        for i, lab in enumerate(self.label):
            if lab == label:
                return i
        raise KeyError(f"unknown leaf label {label!r}")

    def leaf_order(self) -> list[str]:
        """Leaf labels in serialization (left-to-right) order."""
        order: list[str] = []
        stack = [0]
        while stack:
            node = stack.pop()
            if not self.children[node]:
                order.append(self.label[node])
            else:
                stack.extend(reversed(self.children[node]))
        return order


def sample_tree(n_leaves: int, rng: SeededRng) -> PhyloTree:
    """Grow a random binary topology by uniform edge attachment.

    Starts from a cherry and repeatedly splits a uniformly chosen edge with a
    new internal node carrying the next leaf.  Branch lengths are then drawn
    i.i.d. uniform on [0.1, 1.0].
    """
    if n_leaves < 2:
        raise ValueError("need at least 2 leaves")
    tree = PhyloTree(parent=[-1, 0, 0], children=[[1, 2], [], []], length=[0.0, 0.0, 0.0], label=[None, "0", "1"])
    edges = [1, 2]  # non-root nodes, i.e. edges (parent[v], v)
    for leaf_idx in range(2, n_leaves):
        v = edges[rng.randint(0, len(edges) - 1)]
        u = tree.parent[v]
        w = tree.n_nodes
        tree.parent.append(u)
        tree.children.append([v])
        tree.length.append(0.0)
        tree.label.append(None)
        tree.children[u][tree.children[u].index(v)] = w
        tree.parent[v] = w
        leaf = tree.n_nodes
        tree.parent.append(w)
        tree.children.append([])
        tree.length.append(0.0)
        tree.label.append(str(leaf_idx))
        tree.children[w].append(leaf)
        edges.extend([w, leaf])
    lo, hi = BRANCH_LENGTH_RANGE
    for v in range(1, tree.n_nodes):
        tree.length[v] = rng.uniform(lo, hi)
    return tree


def to_newick(tree: PhyloTree) -> str:
    """Serialize with 4-decimal branch lengths and a trailing semicolon."""
    rendered: dict[int, str] = {}
    stack = [(0, False)]
    while stack:
        node, expanded = stack.pop()
        if not tree.children[node]:
            rendered[node] = f"{tree.label[node]}:{tree.length[node]:.4f}"
            continue
        if not expanded:
            stack.append((node, True))
            stack.extend((c, False) for c in tree.children[node])
            continue
        inner = ",".join(rendered[c] for c in tree.children[node])
        if node == 0:
            rendered[node] = f"({inner});"
        else:
            rendered[node] = f"({inner}):{tree.length[node]:.4f}"
    return rendered[0]


_LABEL_RE = re.compile(r"[^(),:;]+")


def parse_newick(text: str) -> PhyloTree:
    """Parse the binary subset of Newick produced by :func:`to_newick`.

    Also accepts a rootless fragment such as ``(A:1,B:2):0.5``, keeping the
    trailing value as the root's parent-edge length.
    """
    text = text.strip()
    if text.endswith(";"):
        text = text[:-1]
    if not text:
        raise NewickError("empty tree text")

    tree = PhyloTree(parent=[], children=[], length=[], label=[])
    seen_labels: set[str] = set()
    stack: list[int] = []  # open internal nodes
    pos = 0
    n = len(text)
    _LEN_RE = re.compile(r"-?\d+(\.\d+)?([eE][+-]?\d+)?")

    def new_node(parent: int) -> int:
        if parent < 0 and tree.n_nodes:
            raise NewickError(f"trailing characters at position {pos}")
        node = tree.n_nodes
        tree.parent.append(parent)
        tree.children.append([])
        tree.length.append(0.0)
        tree.label.append(None)
        if parent >= 0:
            tree.children[parent].append(node)
        return node

    def read_length(node: int, required: bool) -> None:
        nonlocal pos
        if pos < n and text[pos] == ":":
            m = _LEN_RE.match(text, pos + 1)
            if not m:
                raise NewickError(f"expected branch length at position {pos + 1}")
            tree.length[node] = float(m.group(0))
            pos = m.end()
        elif required:
            raise NewickError(f"missing branch length at position {pos}")
        if pos < n and text[pos] not in ",)":
            raise NewickError(f"unexpected character {text[pos]!r} at position {pos}")

    while pos < n:
        c = text[pos]
        if c == "(":
            stack.append(new_node(stack[-1] if stack else -1))
            pos += 1
        elif c == ",":
            if not stack:
                raise NewickError("comma outside parentheses")
            pos += 1
        elif c == ")":
            if not stack:
                raise NewickError("unbalanced parentheses")
            node = stack.pop()
            if len(tree.children[node]) != 2:
                raise NewickError(f"non-binary node with {len(tree.children[node])} children")
            pos += 1
            read_length(node, required=False)
        else:
            m = _LABEL_RE.match(text, pos)
            if not m:
                raise NewickError(f"expected a label at position {pos}")
            node = new_node(stack[-1] if stack else -1)
            label = m.group(0).strip()
            if label in seen_labels:
                raise NewickError(f"duplicate leaf label {label!r}")
            seen_labels.add(label)
            tree.label[node] = label
            pos = m.end()
            read_length(node, required=bool(stack))
    if stack:
        raise NewickError("unbalanced parentheses")
    return tree


def topo_distance(tree: PhyloTree, a: str, b: str) -> int:
    """Edge count on the unique path between two leaves."""
    na, nb = tree.node_of(a), tree.node_of(b)
    if na == nb:
        return 0
    depth_a: dict[int, int] = {}
    node, d = na, 0
    while node != -1:
        depth_a[node] = d
        node = tree.parent[node]
        d += 1
    node, d = nb, 0
    while node not in depth_a:
        node = tree.parent[node]
        d += 1
    return depth_a[node] + d


# ---------------------------------------------------------------------------
# Sequence evolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JukesCantor:
    """Jukes-Cantor substitution model; `rate` scales branch lengths."""

    rate: float = 1.0

    def p_change(self, t: float) -> float:
        return 0.75 * (1.0 - math.exp(-4.0 * self.rate * t / 3.0))


@dataclass
class Alignment:
    rows: dict[str, str]
    length: int

    def as_fasta(self, order: Sequence[str]) -> str:
        return "\n".join(f">{label}\n{self.rows[label]}" for label in order)


def evolve_alignment(
    tree: PhyloTree, L_seq: int, rate_model: JukesCantor, rng: SeededRng
) -> Alignment:
    """Evolve an i.i.d.-uniform root sequence down every branch under JC."""
    if L_seq < 1:
        raise ValueError("L_seq must be positive")
    gen = rng.np
    seqs: dict[int, np.ndarray] = {0: gen.integers(0, 4, size=L_seq, dtype=np.uint8)}
    rows: dict[str, str] = {}
    lut = np.frombuffer(NUCLEOTIDES.encode(), dtype=np.uint8)
    stack = [0]
    while stack:
        node = stack.pop()
        seq = seqs.pop(node)
        if not tree.children[node]:
            rows[tree.label[node]] = lut[seq].tobytes().decode()
            continue
        for child in tree.children[node]:
            p = rate_model.p_change(tree.length[child])
            mask = gen.random(L_seq) < p
            child_seq = seq.copy()
            k = int(mask.sum())
            if k:
                # Conditional on a change, the new base is uniform over the
                # other three.
                child_seq[mask] = (seq[mask] + gen.integers(1, 4, size=k, dtype=np.uint8)) % 4
            seqs[child] = child_seq
            stack.append(child)
    return Alignment(rows=rows, length=L_seq)


# ---------------------------------------------------------------------------
# B1 generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HomoplasyPlan:
    n_ht: int
    motif: str
    start_col: int  # 1-based
    taxa: frozenset[str]


B1_PROMPT = """Homoplasy refers to structured convergence:
pairs or groups of distantly related taxa that repeatedly share the same nucleotide motifs
across many independent alignment columns more often than expected, while other taxa
with similar overall sequences do not share those nucleotide motifs as consistently.

Your job is to examine the entire alignment and provided tree and decide whether such structured
homoplasy is likely to be present and which taxa are involved.

Alignment (FASTA; positions indexed from 1):
{fasta}

Tree (Newick):
{newick}

Return your answer as: Yes/No and if Yes, list the taxa involved."""


def _choose_spread_taxa(
    tree: PhyloTree, n_ht: int, rng: SeededRng, min_distance: int, cap: int
) -> tuple[list[str], float]:
    labels = tree.leaf_labels()
    if n_ht > len(labels):
        raise ParameterError(f"n_ht={n_ht} exceeds n_leaves={len(labels)}")
    for _ in range(cap):
        taxa = rng.sample(labels, n_ht)
        dists = [
            topo_distance(tree, taxa[i], taxa[j])
            for i in range(len(taxa))
            for j in range(i + 1, len(taxa))
        ]
        if all(d >= min_distance for d in dists):
            avg = sum(dists) / len(dists) if dists else 0.0
            return taxa, avg
    raise ParameterError(
        f"could not place {n_ht} taxa with pairwise distance >= {min_distance} "
        f"after {cap} draws"
    )


def gen_b1(
    n_leaves: int,
    L_seq: int,
    L_motif: int,
    n_ht: int,
    rng: SeededRng | int,
    *,
    negative_rate: float = 0.5,
    label_prefix: str = "",
    rate_model: JukesCantor = JukesCantor(),
) -> TaskInstance:
    """One homoplasy-detection instance; a coin decides positive vs negative."""
    if isinstance(rng, int):
        rng = new_rng(rng)
    if L_motif > L_seq:
        raise ParameterError("L_motif cannot exceed L_seq")
    if n_ht < 1:
        raise ParameterError("n_ht must be positive")

    tree = sample_tree(n_leaves, rng.split("tree"))
    if label_prefix:
        for i, lab in enumerate(tree.label):
            if lab is not None:
                tree.label[i] = label_prefix + lab
    aln = evolve_alignment(tree, L_seq, rate_model, rng.split("seq"))
    positive = rng.split("polarity").random() >= negative_rate

    gen_params: dict[str, Any] = {
        "n_leaves": n_leaves,
        "l_seq": L_seq,
        "l_motif": L_motif,
        "n_ht": n_ht,
        "positive": positive,
        "negative_rate": negative_rate,
        "label_prefix": label_prefix,
    }
    oc_params = {"motif_ratio": L_motif / L_seq}

    if positive:
        taxa, avg_dist = _choose_spread_taxa(
            tree, n_ht, rng.split("taxa"), MIN_PAIRWISE_DISTANCE, REJECTION_CAP
        )
        mrng = rng.split("motif")
        motif = "".join(NUCLEOTIDES[mrng.randint(0, 3)] for _ in range(L_motif))
        start_col = mrng.randint(1, L_seq - L_motif + 1)
        for t in taxa:
            row = aln.rows[t]
            aln.rows[t] = row[: start_col - 1] + motif + row[start_col - 1 + L_motif :]
        answer = YesNoTaxa(flag=True, taxa=frozenset(taxa))
        gen_params.update(
            {"taxa": sorted(taxa), "motif": motif, "start_col": start_col}
        )
        oc_params["distance_avg"] = avg_dist
    else:
        answer = YesNoTaxa(flag=False, taxa=frozenset())

    newick = to_newick(tree)
    gen_params["newick"] = newick
    prompt = B1_PROMPT.format(fasta=aln.as_fasta(tree.leaf_order()), newick=newick)
    oc_params["prompt_len"] = float(len(prompt))

    return make_instance(
        "B1",
        rc=n_ht,
        oc_params=oc_params,
        prompt=prompt,
        answer=answer,
        gen_params=gen_params,
        seed=rng.seed,
    )


# Parameter rows from the one-at-a-time sweeps around the baseline
# (50 leaves, 1000 sites, 50-column motif, 2 homoplastic taxa).  Counts put
# the RC sweep at 125 questions per level and every other row at 100, for
# 2,600 questions total.
B1_BASELINE = {"n_leaves": 50, "l_seq": 1000, "l_motif": 50, "n_ht": 2}
B1_SWEEPS = {
    "n_ht": ((2, 3, 4, 5, 10, 15, 20, 25), 125),
    "n_leaves": ((20, 30, 40, 100, 1000), 100),
    "l_seq": ((200, 300, 500, 1000, 2000), 100),
    "l_motif": ((3, 4, 5, 30, 40, 50), 100),
}


def b1_schedule() -> list[dict[str, int]]:
    """Default sweep schedule; rows carry their own question counts."""
    rows = []
    for param, (values, count) in B1_SWEEPS.items():
        for value in values:
            row = dict(B1_BASELINE)
            row[param] = value
            row["count"] = count
            rows.append(row)
    return rows


def gen_b1_sweep(
    schedule: Sequence[Mapping[str, int]] | None,
    seed: int,
    *,
    negative_rate: float = 0.5,
) -> Iterator[TaskInstance]:
    """Stream instances for every row of a schedule (default: 2,600 total)."""
    rows = list(schedule) if schedule is not None else b1_schedule()
    root = new_rng(seed)
    for r, row in enumerate(rows):
        for i in range(int(row["count"])):
            child = root.child_seed(f"b1/{r}/{i}")
            yield gen_b1(
                int(row["n_leaves"]),
                int(row["l_seq"]),
                int(row["l_motif"]),
                int(row["n_ht"]),
                child,
                negative_rate=negative_rate,
            )


# ---------------------------------------------------------------------------
# Scoring and prompt introspection
# ---------------------------------------------------------------------------

_YESNO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+")


def b1_leaf_labels(instance: TaskInstance) -> list[str]:
    prefix = instance.gen_params.get("label_prefix", "")
    return [prefix + str(i) for i in range(int(instance.gen_params["n_leaves"]))]


def parse_b1_response(text: str, valid_labels: Iterable[str]) -> tuple[bool, frozenset[str]] | None:
    """Leading Yes/No plus any taxon tokens drawn from the leaf-label alphabet."""
    m = _YESNO_RE.search(text)
    if not m:
        return None
    flag = m.group(1).lower() == "yes"
    if not flag:
        return False, frozenset()
    valid = set(valid_labels)
    taxa = frozenset(t for t in _TOKEN_RE.findall(text[m.end():]) if t in valid)
    return True, taxa


def score_b1(instance: TaskInstance, response_text: str) -> dict[str, Any]:
    """Exact-set scoring: flag must match and, when Yes, taxa must match exactly."""
    truth = instance.answer
    if not isinstance(truth, YesNoTaxa):
        raise ValueError("instance does not carry a Yes/No-taxa answer")
    parsed = parse_b1_response(response_text, b1_leaf_labels(instance))
    if parsed is None:
        return {"score": 0.0, "outcome": "unparseable", "parsed": None}
    flag, taxa = parsed
    correct = flag == truth.flag and (not flag or taxa == truth.taxa)
    return {
        "score": 1.0 if correct else 0.0,
        "outcome": "correct" if correct else "incorrect",
        "parsed": {"flag": flag, "taxa": sorted(taxa)},
    }


def extract_fasta(prompt: str) -> dict[str, str]:
    """Re-parse the FASTA block embedded in a B1 prompt."""
    block = prompt.split("Alignment (FASTA; positions indexed from 1):\n", 1)[1]
    block = block.split("\n\nTree (Newick):", 1)[0]
    rows: dict[str, str] = {}
    label = None
    for line in block.splitlines():
        if line.startswith(">"):
            label = line[1:].strip()
            rows[label] = ""
        elif label is not None:
            rows[label] += line.strip()
    return rows


def extract_newick(prompt: str) -> str:
    block = prompt.split("Tree (Newick):\n", 1)[1]
    return block.split("\n\nReturn your answer", 1)[0].strip()
