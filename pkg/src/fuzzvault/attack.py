"""Guessing attack against protected records and exact template recovery.

The adversary holds only the protected record (helper string + hash tag)
and a database of binary templates harvested from unrelated identities.
Each database entry is tried through the commitment's own recovery path;
whenever the tag verifies, the enrolled template is recovered bit-exactly.
Nothing here ever touches the enrolled template or the victims' feature
vectors: the interface admits only records and the public database.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import commitment as cm
from .binarize import ProjectionMatrix, binarize_batch, template_to_hex
from .embedder import LabeledEmbeddings
from .stats import wilson_interval


class AttackError(RuntimeError):
    pass


@dataclass(frozen=True)
class GuessDatabase:
    """Binary templates of auxiliary identities, one per identity."""

    labels: list[str]
    templates: np.ndarray = field(repr=False)  # (num_entries, n_bits)
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.labels)


def build_db(embeddings: LabeledEmbeddings, proj: ProjectionMatrix,
             provenance: str = "") -> GuessDatabase:
    """Binarize one embedding per identity (first sample wins), in input order."""
    if len(embeddings) == 0:
        return GuessDatabase(labels=[], templates=np.zeros((0, proj.n_out), dtype=np.uint8),
                             provenance=provenance)
    if embeddings.vectors.shape[1] != proj.d_in:
        raise ValueError("embedding dimension does not match the projection")
    seen: set[str] = set()
    rows: list[int] = []
    labels: list[str] = []
    for i, ident in enumerate(embeddings.identities):
        if ident in seen:
            continue
        seen.add(ident)
        rows.append(i)
        labels.append(ident)
    templates = binarize_batch(embeddings.vectors[rows], proj)
    return GuessDatabase(labels=labels, templates=templates, provenance=provenance)


@dataclass(frozen=True)
class GuessOutcome:
    user_id: str
    unlocked: bool
    guesses_tried: int
    hit_count: int
    winning_index: int | None = None
    winning_label: str | None = None
    recovered_template: np.ndarray | None = field(default=None, repr=False)


def guess_account(record: cm.ProtectedRecord, db: GuessDatabase,
                  stop_at_first: bool = True, user_id: str = "",
                  chunk_size: int = 1024) -> GuessOutcome:
    """Try database templates in index order against one protected record.

    With stop_at_first the scan halts at the lowest-index hit; otherwise
    every entry is decoded and counted.  Exhausting the database is not an
    error, just an un-unlocked outcome.
    """
    backend = cm.backend_for(record.code_id)
    if len(db) and db.templates.shape[1] != backend.n_bits:
        raise ValueError("database template length does not match the record's code")
    hit_count = 0
    tried = 0
    winning_index = None
    recovered = None
    for start in range(0, len(db), chunk_size):
        block = db.templates[start:start + chunk_size]
        accepted, block_recovered, _ = backend.recover_batch(record, block)
        hits = np.flatnonzero(accepted)
        if hits.size and winning_index is None:
            winning_index = start + int(hits[0])
            recovered = block_recovered[hits[0]].copy()
        hit_count += int(hits.size)
        tried = start + block.shape[0]
        if stop_at_first and winning_index is not None:
            tried = winning_index + 1
            hit_count = 1
            break
    return GuessOutcome(
        user_id=user_id,
        unlocked=winning_index is not None,
        guesses_tried=tried,
        hit_count=hit_count,
        winning_index=winning_index,
        winning_label=db.labels[winning_index] if winning_index is not None else None,
        recovered_template=recovered,
    )


def recover_template(record: cm.ProtectedRecord, b_prime: np.ndarray) -> np.ndarray:
    """The enrolled template, from any template that unlocks the record.

    Raises AttackError when b_prime does not unlock (decode failure or tag
    mismatch): a wrong template is never returned silently.
    """
    backend = cm.backend_for(record.code_id)
    result = backend.recover(record, np.asarray(b_prime, dtype=np.uint8))
    if not result.accepted:
        raise AttackError("template does not unlock this record")
    return result.template


@dataclass
class AttackReport:
    """Per-account outcomes plus the aggregate statistics of one attack run."""

    outcomes: list[GuessOutcome]
    db_size: int
    provenance: str = ""

    @property
    def unlock_rate(self) -> float:
        if not self.outcomes:
            return 0.0
        return sum(o.unlocked for o in self.outcomes) / len(self.outcomes)

    @property
    def hit_probabilities(self) -> np.ndarray:
        if self.db_size == 0:
            return np.zeros(len(self.outcomes))
        return np.array([o.hit_count / self.db_size for o in self.outcomes])

    @property
    def mean_hit_probability(self) -> float:
        ps = self.hit_probabilities
        return float(ps.mean()) if ps.size else 0.0

    def predicted_unlock_rate(self) -> float:
        """1 - (1 - p_i)^|DB| averaged over accounts (independence model)."""
        if not self.outcomes:
            return 0.0
        ps = self.hit_probabilities
        return float(np.mean(1.0 - (1.0 - ps) ** self.db_size))

    def histogram(self, bin_width: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
        ps = self.hit_probabilities
        top = max(float(ps.max()) if ps.size else 0.0, bin_width)
        edges = np.arange(0.0, top + bin_width, bin_width)
        counts, edges = np.histogram(ps, bins=edges)
        return counts, edges

    def to_json_dict(self) -> dict:
        counts, edges = self.histogram()
        return {
            "db_size": self.db_size,
            "provenance": self.provenance,
            "aggregates": {
                "num_accounts": len(self.outcomes),
                "unlocked_accounts": int(sum(o.unlocked for o in self.outcomes)),
                "unlock_rate": self.unlock_rate,
                "unlock_rate_ci": list(wilson_interval(
                    sum(o.unlocked for o in self.outcomes), max(len(self.outcomes), 1))),
                "mean_hit_probability": self.mean_hit_probability,
                "predicted_unlock_rate": self.predicted_unlock_rate(),
            },
            "histogram": {
                "bin_width": 1e-3,
                "counts": counts.tolist(),
                "edges": edges.tolist(),
            },
            "accounts": [
                {
                    "user_id": o.user_id,
                    "unlocked": o.unlocked,
                    "guesses_tried": o.guesses_tried,
                    "hit_count": o.hit_count,
                    "winning_index": o.winning_index,
                    "winning_label": o.winning_label,
                    "recovered_template": (template_to_hex(o.recovered_template)
                                           if o.recovered_template is not None else None),
                }
                for o in self.outcomes
            ],
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user_id", "unlocked", "guesses_tried", "hit_count",
                             "winning_index", "winning_label", "recovered_template"])
            for o in self.outcomes:
                writer.writerow([
                    o.user_id, int(o.unlocked), o.guesses_tried, o.hit_count,
                    o.winning_index if o.winning_index is not None else "",
                    o.winning_label or "",
                    template_to_hex(o.recovered_template) if o.recovered_template is not None else "",
                ])

    def write_histogram_csv(self, path, bin_width: float = 1e-3) -> None:
        counts, edges = self.histogram(bin_width)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                writer.writerow([f"{lo:.6f}", f"{hi:.6f}", int(c)])


def run_guessing_attack(records: dict[str, cm.ProtectedRecord], db: GuessDatabase,
                        stop_at_first: bool = False, provenance: str = "") -> AttackReport:
    """Attack every account; hit counting needs the full scan, so the default
    decodes all entries per account."""
    outcomes = [
        guess_account(record, db, stop_at_first=stop_at_first, user_id=user_id)
        for user_id, record in records.items()
    ]
    return AttackReport(outcomes=outcomes, db_size=len(db), provenance=provenance)


def unprotected_hit_counts(enrolled_vectors: np.ndarray, db_vectors: np.ndarray,
                           tau: float) -> np.ndarray:
    """Per-account counts of database feature vectors scoring >= tau.

    The unprotected analogue of the guessing attack: no commitment in the
    way, acceptance is plain cosine thresholding.
    """
    enrolled = np.asarray(enrolled_vectors, dtype=np.float64)
    dbv = np.asarray(db_vectors, dtype=np.float64)
    enrolled = enrolled / np.linalg.norm(enrolled, axis=1, keepdims=True)
    dbv = dbv / np.linalg.norm(dbv, axis=1, keepdims=True)
    scores = enrolled @ dbv.T
    return (scores >= tau).sum(axis=1)
