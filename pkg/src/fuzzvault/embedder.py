"""Synthetic stand-in for deep feature extractors, plus threshold calibration.

A population is a set of latent identity vectors on the unit sphere; an
extractor is a fixed random linear map from latent space to embedding space.
Sampling an "image" of an identity draws two seeded noise components:

* image noise, seeded by (population, identity, sample seed) only, so the
  same image presented to two different extractors shares its non-identity
  content, and
* extractor noise, additionally seeded by the extractor's name, modelling
  extraction artifacts that do not transfer between systems.

Both scale with the extractor's noise_sigma; their split is IMAGE_NOISE_SHARE.
Real precomputed embeddings can be substituted for the synthetic ones via
load_embeddings / save_embeddings (CSV, header identity,sample,v0..v{d-1}).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeds import derive_seed

# Fraction of the squared noise budget carried by the cross-extractor image
# component; the remainder is extractor-specific.
IMAGE_NOISE_SHARE = 0.5


@dataclass(frozen=True)
class Population:
    """Latent identity vectors, one unit-norm row per identity."""

    identities: np.ndarray = field(repr=False)  # (num_identities, d_latent)
    seed: int

    @property
    def num_identities(self) -> int:
        return self.identities.shape[0]

    @property
    def d_latent(self) -> int:
        return self.identities.shape[1]


@dataclass(frozen=True)
class Extractor:
    """A named random linear feature extractor with per-sample noise."""

    name: str
    map_matrix: np.ndarray = field(repr=False)  # (d_latent, d)
    noise_sigma: float = 0.35

    @property
    def d(self) -> int:
        return self.map_matrix.shape[1]


def gen_population(seed: int, num_identities: int, d_latent: int,
                   num_clusters: int = 0, cluster_spread: float = 0.45) -> Population:
    """Identities i.i.d. uniform on the unit sphere (normalized Gaussians).

    With num_clusters > 0 the identities are instead drawn around that many
    random cluster centers, giving the population "common faces"; the
    default is the uniform model.
    """
    if num_identities < 2:
        raise ValueError("need at least two identities")
    rng = np.random.default_rng(seed)
    if num_clusters > 0:
        centers = rng.standard_normal((num_clusters, d_latent))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        assignment = rng.integers(0, num_clusters, size=num_identities)
        raw = centers[assignment] + cluster_spread * rng.standard_normal((num_identities, d_latent))
    else:
        raw = rng.standard_normal((num_identities, d_latent))
    identities = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    return Population(identities=identities, seed=seed)


def make_extractor(name: str, seed: int, d_latent: int, d: int,
                   noise_sigma: float = 0.35) -> Extractor:
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((d_latent, d))
    if np.linalg.matrix_rank(matrix) < min(d_latent, d):
        raise ValueError("extractor map matrix is rank deficient")
    return Extractor(name=name, map_matrix=matrix, noise_sigma=noise_sigma)


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return v / norm


def embed_latent(latent: np.ndarray, extractor: Extractor, image_seed: int) -> np.ndarray:
    """Embed an arbitrary latent ("image"), applying both noise components."""
    latent = np.asarray(latent, dtype=np.float64)
    d_latent = latent.shape[0]
    sigma = extractor.noise_sigma
    sigma_img = sigma * np.sqrt(IMAGE_NOISE_SHARE)
    sigma_ext = sigma * np.sqrt(1.0 - IMAGE_NOISE_SHARE)
    img_rng = np.random.default_rng(image_seed)
    h = img_rng.standard_normal(d_latent) / np.sqrt(d_latent)
    u = _unit(_unit(latent) + sigma_img * h)
    y = _unit(u @ extractor.map_matrix)
    ext_rng = np.random.default_rng(derive_seed(image_seed, "extractor-noise", extractor.name))
    e = ext_rng.standard_normal(extractor.d) / np.sqrt(extractor.d)
    return _unit(y + sigma_ext * e)


def sample_embedding(pop: Population, identity_index: int, extractor: Extractor,
                     sample_seed: int) -> np.ndarray:
    """One sampled embedding ("image" of the identity, seen by the extractor)."""
    if not 0 <= identity_index < pop.num_identities:
        raise IndexError(f"identity index {identity_index} out of range")
    image_seed = derive_seed(pop.seed, "image", identity_index, sample_seed)
    return embed_latent(pop.identities[identity_index], extractor, image_seed)


def sample_embeddings(pop: Population, identity_indices, extractor: Extractor,
                      sample_seeds) -> np.ndarray:
    """Vectorized convenience over (identity, seed) pairs; rows are unit norm."""
    out = np.empty((len(identity_indices), extractor.d))
    for row, (idx, s) in enumerate(zip(identity_indices, sample_seeds)):
        out[row] = sample_embedding(pop, int(idx), extractor, int(s))
    return out


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("dimension mismatch")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine undefined for zero vectors")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


@dataclass(frozen=True)
class Thresholds:
    """Verification thresholds at the two working FAR points."""

    cosine_far1: float
    cosine_far01: float
    hamming_far1: int
    hamming_far01: int

    def cosine_at(self, far: float) -> float:
        return self.cosine_far1 if far >= 0.01 else self.cosine_far01

    def hamming_at(self, far: float) -> int:
        return self.hamming_far1 if far >= 0.01 else self.hamming_far01

    def to_json_dict(self) -> dict:
        return {
            "cosine_far1": self.cosine_far1,
            "cosine_far01": self.cosine_far01,
            "hamming_far1": self.hamming_far1,
            "hamming_far01": self.hamming_far01,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Thresholds":
        return cls(
            cosine_far1=float(obj["cosine_far1"]),
            cosine_far01=float(obj["cosine_far01"]),
            hamming_far1=int(obj["hamming_far1"]),
            hamming_far01=int(obj["hamming_far01"]),
        )


def calibrate_threshold(genuine_scores, impostor_scores, target_far: float,
                        mode: str = "similarity"):
    """Smallest similarity (or largest distance) threshold meeting the FAR target.

    For similarity scores: the smallest tau such that the fraction of
    impostor scores >= tau is at most target_far.  For distances the
    inequality mirrors: the largest tau such that the fraction <= tau stays
    within target.  Candidate thresholds are the observed impostor scores
    themselves.
    """
    impostor = np.asarray(impostor_scores, dtype=np.float64)
    if impostor.size == 0:
        raise ValueError("impostor scores must be nonempty")
    if not 0.0 < target_far < 1.0:
        raise ValueError("target_far must lie strictly between 0 and 1")
    if impostor.size * target_far < 1.0:
        raise ValueError(
            f"target FAR {target_far} unreachable with {impostor.size} impostor "
            f"samples; need at least {int(np.ceil(1.0 / target_far))}"
        )
    candidates = np.unique(impostor)
    if mode == "similarity":
        for tau in candidates:
            if np.mean(impostor >= tau) <= target_far:
                return float(tau)
        return float(np.nextafter(candidates[-1], np.inf))
    if mode == "distance":
        for tau in candidates[::-1]:
            if np.mean(impostor <= tau) <= target_far:
                return float(tau)
        return float(candidates[0] - 1)
    raise ValueError(f"unknown mode {mode!r}")


def tpr_at(genuine_scores, tau: float, mode: str = "similarity") -> float:
    genuine = np.asarray(genuine_scores, dtype=np.float64)
    if genuine.size == 0:
        raise ValueError("genuine scores must be nonempty")
    if mode == "similarity":
        return float(np.mean(genuine >= tau))
    return float(np.mean(genuine <= tau))


@dataclass(frozen=True)
class LabeledEmbeddings:
    """Identity/sample labels alongside unit-normalized embedding rows."""

    identities: list[str]
    samples: list[str]
    vectors: np.ndarray  # (num, d)

    def __len__(self) -> int:
        return len(self.identities)


def save_embeddings(path, collection: LabeledEmbeddings) -> None:
    d = collection.vectors.shape[1] if len(collection) else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["identity", "sample", *[f"v{i}" for i in range(d)]])
        for ident, samp, vec in zip(collection.identities, collection.samples, collection.vectors):
            writer.writerow([ident, samp, *[f"{x:.17g}" for x in vec]])


def load_embeddings(path) -> LabeledEmbeddings:
    """Parse an embeddings CSV; vectors are L2-normalized on load."""
    path = Path(path)
    identities: list[str] = []
    samples: list[str] = []
    rows: list[list[float]] = []
    d = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or (lineno == 1 and row[0] == "identity"):
                continue
            if len(row) < 3:
                raise ValueError(f"{path}:{lineno}: expected identity,sample,v0.. columns")
            if d is None:
                d = len(row) - 2
            elif len(row) - 2 != d:
                raise ValueError(
                    f"{path}:{lineno}: vector has {len(row) - 2} components, expected {d}"
                )
            try:
                vec = [float(x) for x in row[2:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed number ({exc})") from None
            identities.append(row[0])
            samples.append(row[1])
            rows.append(vec)
    if not rows:
        return LabeledEmbeddings([], [], np.zeros((0, 0)))
    vectors = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms[:, 0] == 0)[0])
        raise ValueError(f"{path}: zero vector for identity {identities[bad]!r}")
    return LabeledEmbeddings(identities, samples, vectors / norms)


def thresholds_to_json(path, per_extractor: dict[str, Thresholds], extra: dict | None = None):
    obj = {name: th.to_json_dict() for name, th in per_extractor.items()}
    if extra:
        obj["_calibration"] = extra
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def thresholds_from_json(path) -> dict[str, Thresholds]:
    obj = json.loads(Path(path).read_text())
    return {name: Thresholds.from_json_dict(val)
            for name, val in obj.items() if not name.startswith("_")}
