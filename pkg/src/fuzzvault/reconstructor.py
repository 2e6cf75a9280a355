"""Identity reconstruction from recovered feature vectors, and the
four-scenario transfer evaluation.

A ridge-regression inverse map plays the role of the image reconstructor:
it maps an (approximated) embedding back to the latent identity space, the
synthetic analogue of rebuilding a facial image.  The reconstructed latent
is then re-embedded -- under the attacked system's extractor or a different
one, against the original enrollment image or a different one -- and scored
against the target system's verification threshold.  Scenario names cross
Same/Different Image with Same/Different Feature extraction: SISFE, DISFE,
SIDFE, DIDFE.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedder import Extractor, Population, Thresholds, embed_latent, sample_embedding
from .seeds import derive_seed

SCENARIOS = ("SISFE", "DISFE", "SIDFE", "DIDFE")


@dataclass(frozen=True)
class InverseMap:
    """Affine ridge-regression estimate of the latent from an embedding."""

    matrix: np.ndarray = field(repr=False)  # (d_latent, d)
    bias: np.ndarray = field(repr=False)  # (d_latent,)
    ridge_lambda: float = 0.0
    fit_residual: float = 0.0  # mean squared training residual per coordinate


def fit_inverse_map(latents: np.ndarray, embeddings: np.ndarray,
                    ridge_lambda: float = 1e-3) -> InverseMap:
    """Least squares for latent ~ R @ embedding + r0, ridge penalty on R only.

    Needs at least d_latent pairs; with ridge_lambda = 0 a rank-deficient
    design is an error rather than a silently pseudo-inverted one.
    """
    latents = np.asarray(latents, dtype=np.float64)
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if latents.shape[0] != embeddings.shape[0]:
        raise ValueError("latent/embedding counts differ")
    num, d = embeddings.shape
    d_latent = latents.shape[1]
    if num < d_latent:
        raise ValueError(f"need at least d_latent={d_latent} pairs, got {num}")
    design = np.hstack([embeddings, np.ones((num, 1))])
    if ridge_lambda == 0.0 and np.linalg.matrix_rank(design) < d + 1:
        raise ValueError("design matrix is rank deficient; use a positive ridge_lambda")
    gram = design.T @ design
    reg = np.eye(d + 1) * ridge_lambda
    reg[d, d] = 0.0  # leave the bias unpenalized
    theta = np.linalg.solve(gram + reg, design.T @ latents)
    residual = float(np.mean((design @ theta - latents) ** 2))
    return InverseMap(matrix=theta[:d].T, bias=theta[d], ridge_lambda=ridge_lambda,
                      fit_residual=residual)


def reconstruct(inv_map: InverseMap, v_hat: np.ndarray) -> np.ndarray:
    """Unit-norm reconstructed latent(s) for approximated embedding(s)."""
    v = np.atleast_2d(np.asarray(v_hat, dtype=np.float64))
    x = v @ inv_map.matrix.T + inv_map.bias
    x = x / np.linalg.norm(x, axis=1, keepdims=True)
    return x if np.asarray(v_hat).ndim == 2 else x[0]


@dataclass(frozen=True)
class ScenarioResult:
    scenario: str
    far_target: float
    success_rate: float
    success_rate_full_attack: float
    n_accounts: int

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if not (0.0 <= self.success_rate <= 1.0 and
                0.0 <= self.success_rate_full_attack <= self.success_rate + 1e-12):
            raise ValueError("rates out of range")


def evaluate_scenarios(pop: Population, user_indices, enroll_seeds,
                       extractor_a: Extractor, extractor_b: Extractor,
                       thresholds: dict[str, Thresholds],
                       recovered_latents: dict[int, np.ndarray],
                       unlock_rate: float, far_targets, master_seed: int,
                       alt_enroll_label: str = "enroll-alt") -> list[ScenarioResult]:
    """Score reconstructed latents against the four transfer scenarios.

    recovered_latents maps a user's population index to the latent the
    attack reconstructed for that account (only unlocked accounts appear).
    "Same image" scenarios verify against the target system's enrollment
    sample; "different image" ones against a fresh sample of the same
    identity.  "Different feature extraction" swaps in extractor_b with its
    own calibrated thresholds.  Verification is cosine similarity in the
    evaluated system's feature space.  Raw rates are over attacked (unlocked)
    accounts; full-attack rates fold in the guessing stage's unlock rate.
    """
    user_indices = list(user_indices)
    enroll_by_user = dict(zip(user_indices, enroll_seeds))
    results = []
    for scenario in SCENARIOS:
        extractor = extractor_a if scenario in ("SISFE", "DISFE") else extractor_b
        same_image = scenario in ("SISFE", "SIDFE")
        taus = thresholds[extractor.name]
        scores = []
        for idx, latent in recovered_latents.items():
            probe_seed = derive_seed(master_seed, "scenario-probe", scenario, idx)
            v_probe = embed_latent(latent, extractor, probe_seed)
            if same_image:
                enroll_seed = enroll_by_user[idx]
            else:
                enroll_seed = derive_seed(master_seed, alt_enroll_label, idx)
            v_enrolled = sample_embedding(pop, idx, extractor, enroll_seed)
            scores.append(float(v_probe @ v_enrolled))
        scores = np.asarray(scores)
        for far in far_targets:
            tau = taus.cosine_at(far)
            rate = float(np.mean(scores >= tau)) if scores.size else 0.0
            results.append(ScenarioResult(
                scenario=scenario,
                far_target=far,
                success_rate=rate,
                success_rate_full_attack=rate * unlock_rate,
                n_accounts=int(scores.size),
            ))
    return results


def original_image_success(pop: Population, user_indices, enroll_seeds,
                           extractor: Extractor, tau: float, same_image: bool,
                           master_seed: int) -> float:
    """Baseline: presenting the user's own image instead of a reconstruction.

    With the same image this is exact self-similarity (always accepted for
    any sane threshold); with a different image it is the genuine match
    rate, the anchor the reconstruction rates are compared against.
    """
    hits = 0
    for idx, enroll_seed in zip(user_indices, enroll_seeds):
        v_enrolled = sample_embedding(pop, idx, extractor, enroll_seed)
        if same_image:
            v_probe = v_enrolled
        else:
            probe_seed = derive_seed(master_seed, "baseline-probe", idx)
            v_probe = sample_embedding(pop, idx, extractor, probe_seed)
        hits += bool(float(v_probe @ v_enrolled) >= tau)
    return hits / len(list(user_indices))


def results_to_csv(path, results: list[ScenarioResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "far_target", "success_rate",
                         "success_rate_full_attack", "n_accounts"])
        for r in results:
            writer.writerow([r.scenario, f"{r.far_target:.6g}", f"{r.success_rate:.6f}",
                             f"{r.success_rate_full_attack:.6f}", r.n_accounts])


def results_to_markdown(path, results: list[ScenarioResult],
                        baselines: dict[tuple[str, float], float] | None = None) -> None:
    """One table per scenario, FAR targets as columns, full-attack rates in
    parentheses next to the reconstruction-only rates."""
    far_targets = sorted({r.far_target for r in results}, reverse=True)
    lines = ["# Scenario evaluation", ""]
    for scenario in SCENARIOS:
        rows = {r.far_target: r for r in results if r.scenario == scenario}
        if not rows:
            continue
        lines.append(f"## {scenario}")
        lines.append("")
        header = "| attack | " + " | ".join(f"{far * 100:.1f}% FAR" for far in far_targets) + " |"
        lines.append(header)
        lines.append("|" + "---|" * (len(far_targets) + 1))
        if baselines:
            cells = []
            for far in far_targets:
                b = baselines.get((scenario, far))
                cells.append(f"{b * 100:.2f}%" if b is not None else "-")
            lines.append("| original image | " + " | ".join(cells) + " |")
        cells = []
        for far in far_targets:
            r = rows[far]
            cells.append(f"{r.success_rate * 100:.2f}% ({r.success_rate_full_attack * 100:.2f}%)")
        lines.append("| reconstructed from protected template | " + " | ".join(cells) + " |")
        lines.append("")
    Path(path).write_text("\n".join(lines) + "\n")
