"""Experiment stages: population, calibration, enrollment, attack, training,
reconstruction, scenario evaluation.

Every stage writes self-describing artifacts under the configured output
directory and can be re-run in isolation from the files alone.  All
randomness flows from the master seed through labelled sub-seeds, so a
config plus seed reproduces every artifact byte for byte (enrollment
timestamps are the one excluded field).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import attack as atk
from . import authsys
from . import binarize as bz
from . import embedder as emb
from . import inversion as inv
from . import reconstructor as rec
from .config import ExperimentConfig
from .seeds import derive_seed
from .stats import wilson_interval


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class Paths:
    out_dir: Path

    @property
    def population(self) -> Path:
        return self.out_dir / "population.npz"

    @property
    def thresholds(self) -> Path:
        return self.out_dir / "thresholds.json"

    @property
    def store(self) -> Path:
        return self.out_dir / "store.jsonl"

    @property
    def db(self) -> Path:
        return self.out_dir / "db.npz"

    @property
    def attack_json(self) -> Path:
        return self.out_dir / "attack_report.json"

    @property
    def attack_csv(self) -> Path:
        return self.out_dir / "attack_report.csv"

    @property
    def histogram_csv(self) -> Path:
        return self.out_dir / "hit_histogram.csv"

    @property
    def models(self) -> Path:
        return self.out_dir / "models.json"

    @property
    def loss_history(self) -> Path:
        return self.out_dir / "loss_history.csv"

    @property
    def recovered(self) -> Path:
        return self.out_dir / "recovered.npz"

    @property
    def scenarios_csv(self) -> Path:
        return self.out_dir / "scenarios.csv"

    @property
    def scenarios_md(self) -> Path:
        return self.out_dir / "scenarios.md"


def paths_for(cfg: ExperimentConfig) -> Paths:
    p = Paths(Path(cfg.out_dir))
    p.out_dir.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# Shared constructions (deterministic in the master seed)
# ---------------------------------------------------------------------------

def build_extractors(cfg: ExperimentConfig) -> tuple[emb.Extractor, emb.Extractor]:
    a = emb.make_extractor(cfg.extractor.name,
                           derive_seed(cfg.master_seed, "extractor", cfg.extractor.name),
                           cfg.population.d_latent, cfg.extractor.d,
                           cfg.extractor.noise_sigma)
    b = emb.make_extractor(cfg.extractor_alt.name,
                           derive_seed(cfg.master_seed, "extractor", cfg.extractor_alt.name),
                           cfg.population.d_latent, cfg.extractor_alt.d,
                           cfg.extractor_alt.noise_sigma)
    return a, b


def build_projection(cfg: ExperimentConfig) -> bz.ProjectionMatrix:
    return bz.gen_projection(derive_seed(cfg.master_seed, "projection"),
                             cfg.extractor.d, cfg.n_out)


def enroll_seed_for(cfg: ExperimentConfig, identity_index: int) -> int:
    return derive_seed(cfg.master_seed, "enroll", identity_index)


def user_id_for(identity_index: int) -> str:
    return f"user{identity_index:04d}"


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_population(cfg: ExperimentConfig, paths: Paths) -> emb.Population:
    pc = cfg.population
    pop = emb.gen_population(derive_seed(cfg.master_seed, "population"), pc.total,
                             pc.d_latent, pc.num_clusters, pc.cluster_spread)
    np.savez(paths.population, identities=pop.identities, seed=pop.seed,
             num_users=pc.num_users, num_db=pc.num_db, num_train=pc.num_train,
             num_holdout=pc.num_holdout)
    return pop


def load_population(paths: Paths) -> emb.Population:
    data = np.load(paths.population)
    return emb.Population(identities=data["identities"], seed=int(data["seed"]))


def _calibration_samples(cfg: ExperimentConfig, pop: emb.Population,
                         extractor: emb.Extractor, proj: bz.ProjectionMatrix):
    cal = cfg.calibration
    ids = list(cfg.population.train_range())[: cal.num_identities]
    if len(ids) < cal.num_identities:
        raise ValueError("not enough training identities for calibration")
    rows_id = np.repeat(ids, cal.samples_per_identity)
    rows_seed = [derive_seed(cfg.master_seed, "calib", i, s)
                 for i in ids for s in range(cal.samples_per_identity)]
    vectors = emb.sample_embeddings(pop, rows_id, extractor, rows_seed)
    templates = bz.binarize_batch(vectors, proj)
    return rows_id, vectors, templates


def _score_pairs(cfg: ExperimentConfig, rows_id, vectors, templates):
    cal = cfg.calibration
    k = cal.samples_per_identity
    num = len(rows_id)
    # genuine: all within-identity sample pairs
    gi, gj = [], []
    for base in range(0, num, k):
        for a in range(k):
            for b in range(a + 1, k):
                gi.append(base + a)
                gj.append(base + b)
    gi = np.asarray(gi)
    gj = np.asarray(gj)
    # impostor: seeded random cross-identity pairs
    rng = np.random.default_rng(derive_seed(cfg.master_seed, "calib-pairs"))
    ii = np.empty(0, dtype=np.int64)
    jj = np.empty(0, dtype=np.int64)
    while ii.size < cal.num_impostor_pairs:
        cand_i = rng.integers(0, num, cal.num_impostor_pairs)
        cand_j = rng.integers(0, num, cal.num_impostor_pairs)
        keep = rows_id[cand_i] != rows_id[cand_j]
        ii = np.concatenate([ii, cand_i[keep]])
        jj = np.concatenate([jj, cand_j[keep]])
    ii = ii[: cal.num_impostor_pairs]
    jj = jj[: cal.num_impostor_pairs]
    genuine_cos = np.sum(vectors[gi] * vectors[gj], axis=1)
    impostor_cos = np.sum(vectors[ii] * vectors[jj], axis=1)
    genuine_ham = np.count_nonzero(templates[gi] != templates[gj], axis=1)
    impostor_ham = np.count_nonzero(templates[ii] != templates[jj], axis=1)
    return genuine_cos, impostor_cos, genuine_ham, impostor_ham


def stage_calibrate(cfg: ExperimentConfig, paths: Paths,
                    pop: emb.Population | None = None) -> dict[str, emb.Thresholds]:
    if pop is None:
        pop = load_population(paths)
    extractor_a, extractor_b = build_extractors(cfg)
    proj = build_projection(cfg)
    per_extractor: dict[str, emb.Thresholds] = {}
    diagnostics: dict[str, dict] = {}
    for extractor in (extractor_a, extractor_b):
        rows_id, vectors, templates = _calibration_samples(cfg, pop, extractor, proj)
        g_cos, i_cos, g_ham, i_ham = _score_pairs(cfg, rows_id, vectors, templates)
        th = emb.Thresholds(
            cosine_far1=emb.calibrate_threshold(g_cos, i_cos, 0.01),
            cosine_far01=emb.calibrate_threshold(g_cos, i_cos, 0.001),
            hamming_far1=int(emb.calibrate_threshold(g_ham, i_ham, 0.01, mode="distance")),
            hamming_far01=int(emb.calibrate_threshold(g_ham, i_ham, 0.001, mode="distance")),
        )
        per_extractor[extractor.name] = th
        diagnostics[extractor.name] = {
            "tpr_cosine_far1": emb.tpr_at(g_cos, th.cosine_far1),
            "tpr_cosine_far01": emb.tpr_at(g_cos, th.cosine_far01),
            "tpr_hamming_far1": emb.tpr_at(g_ham, th.hamming_far1, mode="distance"),
            "tpr_hamming_far01": emb.tpr_at(g_ham, th.hamming_far01, mode="distance"),
            "genuine_cosine_mean": float(np.mean(g_cos)),
            "impostor_cosine_mean": float(np.mean(i_cos)),
            "genuine_hamming_mean": float(np.mean(g_ham)),
            "impostor_hamming_mean": float(np.mean(i_ham)),
            "num_genuine_pairs": int(len(g_cos)),
            "num_impostor_pairs": int(len(i_cos)),
        }
    emb.thresholds_to_json(paths.thresholds, per_extractor, extra=diagnostics)
    return per_extractor


def system_config_for(cfg: ExperimentConfig, thresholds: dict[str, emb.Thresholds],
                      mode: str = authsys.PROTECTED) -> authsys.SystemConfig:
    th = thresholds[cfg.extractor.name]
    return authsys.SystemConfig(
        extractor_name=cfg.extractor.name,
        projection_seed=derive_seed(cfg.master_seed, "projection"),
        d=cfg.extractor.d,
        n_out=cfg.n_out,
        backend_kind=cfg.backend,
        code_t=th.hamming_at(cfg.attack_far),
        thresholds=th,
        far_target=cfg.attack_far,
        mode=mode,
    )


def stage_enroll(cfg: ExperimentConfig, paths: Paths,
                 pop: emb.Population | None = None,
                 thresholds: dict[str, emb.Thresholds] | None = None) -> authsys.AuthSystem:
    if pop is None:
        pop = load_population(paths)
    if thresholds is None:
        thresholds = emb.thresholds_from_json(paths.thresholds)
    extractor_a, _ = build_extractors(cfg)
    if paths.store.exists():
        paths.store.unlink()
    system = authsys.AuthSystem(system_config_for(cfg, thresholds), extractor_a,
                                authsys.UserStore(paths.store))
    rng = np.random.default_rng(derive_seed(cfg.master_seed, "commit-stream"))
    for idx in cfg.population.user_range():
        v = emb.sample_embedding(pop, idx, extractor_a, enroll_seed_for(cfg, idx))
        system.enroll(user_id_for(idx), v, rng)
    return system


def stage_build_db(cfg: ExperimentConfig, paths: Paths,
                   pop: emb.Population | None = None) -> atk.GuessDatabase:
    if pop is None:
        pop = load_population(paths)
    extractor_a, _ = build_extractors(cfg)
    proj = build_projection(cfg)
    ids = list(cfg.population.db_range())
    seeds = [derive_seed(cfg.master_seed, "db", i) for i in ids]
    vectors = emb.sample_embeddings(pop, ids, extractor_a, seeds)
    collection = emb.LabeledEmbeddings(
        identities=[f"aux{i:05d}" for i in ids],
        samples=["0"] * len(ids),
        vectors=vectors,
    )
    provenance = f"extractor={extractor_a.name} projection_seed={proj.seed} n_out={cfg.n_out}"
    db = atk.build_db(collection, proj, provenance=provenance)
    np.savez(paths.db, templates=db.templates, labels=np.array(db.labels),
             provenance=provenance, vectors=vectors)
    return db


def load_db(paths: Paths) -> atk.GuessDatabase:
    data = np.load(paths.db)
    return atk.GuessDatabase(labels=[str(x) for x in data["labels"]],
                             templates=data["templates"],
                             provenance=str(data["provenance"]))


def stage_attack(cfg: ExperimentConfig, paths: Paths,
                 system: authsys.AuthSystem | None = None,
                 db: atk.GuessDatabase | None = None,
                 pop: emb.Population | None = None) -> atk.AttackReport:
    if pop is None:
        pop = load_population(paths)
    if system is None:
        thresholds = emb.thresholds_from_json(paths.thresholds)
        extractor_a, _ = build_extractors(cfg)
        system = authsys.AuthSystem(system_config_for(cfg, thresholds), extractor_a,
                                    authsys.UserStore(paths.store))
    if db is None:
        db = load_db(paths)
    records = {uid: system.store.get(uid).protected for uid in system.store.user_ids()}
    report = atk.run_guessing_attack(records, db, stop_at_first=False,
                                     provenance=db.provenance)
    report.write_json(paths.attack_json)
    report.write_csv(paths.attack_csv)
    report.write_histogram_csv(paths.histogram_csv)
    # Unprotected-mode comparison: plain cosine guessing against the same DB.
    extractor_a, _ = build_extractors(cfg)
    enrolled = np.stack([
        emb.sample_embedding(pop, idx, extractor_a, enroll_seed_for(cfg, idx))
        for idx in cfg.population.user_range()
    ])
    db_data = np.load(paths.db)
    tau = system.config.thresholds.cosine_at(cfg.attack_far)
    counts = atk.unprotected_hit_counts(enrolled, db_data["vectors"], tau)
    unlocked = int(np.count_nonzero(counts))
    summary = json.loads(paths.attack_json.read_text())
    summary["unprotected"] = {
        "cosine_threshold": tau,
        "unlock_rate": unlocked / len(counts),
        "unlock_rate_ci": list(wilson_interval(unlocked, len(counts))),
        "mean_hit_probability": float(counts.mean() / max(len(db), 1)),
    }
    paths.attack_json.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return report


def training_pairs(cfg: ExperimentConfig, pop: emb.Population, id_range, label: str,
                   pairs_per_identity: int):
    extractor_a, _ = build_extractors(cfg)
    proj = build_projection(cfg)
    ids = np.repeat(list(id_range), pairs_per_identity)
    seeds = [derive_seed(cfg.master_seed, label, i, s)
             for i in id_range for s in range(pairs_per_identity)]
    vectors = emb.sample_embeddings(pop, ids, extractor_a, seeds)
    templates = bz.binarize_batch(vectors, proj).astype(np.float64)
    return ids, vectors, templates


def stage_train(cfg: ExperimentConfig, paths: Paths,
                pop: emb.Population | None = None,
                lambda_override: float | None = None,
                write: bool = True) -> tuple[inv.Mlp, inv.Mlp, list[dict]]:
    if pop is None:
        pop = load_population(paths)
    tc = cfg.training
    _, v_train, b_train = training_pairs(cfg, pop, cfg.population.train_range(),
                                         "train", tc.pairs_per_identity)
    _, v_val, b_val = training_pairs(cfg, pop, cfg.population.holdout_range(),
                                     "holdout", tc.holdout_pairs_per_identity)
    d = cfg.extractor.d
    f_net = inv.Mlp((d, 256, 256, cfg.n_out), seed=derive_seed(cfg.master_seed, "mlp", "F"))
    g_net = inv.Mlp((cfg.n_out, 256, 256, d), seed=derive_seed(cfg.master_seed, "mlp", "G"))
    train_cfg = inv.TrainConfig(
        lambda_cyc=tc.lambda_cyc if lambda_override is None else lambda_override,
        learning_rate=tc.learning_rate,
        batch_size=tc.batch_size,
        epochs=tc.epochs,
        patience=tc.patience,
    )
    rng = np.random.default_rng(derive_seed(cfg.master_seed, "train-shuffle"))
    history = inv.train(f_net, g_net, v_train, b_train, train_cfg, rng, v_val, b_val)
    if write:
        inv.save_models(paths.models, f_net, g_net)
        inv.history_to_csv(paths.loss_history, history)
    return f_net, g_net, history


def stage_reconstruct(cfg: ExperimentConfig, paths: Paths,
                      pop: emb.Population | None = None,
                      g_net: inv.Mlp | None = None,
                      report: atk.AttackReport | None = None) -> dict:
    if pop is None:
        pop = load_population(paths)
    if g_net is None:
        _, g_net = inv.load_models(paths.models)
    tc = cfg.training
    ids, v_train, _ = training_pairs(cfg, pop, cfg.population.train_range(),
                                     "train", tc.pairs_per_identity)
    inv_map = rec.fit_inverse_map(pop.identities[ids], v_train, cfg.ridge_lambda)
    if report is not None:
        account_rows = [
            {"user_id": o.user_id,
             "recovered_template": bz.template_to_hex(o.recovered_template)}
            for o in report.outcomes if o.unlocked
        ]
        unlock_rate = report.unlock_rate
        n_accounts = len(report.outcomes)
    else:
        attack_data = json.loads(paths.attack_json.read_text())
        account_rows = [a for a in attack_data["accounts"] if a["unlocked"]]
        n_accounts = attack_data["aggregates"]["num_accounts"]
        unlock_rate = attack_data["aggregates"]["unlock_rate"]
    indices = np.array([int(a["user_id"].removeprefix("user")) for a in account_rows])
    templates = np.stack([
        bz.template_from_hex(a["recovered_template"], cfg.n_out) for a in account_rows
    ]) if account_rows else np.zeros((0, cfg.n_out), dtype=np.uint8)
    v_hat = inv.invert(g_net, templates.astype(np.float64)) if len(account_rows) else \
        np.zeros((0, cfg.extractor.d))
    x_hat = rec.reconstruct(inv_map, v_hat) if len(account_rows) else \
        np.zeros((0, cfg.population.d_latent))
    np.savez(paths.recovered, user_indices=indices, v_hat=v_hat, x_hat=x_hat,
             unlock_rate=unlock_rate, n_accounts=n_accounts,
             fit_residual=inv_map.fit_residual)
    return {"user_indices": indices, "v_hat": v_hat, "x_hat": x_hat,
            "unlock_rate": unlock_rate, "n_accounts": n_accounts,
            "fit_residual": inv_map.fit_residual}


def stage_evaluate(cfg: ExperimentConfig, paths: Paths,
                   pop: emb.Population | None = None,
                   recovered: dict | None = None) -> list[rec.ScenarioResult]:
    if pop is None:
        pop = load_population(paths)
    if recovered is None:
        data = np.load(paths.recovered)
        recovered = {key: data[key] for key in
                     ("user_indices", "x_hat", "unlock_rate", "n_accounts")}
    thresholds = emb.thresholds_from_json(paths.thresholds)
    extractor_a, extractor_b = build_extractors(cfg)
    user_indices = list(cfg.population.user_range())
    enroll_seeds = [enroll_seed_for(cfg, i) for i in user_indices]
    recovered_latents = {int(i): x for i, x in
                         zip(recovered["user_indices"], recovered["x_hat"])}
    results = rec.evaluate_scenarios(
        pop, user_indices, enroll_seeds, extractor_a, extractor_b, thresholds,
        recovered_latents, float(recovered["unlock_rate"]), cfg.far_targets,
        cfg.master_seed,
    )
    baselines = {}
    for scenario in rec.SCENARIOS:
        extractor = extractor_a if scenario in ("SISFE", "DISFE") else extractor_b
        same_image = scenario in ("SISFE", "SIDFE")
        for far in cfg.far_targets:
            tau = thresholds[extractor.name].cosine_at(far)
            baselines[(scenario, far)] = rec.original_image_success(
                pop, user_indices, enroll_seeds, extractor, tau, same_image,
                cfg.master_seed)
    rec.results_to_csv(paths.scenarios_csv, results)
    rec.results_to_markdown(paths.scenarios_md, results, baselines)
    return results


def full_pipeline(cfg: ExperimentConfig, skip_training_if_cached: bool = False,
                  log=print) -> dict:
    """Run every stage in order, failing fast with stage-named diagnostics."""
    paths = paths_for(cfg)
    state: dict = {"paths": paths}

    def run(name, fn):
        if log:
            log(f"[pipeline] {name}")
        try:
            return fn()
        except Exception as exc:
            raise PipelineError(name, exc) from exc

    pop = run("population", lambda: stage_population(cfg, paths))
    thresholds = run("calibrate", lambda: stage_calibrate(cfg, paths, pop))
    system = run("enroll", lambda: stage_enroll(cfg, paths, pop, thresholds))
    db = run("build-db", lambda: stage_build_db(cfg, paths, pop))
    report = run("attack", lambda: stage_attack(cfg, paths, system, db, pop))
    if skip_training_if_cached and paths.models.exists():
        if log:
            log("[pipeline] train-inverter (cached)")
        f_net, g_net = inv.load_models(paths.models)
        history = []
    else:
        f_net, g_net, history = run("train-inverter",
                                    lambda: stage_train(cfg, paths, pop))
    recovered = run("reconstruct",
                    lambda: stage_reconstruct(cfg, paths, pop, g_net, report))
    results = run("evaluate", lambda: stage_evaluate(cfg, paths, pop, recovered))
    state.update(population=pop, thresholds=thresholds, system=system, db=db,
                 report=report, nets=(f_net, g_net), history=history,
                 recovered=recovered, results=results)
    return state
