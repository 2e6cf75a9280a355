"""Command-line orchestration of the experiment stages.

Exit codes follow the verification contract: 0 accept / success,
1 reject, 2 error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import authsys
from . import embedder as emb
from . import inversion as inv
from . import pipeline as pl
from .config import ExperimentConfig, apply_overrides, load_config
from .seeds import derive_seed

EXIT_ACCEPT = 0
EXIT_REJECT = 1
EXIT_ERROR = 2


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    far = None
    if args.far is not None:
        far = {1.0: 0.01, 0.1: 0.001}[args.far]
    return apply_overrides(cfg, seed=args.seed, out_dir=args.out, far=far,
                           backend=args.backend)


def cmd_gen_population(cfg: ExperimentConfig, args) -> int:
    paths = pl.paths_for(cfg)
    pop = pl.stage_population(cfg, paths)
    print(f"population: {pop.num_identities} identities of dimension {pop.d_latent} "
          f"-> {paths.population}")
    return EXIT_ACCEPT


def cmd_calibrate(cfg: ExperimentConfig, args) -> int:
    paths = pl.paths_for(cfg)
    if not paths.population.exists():
        pl.stage_population(cfg, paths)
    thresholds = pl.stage_calibrate(cfg, paths)
    for name, th in thresholds.items():
        print(f"{name}: cosine {th.cosine_far1:.4f}/{th.cosine_far01:.4f} "
              f"hamming {th.hamming_far1}/{th.hamming_far01} (FAR 1%/0.1%)")
    print(f"thresholds -> {paths.thresholds}")
    return EXIT_ACCEPT


def cmd_enroll(cfg: ExperimentConfig, args) -> int:
    paths = pl.paths_for(cfg)
    if args.embeddings:
        collection = emb.load_embeddings(args.embeddings)
        thresholds = emb.thresholds_from_json(paths.thresholds)
        extractor_a, _ = pl.build_extractors(cfg)
        if paths.store.exists():
            paths.store.unlink()
        system = authsys.AuthSystem(pl.system_config_for(cfg, thresholds), extractor_a,
                                    authsys.UserStore(paths.store))
        rng = np.random.default_rng(derive_seed(cfg.master_seed, "commit-stream"))
        seen = set()
        for ident, vec in zip(collection.identities, collection.vectors):
            if ident in seen:
                continue  # first sample per identity enrolls
            seen.add(ident)
            system.enroll(ident, vec, rng)
        print(f"enrolled {len(seen)} users from {args.embeddings} -> {paths.store}")
        return EXIT_ACCEPT
    system = pl.stage_enroll(cfg, paths)
    print(f"enrolled {len(system.store)} synthetic users -> {paths.store}")
    return EXIT_ACCEPT


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    paths = pl.paths_for(cfg)
    thresholds = emb.thresholds_from_json(paths.thresholds)
    extractor_a, _ = pl.build_extractors(cfg)
    system = authsys.AuthSystem(pl.system_config_for(cfg, thresholds), extractor_a,
                                authsys.UserStore(paths.store))
    if args.probe_csv:
        collection = emb.load_embeddings(args.probe_csv)
        if len(collection) == 0:
            print("probe file holds no embeddings", file=sys.stderr)
            return EXIT_ERROR
        probe = collection.vectors[0]
    elif args.identity is not None:
        pop = pl.load_population(paths)
        probe = emb.sample_embedding(pop, args.identity, extractor_a,
                                     args.sample_seed)
    else:
        print("need --probe-csv or --identity", file=sys.stderr)
        return EXIT_ERROR
    decision = system.authenticate(args.user, probe)
    print("accept" if decision.accepted else "reject")
    return EXIT_ACCEPT if decision.accepted else EXIT_REJECT


def cmd_build_db(cfg: ExperimentConfig, args) -> int:
    paths = pl.paths_for(cfg)
    if args.embeddings:
        from . import attack as atk
        from . import binarize as bz
        collection = emb.load_embeddings(args.embeddings)
        proj = pl.build_projection(cfg)
        db = atk.build_db(collection, proj, provenance=f"file={args.embeddings}")
        np.savez(paths.db, templates=db.templates, labels=np.array(db.labels),
                 provenance=db.provenance, vectors=collection.vectors)
        print(f"database: {len(db)} templates from {args.embeddings} -> {paths.db}")
        return EXIT_ACCEPT
    db = pl.stage_build_db(cfg, paths)
    print(f"database: {len(db)} templates -> {paths.db}")
    return EXIT_ACCEPT


def cmd_attack(cfg: ExperimentConfig, args) -> int:
    paths = pl.paths_for(cfg)
    report = pl.stage_attack(cfg, paths)
    agg = report.to_json_dict()["aggregates"]
    print(f"unlocked {agg['unlocked_accounts']}/{agg['num_accounts']} accounts "
          f"(rate {agg['unlock_rate']:.4f}); mean hit probability "
          f"{agg['mean_hit_probability']:.6f}")
    print(f"reports -> {paths.attack_json}, {paths.attack_csv}, {paths.histogram_csv}")
    return EXIT_ACCEPT


def cmd_train_inverter(cfg: ExperimentConfig, args) -> int:
    paths = pl.paths_for(cfg)
    if args.resume and paths.models.exists():
        print(f"models already trained -> {paths.models} (resume: skipping)")
        return EXIT_ACCEPT
    _, _, history = pl.stage_train(cfg, paths)
    last = history[-1] if history else {}
    print(f"trained {len(history)} epochs; final losses "
          + " ".join(f"{k}={val:.5f}" for k, val in last.items() if k != "epoch"))
    print(f"models -> {paths.models}; history -> {paths.loss_history}")
    return EXIT_ACCEPT


def cmd_reconstruct(cfg: ExperimentConfig, args) -> int:
    paths = pl.paths_for(cfg)
    recovered = pl.stage_reconstruct(cfg, paths)
    print(f"reconstructed {len(recovered['user_indices'])} unlocked accounts "
          f"(inverse-map residual {recovered['fit_residual']:.6f}) -> {paths.recovered}")
    return EXIT_ACCEPT


def cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    paths = pl.paths_for(cfg)
    results = pl.stage_evaluate(cfg, paths)
    for r in results:
        print(f"{r.scenario} @ FAR {r.far_target * 100:.1f}%: "
              f"{r.success_rate * 100:.2f}% ({r.success_rate_full_attack * 100:.2f}% full attack)")
    print(f"tables -> {paths.scenarios_csv}, {paths.scenarios_md}")
    return EXIT_ACCEPT


def cmd_full_pipeline(cfg: ExperimentConfig, args) -> int:
    state = pl.full_pipeline(cfg, skip_training_if_cached=args.resume)
    report = state["report"]
    print(f"unlock rate {report.unlock_rate:.4f}; scenario tables in {cfg.out_dir}")
    return EXIT_ACCEPT


def cmd_report(cfg: ExperimentConfig, args) -> int:
    paths = pl.paths_for(cfg)
    if not paths.attack_json.exists():
        print("no attack report found; run the attack stage first", file=sys.stderr)
        return EXIT_ERROR
    attack_data = json.loads(paths.attack_json.read_text())
    agg = attack_data["aggregates"]
    print("# Attack summary")
    print(f"accounts: {agg['num_accounts']}, database size: {attack_data['db_size']}")
    print(f"unlock rate: {agg['unlock_rate']:.4f} "
          f"(CI {agg['unlock_rate_ci'][0]:.4f}..{agg['unlock_rate_ci'][1]:.4f})")
    print(f"mean per-entry hit probability: {agg['mean_hit_probability']:.6f}")
    print(f"predicted unlock rate (independence model): {agg['predicted_unlock_rate']:.4f}")
    if "unprotected" in attack_data:
        unp = attack_data["unprotected"]
        print(f"unprotected-mode unlock rate: {unp['unlock_rate']:.4f}")
    if paths.scenarios_md.exists():
        print()
        print(paths.scenarios_md.read_text())
    return EXIT_ACCEPT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuzzvault",
        description="Fuzzy-commitment biometric system and its attack chain",
    )
    parser.add_argument("--config", type=Path, help="experiment TOML file")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--out", type=str, help="override the output directory")
    parser.add_argument("--far", type=float, choices=[1.0, 0.1],
                        help="attack FAR operating point, percent")
    parser.add_argument("--backend", choices=["bch", "pinsketch"],
                        help="sketch backend override")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-population", help="generate the synthetic identity population")
    sub.add_parser("calibrate", help="calibrate FAR thresholds for both extractors")
    p = sub.add_parser("enroll", help="enroll users into the protected store")
    p.add_argument("--embeddings", type=Path, help="CSV of real embeddings to enroll")
    p = sub.add_parser("verify", help="verify one user (exit 0 accept, 1 reject, 2 error)")
    p.add_argument("--user", required=True)
    p.add_argument("--probe-csv", type=Path, help="CSV holding the probe embedding")
    p.add_argument("--identity", type=int, help="synthetic identity index to probe with")
    p.add_argument("--sample-seed", type=int, default=0)
    p = sub.add_parser("build-db", help="build the guessing database")
    p.add_argument("--embeddings", type=Path, help="CSV of real embeddings for the DB")
    sub.add_parser("attack", help="run the guessing attack against all accounts")
    p = sub.add_parser("train-inverter", help="train the template-inversion networks")
    p.add_argument("--resume", action="store_true", help="skip if models exist")
    sub.add_parser("reconstruct", help="invert recovered templates and rebuild latents")
    sub.add_parser("evaluate", help="score the four transfer scenarios")
    p = sub.add_parser("full-pipeline", help="run every stage in order")
    p.add_argument("--resume", action="store_true", help="reuse cached trained models")
    sub.add_parser("report", help="print a summary of existing artifacts")
    return parser


COMMANDS = {
    "gen-population": cmd_gen_population,
    "calibrate": cmd_calibrate,
    "enroll": cmd_enroll,
    "verify": cmd_verify,
    "build-db": cmd_build_db,
    "attack": cmd_attack,
    "train-inverter": cmd_train_inverter,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "full-pipeline": cmd_full_pipeline,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_cfg(args)
        return COMMANDS[args.command](cfg, args)
    except BrokenPipeError:
        raise
    except KeyboardInterrupt:
        raise
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
