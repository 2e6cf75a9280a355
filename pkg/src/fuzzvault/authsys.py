"""The target authentication system: enrollment, verification, user store.

Protected mode persists only the helper string and hash tag of a fuzzy
commitment over the binarized probe; acceptance means the commitment
recovered and the tag matched, which happens exactly when the probe
template is within Hamming distance t of the enrolled one.  Unprotected
mode stores the raw feature vector and thresholds its cosine similarity;
it exists as the baseline the attack chapter compares against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import binarize as bz
from . import commitment as cm
from .embedder import Extractor, Population, Thresholds, cosine, sample_embedding
from .seeds import derive_seed
from .stats import wilson_interval

PROTECTED = "protected"
UNPROTECTED = "unprotected"


@dataclass(frozen=True)
class SystemConfig:
    """Everything that pins down one verification system."""

    extractor_name: str
    projection_seed: int
    d: int
    n_out: int
    backend_kind: str  # "bch" or "pinsketch"
    code_t: int
    thresholds: Thresholds
    far_target: float
    mode: str = PROTECTED

    def __post_init__(self):
        if self.mode not in (PROTECTED, UNPROTECTED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.backend_kind == "bch":
            m = self.n_out.bit_length()
            if (1 << m) - 1 != self.n_out:
                raise ValueError(f"bch backend needs n_out = 2^m - 1, got {self.n_out}")
        if self.code_t != self.thresholds.hamming_at(self.far_target):
            raise ValueError(
                f"code_t={self.code_t} inconsistent with calibrated Hamming threshold "
                f"{self.thresholds.hamming_at(self.far_target)} at FAR {self.far_target}"
            )


@dataclass(frozen=True)
class EnrollmentRecord:
    user_id: str
    enrolled_at: str
    protected: cm.ProtectedRecord | None = None
    unprotected_template: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if (self.protected is None) == (self.unprotected_template is None):
            raise ValueError("record must hold exactly one of protected/unprotected data")

    def to_json_dict(self) -> dict:
        obj = {"user_id": self.user_id, "enrolled_at": self.enrolled_at}
        if self.protected is not None:
            obj["protected"] = self.protected.to_json_dict()
        else:
            obj["template"] = [float(x) for x in self.unprotected_template]
        return obj

    @classmethod
    def from_json_dict(cls, obj: dict) -> "EnrollmentRecord":
        protected = None
        template = None
        if "protected" in obj:
            protected = cm.ProtectedRecord.from_json_dict(obj["protected"])
        else:
            template = np.asarray(obj["template"], dtype=np.float64)
        return cls(user_id=obj["user_id"], enrolled_at=obj["enrolled_at"],
                   protected=protected, unprotected_template=template)


class UserStore:
    """Append-only JSON-lines store; one enrollment record per line."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: dict[str, EnrollmentRecord] = {}
        if self.path is not None and self.path.exists():
            with open(self.path) as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = EnrollmentRecord.from_json_dict(json.loads(line))
                    self._records[rec.user_id] = rec

    def add(self, record: EnrollmentRecord) -> None:
        if record.user_id in self._records:
            raise ValueError(f"user {record.user_id!r} already enrolled")
        self._records[record.user_id] = record
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")

    def get(self, user_id: str) -> EnrollmentRecord:
        if user_id not in self._records:
            raise KeyError(f"unknown user {user_id!r}")
        return self._records[user_id]

    def __contains__(self, user_id: str) -> bool:
        return user_id in self._records

    def __len__(self) -> int:
        return len(self._records)

    def user_ids(self) -> list[str]:
        return list(self._records)


@dataclass(frozen=True)
class AuthDecision:
    accepted: bool
    recovered_template: np.ndarray | None = None


class AuthSystem:
    """Runtime system: config + extractor + projection + commitment backend."""

    def __init__(self, config: SystemConfig, extractor: Extractor,
                 store: UserStore | None = None):
        if extractor.name != config.extractor_name:
            raise ValueError("extractor does not match the system config")
        if extractor.d != config.d:
            raise ValueError("extractor dimension does not match the system config")
        self.config = config
        self.extractor = extractor
        self.projection = bz.gen_projection(config.projection_seed, config.d, config.n_out)
        self.backend = (cm.make_backend(config.backend_kind, config.code_t, config.n_out)
                        if config.mode == PROTECTED else None)
        self.store = store if store is not None else UserStore()

    def template_of(self, v: np.ndarray) -> np.ndarray:
        return bz.binarize(v, self.projection)

    def enroll(self, user_id: str, v: np.ndarray, rng: np.random.Generator) -> EnrollmentRecord:
        if user_id in self.store:
            raise ValueError(f"user {user_id!r} already enrolled")
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.config.d,):
            raise ValueError(f"feature vector must have dimension {self.config.d}")
        now = datetime.now(timezone.utc).isoformat()
        if self.config.mode == PROTECTED:
            record = EnrollmentRecord(
                user_id=user_id, enrolled_at=now,
                protected=self.backend.commit(self.template_of(v), rng),
            )
        else:
            record = EnrollmentRecord(user_id=user_id, enrolled_at=now,
                                      unprotected_template=v.copy())
        self.store.add(record)
        return record

    def authenticate(self, user_id: str, v_probe: np.ndarray) -> AuthDecision:
        record = self.store.get(user_id)
        v_probe = np.asarray(v_probe, dtype=np.float64)
        if v_probe.shape != (self.config.d,):
            raise ValueError(f"probe must have dimension {self.config.d}")
        if self.config.mode == PROTECTED:
            result = self.backend.recover(record.protected, self.template_of(v_probe))
            if not result.accepted:
                return AuthDecision(accepted=False)
            return AuthDecision(accepted=True, recovered_template=result.template)
        if np.linalg.norm(v_probe) == 0:
            return AuthDecision(accepted=False)  # degenerate probe, never genuine
        tau = self.config.thresholds.cosine_at(self.config.far_target)
        score = cosine(v_probe, record.unprotected_template)
        return AuthDecision(accepted=score >= tau)


def measure_rates(system: AuthSystem, pop: Population, user_indices,
                  n_genuine: int, n_impostor: int, seed: int) -> dict:
    """Empirical FAR/FRR of an enrolled system, with Wilson 95% intervals.

    Genuine trials probe enrolled users with fresh samples of their own
    identity; impostor trials probe them with samples of other identities.
    """
    user_indices = list(user_indices)
    ids = system.store.user_ids()
    if len(ids) != len(user_indices):
        raise ValueError("user_indices must match the enrolled users")
    far_target = system.config.far_target
    if n_impostor < 1.0 / far_target:
        raise ValueError(
            f"{n_impostor} impostor trials cannot resolve FAR target {far_target}"
        )
    rng = np.random.default_rng(seed)
    genuine_accepts = 0
    for trial in range(n_genuine):
        row = int(rng.integers(len(ids)))
        probe = sample_embedding(pop, user_indices[row], system.extractor,
                                 derive_seed(seed, "genuine-probe", trial))
        genuine_accepts += bool(system.authenticate(ids[row], probe).accepted)
    impostor_accepts = 0
    others = [i for i in range(pop.num_identities) if i not in set(user_indices)]
    for trial in range(n_impostor):
        row = int(rng.integers(len(ids)))
        src = others[int(rng.integers(len(others)))]
        probe = sample_embedding(pop, src, system.extractor,
                                 derive_seed(seed, "impostor-probe", trial))
        impostor_accepts += bool(system.authenticate(ids[row], probe).accepted)
    far = impostor_accepts / n_impostor
    frr = 1.0 - genuine_accepts / n_genuine
    return {
        "far": far,
        "far_ci": wilson_interval(impostor_accepts, n_impostor),
        "frr": frr,
        "frr_ci": wilson_interval(n_genuine - genuine_accepts, n_genuine),
        "n_genuine": n_genuine,
        "n_impostor": n_impostor,
    }
