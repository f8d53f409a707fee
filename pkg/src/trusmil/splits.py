"""Nested k-fold cross-validation with patient grouping and center balance.

Patients are shuffled within each center and dealt round-robin using a
single fold pointer that carries over between centers, so both the
per-center and the overall fold sizes differ by at most one. Each leg of
the nested protocol tests on one fold, validates on the next (mod k) and
trains on the rest.
"""

import json
import random
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class FoldLeg:
    test: int
    validation: int
    train: list[int]


@dataclass
class FoldPlan:
    """Patient-to-fold assignment plus the k experiment legs."""

    k: int
    folds: list[list[str]]          # fold index -> patient ids
    legs: list[FoldLeg] = field(default_factory=list)

    @property
    def assignments(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for i, fold in enumerate(self.folds):
            for pid in fold:
                out[pid] = i
        return out

    def fold_of(self, patient_id: str) -> int:
        return self.assignments[patient_id]

    def to_json(self) -> str:
        return json.dumps({
            "k": self.k,
            "folds": self.folds,
            "legs": [
                {"test": leg.test, "validation": leg.validation, "train": leg.train}
                for leg in self.legs
            ],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        raw = json.loads(text)
        return cls(
            k=raw["k"],
            folds=[list(f) for f in raw["folds"]],
            legs=[FoldLeg(leg["test"], leg["validation"], leg["train"])
                  for leg in raw["legs"]],
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "FoldPlan":
        return cls.from_json(Path(path).read_text())


def nested_kfold(patients: list[tuple[str, str]], k: int, seed: int) -> FoldPlan:
    """Assign patients to k folds, balanced per center, and define the
    k nested legs (leg i: test=i, validation=(i+1) mod k, train=rest).

    ``patients`` is a list of (patient_id, center_id) pairs.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > len(patients):
        raise ValueError(f"k={k} exceeds the number of patients ({len(patients)})")
    ids = [pid for pid, _ in patients]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate patient ids")

    by_center: dict[str, list[str]] = {}
    for pid, center in patients:
        by_center.setdefault(center, []).append(pid)

    rng = random.Random(seed)
    folds: list[list[str]] = [[] for _ in range(k)]
    pointer = 0
    for center in sorted(by_center):
        group = sorted(by_center[center])
        rng.shuffle(group)
        for pid in group:
            folds[pointer].append(pid)
            pointer = (pointer + 1) % k

    legs = [FoldLeg(test=i, validation=(i + 1) % k,
                    train=[j for j in range(k) if j not in (i, (i + 1) % k)])
            for i in range(k)]
    return FoldPlan(k=k, folds=folds, legs=legs)


def undersample_benign(cores: list, seed: int) -> list:
    """Balance classes by sampling benign cores (without replacement) down
    to the cancer count. Cancer cores are always kept; when benign cores
    are already the minority nothing is dropped (no upsampling).

    Works on any sequence of objects with a ``label`` attribute and
    preserves the input order.
    """
    cancer_idx = [i for i, c in enumerate(cores) if c.label == 1]
    benign_idx = [i for i, c in enumerate(cores) if c.label != 1]
    if not cancer_idx:
        raise ValueError("undersampling requires at least one cancer core")
    if len(benign_idx) > len(cancer_idx):
        rng = random.Random(seed)
        benign_idx = rng.sample(benign_idx, len(cancer_idx))
    keep = sorted(cancer_idx + benign_idx)
    return [cores[i] for i in keep]


@dataclass
class LeakageReport:
    violations: list[dict]
    unassigned_patients: list[str]

    @property
    def clean(self) -> bool:
        return not self.violations


def audit_leakage(plan: FoldPlan, cores: list) -> LeakageReport:
    """Report patients whose cores would span train/validation/test roles
    within any leg (possible only if a patient appears in several folds).

    Patients with cores but no fold assignment are listed separately;
    they leak nothing since they receive no role.
    """
    patient_folds: dict[str, set[int]] = {}
    for i, fold in enumerate(plan.folds):
        for pid in fold:
            patient_folds.setdefault(pid, set()).add(i)

    patients_with_cores = {c.patient_id for c in cores}
    unassigned = sorted(patients_with_cores - set(patient_folds))

    violations = []
    for leg_idx, leg in enumerate(plan.legs):
        roles = {leg.test: "test", leg.validation: "validation"}
        for j in leg.train:
            roles[j] = "train"
        for pid in sorted(patients_with_cores & set(patient_folds)):
            spanned = {roles[f] for f in patient_folds[pid] if f in roles}
            if len(spanned) > 1:
                violations.append({
                    "patient_id": pid,
                    "leg": leg_idx,
                    "roles": sorted(spanned),
                })
    return LeakageReport(violations=violations, unassigned_patients=unassigned)
