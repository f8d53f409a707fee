"""Experiment orchestration: generate/load data, split, pre-train,
finetune, multi-scale train, evaluate and report — stage by stage, with
every artifact on disk and listed in the run manifest.

Stages communicate only through files under the run directory, so any
stage can be re-run or resumed independently:

    run_dir/
      manifest.json, effective_config.yaml
      dataset/                  synthetic data (when generated here)
      splits/fold_plan.json
      legs/leg00/{pretrain,finetune,features,multiscale}/...
      metrics/metrics.csv|json
      report/report.md|csv + roc_leg*.png
"""

import csv
import io as _io
import json
import shutil
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from .backbones import build_backbone
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, config_hash, dump_effective_config
from .data import io as data_io
from .data.synth import synth_generate
from .finetune import FinetuneSettings, ROIHead, aggregate_core, finetune, predict_roi
from .metrics import MetricsReport, fold_metrics, select_threshold
from .multiscale import (
    CoreSequence,
    MOConfig,
    MultiscaleSchedule,
    multiscale_train,
    predict_core,
)
from .seeding import derive_seed
from .splits import FoldPlan, audit_leakage, nested_kfold, undersample_benign
from .vicreg import PretrainSchedule, Projector, VICRegWeights, pretrain

STAGE_ORDER = ("synth", "split", "pretrain", "finetune", "multiscale",
               "evaluate", "report")


class StageError(RuntimeError):
    pass


@dataclass
class CoreEntry:
    core_id: str
    patient_id: str
    center_id: str
    label: int
    involvement: float


class RunContext:
    """Run directory plus the manifest that records stage status and
    every file the run writes."""

    def __init__(self, run_dir, config: ExperimentConfig):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.hash = config_hash(config)
        self.manifest_path = self.run_dir / "manifest.json"
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text())
        else:
            self.manifest = {
                "config_hash": self.hash,
                "seed": config.seed,
                "created": datetime.now(timezone.utc).isoformat(),
                "stages": {},
                "files": [],
            }
        self._files = set(self.manifest["files"])

    # -- file bookkeeping -------------------------------------------------
    def path(self, *parts) -> Path:
        return self.run_dir.joinpath(*parts)

    def record(self, path) -> Path:
        rel = str(Path(path).relative_to(self.run_dir))
        if rel not in self._files:
            self._files.add(rel)
            self.manifest["files"].append(rel)
        return Path(path)

    def write_text(self, rel, text: str) -> Path:
        path = self.path(rel)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        return self.record(path)

    def write_json(self, rel, obj) -> Path:
        return self.write_text(rel, json.dumps(obj, indent=1))

    def record_tree(self, root) -> None:
        for p in sorted(Path(root).rglob("*")):
            if p.is_file():
                self.record(p)

    # -- stage bookkeeping -------------------------------------------------
    def stage_done(self, name: str) -> bool:
        entry = self.manifest["stages"].get(name)
        return bool(entry and entry.get("status") == "done"
                    and entry.get("config_hash") == self.hash)

    def mark(self, name: str, status: str, error: str | None = None) -> None:
        entry = {"status": status, "config_hash": self.hash}
        if error:
            entry["error"] = error
        self.manifest["stages"][name] = entry
        self.save_manifest()

    def save_manifest(self) -> None:
        self.manifest_path.write_text(json.dumps(self.manifest, indent=1))


# ---------------------------------------------------------------------------
# dataset access


def dataset_dir(ctx: RunContext) -> Path:
    if ctx.config.dataset.manifest is not None:
        return Path(ctx.config.dataset.manifest).parent
    return ctx.path("dataset")


def load_core_entries(ctx: RunContext) -> list[CoreEntry]:
    manifest = data_io.load_manifest(dataset_dir(ctx))
    return [CoreEntry(e["core_id"], e["patient_id"], e["center_id"],
                      e["label"], e["involvement"])
            for e in manifest["cores"]]


class LazyPatchSet:
    """Disk-backed ROI patch collection; indexable like an array of
    [256, 256] patches without holding everything in memory."""

    def __init__(self, root, core_ids, n_patches=55):
        self.root = Path(root)
        self.index = [(cid, i) for cid in core_ids for i in range(n_patches)]

    def __len__(self):
        return len(self.index)

    def _load(self, flat_idx):
        cid, i = self.index[flat_idx]
        return data_io.read_tensor(self.root / "cores" / cid / f"roi_{i:03d}.bin")

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            return self._load(int(key))
        if isinstance(key, slice):
            return np.stack([self._load(i) for i in range(*key.indices(len(self)))])
        return np.stack([self._load(int(i)) for i in np.asarray(key)])


def _load_core_stack(ctx: RunContext, core_id: str) -> np.ndarray:
    return data_io.load_core_rois(dataset_dir(ctx), core_id)


# ---------------------------------------------------------------------------
# stages


def stage_synth(ctx: RunContext) -> None:
    if ctx.config.dataset.manifest is not None:
        return   # external dataset; nothing to generate
    cores = synth_generate(ctx.config.dataset.synthetic)
    out = ctx.path("dataset")
    data_io.save_dataset(cores, out)
    ctx.record_tree(out)


def stage_split(ctx: RunContext) -> None:
    entries = load_core_entries(ctx)
    patients = sorted({(e.patient_id, e.center_id) for e in entries})
    plan = nested_kfold(patients, ctx.config.k,
                        derive_seed(ctx.config.seed, "split"))
    report = audit_leakage(plan, entries)
    if not report.clean:
        raise StageError(f"fold plan leaks patients: {report.violations}")
    ctx.write_text("splits/fold_plan.json", plan.to_json())
    ctx.write_json("splits/audit.json", {
        "violations": report.violations,
        "unassigned_patients": report.unassigned_patients,
    })


def _plan(ctx) -> FoldPlan:
    path = ctx.path("splits/fold_plan.json")
    if not path.exists():
        raise StageError("no fold plan; run the split stage first")
    return FoldPlan.load(path)


def _leg_roles(ctx, leg_idx) -> dict[str, list[CoreEntry]]:
    plan = _plan(ctx)
    leg = plan.legs[leg_idx]
    fold_of = plan.assignments
    roles = {"train": [], "validation": [], "test": []}
    for entry in load_core_entries(ctx):
        fold = fold_of.get(entry.patient_id)
        if fold is None:
            continue
        if fold == leg.test:
            roles["test"].append(entry)
        elif fold == leg.validation:
            roles["validation"].append(entry)
        else:
            roles["train"].append(entry)
    return roles


def _leg_name(leg_idx) -> str:
    return f"leg{leg_idx:02d}"


def _build_encoder(ctx, leg_idx):
    return build_backbone(ctx.config.backbone,
                          seed=derive_seed(ctx.config.seed, "leg", leg_idx,
                                           "encoder"))


def _balanced_train(ctx, leg_idx, roles):
    return undersample_benign(
        roles["train"], derive_seed(ctx.config.seed, "leg", leg_idx, "undersample"))


def stage_pretrain(ctx: RunContext, leg_idx: int) -> None:
    cfg = ctx.config
    roles = _leg_roles(ctx, leg_idx)
    patches = LazyPatchSet(dataset_dir(ctx), [e.core_id for e in roles["train"]])
    encoder = _build_encoder(ctx, leg_idx)
    projector = Projector(encoder.feature_dim, cfg.pretrain.projector_hidden,
                          cfg.pretrain.projector_dim)
    schedule = PretrainSchedule(steps=cfg.pretrain.steps,
                                batch_size=cfg.pretrain.batch_size,
                                learning_rate=cfg.pretrain.learning_rate)
    history = pretrain(encoder, projector, patches, cfg.pretrain.augment,
                       VICRegWeights(), schedule,
                       seed=derive_seed(cfg.seed, "leg", leg_idx, "pretrain"))
    base = ctx.path("legs", _leg_name(leg_idx), "pretrain")
    save_checkpoint(base / "encoder.pt", encoder,
                    meta={"variant": cfg.backbone.variant, "stage": "pretrain"})
    ctx.record(base / "encoder.pt")
    ctx.write_json(base.relative_to(ctx.run_dir) / "log.json", history)


def _encoder_for_leg(ctx, leg_idx, prefer=("finetune", "pretrain")):
    """Encoder initialized from the most downstream available checkpoint."""
    encoder = _build_encoder(ctx, leg_idx)
    for stage in prefer:
        path = ctx.path("legs", _leg_name(leg_idx), stage, "encoder.pt")
        if path.exists():
            load_checkpoint(path, encoder)
            return encoder, stage
    return encoder, "init"


def stage_finetune(ctx: RunContext, leg_idx: int) -> None:
    cfg = ctx.config
    roles = _leg_roles(ctx, leg_idx)
    balanced = _balanced_train(ctx, leg_idx, roles)
    encoder, origin = _encoder_for_leg(ctx, leg_idx, prefer=("pretrain",))

    patches = LazyPatchSet(dataset_dir(ctx), [e.core_id for e in balanced])
    labels = np.repeat([e.label for e in balanced], 55)
    settings = FinetuneSettings(mode=cfg.finetune.mode,
                                epochs=cfg.finetune.epochs,
                                batch_size=cfg.finetune.batch_size,
                                learning_rate=cfg.finetune.learning_rate)
    torch.manual_seed(derive_seed(cfg.seed, "leg", leg_idx, "head"))
    head = ROIHead(encoder.feature_dim)
    history = finetune(encoder, head, patches, labels, settings,
                       seed=derive_seed(cfg.seed, "leg", leg_idx, "finetune"))

    base = ctx.path("legs", _leg_name(leg_idx), "finetune")
    save_checkpoint(base / "encoder.pt", encoder,
                    meta={"stage": "finetune", "initialized_from": origin})
    save_checkpoint(base / "head.pt", head, meta={"stage": "finetune"})
    ctx.record(base / "encoder.pt")
    ctx.record(base / "head.pt")
    rel = base.relative_to(ctx.run_dir)
    ctx.write_json(rel / "history.json", history)

    core_rows, roi_rows = [], []
    for role in ("validation", "test"):
        for entry in sorted(roles[role], key=lambda e: e.core_id):
            rois = _load_core_stack(ctx, entry.core_id)
            probs = predict_roi(encoder, head, rois)
            core_rows.append((entry.core_id, role, entry.label,
                              aggregate_core(probs)))
            roi_rows.extend((entry.core_id, i, float(p))
                            for i, p in enumerate(probs))
    ctx.write_text(rel / "core_predictions.csv", _predictions_csv(core_rows))
    ctx.write_text(rel / "roi_probabilities.csv", _roi_csv(roi_rows))


def _predictions_csv(rows) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["core_id", "role", "label", "probability"])
    for core_id, role, label, prob in rows:
        writer.writerow([core_id, role, label, f"{prob:.6f}"])
    return buf.getvalue()


def _roi_csv(rows) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["core_id", "roi_index", "probability"])
    for core_id, idx, prob in rows:
        writer.writerow([core_id, idx, f"{prob:.6f}"])
    return buf.getvalue()


def _read_predictions(path) -> list[dict]:
    if not Path(path).exists():
        raise StageError(f"missing predictions file {path}")
    with open(path) as fh:
        return [{"core_id": r["core_id"], "role": r["role"],
                 "label": int(r["label"]), "probability": float(r["probability"])}
                for r in csv.DictReader(fh)]


def _encode_core(encoder, rois, batch_size=16) -> np.ndarray:
    encoder.eval()
    outs = []
    with torch.no_grad():
        for i in range(0, len(rois), batch_size):
            x = torch.as_tensor(rois[i:i + batch_size],
                                dtype=torch.float32).unsqueeze(1)
            outs.append(encoder(x).numpy())
    return np.concatenate(outs).astype(np.float32)


def stage_multiscale(ctx: RunContext, leg_idx: int) -> None:
    cfg = ctx.config
    roles = _leg_roles(ctx, leg_idx)
    balanced = _balanced_train(ctx, leg_idx, roles)
    encoder, origin = _encoder_for_leg(ctx, leg_idx)

    leg_dir = ctx.path("legs", _leg_name(leg_idx))
    feat_dir = leg_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)

    def features_for(entry: CoreEntry) -> np.ndarray:
        path = feat_dir / f"{entry.core_id}.bin"
        if not path.exists():
            feats = _encode_core(encoder, _load_core_stack(ctx, entry.core_id))
            data_io.write_tensor(path, feats)
            meta = {"core_id": entry.core_id, "label": entry.label,
                    "feature_dim": int(feats.shape[1]), "n_rois": int(feats.shape[0]),
                    "encoder": origin}
            (feat_dir / f"{entry.core_id}.json").write_text(json.dumps(meta, indent=1))
        ctx.record(path)
        ctx.record(feat_dir / f"{entry.core_id}.json")
        return data_io.read_tensor(path)

    train_seqs = [CoreSequence(features_for(e), e.label, e.core_id)
                  for e in balanced]
    eval_entries = {role: sorted(roles[role], key=lambda e: e.core_id)
                    for role in ("validation", "test")}

    for gamma in cfg.multiscale.gammas:
        mo_config = MOConfig(gamma=gamma, depth=cfg.multiscale.depth,
                             hidden=cfg.multiscale.hidden,
                             heads=cfg.multiscale.heads, ffn=cfg.multiscale.ffn)
        schedule = MultiscaleSchedule(epochs=cfg.multiscale.epochs,
                                      batch_size=cfg.multiscale.batch_size,
                                      learning_rate=cfg.multiscale.learning_rate)
        model, roi_head, history = multiscale_train(
            train_seqs, mo_config, schedule,
            seed=derive_seed(cfg.seed, "leg", leg_idx, "multiscale", repr(gamma)))

        gdir = leg_dir / "multiscale" / f"gamma_{gamma:g}"
        save_checkpoint(gdir / "model.pt", model,
                        meta={"gamma": gamma, "stage": "multiscale"})
        save_checkpoint(gdir / "roi_head.pt", roi_head,
                        meta={"gamma": gamma, "stage": "multiscale"})
        ctx.record(gdir / "model.pt")
        ctx.record(gdir / "roi_head.pt")
        rel = gdir.relative_to(ctx.run_dir)
        ctx.write_json(rel / "history.json", history)

        core_rows = []
        for role, entries in eval_entries.items():
            for entry in entries:
                seq = CoreSequence(features_for(entry), entry.label, entry.core_id)
                prob, _ = predict_core(seq, model, roi_head)
                core_rows.append((entry.core_id, role, entry.label, prob))
        ctx.write_text(rel / "core_predictions.csv", _predictions_csv(core_rows))


def _gamma_label(gamma: float) -> str:
    return "bert" if gamma == 1.0 else f"bert+mo(gamma={gamma:g})"


def _configuration_rows(ctx) -> list[dict]:
    """The (scale, backbone, finetuning, predictions-path-template) rows
    this run produces, roi-scale first."""
    cfg = ctx.config
    rows = []
    if cfg.stages.roi_finetune:
        rows.append({
            "scale": "roi",
            "backbone": cfg.backbone.variant,
            "finetuning": "linear" if cfg.finetune.mode == "probe" else "mlp",
            "template": "legs/{leg}/finetune/core_predictions.csv",
        })
    if cfg.stages.multiscale:
        for gamma in cfg.multiscale.gammas:
            rows.append({
                "scale": "multiscale",
                "backbone": cfg.backbone.variant,
                "finetuning": _gamma_label(gamma),
                "template": f"legs/{{leg}}/multiscale/gamma_{gamma:g}/core_predictions.csv",
            })
    return rows


def stage_evaluate(ctx: RunContext) -> None:
    cfg = ctx.config
    plan = _plan(ctx)
    results = []
    for row in _configuration_rows(ctx):
        per_fold = []
        fold_details = []
        for leg_idx in range(plan.k):
            path = ctx.path(row["template"].format(leg=_leg_name(leg_idx)))
            preds = _read_predictions(path)
            test = [p for p in preds if p["role"] == "test"]
            scores = [p["probability"] for p in test]
            labels = [p["label"] for p in test]
            threshold = cfg.evaluate.threshold
            if cfg.evaluate.tune_threshold:
                val = [p for p in preds if p["role"] == "validation"]
                val_labels = [p["label"] for p in val]
                if len(set(val_labels)) == 2:
                    threshold = select_threshold(
                        [p["probability"] for p in val], val_labels)
            try:
                per_fold.append(fold_metrics(scores, labels, threshold=threshold))
            except ValueError as exc:
                raise StageError(
                    f"leg {leg_idx} ({row['finetuning']}): {exc}; "
                    f"the test fold needs both classes") from exc
            fold_details.append({"leg": leg_idx, "threshold": threshold,
                                 **per_fold[-1]})
        report = MetricsReport(per_fold=per_fold,
                               threshold=cfg.evaluate.threshold)
        results.append({
            "scale": row["scale"], "backbone": row["backbone"],
            "finetuning": row["finetuning"],
            "per_fold": fold_details,
            "aggregate": {k: {"mean": v[0], "std": v[1]}
                          for k, v in report.aggregate.items()},
        })
    ctx.write_json("metrics/metrics.json", results)
    ctx.write_text("metrics/metrics.csv", _metrics_csv(results))


def _metrics_csv(results) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scale", "backbone", "finetuning", "fold", "threshold",
                     "auroc", "balanced_accuracy", "sensitivity", "specificity"])
    metric_names = ("auroc", "balanced_accuracy", "sensitivity", "specificity")
    for row in results:
        for fold in row["per_fold"]:
            writer.writerow(
                [row["scale"], row["backbone"], row["finetuning"],
                 fold["leg"], f"{fold['threshold']:.6f}"]
                + [f"{fold[m]:.6f}" for m in metric_names])
        for stat in ("mean", "std"):
            writer.writerow(
                [row["scale"], row["backbone"], row["finetuning"], stat, ""]
                + [f"{row['aggregate'][m][stat]:.6f}" for m in metric_names])
    return buf.getvalue()


def stage_report(ctx: RunContext) -> None:
    from .report import emit_report

    paths = emit_report(ctx.run_dir, roc_plots=ctx.config.report.roc_plots)
    for p in paths:
        ctx.record(p)


# ---------------------------------------------------------------------------
# orchestration


def _run_stage(ctx: RunContext, name: str, fn, resume: bool) -> None:
    if resume and ctx.stage_done(name):
        return
    try:
        fn()
    except Exception as exc:
        ctx.mark(name, "failed", error=f"{type(exc).__name__}: {exc}")
        raise StageError(f"stage {name} failed: {exc}") from exc
    ctx.mark(name, "done")


def run_experiment(config: ExperimentConfig, run_dir=None, resume: bool = True,
                   fresh: bool = False) -> Path:
    """Execute every enabled stage for each fold leg; returns the run
    directory. With ``resume`` (default) completed stages with a matching
    config hash are skipped; ``fresh`` wipes the run directory first."""
    run_dir = Path(run_dir or config.output_dir)
    if fresh and run_dir.exists():
        shutil.rmtree(run_dir)
    ctx = RunContext(run_dir, config)
    ctx.write_text("effective_config.yaml", dump_effective_config(config))
    ctx.save_manifest()

    _run_stage(ctx, "synth", lambda: stage_synth(ctx), resume)
    _run_stage(ctx, "split", lambda: stage_split(ctx), resume)
    for leg_idx in range(config.k):
        leg = _leg_name(leg_idx)
        if config.stages.pretrain:
            _run_stage(ctx, f"{leg}/pretrain",
                       lambda i=leg_idx: stage_pretrain(ctx, i), resume)
        if config.stages.roi_finetune:
            _run_stage(ctx, f"{leg}/finetune",
                       lambda i=leg_idx: stage_finetune(ctx, i), resume)
        if config.stages.multiscale:
            _run_stage(ctx, f"{leg}/multiscale",
                       lambda i=leg_idx: stage_multiscale(ctx, i), resume)
    _run_stage(ctx, "evaluate", lambda: stage_evaluate(ctx), resume)
    _run_stage(ctx, "report", lambda: stage_report(ctx), resume)
    ctx.save_manifest()
    return run_dir
