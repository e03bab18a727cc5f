"""Experiment orchestration: pretrain -> fine-tune -> evaluate.

A run is described by one YAML config (see ``default_config`` for the full
schema and defaults) and owns an output directory. Every random draw in the
pipeline derives from the single master seed, so repeated runs produce
bit-identical checkpoints and reports.

Stages
------
pretrain   self-supervised: augmented views, branch alignment, and instance
           discrimination over pseudo-labels (the source-window indices),
           optimized with momentum SGD.
finetune   a small stratified label budget; either the episodic bi-level
           loop (default) or plain gradient descent when the bi-level
           ablation is switched off. Classifier and backbone receive
           distinct learning rates chosen by the budget.
evaluate   accuracy/confusion on the test split, optionally after the
           noise-plus-band-mask corruption protocol, plus an embedding
           export for external projection tools.
"""

from __future__ import annotations

import copy
import json
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import augment, datapipe, meta, model, objective
from . import tensor as T
from .errors import CapacityError, ConfigError, ContractError
from .spectral import Signal

CHECKPOINT_MAGIC = b"TFMC"
CHECKPOINT_VERSION = 1

# classifier/backbone learning rates per label budget
DEFAULT_BUDGET_RATES = {0.01: (0.05, 1e-4), 0.1: (1.0, 0.01)}


def default_config() -> dict:
    return {
        "dataset": {
            "manifest": None,  # path to a record manifest, or null for synthetic
            "synthetic": {
                "classes": [
                    {
                        "frequency_hz": 37.0,
                        "harmonic_amplitudes": [1.0, 0.5, 0.25],
                        "impulse_rate_hz": 0.0,
                        "impulse_amplitude": 0.0,
                    },
                    {
                        "frequency_hz": 61.0,
                        "harmonic_amplitudes": [1.0, 0.6, 0.3],
                        "impulse_rate_hz": 13.0,
                        "impulse_amplitude": 2.0,
                    },
                    {
                        "frequency_hz": 89.0,
                        "harmonic_amplitudes": [0.9, 0.7, 0.2],
                        "impulse_rate_hz": 23.0,
                        "impulse_amplitude": 2.0,
                    },
                ],
                "noise_sigma": 0.5,
                "record_length": 183_098,
                "sample_rate": 6000.0,
            },
            "records_per_class": 1,
            "window": 2048,
            "step": 850,
            "split_ratio": 0.7,
        },
        "augment": {
            "ops": list(augment.KNOWN_OPS),
            "op_probability": 0.5,
            "warp_scale_range": [0.5, 2.0],
            "warp_segment_range": [0.1, 0.5],
            "noise_scale": 0.05,
            "mask_fraction_range": [0.05, 0.15],
            "crop_length": None,
            "views_per_sample": 5,
        },
        "model": {
            "patch": 128,
            "d_model": 64,
            "d_proj": 32,
            "heads": 4,
            "depth": 2,
        },
        "loss": {
            "cls_time": 1.0,
            "cls_freq": 1.0,
            "meta": 1.0,
            "use_cross_corr": False,
            "cross_corr_off_diag": 5e-3,
            "stop_target": False,
        },
        "pretrain": {
            "iterations": 300,
            "batch_size": 16,
            "learning_rate": 0.02,
            "momentum": 0.9,
            "weight_decay": 1e-4,
        },
        "finetune": {
            "iterations": 60,
            "label_budget": 0.01,
            "order": "first",
            "inner_steps": 1,
            "tasks_per_batch": 4,
            "n_way": 3,
            "k_shot": 5,
            "n_query": 15,
            "budget_rates": {
                0.01: {"classifier": 0.05, "backbone": 1e-4},
                0.1: {"classifier": 1.0, "backbone": 0.01},
            },
            "classifier_rate": 0.05,  # used when the budget has no table entry
            "backbone_rate": 1e-4,
        },
        "ablation": {
            "bilevel": True,
            "frequency_task": True,
            "augmentation": True,
        },
        "eval": {
            "corrupt_noise_fraction": 0.5,
            "corrupt_variance": 10.0,
            "corrupt_mask_fraction": 0.05,
            "batch_rows": 64,
        },
        "run": {
            "master_seed": 0,
            "out_dir": "runs/default",
        },
    }


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict) and key not in (
            "budget_rates",
        ):
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str) -> dict:
    """Read a YAML run config, merge over defaults, and validate it."""
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} does not contain a config mapping")
    cfg = _merge(default_config(), doc)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    """Check every section against its module's preconditions."""
    try:
        ds = cfg["dataset"]
        if ds["manifest"] is None:
            synth_spec(cfg)
        if ds["window"] < 1 or ds["step"] < 1:
            raise ContractError("window and step must be >= 1")
        if not 0.0 < ds["split_ratio"] < 1.0:
            raise ContractError("split_ratio must lie in (0, 1)")
        aug = cfg["augment"]
        augment.AugPolicy(
            ops=tuple(aug["ops"]),
            op_probability=aug["op_probability"],
            warp_scale_range=tuple(aug["warp_scale_range"]),
            warp_segment_range=tuple(aug["warp_segment_range"]),
            noise_scale=aug["noise_scale"],
            mask_fraction_range=tuple(aug["mask_fraction_range"]),
            crop_length=aug["crop_length"],
            seed=0,
        )
        if aug["views_per_sample"] < 1:
            raise ContractError("views_per_sample must be >= 1")
        model_config(cfg, n_classes=2)
        objective.LossWeights(**cfg["loss"])
        pt = cfg["pretrain"]
        if pt["iterations"] < 0 or pt["batch_size"] < 1 or pt["learning_rate"] <= 0:
            raise ContractError("invalid pretrain section")
        ft = cfg["finetune"]
        meta.MetaConfig(
            inner_lr=ft["backbone_rate"],
            outer_lr=ft["backbone_rate"],
            inner_steps=ft["inner_steps"],
            order=ft["order"],
            tasks_per_batch=ft["tasks_per_batch"],
            n_way=ft["n_way"],
            k_shot=ft["k_shot"],
            n_query=ft["n_query"],
        )
        if not 0.0 < ft["label_budget"] <= 1.0:
            raise ContractError("label_budget must lie in (0, 1]")
        ev = cfg["eval"]
        if not 0.0 <= ev["corrupt_noise_fraction"] <= 1.0:
            raise ContractError("corrupt_noise_fraction must lie in [0, 1]")
        if not 0.0 <= ev["corrupt_mask_fraction"] <= 1.0:
            raise ContractError("corrupt_mask_fraction must lie in [0, 1]")
    except (ContractError, TypeError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def synth_spec(cfg: dict) -> datapipe.SynthSpec:
    s = cfg["dataset"]["synthetic"]
    return datapipe.SynthSpec(
        classes=[
            datapipe.ClassSpec(
                frequency_hz=c["frequency_hz"],
                harmonic_amplitudes=tuple(c["harmonic_amplitudes"]),
                impulse_rate_hz=c.get("impulse_rate_hz", 0.0),
                impulse_amplitude=c.get("impulse_amplitude", 0.0),
            )
            for c in s["classes"]
        ],
        noise_sigma=s["noise_sigma"],
        record_length=s["record_length"],
        sample_rate=s["sample_rate"],
    )


def model_config(cfg: dict, n_classes: int) -> model.ModelConfig:
    m = cfg["model"]
    return model.ModelConfig(
        window=cfg["dataset"]["window"],
        patch=m["patch"],
        d_model=m["d_model"],
        d_proj=m["d_proj"],
        heads=m["heads"],
        depth=m["depth"],
        n_classes=n_classes,
    )


def _seed(cfg: dict, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(cfg["run"]["master_seed"]), *key])


def _seed_int(cfg: dict, *key) -> int:
    return int(_seed(cfg, *key).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# metrics


def accuracy(pred, truth) -> float:
    """Fraction of positions where pred equals truth."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise ContractError("accuracy needs equal-length, non-empty inputs")
    return float(np.mean(pred == truth))


def confusion(pred, truth, n_classes: int) -> np.ndarray:
    """Counts matrix: entry (i, j) is truth-i predicted-j."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ContractError("confusion needs equal-length inputs")
    if pred.size and (
        pred.min() < 0 or pred.max() >= n_classes or truth.min() < 0 or truth.max() >= n_classes
    ):
        raise ContractError(f"labels out of range [0, {n_classes})")
    mat = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(mat, (truth, pred), 1)
    return mat


@dataclass
class MetricsReport:
    """Evaluation result; trace(confusion)/N always equals accuracy."""

    accuracy: float
    confusion: np.ndarray
    per_class_accuracy: dict[int, float]
    corrupted_accuracy: float | None = None
    corrupted_confusion: np.ndarray | None = None
    curves: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "per_class_accuracy": {str(k): v for k, v in self.per_class_accuracy.items()},
            "curves": self.curves,
        }
        if self.corrupted_accuracy is not None:
            out["corrupted_accuracy"] = self.corrupted_accuracy
            out["corrupted_confusion"] = self.corrupted_confusion.tolist()
        return out


def build_report(pred, truth, n_classes: int) -> MetricsReport:
    mat = confusion(pred, truth, n_classes)
    acc = accuracy(pred, truth)
    per_class = {}
    for c in range(n_classes):
        row = mat[c]
        per_class[c] = float(row[c] / row.sum()) if row.sum() else 0.0
    return MetricsReport(acc, mat, per_class)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    params: T.ParamSet
    stats: datapipe.NormStats
    config: dict
    step: int
    version: int = CHECKPOINT_VERSION


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    """Versioned binary: header, stats, config JSON, then named f64 arrays."""
    blob = json.dumps(ckpt.config, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", ckpt.version, ckpt.step))
        fh.write(
            struct.pack(
                "<ddB", ckpt.stats.mean, ckpt.stats.std, int(ckpt.stats.std_flagged)
            )
        )
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(ckpt.params)))
        for name, p in ckpt.params.items():
            encoded = name.encode()
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", p.data.ndim))
            fh.write(struct.pack(f"<{p.data.ndim}Q", *p.data.shape))
            fh.write(p.data.astype("<f8").tobytes())


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ContractError(f"{path} is not a tfmeta checkpoint")
        version, step = struct.unpack("<IQ", fh.read(12))
        if version != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint version {version}")
        mean, std, flagged = struct.unpack("<ddB", fh.read(17))
        (blob_len,) = struct.unpack("<I", fh.read(4))
        config = json.loads(fh.read(blob_len).decode())
        (count,) = struct.unpack("<I", fh.read(4))
        params = T.ParamSet()
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode()
            (rank,) = struct.unpack("<I", fh.read(4))
            dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
            size = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(dims)
            params[name] = T.parameter(data.copy())
    stats = datapipe.NormStats(mean, std, bool(flagged))
    return Checkpoint(params, stats, config, step, version)


# ---------------------------------------------------------------------------
# data preparation


@dataclass
class PipelineData:
    train: datapipe.WindowDataset  # raw windows
    test: datapipe.WindowDataset
    train_norm: datapipe.WindowDataset
    test_norm: datapipe.WindowDataset
    stats: datapipe.NormStats
    n_classes: int


def prepare_data(cfg: dict) -> PipelineData:
    ds_cfg = cfg["dataset"]
    if ds_cfg["manifest"]:
        records = datapipe.load_manifest(ds_cfg["manifest"])
    else:
        records = datapipe.synth_generate(
            synth_spec(cfg),
            records_per_class=ds_cfg["records_per_class"],
            seed=_seed_int(cfg, 0),
        )
    windows = datapipe.build_windows(records, ds_cfg["window"], ds_cfg["step"])
    train, test = datapipe.split(windows, ds_cfg["split_ratio"], seed=_seed(cfg, 1))
    train_n, test_n, stats = datapipe.normalize(train, test)
    classes = windows.classes()
    if not classes:
        raise CapacityError("dataset has no labeled classes")
    return PipelineData(train, test, train_n, test_n, stats, len(classes))


# ---------------------------------------------------------------------------
# pretraining


def _augmented_batch(
    windows: np.ndarray,
    indices: np.ndarray,
    sample_rate: float,
    policy: augment.AugPolicy | None,
    views_per_sample: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Stack augmented views (or the raw windows when augmentation is off)."""
    if policy is None:
        return windows[indices].copy(), np.asarray(indices, dtype=np.int64)
    rows = []
    pseudo = []
    for idx in indices:
        sig = Signal(windows[idx], sample_rate)
        for view in augment.sample_views(
            sig, policy, views_per_sample, source_index=int(idx)
        ):
            rows.append(view.signal.samples)
            pseudo.append(idx)
    return np.stack(rows), np.asarray(pseudo, dtype=np.int64)


def _policy_for_iteration(cfg: dict, iteration: int) -> augment.AugPolicy | None:
    if not cfg["ablation"]["augmentation"]:
        return None
    aug = cfg["augment"]
    seed = int(_seed(cfg, 2, iteration).generate_state(1, np.uint64)[0])
    return augment.AugPolicy(
        ops=tuple(aug["ops"]),
        op_probability=aug["op_probability"],
        warp_scale_range=tuple(aug["warp_scale_range"]),
        warp_segment_range=tuple(aug["warp_segment_range"]),
        noise_scale=aug["noise_scale"],
        mask_fraction_range=tuple(aug["mask_fraction_range"]),
        crop_length=aug["crop_length"],
        seed=seed,
    )


def _write_curve(path: str, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in row))
            fh.write("\n")


def pretrain(cfg: dict, out_dir: str | None = None) -> Checkpoint:
    """Self-supervised stage; returns (and saves) the pretrained checkpoint."""
    out_dir = out_dir or cfg["run"]["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    data = prepare_data(cfg)
    mcfg = model_config(cfg, data.n_classes)
    weights = objective.LossWeights(**cfg["loss"])
    freq_on = cfg["ablation"]["frequency_task"]
    n_inst = len(data.train_norm)
    params = model.init_params(mcfg, n_instance_ids=n_inst, seed=_seed(cfg, 3))
    pt = cfg["pretrain"]
    state = T.SgdState(
        learning_rate=pt["learning_rate"],
        momentum=pt["momentum"],
        weight_decay=pt["weight_decay"],
    )

    def is_trainable(name: str) -> bool:
        # the fault classifier waits for fine-tuning; branches that receive
        # no pretraining signal stay at initialization
        if name.startswith("cls/"):
            return False
        if not freq_on and (name.startswith("f/") or name.startswith("head/")):
            return False
        if freq_on and weights.stop_target and name.startswith("head/gt/"):
            return False
        return True

    trainable = params.subset(is_trainable)
    batch_size = min(pt["batch_size"], n_inst)
    curve = []
    for it in range(pt["iterations"]):
        rng = np.random.default_rng(_seed(cfg, 4, it))
        indices = rng.choice(n_inst, size=batch_size, replace=False)
        policy = _policy_for_iteration(cfg, it)
        views, pseudo = _augmented_batch(
            data.train_norm.windows,
            indices,
            data.train_norm.sample_rate,
            policy,
            cfg["augment"]["views_per_sample"],
        )
        out = model.forward_branches(views, params, mcfg, instance=True, freq=freq_on)
        cls_t = T.cross_entropy(out.inst_time, pseudo)
        if freq_on:
            align = objective.align_loss(out.z_time, out.z_freq, weights.stop_target)
            cls_f = T.cross_entropy(out.inst_freq, pseudo)
        else:
            align = T.Tensor(0.0)
            cls_f = T.Tensor(0.0)
        loss = objective.final_loss(align, cls_t, cls_f, T.Tensor(0.0), weights)
        if weights.use_cross_corr and freq_on:
            loss = T.add(
                loss,
                objective.cross_corr_loss(
                    out.z_time, out.z_freq, weights.cross_corr_off_diag
                ),
            )
        params.zero_grads()
        T.backward(loss)
        T.sgd_step(trainable, state)
        curve.append((it, loss.item(), align.item(), cls_t.item(), cls_f.item()))
    _write_curve(
        os.path.join(out_dir, "pretrain_curve.csv"),
        ["iteration", "loss", "align", "cls_time", "cls_freq"],
        curve,
    )
    ckpt = Checkpoint(params, data.stats, cfg, step=pt["iterations"])
    save_checkpoint(os.path.join(out_dir, "pretrained.ckpt"), ckpt)
    return ckpt


# ---------------------------------------------------------------------------
# fine-tuning


def _budget_rates(cfg: dict, budget: float) -> tuple[float, float]:
    ft = cfg["finetune"]
    table = ft.get("budget_rates") or {}
    for key, rates in table.items():
        if abs(float(key) - budget) < 1e-12:
            return float(rates["classifier"]), float(rates["backbone"])
    return float(ft["classifier_rate"]), float(ft["backbone_rate"])


def _episode_sizes(cfg: dict, labeled: datapipe.WindowDataset) -> tuple[int, int, int]:
    counts = labeled.per_class_counts()
    n_min = min(counts.values())
    if n_min < 2:
        smallest = min(counts, key=counts.get)
        raise CapacityError(
            f"class {smallest} has {n_min} labeled window(s); "
            "episodes need at least 2 (disjoint support and query)"
        )
    ft = cfg["finetune"]
    n_way = min(ft["n_way"], len(counts))
    k_shot = min(ft["k_shot"], max(1, n_min // 2))
    n_query = min(ft["n_query"], n_min - k_shot)
    return n_way, k_shot, n_query


def _finetune_loss_fn(mcfg, weights, freq_on):
    def loss_fn(params, x, y):
        out = model.forward_branches(x, params, mcfg, freq=freq_on)
        loss = T.scale(T.cross_entropy(out.logits_time, y), weights.cls_time)
        if freq_on:
            loss = T.add(
                loss, T.scale(T.cross_entropy(out.logits_freq, y), weights.cls_freq)
            )
            loss = T.add(loss, objective.align_loss(out.z_time, out.z_freq))
        return loss

    return loss_fn


def finetune(
    ckpt: Checkpoint,
    cfg: dict,
    label_budget: float | None = None,
    out_dir: str | None = None,
) -> Checkpoint:
    """Adapt the pretrained model on a stratified label budget."""
    out_dir = out_dir or cfg["run"]["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    budget = cfg["finetune"]["label_budget"] if label_budget is None else label_budget
    if not 0.0 < budget <= 1.0:
        raise ConfigError(f"label budget must lie in (0, 1], got {budget}")
    data = prepare_data(cfg)
    mcfg = model_config(cfg, data.n_classes)
    weights = objective.LossWeights(**cfg["loss"])
    freq_on = cfg["ablation"]["frequency_task"]
    labeled = datapipe.label_budget(data.train_norm, budget, seed=_seed(cfg, 5))
    cls_rate, bb_rate = _budget_rates(cfg, budget)
    params = ckpt.params.detached_copy()  # never mutate the input checkpoint
    loss_fn = _finetune_loss_fn(mcfg, weights, freq_on)
    ft = cfg["finetune"]
    curve = []
    if cfg["ablation"]["bilevel"]:
        n_way, k_shot, n_query = _episode_sizes(cfg, labeled)
        overrides = {p: cls_rate for p in model.CLASSIFIER_PREFIXES}
        mconf = meta.MetaConfig(
            inner_lr=bb_rate,
            outer_lr=bb_rate,
            inner_steps=ft["inner_steps"],
            order=ft["order"],
            tasks_per_batch=ft["tasks_per_batch"],
            n_way=n_way,
            k_shot=k_shot,
            n_query=n_query,
            inner_lr_overrides=dict(overrides),
            outer_lr_overrides=dict(overrides),
        )

        def count_correct(p, x, y):
            return int(np.sum(model.predict(x, p, mcfg, use_freq=freq_on) == y))

        seed = int(_seed(cfg, 6).generate_state(1, np.uint64)[0])
        history = meta.meta_train(
            labeled, params, mconf, ft["iterations"], loss_fn, seed, count_correct
        )
        curve = [
            (h["iteration"], h["query_loss"], h["query_accuracy"]) for h in history
        ]
    else:
        # bi-level ablation: plain full-batch gradient descent, same loss,
        # same per-group rates
        x, y = labeled.windows, labeled.labels
        names = params.names()
        for it in range(ft["iterations"]):
            loss = loss_fn(params, x, y)
            grads = T.grad(loss, [params[n] for n in names], allow_unused=True)
            for name, g in zip(names, grads):
                if g is None:
                    continue
                rate = cls_rate if name.startswith(model.CLASSIFIER_PREFIXES) else bb_rate
                params[name].data -= rate * g.data
            with T.no_grad():
                preds = model.predict(x, params, mcfg, use_freq=freq_on)
            curve.append((it, loss.item(), accuracy(preds, y)))
    _write_curve(
        os.path.join(out_dir, "finetune_curve.csv"),
        ["iteration", "query_loss", "query_accuracy"],
        curve,
    )
    tuned = Checkpoint(params, ckpt.stats, cfg, step=ckpt.step + ft["iterations"])
    save_checkpoint(os.path.join(out_dir, "finetuned.ckpt"), tuned)
    return tuned


# ---------------------------------------------------------------------------
# evaluation


def _predict_dataset(
    windows: np.ndarray, params: T.ParamSet, mcfg, use_freq: bool, batch_rows: int
) -> np.ndarray:
    preds = []
    for start in range(0, len(windows), batch_rows):
        preds.append(
            model.predict(windows[start : start + batch_rows], params, mcfg, use_freq)
        )
    return np.concatenate(preds)


def _export_embeddings(
    path: str, windows: np.ndarray, labels: np.ndarray, params, mcfg
) -> None:
    rows = []
    with T.no_grad():
        for start in range(0, len(windows), 64):
            out = model.forward_branches(
                windows[start : start + 64], params, mcfg, freq=False
            )
            rows.append(out.z_time.data)
    z = np.concatenate(rows)
    with open(path, "w") as fh:
        fh.write("index,label," + ",".join(f"z{i}" for i in range(z.shape[1])) + "\n")
        for i, (label, row) in enumerate(zip(labels, z)):
            fh.write(f"{i},{int(label)}," + ",".join(f"{v:.10g}" for v in row) + "\n")


def evaluate(
    ckpt: Checkpoint,
    cfg: dict,
    corrupted: bool = False,
    out_dir: str | None = None,
) -> MetricsReport:
    """Clean (and optionally corrupted) test-split evaluation."""
    out_dir = out_dir or cfg["run"]["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    data = prepare_data(cfg)
    if len(data.test) == 0:
        raise CapacityError("test split is empty")
    mcfg = model_config(cfg, data.n_classes)
    use_freq = cfg["ablation"]["frequency_task"]
    batch_rows = cfg["eval"]["batch_rows"]
    clean_windows = ckpt.stats.apply(data.test.windows)
    preds = _predict_dataset(clean_windows, ckpt.params, mcfg, use_freq, batch_rows)
    report = build_report(preds, data.test.labels, mcfg.n_classes)
    if corrupted:
        ev = cfg["eval"]
        noisy = datapipe.corrupt(
            data.test,
            noise_fraction=ev["corrupt_noise_fraction"],
            variance=ev["corrupt_variance"],
            mask_fraction=ev["corrupt_mask_fraction"],
            seed=_seed_int(cfg, 7),
        )
        noisy_windows = ckpt.stats.apply(noisy.windows)
        noisy_preds = _predict_dataset(
            noisy_windows, ckpt.params, mcfg, use_freq, batch_rows
        )
        noisy_report = build_report(noisy_preds, noisy.labels, mcfg.n_classes)
        report.corrupted_accuracy = noisy_report.accuracy
        report.corrupted_confusion = noisy_report.confusion
    _export_embeddings(
        os.path.join(out_dir, "embeddings.csv"),
        clean_windows,
        data.test.labels,
        ckpt.params,
        mcfg,
    )
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    return report
