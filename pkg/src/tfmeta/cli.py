"""Command-line entry points.

    tfmeta gen-data   --spec spec.yaml --out data/ --seed 0
    tfmeta pretrain   --config run.yaml
    tfmeta finetune   --config run.yaml --checkpoint runs/x/pretrained.ckpt \
                      --label-budget 0.01
    tfmeta eval       --config run.yaml --checkpoint runs/x/finetuned.ckpt \
                      [--corrupt]
    tfmeta gradcheck  [--seeds 5]

Exit codes: 0 success, 2 config validation failure, 3 capacity/precondition
failure, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

import yaml

from . import datapipe, harness
from .errors import CapacityError, ConfigError, ContractError, NumericError


def _cmd_gen_data(args) -> int:
    with open(args.spec) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict) or "classes" not in doc:
        raise ConfigError(f"{args.spec} is not a synthetic dataset spec")
    records_per_class = int(doc.pop("records_per_class", 1))
    try:
        spec = datapipe.SynthSpec(
            classes=[
                datapipe.ClassSpec(
                    frequency_hz=c["frequency_hz"],
                    harmonic_amplitudes=tuple(c.get("harmonic_amplitudes", (1.0,))),
                    impulse_rate_hz=c.get("impulse_rate_hz", 0.0),
                    impulse_amplitude=c.get("impulse_amplitude", 0.0),
                )
                for c in doc["classes"]
            ],
            noise_sigma=doc.get("noise_sigma", 0.5),
            record_length=int(doc.get("record_length", 183_098)),
            sample_rate=doc.get("sample_rate", 6000.0),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad synthetic spec: {exc}") from exc
    records = datapipe.synth_generate(spec, records_per_class, seed=args.seed)
    manifest = datapipe.save_records(records, args.out)
    print(f"wrote {len(records)} records; manifest: {manifest}")
    return 0


def _cmd_pretrain(args) -> int:
    cfg = harness.load_config(args.config)
    ckpt = harness.pretrain(cfg)
    out = cfg["run"]["out_dir"]
    print(f"pretrained {ckpt.step} iterations; checkpoint: {out}/pretrained.ckpt")
    return 0


def _cmd_finetune(args) -> int:
    cfg = harness.load_config(args.config)
    ckpt = harness.load_checkpoint(args.checkpoint)
    tuned = harness.finetune(ckpt, cfg, label_budget=args.label_budget)
    out = cfg["run"]["out_dir"]
    print(f"fine-tuned to step {tuned.step}; checkpoint: {out}/finetuned.ckpt")
    return 0


def _cmd_eval(args) -> int:
    cfg = harness.load_config(args.config)
    ckpt = harness.load_checkpoint(args.checkpoint)
    report = harness.evaluate(ckpt, cfg, corrupted=args.corrupt)
    print(f"accuracy: {report.accuracy:.4f}")
    if report.corrupted_accuracy is not None:
        print(f"corrupted accuracy: {report.corrupted_accuracy:.4f}")
    print(f"report: {cfg['run']['out_dir']}/report.json")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_all

    rows = run_all(seeds=range(args.seeds))
    failures = 0
    for name, seed, err, ok in rows:
        status = "ok" if ok else "FAIL"
        print(f"{status:<5} {name:<16} seed={seed} rel_err={err:.3e}")
        failures += not ok
    if failures:
        print(f"{failures} gradient check(s) failed", file=sys.stderr)
        return 4
    print(f"all {len(rows)} gradient checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tfmeta",
        description="few-shot vibration fault diagnosis (time-frequency meta-learning)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic rotor dataset")
    g.add_argument("--spec", required=True, help="YAML synthetic dataset spec")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("pretrain", help="self-supervised pretraining")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_pretrain)

    f = sub.add_parser("finetune", help="label-budget fine-tuning")
    f.add_argument("--config", required=True)
    f.add_argument("--checkpoint", required=True)
    f.add_argument("--label-budget", type=float, default=None)
    f.set_defaults(func=_cmd_finetune)

    e = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    e.add_argument("--config", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--corrupt", action="store_true")
    e.set_defaults(func=_cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    c.add_argument("--seeds", type=int, default=5)
    c.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CapacityError, ContractError) as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
