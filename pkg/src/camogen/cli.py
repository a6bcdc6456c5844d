"""``camogen`` command line: train-classifier, train-gan, synthesize, evaluate.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .ckpt import Checkpoint
from .codmetrics import evaluate_directory
from .dataio import ClassTag, load_dataset, load_image_folder
from .synth import expand_from_checkpoint
from .trainloop import TrainingDiverged, train_classifier, train_gan

log = logging.getLogger("camogen")
ECHO_FILE = "config.echo.yaml"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="camogen", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", type=Path, help="YAML config file")
        sp.add_argument("--out", type=Path, required=True, help="run directory")
        sp.add_argument("overrides", nargs="*", metavar="key=value")

    sp = sub.add_parser("train-classifier", help="pretrain the camouflage classifier")
    sp.add_argument("--camo-dir", type=Path, required=True)
    sp.add_argument("--normal-dir", type=Path, required=True)
    with_config(sp)

    sp = sub.add_parser("train-gan", help="train generator and discriminator")
    sp.add_argument("--data-dir", type=Path, required=True)
    sp.add_argument("--classifier-ckpt", type=Path, required=True)
    sp.add_argument("--resume", type=Path, help="checkpoint directory to continue from")
    with_config(sp)

    sp = sub.add_parser("synthesize", help="expand a dataset with a trained generator")
    sp.add_argument("--generator-ckpt", type=Path, required=True)
    sp.add_argument("--data-dir", type=Path, required=True)
    sp.add_argument("--per-sample", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--image-size", type=int, help="defaults to the checkpoint's training size")
    sp.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("evaluate", help="score predictions against ground-truth masks")
    sp.add_argument("--pred-dir", type=Path, required=True)
    sp.add_argument("--gt-dir", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True, help="report JSON path")
    return p


def _run_dir(out: Path, cfg: dict) -> Path:
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "logs").mkdir(exist_ok=True)
    cfgmod.dump_config(cfg, out / ECHO_FILE)
    return out


def cmd_train_classifier(args, cfg):
    train, _, specs = cfgmod.build_objects(cfg)
    out = _run_dir(args.out, cfg)
    camo = load_image_folder(args.camo_dir, ClassTag.CAMOUFLAGE)
    normal = load_image_folder(args.normal_dir, ClassTag.NORMAL)
    with open(out / "logs" / "classifier.jsonl", "w") as f:
        ckpt = train_classifier(camo, normal, train, specs.classifier, max_steps=cfg["classifier_steps"],
                                on_step=lambda r: f.write(json.dumps(r) + "\n"))
    ckpt.save(out / "checkpoints" / "classifier")
    print(f"classifier accuracy {ckpt.metrics['accuracy']:.4f} -> {out / 'checkpoints' / 'classifier'}")


def cmd_train_gan(args, cfg):
    train, weights, specs = cfgmod.build_objects(cfg)
    out = _run_dir(args.out, cfg)
    data = load_dataset(args.data_dir)
    classifier = Checkpoint.load(args.classifier_ckpt)
    resume = Checkpoint.load(args.resume) if args.resume else None
    ckdir = out / "checkpoints"
    with open(out / "logs" / "steps.jsonl", "a") as f:
        def on_step(rec):
            f.write(json.dumps(rec) + "\n")
            f.flush()
        try:
            for ck in train_gan(data, classifier, train, weights, specs, resume=resume,
                                max_steps=cfg["max_steps"], on_step=on_step):
                ck.save(ckdir / "latest")
                if (ck.epoch + 1) % cfg["save_every"] == 0:
                    ck.save(ckdir / f"epoch_{ck.epoch:04d}")
                log.info("epoch %d done, step %d", ck.epoch, ck.metrics.get("step", 0))
        except TrainingDiverged as e:
            if e.checkpoint is not None:
                e.checkpoint.save(ckdir / "diverged")
            raise
    print(f"generator checkpoint -> {ckdir / 'latest'}")


def cmd_synthesize(args, cfg):
    out: Path = args.out
    if out.exists() and any(out.iterdir()):
        raise FileExistsError(f"output directory {out} exists and is not empty")
    data = load_dataset(args.data_dir)
    manifest = expand_from_checkpoint(args.generator_ckpt, data, args.per_sample, args.seed, out,
                                      args.image_size)
    cfgmod.dump_config({"generator_ckpt": str(args.generator_ckpt), "data_dir": str(args.data_dir),
                        "per_sample": args.per_sample, "seed": args.seed, "image_size": args.image_size},
                       out / ECHO_FILE)
    print(f"wrote {len(manifest.entries)} synthesized pairs to {out}")


def cmd_evaluate(args, cfg):
    report = evaluate_directory(args.pred_dir, args.gt_dir)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    report.save(args.out)
    print(report.table())


COMMANDS = {
    "train-classifier": cmd_train_classifier,
    "train-gan": cmd_train_gan,
    "synthesize": cmd_synthesize,
    "evaluate": cmd_evaluate,
}


def parse_and_dispatch(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
        cfg = None
        if hasattr(args, "overrides"):
            cfg = cfgmod.effective_config(args.config, args.overrides)
            cfgmod.build_objects(cfg)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except (cfgmod.ConfigError, OSError) as e:
        print(f"camogen: config error: {e}", file=sys.stderr)
        return 1
    try:
        COMMANDS[args.command](args, cfg)
    except Exception as e:  # noqa: BLE001 - top-level reporter
        log.exception("command failed")
        print(f"camogen: {args.command} failed: {e}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
