"""Command line entry point: demo asset generation, training, labeling,
evaluation, and artifact export.

Exit codes: 0 ok, 2 config/file error, 3 checkpoint shape mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import character as ch
from . import motion as mo
from . import objects as ob
from .config import ConfigError, RunConfig, load_config, write_config
from .neural import ShapeMismatchError

DEMO_SEAT_HEIGHT = 0.45
DEMO_SIT_X = 1.2


def build_demo_assets(out_dir, seat_height: float = DEMO_SEAT_HEIGHT,
                      sit_x: float = DEMO_SIT_X) -> dict:
    """Writes the character model, object catalog, and procedural clips that
    the demo configs reference."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = ch.default_character()
    model.save(out / "character.json")
    ob.save_catalog(ob.default_catalog(), out / "catalog.json")
    sit = mo.translate_clip(
        mo.synth_sit(seat_height, 0.0, (0.8, 0.8, 2.0, 0.8), model=model, clip_id=0),
        sit_x)
    mo.save_clip(sit, out / "sit.json")
    two = mo.translate_clip(mo.make_two_sit(seat_height, 2.5, model=model, clip_id=2),
                            sit_x)
    mo.save_clip(two, out / "two_sit.json")
    mo.save_clip(mo.synth_platform(0.5, model=model, clip_id=1), out / "platform.json")
    return {"character": str(out / "character.json"),
            "catalog": str(out / "catalog.json"),
            "sit": str(out / "sit.json"),
            "two_sit": str(out / "two_sit.json"),
            "platform": str(out / "platform.json"),
            "sit_x": sit_x}


def demo_configs(assets: dict, out_dir, quick: bool = False) -> dict:
    out = Path(out_dir)
    base = dict(character_model=assets["character"], clip=assets["sit"],
                catalog=assets["catalog"], oracle_object=1,
                oracle_tx=assets["sit_x"])
    imit = RunConfig(**base, out_dir=str(out / "run_imitator"),
                     iterations=16 if quick else 96)
    joint = RunConfig(**base, out_dir=str(out / "run_joint"),
                      iterations=32 if quick else 320)
    write_config(imit, out / "demo_imitator.cfg",
                 header="# imitator-only training against the oracle layout")
    write_config(joint, out / "demo_joint.cfg",
                 header="# joint scene-layout + imitator optimization")
    return {"imitator": str(out / "demo_imitator.cfg"),
            "joint": str(out / "demo_joint.cfg")}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="override out_dir")
    p.add_argument("--iterations", type=int, default=None)


def _overrides(args) -> dict:
    ov = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        ov[k.strip()] = v.strip()
    if args.seed is not None:
        ov["seed"] = args.seed
    if args.out is not None:
        ov["out_dir"] = args.out
    if getattr(args, "iterations", None) is not None:
        ov["iterations"] = args.iterations
    return ov


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="scenefit",
        description="Recover scene layouts from reference character motion "
                    "with a physics-in-the-loop dual optimization.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_demo = sub.add_parser("demo", help="generate assets + configs, then train")
    p_demo.add_argument("--out", default="demo", help="output directory")
    p_demo.add_argument("--quick", action="store_true",
                        help="tiny training budget (plumbing check)")
    p_demo.add_argument("--skip-train", action="store_true",
                        help="only write assets and configs")
    p_demo.add_argument("--seed", type=int, default=0)

    for name, help_text in (("train-imitator", "train the motion imitator "
                             "against the oracle layout"),
                            ("train-joint", "joint layout + imitator training")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "train-joint":
            p.add_argument("--no-contact-gate", action="store_true",
                           help="ablation: drop the contact gate")
            p.add_argument("--no-prior", action="store_true",
                           help="ablation: drop the pose-prior guidance")

    p_label = sub.add_parser("label-contacts", help="pseudo contact labels for a clip")
    _add_common(p_label)
    p_label.add_argument("--run", required=True, help="run directory with checkpoint")
    p_label.add_argument("--clip", default=None, help="clip to label (default: run clip)")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("--run", required=True, help="run directory with checkpoint")

    p_export = sub.add_parser("export", help="rewrite artifacts from report.json")
    p_export.add_argument("--run", required=True)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    from . import training as tr

    try:
        if args.command == "demo":
            assets = build_demo_assets(args.out)
            cfgs = demo_configs(assets, args.out, quick=args.quick)
            print(json.dumps({"assets": assets, "configs": cfgs}, indent=1))
            if not args.skip_train:
                cfg = load_config(cfgs["joint"], {"seed": args.seed})
                report = tr.train_joint(cfg)
                print(json.dumps(report.final, indent=1))
            return 0
        if args.command == "train-imitator":
            cfg = load_config(args.config, _overrides(args))
            report = tr.train_imitator(cfg)
            print(json.dumps(report.final, indent=1))
            return 0
        if args.command == "train-joint":
            ov = _overrides(args)
            if args.no_contact_gate:
                ov["contact_gate"] = False
            if args.no_prior:
                ov["pose_prior"] = False
            cfg = load_config(args.config, ov)
            report = tr.train_joint(cfg)
            print(json.dumps(report.final, indent=1))
            return 0
        if args.command == "label-contacts":
            cfg = load_config(args.config, _overrides(args))
            doc = tr.label_contacts_run(cfg, args.run, args.clip)
            print(json.dumps(doc, indent=1))
            return 0
        if args.command == "eval":
            cfg = load_config(args.config, _overrides(args))
            results = tr.evaluate_run(cfg, args.run)
            print(json.dumps(results, indent=1))
            return 0
        if args.command == "export":
            written = tr.export_artifacts(args.run)
            print(json.dumps({"written": written}, indent=1))
            return 0
        parser.error(f"unknown command {args.command}")
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ShapeMismatchError as exc:
        print(f"checkpoint mismatch: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
