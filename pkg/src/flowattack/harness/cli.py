"""Command-line pipeline: gen-data, train-flow, train-classifier, attack, eval, sample, dump-images.

Artifacts live in ``--out`` (default ``[io] out``)::

    train.nfds, test.nfds                 datasets
    flow.nfck                             trained flow
    classifier.nfck, classifier_defended.nfck
    report_<attack>[_defended].json/.csv  evaluation reports
    adv_<attack>[_defended].nfds          adversarial images of the evaluated examples
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .. import data as data_mod
from ..attack import AttackConfig, NESConfig, evaluate
from ..attack.latent import latent_attack
from ..attack.nes import nes_attack
from ..classifier import MLPClassifier, QueryOracle, pgd_attack
from ..exceptions import (BudgetExhausted, CheckpointError, ConfigError, ContractError, NumericError,
                          ParseError)
from ..flow import NormalizingFlow
from ..numerics.prng import Prng, derive_seed
from .checkpoint import atomic_write, checkpoint_load, checkpoint_save
from .config import load_config, render_defaults
from .images import dump_images, write_pgm
from .report import build_report, emit_report, load_report

log = logging.getLogger("flowattack")

COMMANDS = ("gen-data", "train-flow", "train-classifier", "attack", "eval", "sample", "dump-images")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="config file ([section] key = value)")
    common.add_argument("--seed", type=int, help="master seed (overrides [io] seed)")
    common.add_argument("--out", metavar="DIR", help="artifact directory (overrides [io] out)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="flowattack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("gen-data", parents=[common], help="generate the synthetic shape datasets")
    sub.add_parser("train-flow", parents=[common], help="fit the flow on the training set")
    p = sub.add_parser("train-classifier", parents=[common], help="train the target classifier")
    p.add_argument("--defended", action="store_true", help="PGD adversarial training")
    for name, helptext in (("attack", "attack one test image"), ("eval", "evaluate an attack")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--attack", choices=("flow", "nes", "pgd"), default="flow")
        p.add_argument("--eps", type=float, help="threat-ball radius (overrides [attack] eps)")
        p.add_argument("--defended", action="store_true",
                       help="target the defended classifier; NES uses its defended profile")
        if name == "attack":
            p.add_argument("--index", type=int, help="test example index")
        else:
            p.add_argument("--examples", type=int, help="number of eligible examples")
    p = sub.add_parser("sample", parents=[common], help="sample images from the flow")
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--temperature", type=float, default=1.0)
    p = sub.add_parser("dump-images", parents=[common], help="write PGMs for an evaluation")
    p.add_argument("--attack", choices=("flow", "nes", "pgd"), default="flow")
    p.add_argument("--defended", action="store_true")
    p.add_argument("--count", type=int, default=8)
    sub.add_parser("show-config", parents=[common], help="print the default configuration")
    return parser


def _setup(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.override("io", "seed", args.seed)
    if args.out is not None:
        cfg.override("io", "out", args.out)
    if getattr(args, "eps", None) is not None:
        cfg.override("attack", "eps", args.eps)
    if getattr(args, "examples", None) is not None:
        cfg.override("attack", "examples", args.examples)
    if getattr(args, "index", None) is not None:
        cfg.override("attack", "index", args.index)
    os.makedirs(cfg["io"]["out"], exist_ok=True)
    return cfg


def _path(cfg, name):
    return os.path.join(cfg["io"]["out"], name)


def _suffix(args):
    return "_defended" if getattr(args, "defended", False) else ""


def cmd_gen_data(cfg, args):
    d, seed = cfg["data"], cfg["io"]["seed"]
    full = data_mod.gen_shapes(d["n"], d["classes"], d["size"], d["noise_std"], seed, d["jitter"],
                               (d["intensity_min"], d["intensity_max"]), d["background"])
    train, test = data_mod.split(full, d["train_fraction"], seed)
    data_mod.save_dataset(train, _path(cfg, "train.nfds"))
    data_mod.save_dataset(test, _path(cfg, "test.nfds"))
    print(f"wrote {len(train)} train / {len(test)} test images to {cfg['io']['out']}")


def cmd_train_flow(cfg, args):
    f, seed = cfg["flow"], cfg["io"]["seed"]
    train = data_mod.load_dataset(_path(cfg, "train.nfds"))
    est = NormalizingFlow(seed=seed, **f).fit(train.images)
    checkpoint_save(est, _path(cfg, "flow.nfck"), {"train_images": len(train)})
    print(f"flow: final train NLL {est.nll_trace_[-1]:.4f} nats/dim")


def cmd_train_classifier(cfg, args):
    c, seed = dict(cfg["classifier"]), cfg["io"]["seed"]
    train = data_mod.load_dataset(_path(cfg, "train.nfds"))
    test = data_mod.load_dataset(_path(cfg, "test.nfds"))
    est = MLPClassifier(seed=seed, adversarial=args.defended, **c).fit(train.images, train.labels)
    acc = float(np.mean(est.predict(test.images) == test.labels))
    checkpoint_save(est, _path(cfg, f"classifier{_suffix(args)}.nfck"), {"test_accuracy": acc})
    print(f"classifier{_suffix(args)}: test accuracy {100 * acc:.2f}%")


def attack_config(cfg, kind, defended):
    a, seed = cfg["attack"], cfg["io"]["seed"]
    if kind == "nes":
        profile = "defended" if defended else a["nes_profile"]
        return NESConfig.profile(profile, lr=a["nes_lr"], max_iters=a["nes_max_iters"],
                                 eps=a["eps"], norm=a["norm"], budget=a["budget"], seed=seed)
    return AttackConfig(a["sigma"], a["n_samples"], a["k"], a["max_iters"], a["eps"], a["norm"],
                        a["budget"], a["sigma_init"], seed)


def _models(cfg, args):
    clf = checkpoint_load(_path(cfg, f"classifier{_suffix(args)}.nfck"))
    flow = checkpoint_load(_path(cfg, "flow.nfck")) if args.attack == "flow" else None
    return clf, flow


def cmd_attack(cfg, args):
    test = data_mod.load_dataset(_path(cfg, "test.nfds"))
    clf, flow = _models(cfg, args)
    i = cfg["attack"]["index"]
    if not 0 <= i < len(test):
        raise ContractError(f"index {i} outside the test set")
    x, y = test.images[i], int(test.labels[i])
    acfg = attack_config(cfg, args.attack, args.defended)
    if int(clf.predict(x[None])[0]) != y:
        print(json.dumps({"index": i, "skipped": "misclassified"}))
        return
    prng = Prng(derive_seed(cfg["io"]["seed"], i))
    if args.attack == "pgd":
        adv = pgd_attack(clf, x, y, acfg.eps, cfg["attack"]["pgd_steps"])
        out = {"success": bool(clf.predict(adv[None])[0] != y), "queries": 0}
    else:
        oracle = QueryOracle(clf, acfg.budget)
        if args.attack == "flow":
            res = latent_attack(x, y, flow, oracle, acfg, prng)
        else:
            res = nes_attack(x, y, oracle, acfg, prng)
        out = {"success": res.success, "queries": res.queries, "loss": res.loss,
               "norm": res.norm, "iterations": res.iterations, "failure": res.failure}
    out = {"index": i, "label": y, "attack": args.attack, **out}
    text = json.dumps(out, sort_keys=True)
    atomic_write(_path(cfg, f"attack_{args.attack}{_suffix(args)}_{i}.json"), (text + "\n").encode())
    print(text)


def cmd_eval(cfg, args):
    test = data_mod.load_dataset(_path(cfg, "test.nfds"))
    clf, flow = _models(cfg, args)
    acfg = attack_config(cfg, args.attack, args.defended)
    result = evaluate(test.images, test.labels, args.attack, clf, flow, acfg, cfg["io"]["seed"],
                      limit=cfg["attack"]["examples"], keep_images=True)
    name = f"{args.attack}{_suffix(args)}"
    doc = build_report(result, cfg.to_dict(), {"defended": bool(args.defended)})
    emit_report(doc, _path(cfg, f"report_{name}"))
    labels = np.array([r["label"] for r in doc["records"]])
    data_mod.save_dataset(data_mod.Dataset(result["adversarial"], labels, test.n_classes, "adv"),
                          _path(cfg, f"adv_{name}.nfds"))
    agg = doc["aggregates"]
    print(f"{name}: success {agg['success_rate_percent']:.2f}% of {agg['n_examples']}, "
          f"avg queries {agg['avg_queries']}, median queries {agg['median_queries']}")


def cmd_sample(cfg, args):
    flow = checkpoint_load(_path(cfg, "flow.nfck"))
    imgs = flow.sample(args.count, args.temperature, Prng(cfg["io"]["seed"]))
    folder = _path(cfg, "samples")
    os.makedirs(folder, exist_ok=True)
    for i, img in enumerate(imgs):
        write_pgm(os.path.join(folder, f"sample_{i:03d}.pgm"), img)
    print(f"wrote {len(imgs)} samples to {folder}")


def cmd_dump_images(cfg, args):
    name = f"{args.attack}{_suffix(args)}"
    doc = load_report(_path(cfg, f"report_{name}.json"))
    test = data_mod.load_dataset(_path(cfg, "test.nfds"))
    adv = data_mod.load_dataset(_path(cfg, f"adv_{name}.nfds"))
    folder = _path(cfg, "images")
    os.makedirs(folder, exist_ok=True)
    n = 0
    for rec, x_adv in zip(doc["records"], adv.images):
        if n >= args.count:
            break
        if rec["success"]:
            dump_images(test.images[rec["index"]], x_adv,
                        os.path.join(folder, f"{name}_{rec['index']:04d}"), cfg["io"]["gain"])
            n += 1
    print(f"wrote {n} image triples to {folder}")


HANDLERS = {
    "gen-data": cmd_gen_data, "train-flow": cmd_train_flow, "train-classifier": cmd_train_classifier,
    "attack": cmd_attack, "eval": cmd_eval, "sample": cmd_sample, "dump-images": cmd_dump_images,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as stop:
        # argparse has already printed usage; report its status (2 on errors, 0 for --help)
        return stop.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "show-config":
            print(render_defaults())
            return 0
        cfg = _setup(args)
        HANDLERS[args.command](cfg, args)
    except (ConfigError, ContractError, CheckpointError, ParseError, NumericError,
            BudgetExhausted, OSError) as err:
        print(f"flowattack {args.command}: error: {err}", file=sys.stderr)
        return 1
    return 0


cli_dispatch = main

if __name__ == "__main__":
    sys.exit(main())
