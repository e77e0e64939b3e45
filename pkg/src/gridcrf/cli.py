"""Command-line surface.

Subcommands cover the full workflow: gen (synthetic dataset), pretrain
(cross-entropy CNN), train (CD/PCD, joint or separate), infer (max-marginal
decode to label maps), eval (accuracy table), oracle (exact summary on tiny
models).  Every run with the same config and seed produces byte-identical
artifacts; no timestamps are written.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import checkpoint as ckpt_io
from . import config as config_mod
from . import data as data_mod
from . import net as net_mod
from . import oracle as oracle_mod
from . import pgm
from . import rng
from .errors import GridCrfError
from .model import GridCrfModel, GridGeometry, offsets_from_spec
from .sampler import (ChainState, SweepSchedule, estimate_marginals,
                      init_from_unary_marginals, max_marginal_decode)
from .trainer import TrainerConfig, UnaryNet, train


def _add_common(parser):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--out", help="output directory")


def _load_config(args, **extra) -> config_mod.RunConfig:
    overrides = {"seed": getattr(args, "seed", None),
                 "out_dir": getattr(args, "out", None)}
    overrides.update(extra)
    return config_mod.load_config(getattr(args, "config", None), overrides)


def _schedule_for(cfg, model):
    if cfg.schedule == "raster":
        return SweepSchedule.raster()
    return SweepSchedule.chromatic(model)


def _model_from_checkpoint(ckpt, height, width) -> GridCrfModel:
    return GridCrfModel(num_labels=ckpt.num_labels,
                        geometry=GridGeometry(height, width),
                        classes=ckpt.classes, tables=ckpt.tables)


def _unaries_for_image(ckpt, image):
    logits = net_mod.forward(ckpt.spec, ckpt.params, image)
    return net_mod.unaries_from_logits(logits)


def _infer_one(cfg, ckpt, model, schedule, image, seed):
    unaries = _unaries_for_image(ckpt, image)
    chain = ChainState(labeling=init_from_unary_marginals(unaries, seed),
                       seed=seed, sweep_count=0)
    est = estimate_marginals(chain, model, unaries, cfg.burn_in, cfg.samples,
                             cfg.thinning, schedule=schedule)
    return max_marginal_decode(est)


def cmd_gen(args):
    cfg = _load_config(args)
    out = cfg.out_dir if args.out is None else args.out
    train_set = data_mod.generate_synthetic(
        cfg.train_count, cfg.height, cfg.width, cfg.label_count,
        rng.derive_seed(cfg.seed, 10))
    test_set = data_mod.generate_synthetic(
        cfg.test_count, cfg.height, cfg.width, cfg.label_count,
        rng.derive_seed(cfg.seed, 11))
    data_mod.save_dataset(out, train_set, "train")
    data_mod.save_dataset(out, test_set, "test")
    print(f"wrote {cfg.train_count} train + {cfg.test_count} test samples to {out}")
    return 0


def cmd_pretrain(args):
    cfg = _load_config(args, iterations=args.iters,
                       pretrain_rate=getattr(args, "rate", None),
                       data_dir=args.data)
    iters = cfg.pretrain_iterations if args.iters is None else args.iters
    dataset = data_mod.load_dataset(cfg.data_dir, "train")
    spec = net_mod.make_spec(cfg.net, dataset.num_labels)
    params = net_mod.init_params(spec, rng.derive_seed(cfg.seed, 12))
    buffers = net_mod.zero_like_params(params)
    picker = rng.stream(rng.derive_seed(cfg.seed, 13), rng.TAG_SAMPLE_INDEX)
    os.makedirs(cfg.out_dir, exist_ok=True)
    metrics_path = os.path.join(cfg.out_dir, "pretrain_metrics.jsonl")
    with open(metrics_path, "w", encoding="ascii") as metrics:
        for i in range(1, iters + 1):
            d = int(picker.integers(len(dataset.samples)))
            sample = dataset.samples[d]
            loss = net_mod.pretrain_step(spec, params, sample.image, sample.labels,
                                         cfg.pretrain_rate, cfg.momentum, buffers)
            if i % 100 == 0 or i == iters:
                metrics.write(json.dumps({"iteration": i, "loss": loss}) + "\n")
    classes = offsets_from_spec(cfg.offsets)
    tables = [np.zeros((dataset.num_labels, dataset.num_labels)) for _ in classes]
    path = os.path.join(cfg.out_dir, "pretrained.ccrf")
    ckpt_io.save_checkpoint(path, ckpt_io.Checkpoint(
        num_labels=dataset.num_labels, spec=spec, params=params,
        classes=classes, tables=tables))
    print(f"pretrained {iters} iterations, checkpoint at {path}")
    return 0


def cmd_train(args):
    mode = None
    if args.joint:
        mode = "joint"
    if args.separate:
        mode = "separate"
    cfg = _load_config(args, iterations=args.iters, base_rate=args.rate,
                       variant=args.variant, mode=mode, data_dir=args.data)
    variant, cd_steps = cfg.parse_variant()
    dataset = data_mod.load_dataset(cfg.data_dir, "train")
    init_path = args.init or os.path.join(cfg.out_dir, "pretrained.ccrf")
    ckpt = ckpt_io.load_checkpoint(init_path)
    if ckpt.num_labels != dataset.num_labels:
        raise GridCrfError(
            f"checkpoint has {ckpt.num_labels} labels, dataset {dataset.num_labels}")
    _, h, w = dataset.samples[0].image.shape
    model = _model_from_checkpoint(ckpt, h, w)
    net = UnaryNet(spec=ckpt.spec, params=ckpt.params)
    tcfg = TrainerConfig(
        variant=variant, cd_steps=max(cd_steps, 1), base_rate=cfg.base_rate,
        decay=cfg.decay, momentum_coeff=cfg.joint_momentum,
        table_momentum=cfg.table_momentum, net_rate_scale=cfg.net_rate_scale,
        max_iterations=cfg.iterations, freeze_unaries=(cfg.mode == "separate"),
        seed=cfg.seed, eval_interval=cfg.eval_interval, eval_count=cfg.eval_count)
    os.makedirs(cfg.out_dir, exist_ok=True)
    metrics_path = os.path.join(cfg.out_dir, "metrics.jsonl")
    with open(metrics_path, "w", encoding="ascii") as metrics:
        def sink(record):
            metrics.write(json.dumps(record) + "\n")

        train(dataset, model, net, tcfg, schedule=_schedule_for(cfg, model),
              metrics_sink=sink)
    path = os.path.join(cfg.out_dir, "model.ccrf")
    ckpt_io.save_checkpoint(path, ckpt_io.Checkpoint(
        num_labels=model.num_labels, spec=net.spec, params=net.params,
        classes=model.classes, tables=model.tables))
    print(f"trained {cfg.iterations} iterations ({cfg.variant}, {cfg.mode}), "
          f"checkpoint at {path}")
    return 0


def cmd_infer(args):
    cfg = _load_config(args, burn_in=args.burn_in, samples=args.samples,
                       data_dir=args.data)
    dataset = data_mod.load_dataset(cfg.data_dir, args.split)
    ckpt = ckpt_io.load_checkpoint(args.checkpoint)
    out = cfg.out_dir if args.out is None else args.out
    os.makedirs(out, exist_ok=True)
    model = None
    schedule = None
    for i, sample in enumerate(dataset.samples):
        _, h, w = sample.image.shape
        if model is None:
            model = _model_from_checkpoint(ckpt, h, w)
            schedule = _schedule_for(cfg, model)
        elif model.geometry != GridGeometry(h, w):
            model = model.with_geometry(GridGeometry(h, w))
            schedule = _schedule_for(cfg, model)
        pred = _infer_one(cfg, ckpt, model, schedule, sample.image,
                          rng.derive_seed(cfg.seed, 14, i))
        pgm.write_label_map(os.path.join(out, f"pred_{i:04d}.pgm"),
                            pred.reshape(h, w))
    print(f"wrote {len(dataset.samples)} label maps to {out}")
    return 0


def cmd_eval(args):
    cfg = _load_config(args, burn_in=args.burn_in, samples=args.samples,
                       data_dir=args.data)
    dataset = data_mod.load_dataset(cfg.data_dir, args.split)
    pairs = []
    if args.pred:
        for i, sample in enumerate(dataset.samples):
            _, h, w = sample.image.shape
            pred = pgm.read_label_map(
                os.path.join(args.pred, f"pred_{i:04d}.pgm"), dataset.num_labels)
            pairs.append((pred.ravel(), sample.labels))
    else:
        if not args.checkpoint:
            raise GridCrfError("eval needs --checkpoint or --pred")
        ckpt = ckpt_io.load_checkpoint(args.checkpoint)
        model = None
        schedule = None
        for i, sample in enumerate(dataset.samples):
            _, h, w = sample.image.shape
            if model is None:
                model = _model_from_checkpoint(ckpt, h, w)
                schedule = _schedule_for(cfg, model)
            elif model.geometry != GridGeometry(h, w):
                model = model.with_geometry(GridGeometry(h, w))
                schedule = _schedule_for(cfg, model)
            pred = _infer_one(cfg, ckpt, model, schedule, sample.image,
                              rng.derive_seed(cfg.seed, 14, i))
            pairs.append((pred, sample.labels))
    scores = []
    for i, (pred, truth) in enumerate(pairs):
        score = data_mod.accuracy(pred, truth)
        shown = "undefined" if score is None else f"{score:.4f}"
        print(f"image {i:04d}  accuracy {shown}")
        if score is not None:
            scores.append(score)
    pooled = data_mod.pooled_accuracy(pairs)
    mean = float(np.mean(scores)) if scores else float("nan")
    print(f"mean accuracy   {mean:.4f}")
    print(f"pooled accuracy {('undefined' if pooled is None else f'{pooled:.4f}')}")
    return 0


def cmd_oracle(args):
    classes = offsets_from_spec(args.offsets)
    geometry = GridGeometry(args.height, args.width)
    L = args.labels
    n = geometry.num_sites
    gen = rng.stream(args.seed, rng.TAG_DATASET)
    if args.tables == "random":
        tables = [gen.normal(0, 1, size=(L, L)) for _ in classes]
    else:
        tables = [np.zeros((L, L)) for _ in classes]
    unaries = gen.normal(0, 1, size=(n, L)) if args.unaries == "random" \
        else np.zeros((n, L))
    model = GridCrfModel(L, geometry, classes, tables)
    y = None
    if args.labeling:
        y = np.array([int(v) for v in args.labeling.split(",")])
    summary = oracle_mod.enumerate_model(model, unaries, y_data=y)
    print(f"states        {L}**{n} = {L ** n}")
    print(f"log_partition {summary.log_z:.12f}")
    for site in range(n):
        row = " ".join(f"{p:.6f}" for p in summary.marginals[site])
        print(f"marginal[{site:3d}] {row}")
    if y is not None:
        print(f"log_likelihood {summary.log_likelihood:.12f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gridcrf",
        description="grid CRF + CNN unaries trained by sampling-based "
                    "stochastic maximum likelihood",
        epilog="configuration keys (flat `key = value` file):\n"
               + config_mod.describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate the synthetic dataset")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("pretrain", help="cross-entropy pretrain the unary net")
    _add_common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--iters", type=int, help="pretraining iterations")
    p.add_argument("--rate", type=float, help="pretraining step size")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train tables (and net when joint)")
    _add_common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--init", help="starting checkpoint (default out/pretrained.ccrf)")
    p.add_argument("--variant", choices=["cd1", "cd2", "cd5", "pcd"],
                   help="negative sampling variant")
    p.add_argument("--joint", action="store_true", help="update net and tables")
    p.add_argument("--separate", action="store_true", help="tables only")
    p.add_argument("--iters", type=int, help="training iterations")
    p.add_argument("--rate", type=float, help="base step size")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="max-marginal decode to label maps")
    _add_common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--split", default="test", help="dataset split (default test)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--samples", type=int)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="accuracy table for a checkpoint or maps")
    _add_common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--split", default="test")
    p.add_argument("--checkpoint")
    p.add_argument("--pred", help="directory of pred_NNNN.pgm label maps")
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--samples", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="exact summary of a tiny model")
    p.add_argument("--height", type=int, default=2)
    p.add_argument("--width", type=int, default=2)
    p.add_argument("--labels", type=int, default=2)
    p.add_argument("--offsets", default="1,0;0,1")
    p.add_argument("--tables", choices=["zero", "random"], default="random")
    p.add_argument("--unaries", choices=["zero", "random"], default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labeling", help="comma-separated labels for log-likelihood")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GridCrfError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
