"""Command-line entry points: gen-data, train, sample, eval, ablate,
interpolate. Exit codes: 0 success, 1 partial grid failure, 2 input
error, 3 checkpoint version error."""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import config as cfgmod
from . import datagen, metrics, pointcloud, report, sampler, trainer
from .model import ModelConfig
from .schedule import Schedule

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INPUT = 2
EXIT_VERSION = 3


class InputError(RuntimeError):
    pass


def _resolve(args, extra_overrides=None):
    file_values = cfgmod.parse_file(args.config) if getattr(args, "config", None) else {}
    overrides = {}
    for key in cfgmod.SCHEMA:
        if hasattr(args, key) and getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if extra_overrides:
        overrides.update(extra_overrides)
    return cfgmod.resolve(file_values, overrides)


def _normalized_train_array(data_dir, cfg, split="train"):
    if not os.path.isdir(data_dir):
        raise InputError(f"dataset directory not found: {data_dir}")
    ds = pointcloud.read_dataset(data_dir, split=split)
    mode = cfg["normalization"]
    if mode == "unit_radius":
        clouds = [pointcloud.normalize_unit(c)[0] for c in ds.clouds]
        ds = pointcloud.Dataset(clouds, "unit_radius", split)
    elif mode == "global_minmax":
        ds, _ = pointcloud.normalize_minmax(ds, "global")
    elif mode == "per_shape_minmax":
        ds, _ = pointcloud.normalize_minmax(ds, "per_shape")
    elif mode != "none":
        raise InputError(f"unknown normalization mode {mode!r}")
    return ds.as_array()


def _train_config(cfg, seed=None):
    return trainer.TrainConfig(
        lr=cfg["lr"], batch_size=cfg["batch_size"], epochs=cfg["epochs"],
        clip_norm=cfg["clip_norm"], sigma_d=cfg["sigma_d"],
        seed=cfg["seed"] if seed is None else seed,
        schedule=cfg["schedule"], lambda_mode=cfg["lambda_mode"],
        lambda_fixed=cfg["lambda_fixed"], fm_normalization=cfg["fm_normalization"],
        loss_mode=cfg["loss_mode"],
    )


def _model_config(cfg, seed=None):
    return ModelConfig(
        point_widths=cfg["point_widths"], time_dim=cfg["time_dim"],
        time_hidden=cfg["time_hidden"], out_widths=cfg["out_widths"],
        seed=cfg["seed"] if seed is None else seed,
    )


def cmd_gen_data(args):
    cfg = _resolve(args)
    family = datagen.ShapeFamily(
        kind=cfg["family"], n_points=cfg["points"], jitter=cfg["jitter"],
        param_spread=cfg["param_spread"], seed=cfg["seed"],
    )
    train_ds = datagen.generate(family, cfg["count"], split="train")
    test_ds = datagen.generate(family, cfg["test_count"], split="test",
                               start_index=cfg["count"])
    os.makedirs(args.out, exist_ok=True)
    pointcloud.write_dataset(train_ds, test_ds, args.out)
    cfgmod.write_snapshot(cfg, os.path.join(args.out, "config.resolved"))
    if cfg["plot"]:
        report.render_cloud_grid(
            [c.points for c in train_ds.clouds[:8]],
            os.path.join(args.out, "preview.png"),
        )
    print(f"wrote {cfg['count']} train + {cfg['test_count']} test shapes to {args.out}")
    return EXIT_OK


def cmd_train(args):
    cfg = _resolve(args)
    data = _normalized_train_array(args.data, cfg)
    os.makedirs(args.out, exist_ok=True)
    cfgmod.write_snapshot(cfg, os.path.join(args.out, "config.resolved"))
    state = trainer.init_state(_train_config(cfg), _model_config(cfg))
    log_path = os.path.join(args.out, "training_log.csv")
    ckpt_path = os.path.join(args.out, "last.ckpt")
    first = True
    for _ in range(cfg["epochs"]):
        logs = trainer.train_epoch(state, data)
        trainer.write_log_csv(logs, log_path, append=not first)
        first = False
        every = cfg["checkpoint_every"]
        if every and state.epoch % every == 0:
            trainer.save_checkpoint(state, os.path.join(args.out, f"epoch_{state.epoch:05d}.ckpt"))
    trainer.save_checkpoint(state, ckpt_path)
    if cfg["plot"]:
        report.render_loss_curves(log_path, os.path.join(args.out, "loss_curves.png"))
    mean_total = float(np.mean([l.breakdown.l_total for l in logs]))
    print(f"trained {cfg['epochs']} epochs; final-epoch mean loss {mean_total:.6g}; "
          f"checkpoint {ckpt_path}")
    return EXIT_OK


def _load_checkpoint(path):
    if not os.path.isfile(path):
        raise InputError(f"checkpoint not found: {path}")
    return trainer.load_checkpoint(path)


def cmd_sample(args):
    cfg = _resolve(args)
    state = _load_checkpoint(args.checkpoint)
    sched = Schedule(state.config.schedule, sigma_d=state.config.sigma_d)
    if sched.kind != "trigflow" and cfg["method"] == "single_step":
        raise InputError("single_step sampling needs a trigflow checkpoint; use euler/heun")
    scfg = sampler.SampleConfig(
        steps=cfg["steps"], method=cfg["method"], n_points=cfg["points"],
        sigma_d=state.config.sigma_d, heun_advance=cfg["heun_advance"],
        final_predict=cfg["final_predict"],
    )
    os.makedirs(args.out, exist_ok=True)
    cfgmod.write_snapshot(cfg, os.path.join(args.out, "config.resolved"))
    rng = np.random.default_rng(cfg["seed"])
    manifest = ["file,index,method,steps,n_evals,wall_time_s"]
    clouds = []
    for i in range(cfg["sample_count"]):
        start = time.perf_counter()
        result = sampler.sample(state.model, sched, scfg, rng)
        elapsed = time.perf_counter() - start
        name = f"sample_{i:04d}.xyz"
        pointcloud.write_xyz(pointcloud.PointCloud(result.points), os.path.join(args.out, name))
        manifest.append(f"{name},{i},{cfg['method']},{cfg['steps']},"
                        f"{result.n_evals},{elapsed:.6f}")
        clouds.append(result.points)
    with open(os.path.join(args.out, "manifest.csv"), "w", encoding="utf-8") as fh:
        fh.write("".join(row + "\n" for row in manifest))
    if cfg["plot"]:
        report.render_cloud_grid(clouds[:16], os.path.join(args.out, "samples.png"))
    print(f"wrote {cfg['sample_count']} samples to {args.out}")
    return EXIT_OK


def _read_cloud_dir(path):
    if not os.path.isdir(path):
        raise InputError(f"cloud directory not found: {path}")
    names = sorted(n for n in os.listdir(path) if n.endswith(".xyz"))
    if not names:
        raise InputError(f"no .xyz files in {path}")
    return [pointcloud.read_xyz(os.path.join(path, n)).points for n in names]


def cmd_eval(args):
    cfg = _resolve(args)
    gen = _read_cloud_dir(args.gen_dir)
    ref = _read_cloud_dir(args.ref_dir)
    if len(gen) != len(ref):
        raise InputError(f"1-NNA needs equal counts: {len(gen)} generated vs {len(ref)} reference")
    rep = metrics.compute_report(gen, ref, dist=cfg["dist"],
                                 jsd_resolution=cfg["jsd_resolution"], seed=cfg["seed"])
    os.makedirs(args.out, exist_ok=True)
    cfgmod.write_snapshot(cfg, os.path.join(args.out, "config.resolved"))
    metrics.write_report_csv(rep, os.path.join(args.out, "report.csv"))
    table = metrics.format_report_table(rep)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    if cfg["plot"]:
        report.render_metric_bars(rep.rows(), os.path.join(args.out, "report.png"))
    print(table, end="")
    return EXIT_OK


def cmd_interpolate(args):
    cfg = _resolve(args)
    if args.frames < 2:
        raise InputError("need at least 2 interpolation frames")
    state = _load_checkpoint(args.checkpoint)
    sched = Schedule(state.config.schedule, sigma_d=state.config.sigma_d)
    rng = np.random.default_rng(cfg["seed"])
    z1 = sampler.draw_noise(rng, cfg["points"], state.config.sigma_d)
    z2 = sampler.draw_noise(rng, cfg["points"], state.config.sigma_d)
    frames = sampler.interpolate(state.model, sched, z1, z2, args.frames)
    os.makedirs(args.out, exist_ok=True)
    cfgmod.write_snapshot(cfg, os.path.join(args.out, "config.resolved"))
    rows = ["frame,alpha,cd_to_previous"]
    for i, pts in enumerate(frames):
        pointcloud.write_xyz(pointcloud.PointCloud(pts),
                             os.path.join(args.out, f"frame_{i:04d}.xyz"))
        alpha = i / (args.frames - 1)
        cd_prev = "" if i == 0 else f"{metrics.chamfer(frames[i - 1], pts):.17g}"
        rows.append(f"{i},{alpha:.17g},{cd_prev}")
    with open(os.path.join(args.out, "frames.csv"), "w", encoding="utf-8") as fh:
        fh.write("".join(r + "\n" for r in rows))
    if cfg["plot"]:
        report.render_cloud_grid(frames, os.path.join(args.out, "frames.png"),
                                 titles=[f"alpha={i / (args.frames - 1):.2f}"
                                         for i in range(args.frames)])
    print(f"wrote {args.frames} frames to {args.out}")
    return EXIT_OK


def cmd_ablate(args):
    cfg = _resolve(args)
    data = _normalized_train_array(args.data, cfg)
    test = _normalized_train_array(args.data, cfg, split="test")
    loss_modes = args.loss_modes.split(",")
    schedules = args.schedules.split(",")
    steps_list = [int(s) for s in args.steps_list.split(",")]
    methods = args.methods.split(",")
    os.makedirs(args.out, exist_ok=True)
    cfgmod.write_snapshot(cfg, os.path.join(args.out, "config.resolved"))
    rows = ["cell,loss_mode,schedule,steps,method,one_nna_cd,one_nna_emd,"
            "mmd_cd,mmd_emd,cov,jsd,time_s,status"]
    any_failed = False
    trained = {}  # (loss_mode, schedule) -> TrainState, shared across step cells
    for loss_mode in loss_modes:
        for sched_kind in schedules:
            for steps in steps_list:
                for method in methods:
                    cell = f"{loss_mode}-{sched_kind}-S{steps}-{method}"
                    start = time.perf_counter()
                    try:
                        row = _run_ablation_cell(
                            cfg, data, test, loss_mode, sched_kind, steps, method,
                            os.path.join(args.out, cell), trained,
                        )
                        status = "ok"
                    except Exception as exc:  # cell failures do not stop the grid
                        print(f"cell {cell} failed: {exc}", file=sys.stderr)
                        row = ["", "", "", "", "", ""]
                        status = "failed"
                        any_failed = True
                    elapsed = time.perf_counter() - start
                    rows.append(",".join([cell, loss_mode, sched_kind, str(steps), method]
                                         + row + [f"{elapsed:.3f}", status]))
    with open(os.path.join(args.out, "summary.csv"), "w", encoding="utf-8") as fh:
        fh.write("".join(r + "\n" for r in rows))
    print(f"grid complete: {len(rows) - 1} cells, summary in {args.out}/summary.csv")
    return EXIT_PARTIAL if any_failed else EXIT_OK


def _run_ablation_cell(cfg, data, test, loss_mode, sched_kind, steps, method,
                       cell_dir, trained):
    key = (loss_mode, sched_kind)
    if key not in trained:
        tc = trainer.TrainConfig(
            lr=cfg["lr"], batch_size=cfg["batch_size"], epochs=cfg["epochs"],
            clip_norm=cfg["clip_norm"], sigma_d=cfg["sigma_d"], seed=cfg["seed"],
            schedule=sched_kind, lambda_mode=cfg["lambda_mode"],
            lambda_fixed=cfg["lambda_fixed"], fm_normalization=cfg["fm_normalization"],
            loss_mode=loss_mode,
        )
        state = trainer.init_state(tc, _model_config(cfg))
        trainer.train(state, data)
        trained[key] = state
    state = trained[key]
    sched = Schedule(sched_kind, sigma_d=cfg["sigma_d"])
    if method == "single_step" and sched_kind != "trigflow":
        raise InputError("single_step sampling requires the trigflow schedule")
    scfg = sampler.SampleConfig(
        steps=steps, method=method, n_points=data.shape[1], sigma_d=cfg["sigma_d"],
        heun_advance=cfg["heun_advance"], final_predict=cfg["final_predict"],
    )
    rng = np.random.default_rng(cfg["seed"])
    gen = [sampler.sample(state.model, sched, scfg, rng).points
           for _ in range(test.shape[0])]
    rep = metrics.compute_report(gen, list(test), dist=cfg["dist"],
                                 jsd_resolution=cfg["jsd_resolution"], seed=cfg["seed"])
    os.makedirs(cell_dir, exist_ok=True)
    metrics.write_report_csv(rep, os.path.join(cell_dir, "report.csv"))
    trainer.save_checkpoint(state, os.path.join(cell_dir, "last.ckpt"))

    def fmt(v):
        return "" if v is None else f"{v:.6g}"

    return [fmt(rep.one_nna_cd), fmt(rep.one_nna_emd), fmt(rep.mmd_cd),
            fmt(rep.mmd_emd), fmt(rep.cov), fmt(rep.jsd)]


def build_parser():
    parser = argparse.ArgumentParser(prog="pcgen",
                                     description="train, sample, and evaluate a "
                                                 "point-cloud consistency model")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--plot", action="store_const", const=True, default=None,
                       help="also render PNG figures")

    p = sub.add_parser("gen-data", help="write a synthetic XYZ dataset")
    common(p)
    p.add_argument("--family", choices=datagen.FAMILY_KINDS)
    p.add_argument("--count", type=int)
    p.add_argument("--test-count", dest="test_count", type=int)
    p.add_argument("--points", type=int)
    p.add_argument("--jitter", type=float)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train from an XYZ dataset directory")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--schedule")
    p.add_argument("--loss-mode", dest="loss_mode")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sample", help="generate point clouds from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--method", choices=sampler.METHODS)
    p.add_argument("--steps", type=int)
    p.add_argument("--count", dest="sample_count", type=int)
    p.add_argument("--points", type=int)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("eval", help="metric report for generated vs reference")
    common(p)
    p.add_argument("--gen-dir", dest="gen_dir", required=True)
    p.add_argument("--ref-dir", dest="ref_dir", required=True)
    p.add_argument("--dist", choices=("cd", "emd", "both"))
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="grid of train+sample+eval runs")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--loss-modes", default="fm_only,chamfer_only,fm_chamfer")
    p.add_argument("--schedules", default="trigflow")
    p.add_argument("--steps-list", default="1,2,4")
    p.add_argument("--methods", default="euler")
    p.add_argument("--epochs", type=int)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("interpolate", help="single-step samples along a noise path")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--points", type=int)
    p.set_defaults(fn=cmd_interpolate)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except trainer.CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except (InputError, FileNotFoundError, cfgmod.UnknownKeyError,
            cfgmod.ConfigValueError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
