"""Command-line experiments: ``surrokit {gen,train,eval,bench,sweep}``.

Settings resolve as built-in defaults < ``--config`` file (flat ``key=value``)
< command-line flags. Every run writes the resolved settings next to its
outputs. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import datagen, kernels, mlp, surrogate, trainer

log = logging.getLogger("surrokit")

DEFAULTS = {
    "seed": 1,
    "out_dir": "runs",
    "n": 20_000,
    "train_fraction": datagen.DEFAULT_TRAIN_FRACTION,
    "x0": None,
    "topology": None,
    "activation": None,
    "steps": None,
    "lr": None,
    "momentum": 0.9,
    "batch_size": 200,
    "log_every": 100,
    "train": None,
    "val": None,
    "model": None,
    "dataset": None,
    "tolerance": trainer.DEFAULT_TOLERANCE,
    "repetitions": 5,
    "batch": "5120..10240:512",
    "atoms": 500,
    "density": 0.8,
    "skin": 0.3,
    "topologies": None,
    "seeds": None,
}
REGION_DEFAULTS = {
    "newton": {"topology": "3x5x3x1", "activation": surrogate.NEWTON_HIDDEN.value, "steps": 5000},
    "lj": {"topology": "1x3x1", "activation": surrogate.LJ_HIDDEN.value, "steps": 10_000},
}


class UsageError(Exception):
    pass


def read_config_file(path) -> dict[str, str]:
    out = {}
    for lineno, ln in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, _, val = ln.partition("=")
        key = key.strip().replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = val.strip()
    return out


INT_KEYS = {"seed", "n", "steps", "batch_size", "log_every", "repetitions", "atoms"}
FLOAT_KEYS = {"train_fraction", "x0", "lr", "momentum", "tolerance", "density", "skin"}


def _coerce(key: str, value):
    if value is None or value == "":
        return None
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise UsageError(f"bad value for {key}: {value!r}") from None
    return str(value)


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    region = getattr(args, "region", None)
    if region:
        cfg.update(REGION_DEFAULTS[region])
    if args.config:
        cfg.update(read_config_file(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg = {k: _coerce(k, v) for k, v in cfg.items()}
    cfg["command"] = args.command
    cfg["region"] = region
    if cfg.get("lr") is None and region:
        cfg["lr"] = default_lr(region, cfg["topology"])
    return cfg


def default_lr(region: str, topology: str) -> float:
    if region == "newton":
        return surrogate.NEWTON_LR
    return 0.005 if topology.count("x") <= 2 else 0.01


def write_resolved(cfg: dict, out_dir: Path) -> None:
    lines = [f"{k}={'' if v is None else v}" for k, v in sorted(cfg.items())]
    (out_dir / f"{cfg['command']}_config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_topology(text: str, activation: str) -> mlp.Topology:
    try:
        return mlp.Topology.parse(text, mlp.ActivationKind.parse(activation))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def parse_batches(text: str) -> list[int]:
    """``"5120"``, ``"5120,6000"`` or ``"START..STOP:STEP"`` (inclusive)."""
    try:
        if ".." in text:
            span, _, step = text.partition(":")
            start, stop = (int(v) for v in span.split(".."))
            step_i = int(step) if step else max(1, (stop - start) // 9)
            sizes = list(range(start, stop + 1, step_i))
        else:
            sizes = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"bad batch specification {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise UsageError(f"batch sizes must be positive: {text!r}")
    return sizes


def _train_config(cfg: dict, seed: int, lr: float | None = None) -> mlp.TrainConfig:
    try:
        return mlp.TrainConfig(learning_rate=lr if lr is not None else cfg["lr"],
                               momentum_coeff=cfg["momentum"], batch_size=cfg["batch_size"],
                               max_steps=cfg["steps"], rng_seed=seed, log_every=cfg["log_every"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _dataset_paths(cfg: dict, out_dir: Path) -> tuple[Path, Path]:
    region = cfg["region"]
    return (Path(cfg["train"] or out_dir / f"{region}_train.csv"),
            Path(cfg["val"] or out_dir / f"{region}_val.csv"))


def cmd_gen(cfg: dict, out_dir: Path) -> int:
    if cfg["n"] < 1:
        raise UsageError("--n must be >= 1")
    if cfg["region"] == "newton":
        ds = datagen.gen_newton_dataset(cfg["n"], x0=cfg["x0"], rng_seed=cfg["seed"])
        attempts, rejected = int(ds.meta["attempts"]), int(ds.meta["rejected"])
    else:
        ds = datagen.gen_lj_dataset(cfg["n"], rng_seed=cfg["seed"])
        attempts, rejected = cfg["n"], 0
    try:
        train, val = datagen.split(ds, cfg["train_fraction"], cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    train_path, val_path = _dataset_paths(cfg, out_dir)
    datagen.write_dataset(train, train_path)
    datagen.write_dataset(val, val_path)
    print(f"{cfg['region']}: {len(ds)} samples ({len(train)} train / {len(val)} validation), "
          f"rejection rate {rejected / attempts:.2%}")
    print(f"wrote {train_path} and {val_path}")
    return 0


def cmd_train(cfg: dict, out_dir: Path) -> int:
    topo = parse_topology(cfg["topology"], cfg["activation"])
    train_path, val_path = _dataset_paths(cfg, out_dir)
    train_set, val_set = datagen.read_dataset(train_path), datagen.read_dataset(val_path)
    tcfg = _train_config(cfg, cfg["seed"])
    model, trace = trainer.train(mlp.init_model(topo, cfg["seed"]), train_set, val_set, tcfg,
                                 cfg["tolerance"])
    model_path = Path(cfg["model"] or out_dir / f"model_{cfg['region']}_{topo}.txt")
    trace_path = out_dir / f"trace_{cfg['region']}_{topo}.csv"
    mlp.save_model(model, model_path)
    trace.write_csv(trace_path)
    last = trace.rows[-1]
    print(f"{topo}: {tcfg.max_steps} steps, train_l2 {last.train_l2:.4g}, val_l2 {last.val_l2:.4g}, "
          f"val accuracy {last.val_accuracy:.4f}, val abs err {last.val_abs_err:.4g}")
    print(f"wrote {model_path} and {trace_path} ({len(trace)} rows)")
    return 0


def cmd_eval(cfg: dict, out_dir: Path) -> int:
    if not cfg["model"] or not cfg["dataset"]:
        raise UsageError("eval needs --model and --dataset")
    model = mlp.load_model(cfg["model"])
    ds = datagen.read_dataset(cfg["dataset"])
    m = trainer.eval_metrics(model, ds, cfg["tolerance"])
    print(f"l2 {m.l2:.6g}  accuracy {m.accuracy:.4f}  mean_abs_err {m.mean_abs_err:.6g}")
    path = out_dir / "eval.csv"
    path.write_text("model,dataset,tolerance,l2,accuracy,mean_abs_err\n"
                    f"{cfg['model']},{cfg['dataset']},{cfg['tolerance']!r},"
                    f"{m.l2:.17g},{m.accuracy:.17g},{m.mean_abs_err:.17g}\n", encoding="utf-8")
    return 0


def cmd_bench(cfg: dict, out_dir: Path) -> int:
    if not cfg["model"]:
        raise UsageError("bench needs --model")
    model = mlp.load_model(cfg["model"])
    reps = cfg["repetitions"]
    if reps < 3:
        log.warning("repetitions=%d raised to 3", reps)
        reps = 3
    reports = []
    if cfg["region"] == "newton":
        x0 = cfg["x0"]
        if x0 is None:
            x0 = datagen.draw_x0(np.random.default_rng(cfg["seed"]))
        sizes = parse_batches(cfg["batch"])
        pool = datagen.gen_newton_dataset(max(sizes), x0=x0, rng_seed=cfg["seed"] + 1).inputs
        binding = surrogate.SurrogateBinding(surrogate.newton_region(x0), model)
        for r in surrogate.bench_batches(binding, pool, sizes, reps, cfg["tolerance"]):
            size = r.n_calls
            print(f"batch {size:6d}: original {r.t_original:.4e} s, surrogate {r.t_surrogate:.4e} s, "
                  f"speedup {r.speedup:.2f}x, accuracy {r.accuracy:.4f}")
            reports.append(r)
    else:
        p = kernels.LJParams()
        rng = np.random.default_rng(cfg["seed"])
        pos, length = kernels.random_box(cfg["atoms"], cfg["density"], rng)
        box = kernels.AtomBox(pos, kernels.build_neighbor_lists(pos, length, p.r_cut, cfg["skin"]),
                              length)
        r = surrogate.bench_lj_sweep(model, box, p, reps, cfg["tolerance"])
        print(f"{cfg['atoms']} atoms, {r.n_calls} pair calls: original {r.t_original:.4e} s, "
              f"surrogate {r.t_surrogate:.4e} s, speedup {r.speedup:.2f}x, "
              f"force abs err {r.mean_abs_err:.4g}")
        reports.append(r)
    path = out_dir / f"bench_{cfg['region']}.csv"
    surrogate.write_eval_reports(reports, path)
    print(f"wrote {path}")
    return 0


def cmd_sweep(cfg: dict, out_dir: Path) -> int:
    region_name = cfg["region"]
    act = cfg["activation"]
    if cfg["topologies"] is None:
        if region_name == "newton":
            pairs = [(t, cfg["lr"]) for t in surrogate.NEWTON_TOPOLOGIES]
        else:
            pairs = list(surrogate.LJ_TOPOLOGIES)
    else:
        names = [t for t in cfg["topologies"].split(",") if t.strip()]
        if not names:
            raise UsageError("empty topology list")
        pairs = [(t.strip(), cfg["lr"] if region_name == "newton" else default_lr("lj", t.strip()))
                 for t in names]
    topos = [parse_topology(t, act) for t, _ in pairs]
    seeds = [int(s) for s in (cfg["seeds"] or str(cfg["seed"])).split(",") if s.strip()]
    if not seeds:
        raise UsageError("empty seed list")
    train_path, val_path = _dataset_paths(cfg, out_dir)
    train_set, val_set = datagen.read_dataset(train_path), datagen.read_dataset(val_path)
    if region_name == "newton":
        region = surrogate.newton_region(float(train_set.meta.get("x0", "nan")))
        if not np.isfinite(float(train_set.meta.get("x0", "nan"))):
            raise UsageError(f"{train_path}.meta lacks x0")
    else:
        region = surrogate.lj_region()
    for seed in seeds:
        configs = [_train_config(cfg, seed, lr) for _, lr in pairs]
        entries = surrogate.sweep_topologies(region, train_set, val_set, topos, configs, seed,
                                             repetitions=max(3, cfg["repetitions"]))
        path = out_dir / f"sweep_{region_name}_seed{seed}.csv"
        surrogate.write_report(entries, path)
        for e in entries:
            if e.model is not None:
                mlp.save_model(e.model, out_dir / f"model_{region_name}_{e.topology}_seed{seed}.txt")
            row = e.row()
            print(f"seed {seed} {e.topology:>12}: l2 {row['l2_loss']:.4g} accuracy {row['accuracy']:.4f} "
                  f"abs err {row['mean_abs_err']:.4g} speedup {row['speedup']:.2f}x"
                  + (f"  FAILED: {e.error}" if e.error else ""))
        print(f"wrote {path}")
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench,
            "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="surrokit", description=__doc__.splitlines()[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    regions = ("newton", "lj")

    p = sub.add_parser("gen", parents=[common], help="generate train/validation datasets")
    p.add_argument("region", choices=regions)
    p.add_argument("--n", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--x0", type=float, help="shared Newton initial guess (default: drawn from seed)")

    train_flags = argparse.ArgumentParser(add_help=False)
    train_flags.add_argument("--activation", help="hidden activation: relu, tanh, relu_tanh, identity")
    train_flags.add_argument("--steps", type=int)
    train_flags.add_argument("--lr", type=float)
    train_flags.add_argument("--momentum", type=float)
    train_flags.add_argument("--batch-size", dest="batch_size", type=int)
    train_flags.add_argument("--log-every", dest="log_every", type=int)
    train_flags.add_argument("--train", help="training CSV (default <out-dir>/<region>_train.csv)")
    train_flags.add_argument("--val", help="validation CSV (default <out-dir>/<region>_val.csv)")
    train_flags.add_argument("--tolerance", type=float)

    p = sub.add_parser("train", parents=[common, train_flags], help="train one surrogate")
    p.add_argument("region", choices=regions)
    p.add_argument("--topology")
    p.add_argument("--model", help="output model path")

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a dataset")
    p.add_argument("--model")
    p.add_argument("--dataset")
    p.add_argument("--tolerance", type=float)

    p = sub.add_parser("bench", parents=[common], help="time original kernel vs surrogate")
    p.add_argument("region", choices=regions)
    p.add_argument("--model")
    p.add_argument("--batch", help="Newton batch sizes, e.g. 5120..10240:512")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--x0", type=float)
    p.add_argument("--atoms", type=int)
    p.add_argument("--density", type=float)
    p.add_argument("--skin", type=float)
    p.add_argument("--tolerance", type=float)

    p = sub.add_parser("sweep", parents=[common, train_flags], help="train and bench a topology list")
    p.add_argument("region", choices=regions)
    p.add_argument("--topologies", help="comma-separated, default: the full preset list")
    p.add_argument("--seeds", help="comma-separated training seeds")
    p.add_argument("--repetitions", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        out_dir = Path(cfg["out_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        write_resolved(cfg, out_dir)
        return COMMANDS[args.command](cfg, out_dir)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"surrokit: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"surrokit: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
