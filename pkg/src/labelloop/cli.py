"""Command line interface.

Subcommands: gen-data, train (simulated oracle), serve (human oracle via the
annotation service), select (one-shot selection from a checkpoint), eval,
ablate. Exit code 0 on success, 2 on configuration validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading

import numpy as np

from .config import ConfigError, RunConfig, load_config, parse_config
from .data import Dataset, DatasetSpec, gen_synthetic, load_csv, load_idx, save_csv, split_dataset
from .loop import rank_candidates, run_loop
from .metrics import compute_metrics
from .nn import forward, load_checkpoint
from .oracles import SimulatedOracle
from .report import dump_json
from .uncertainty import BusConfig
from .unstability import VatConfig

VARIANTS = ("full", "-AS", "-AUS", "-BUS", "SSL+RS")


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config("")
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    if getattr(args, "cold_start", False):
        cfg.loop.cold_start = True
    return cfg


def _load_dataset(args, cfg: RunConfig) -> Dataset:
    if getattr(args, "data", None):
        if args.data.endswith(".csv"):
            return load_csv(args.data)
        return load_idx(args.data, getattr(args, "labels", None))
    return gen_synthetic(cfg.dataset)


def _split(cfg: RunConfig, dataset: Dataset):
    return split_dataset(dataset, cfg.dataset.splits, cfg.seed)


def cmd_gen_data(args) -> int:
    ratio = None
    if args.ratio:
        ratio = tuple(float(v) for v in args.ratio.split(","))
    spec = DatasetSpec(kind=args.kind, n=args.n, n_classes=args.classes,
                       class_ratio=ratio, dim=args.dim,
                       noise_sigma=args.sigma, seed=args.seed)
    spec.validate()
    ds = gen_synthetic(spec)
    save_csv(ds, args.out)
    print(f"wrote {ds.n} samples ({ds.n_classes} classes, dim {ds.dim}) "
          f"to {args.out}")
    return 0


def _require_labels(train: Dataset) -> None:
    if np.any(train.y < 0):
        raise ValueError("simulated oracle needs a fully labeled dataset")


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    dataset = _load_dataset(args, cfg)
    train, val, test = _split(cfg, dataset)
    _require_labels(train)
    report = run_loop(train, val, test, cfg, SimulatedOracle(dataset.truth()))
    final = report["final"]
    print(f"stop: {final['stop_reason']}  rounds: {final['annotation_rounds']}  "
          f"budget used: {report['budget']['used']}/{report['budget']['total']}")
    if final["metrics"]["test"]:
        print("test: " + "  ".join(
            f"{k}={v:.4f}" for k, v in sorted(final["metrics"]["test"].items())))
    if cfg.output_dir:
        print(f"artifacts in {cfg.output_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import AnnotationStore, HumanOracle, create_app

    cfg = _load_run_config(args)
    dataset = _load_dataset(args, cfg)
    train, val, test = _split(cfg, dataset)

    store = AnnotationStore(train.n_classes)
    oracle = HumanOracle(store)
    app = create_app(store, train, static_dir=args.static)
    server = uvicorn.Server(uvicorn.Config(app, host=args.bind, port=args.port,
                                           log_level="warning"))

    failures: list[BaseException] = []

    def work():
        try:
            run_loop(train, val, test, cfg, oracle, status=store.on_status)
        except BaseException as e:  # surface loop crashes in the main thread
            failures.append(e)
            store.abort()
        finally:
            if args.exit_on_done:
                server.should_exit = True

    thread = threading.Thread(target=work, daemon=True)
    thread.start()
    print(f"annotation service on http://{args.bind}:{args.port}")
    server.run()
    if failures:
        raise failures[0]
    return 0


def cmd_select(args) -> int:
    cfg = _load_run_config(args)
    model = load_checkpoint(args.checkpoint)
    dataset = _load_dataset(args, cfg)
    k = args.k if args.k is not None else cfg.k_per_selector(dataset.n)
    vat = VatConfig(tau=cfg.aus.tau, n_t=cfg.aus.n_t, xi=cfg.aus.xi, k=k)
    bus = BusConfig(m=cfg.bus.m, k=k)
    rng = np.random.default_rng((cfg.seed, 3, 0))
    aus_scores, bus_scores, aus_top, bus_top, ordered, ranks, _, _ = \
        rank_candidates(model, dataset.ids, dataset.x, k=k,
                        n_classes=model.n_classes, vat=vat, bus=bus, rng=rng)
    out = {
        "k": k,
        "unstable_ids": aus_top,
        "uncertain_ids": bus_top,
        "candidates": ordered,
        "unified_rank": {str(i): ranks[i] for i in ordered},
    }
    text = dump_json(out)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
        print(f"wrote {len(ordered)} candidates to {args.out}")
    else:
        print(text)
    return 0


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    model = load_checkpoint(args.checkpoint)
    dataset = _load_dataset(args, cfg)
    labeled = dataset.y >= 0
    if not np.any(labeled):
        raise ValueError("eval needs ground-truth labels")
    pred = forward(model, dataset.x[labeled]).pred_class
    metrics = compute_metrics(pred, dataset.y[labeled], model.n_classes)
    print(dump_json(metrics))
    return 0


def variant_config(cfg: RunConfig, variant: str) -> RunConfig:
    import copy

    out = copy.deepcopy(cfg)
    out.loop.disable_adaptive_threshold = variant == "-AS"
    out.loop.disable_aus = variant == "-AUS"
    out.loop.disable_bus = variant == "-BUS"
    out.loop.random_sampling = variant == "SSL+RS"
    out.output_dir = None
    return out


def cmd_ablate(args) -> int:
    cfg = _load_run_config(args)
    dataset = _load_dataset(args, cfg)
    train, val, test = _split(cfg, dataset)
    _require_labels(train)
    rows = []
    for variant in VARIANTS:
        vcfg = variant_config(cfg, variant)
        report = run_loop(train, val, test, vcfg,
                          SimulatedOracle(dataset.truth()))
        m = report["final"]["metrics"]["test"]
        rows.append((variant, m, report["budget"]["used"]))
        print(f"done: {variant}", file=sys.stderr)
    header = f"{'variant':>8} | {'ACC':>7} {'MP':>7} {'MRC':>7} {'MF1':>7} {'ER':>7} | used"
    print(header)
    print("-" * len(header))
    for variant, m, used in rows:
        print(f"{variant:>8} | {m['ACC']:7.4f} {m['MP']:7.4f} {m['MRC']:7.4f} "
              f"{m['MF1']:7.4f} {m['ER']:7.4f} | {used}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="labelloop")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="emit a synthetic dataset as CSV")
    g.add_argument("--kind", default="gaussians",
                   choices=["gaussians", "moons", "rings"])
    g.add_argument("--n", type=int, default=3000)
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--ratio", default=None,
                   help="comma-separated class ratio, e.g. 8.7,1")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    def common_run_args(sp, with_out=True):
        sp.add_argument("--config", default=None, help="YAML run configuration")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--data", default=None,
                        help="CSV (or IDX image) dataset; default: synthetic")
        sp.add_argument("--labels", default=None, help="IDX label file")
        if with_out:
            sp.add_argument("--out", default=None, help="run output directory")

    t = sub.add_parser("train", help="closed loop with the simulated oracle")
    common_run_args(t)
    t.add_argument("--cold-start", action="store_true", dest="cold_start")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("serve", help="closed loop with a human oracle over HTTP")
    common_run_args(s)
    s.add_argument("--bind", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--static", default=None, help="static UI directory")
    s.add_argument("--exit-on-done", action="store_true", dest="exit_on_done")
    s.add_argument("--cold-start", action="store_true", dest="cold_start")
    s.set_defaults(func=cmd_serve)

    se = sub.add_parser("select", help="one-shot selection from a checkpoint")
    common_run_args(se, with_out=False)
    se.add_argument("--checkpoint", required=True)
    se.add_argument("--k", type=int, default=None)
    se.add_argument("--out", default=None, help="write candidates JSON here")
    se.set_defaults(func=cmd_select)

    e = sub.add_parser("eval", help="metrics for a checkpoint on a dataset")
    common_run_args(e, with_out=False)
    e.add_argument("--checkpoint", required=True)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="run the ablation variants and compare")
    common_run_args(a)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
