"""Command-line entry point: ``doagc {synth,train,analyze,sweep}``.

Exit codes: 0 when every requested artifact was written, 2 for usage or
configuration errors, 1 for data and runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .autodiff import ContractError, DomainError
from .data import DatasetError, InfeasibleSpecError, SynthSpec, generate_synthetic, load_dataset, measured_homophily
from .graph import MultiViewGraph, edge_homophily, homophily_from_labels
from .model import DivergenceError, TrainConfig, TrainResult, train

log = logging.getLogger("doagc")

SWEEP_PARAMS = {"w-init": "w_init", "order": "order", "rho": "rho", "mask-rate": "mask_rate"}


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


# --- helpers ----------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def homophily_report(graph: MultiViewGraph, result: TrainResult) -> list[dict]:
    """HR of the original, similarity-only and reconstructed graph per view."""
    pseudo = result.clusters.onehot
    report = []
    for v, (adj, state) in enumerate(zip(graph.views, result.views)):
        entry = {"view": v + 1, "true": None}
        if graph.labels is not None:
            entry["true"] = {
                "A": homophily_from_labels(adj, graph.labels, graph.k),
                "S": homophily_from_labels(state.s, graph.labels, graph.k),
                "A_hat": homophily_from_labels(state.a_hat, graph.labels, graph.k),
            }
        entry["pseudo"] = {
            "A": edge_homophily(adj, pseudo),
            "S": edge_homophily(state.s, pseudo),
            "A_hat": edge_homophily(state.a_hat, pseudo),
        }
        report.append(entry)
    return report


def _config_from_args(args) -> TrainConfig:
    cfg = TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        order=args.order,
        rho=args.rho,
        mask_rate=args.mask_rate,
        w_init=args.w_init,
        lambda_nrec=args.lambda_nrec,
        hidden_dim=args.hidden_dim,
        embed_dim=args.embed_dim,
        kmeans_interval=args.kmeans_interval,
        seed=args.seed,
        loss_kind=args.loss,
        use_rec_loss=not args.no_rec_loss,
        use_nrec_loss=not args.no_nrec_loss,
        use_s=not args.no_s,
        use_a=not args.no_a,
        topk=args.topk,
    )
    try:
        cfg.validate()
    except ContractError as e:
        raise UsageError(str(e)) from None
    return cfg


def _load(path) -> MultiViewGraph:
    return load_dataset(path)


def _k(args, graph: MultiViewGraph) -> int:
    k = args.k if args.k is not None else graph.k
    if k is None:
        raise UsageError("--k is required: the dataset declares no cluster count")
    return k


def write_trace(trace, path: Path, n_views: int) -> None:
    header = ["epoch", "loss_rec", "loss_nrec"] + [f"w_{v + 1}" for v in range(n_views)]
    header += ["acc", "nmi", "ari", "f1"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for r in trace:
            m = r.metrics
            metrics = [m.acc, m.nmi, m.ari, m.f1] if m is not None else [None] * 4
            out.writerow([r.epoch, _fmt(r.loss_rec), _fmt(r.loss_nrec)] + [_fmt(w) for w in r.w] + [_fmt(x) for x in metrics])


def _write_matrix(path: Path, x: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in x:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _read_matrix(path: Path) -> np.ndarray:
    rows = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    return np.array([[float(c) for c in ln.split(",")] for ln in rows])


def run_training(graph: MultiViewGraph, cfg: TrainConfig, k: int, out: Path, data_dir: str, figures: bool) -> dict:
    start = time.perf_counter()
    result = train(graph, cfg, k)
    elapsed = time.perf_counter() - start
    out.mkdir(parents=True, exist_ok=True)
    write_trace(result.trace, out / "trace.csv", graph.n_views)
    _write_matrix(out / "embedding.csv", result.h)
    (out / "assignments.csv").write_text("".join(f"{int(a)}\n" for a in result.clusters.assignments), encoding="utf-8")
    for v, state in enumerate(result.views):
        _write_matrix(out / f"view_{v + 1}_z.csv", state.z)
    summary = {
        "config": {"data": data_dir, "k": k, **cfg.as_dict()},
        "seed": cfg.seed,
        "metrics": result.metrics.as_dict() if result.metrics else None,
        "final_w": result.final_w,
        "alpha": [s.alpha for s in result.views],
        "homophily": homophily_report(graph, result),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    # timing lives apart from summary.json so that file stays byte-reproducible
    (out / "timing.json").write_text(json.dumps({"wall_clock_seconds": elapsed}) + "\n", encoding="utf-8")
    if figures:
        from .plotting import plot_trace

        plot_trace(result.trace, out / "trace.png")
    log.info("trained in %.2fs", elapsed)
    return summary


# --- commands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    hs = args.homophily
    if len(hs) == 1:
        hs = hs * args.views
    if len(hs) != args.views:
        raise UsageError(f"--homophily gives {len(hs)} values for {args.views} views")
    for h in hs:
        if not 0.0 <= h <= 1.0:
            raise UsageError(f"--homophily {h} outside [0, 1]")
    spec = SynthSpec(
        n=args.nodes,
        k=args.clusters,
        views=args.views,
        homophily=hs,
        edges=args.edges,
        feature_dim=args.feature_dim,
        center_separation=args.center_separation,
        feature_noise=args.feature_noise,
        feature_shift=args.feature_shift,
        seed=args.seed,
        name=args.name,
    )
    try:
        spec.validate()
    except ValueError as e:
        raise UsageError(str(e)) from None
    graph = generate_synthetic(spec, args.out)
    print("homophily: " + " ".join(f"{h:.4f}" for h in measured_homophily(graph)))
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    graph = _load(args.data)
    k = _k(args, graph)
    summary = run_training(graph, cfg, k, Path(args.out), str(args.data), args.figures)
    m = summary["metrics"]
    if m:
        print("ACC {acc:.4f}  NMI {nmi:.4f}  ARI {ari:.4f}  F1 {f1:.4f}".format(**m))
    print("w: " + " ".join(f"{w:.4f}" for w in summary["final_w"]))
    return 0


def cmd_analyze(args) -> int:
    graph = _load(args.data)
    run = Path(args.run) if args.run else None
    if args.labels == "true":
        if graph.labels is None:
            raise UsageError(f"{args.data} has no labels file; use --run for pseudo-labels")
        labels = graph.labels
        source = "true labels"
    elif run is not None:
        labels = np.array([int(t) for t in (run / "assignments.csv").read_text().split()], dtype=np.int64)
        source = f"pseudo-labels from {run}"
    else:
        raise UsageError("no labels available: pass --labels true or --run DIR")
    k = max(int(labels.max()) + 1, graph.k or 0)
    onehot = np.eye(k)[labels]

    rows = []
    if run is not None:
        cfg = json.loads((run / "summary.json").read_text(encoding="utf-8"))
        ws, conf = cfg["final_w"], cfg["config"]
        from . import autodiff as ad
        from .graph import cosine_similarity_graph

        for v, adj in enumerate(graph.views):
            z = _read_matrix(run / f"view_{v + 1}_z.csv")
            tape = ad.Tape()
            s = cosine_similarity_graph(tape.constant(z), conf.get("topk")).value if conf["use_s"] else np.zeros_like(adj)
            a_hat = s + (ws[v] if conf["use_a"] else 0.0) * adj
            rows.append((edge_homophily(adj, onehot), edge_homophily(s, onehot), edge_homophily(a_hat, onehot)))
    else:
        rows = [(edge_homophily(adj, onehot), None, None) for adj in graph.views]

    print(f"homophily ratio against {source}")
    print(f"{'view':<6}{'HR(A)':>10}{'HR(S)':>12}{'HR(Â)':>12}")

    def cell(x, base):
        if x is None:
            return f"{'-':>12}"
        arrow = "↑" if x > base else ("↓" if x < base else " ")
        return f"{x:>10.4f} {arrow}"

    for v, (ha, hs, hh) in enumerate(rows):
        print(f"{v + 1:<6}{ha:>10.4f}{cell(hs, ha)}{cell(hh, ha)}")
    return 0


def cmd_sweep(args) -> int:
    if not args.values:
        raise UsageError("--values must list at least one value")
    base = _config_from_args(args)
    field = SWEEP_PARAMS[args.param]
    graph = _load(args.data)
    k = _k(args, graph)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, value in enumerate(args.values):
        value = int(value) if field == "order" else value
        cfg = TrainConfig(**{**base.as_dict(), field: value})
        if args.seed_offset:
            cfg.seed = base.seed + i
        try:
            cfg.validate()
        except ContractError as e:
            raise UsageError(f"--values {value}: {e}") from None
        res = train(graph, cfg, k)
        m = res.metrics.as_dict() if res.metrics else {"acc": None, "nmi": None, "ari": None, "f1": None}
        rows.append({"value": value, **m, "w": res.final_w})
        log.info("%s=%s done", args.param, value)
    header = ["value", "acc", "nmi", "ari", "f1"] + [f"w_{v + 1}" for v in range(graph.n_views)]
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow(
                [r["value"]] + [_fmt(r[key]) for key in ("acc", "nmi", "ari", "f1")] + [_fmt(w) for w in r["w"]]
            )
    if args.figures:
        from .plotting import plot_sweep

        plot_sweep(args.param, rows, out / "sweep.png")
    for r in rows:
        acc = "" if r["acc"] is None else f"  ACC {r['acc']:.4f}"
        print(f"{args.param}={r['value']}{acc}  w: " + " ".join(f"{w:.4f}" for w in r["w"]))
    return 0


# --- parser -----------------------------------------------------------------


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--k", type=int, default=None, help="cluster count (default: manifest k)")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--order", type=int, default=d.order)
    p.add_argument("--rho", type=float, default=d.rho)
    p.add_argument("--mask-rate", type=float, default=d.mask_rate)
    p.add_argument("--w-init", type=float, default=d.w_init)
    p.add_argument("--lambda-nrec", type=float, default=d.lambda_nrec)
    p.add_argument("--hidden-dim", type=int, default=d.hidden_dim)
    p.add_argument("--embed-dim", type=int, default=d.embed_dim)
    p.add_argument("--kmeans-interval", type=int, default=d.kmeans_interval)
    p.add_argument("--loss", choices=("bce", "mse"), default=d.loss_kind)
    p.add_argument("--topk", type=int, default=None, help="keep the k largest similarities per row")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-rec-loss", action="store_true")
    p.add_argument("--no-nrec-loss", action="store_true")
    p.add_argument("--no-s", action="store_true", help="drop the similarity graph from A_hat")
    p.add_argument("--no-a", action="store_true", help="drop the original graph from A_hat")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="doagc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a homophily-controlled synthetic dataset")
    s = SynthSpec()
    p.add_argument("--out", required=True)
    p.add_argument("--nodes", type=int, default=s.n)
    p.add_argument("--clusters", type=int, default=s.k)
    p.add_argument("--views", type=int, default=s.views)
    p.add_argument("--homophily", type=_float_list, default=[0.2], help="H or H1,H2,... per view")
    p.add_argument("--edges", type=int, default=s.edges)
    p.add_argument("--feature-dim", type=int, default=s.feature_dim)
    p.add_argument("--center-separation", type=float, default=s.center_separation)
    p.add_argument("--feature-noise", type=float, default=s.feature_noise)
    p.add_argument("--feature-shift", type=float, default=s.feature_shift)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--seed", type=int, default=s.seed)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a dataset directory and write run artifacts")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="homophily of A, S and A_hat per view")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", choices=("true",), default=None, help="score against ground-truth labels")
    p.add_argument("--run", default=None, help="trained run directory (pseudo-labels and S, A_hat)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="one training per parameter value")
    _add_train_flags(p)
    p.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    p.add_argument("--values", required=True, type=_float_list)
    p.add_argument("--seed-offset", action="store_true", help="seed each run with seed + index")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except (DatasetError, InfeasibleSpecError, DomainError, ContractError, DivergenceError, FileNotFoundError) as e:
        print(f"doagc: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
