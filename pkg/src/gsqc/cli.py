"""Command-line front end: ``gsqc <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bench.experiment import CSV_HEADER, ExperimentConfig, evaluate, evaluate_mmse, fig2_study, make_design, sweep, write_results
from .bench.ingest import ingest_signals
from .codec import CompressedSignal, compress, decompress
from .designs import load_design, save_design
from .graph import eigendecompose, load_graph, random_geometric_graph, save_graph
from .signal_model import SignalModel, db_to_power, inverse_eigenvalue_variances

log = logging.getLogger("gsqc")


def _seed(value):
    env = os.environ.get("GSQ_SEED")
    return int(env) if env is not None else value


# ----------------------------------------------------------------- models


def _save_model(path, graph_path, model: SignalModel):
    doc = {
        "graph": str(Path(graph_path).resolve()),
        "k": model.k,
        "prior_vars": model.prior_vars.tolist(),
        "noise_var": model.noise_var,
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def _load_model(args) -> SignalModel:
    if getattr(args, "model", None):
        doc = json.loads(Path(args.model).read_text())
        sg = eigendecompose(load_graph(doc["graph"]))
        return SignalModel(sg, int(doc["k"]), np.asarray(doc["prior_vars"]), float(doc["noise_var"]))
    if not args.graph:
        raise SystemExit("need --model or --graph")
    sg = eigendecompose(load_graph(args.graph))
    return SignalModel(sg, args.k, inverse_eigenvalue_variances(sg, args.k), db_to_power(args.noise_db))


def _model_args(p):
    p.add_argument("--model", help="model JSON written by 'ingest'")
    p.add_argument("--graph", help="graph manifest")
    p.add_argument("--k", type=int, default=20, help="bandwidth (with --graph)")
    p.add_argument("--noise-db", type=float, default=-30.0)


def _read_vector(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path).reshape(-1)
    return np.loadtxt(path, delimiter=",").reshape(-1)


# --------------------------------------------------------------- commands


def cmd_gen_graph(args):
    g = random_geometric_graph(args.n, args.radius, _seed(args.seed), kernel=args.kernel)
    out = save_graph(g, args.out)
    print(f"wrote {out} ({g.n} nodes, {int(np.count_nonzero(g.weights) // 2)} edges)")


def cmd_design(args):
    model = _load_model(args)
    p = args.samples or model.k
    opts = {}
    if args.method == "freq" and args.freq_options:
        opts = json.loads(args.freq_options)
    d = make_design(args.method, model, p, args.bits, args.eta, **opts)
    save_design(d, args.out)
    print(json.dumps({
        "method": d.method,
        "levels": d.levels.tolist(),
        "payload_bits": float(np.sum(np.log2(d.levels))),
        "predicted_mse": d.predicted_mse,
        "out": str(args.out),
    }))


def cmd_compress(args):
    d = load_design(args.design)
    cs = compress(d, _read_vector(args.signal), trial_seed=args.trial_seed, use_dither=not args.no_dither)
    Path(args.out).write_bytes(cs.to_bytes())
    print(f"wrote {args.out}: {len(cs.to_bytes())} bytes, payload {cs.payload_bitlen} bits")


def cmd_decompress(args):
    d = load_design(args.design)
    cs = CompressedSignal.from_bytes(Path(args.input).read_bytes())
    c_hat, x_hat = decompress(d, cs)
    np.savetxt(args.out, x_hat[:, None], delimiter=",", fmt="%.17g")
    if args.coeffs:
        np.savetxt(args.coeffs, c_hat[:, None], delimiter=",", fmt="%.17g")
    print(f"wrote {args.out}")


def _emit_rows(rows, path):
    if path:
        write_results(rows, csv_path=path)
    else:
        wr = csv.writer(sys.stdout)
        wr.writerow(CSV_HEADER)
        for r in rows:
            wr.writerow([r.method, r.log2M, r.noise_db, r.mse_empirical, r.mse_predicted, r.trials, round(r.seconds, 3)])


def cmd_eval(args):
    model = _load_model(args)
    seed = _seed(args.seed)
    noise_db = float(10 * np.log10(model.noise_var)) if model.noise_var > 0 else float("-inf")
    if args.design:
        d = load_design(args.design)
        row = evaluate(d, model, args.trials, seed, noise_db=noise_db)
    else:
        row = evaluate_mmse(model, args.trials, seed, noise_db=noise_db)
    _emit_rows([row], args.csv)


def cmd_sweep(args):
    cfg = ExperimentConfig.load(args.config)
    if args.trials is not None:
        cfg.trials = args.trials
    rows = sweep(cfg)
    write_results(rows, csv_path=args.csv or cfg.csv, json_path=args.json or cfg.json)
    if not (args.csv or cfg.csv):
        _emit_rows(rows, None)


def cmd_fig2(args):
    res = fig2_study(args.instances, args.k, args.budgets, args.eta, _seed(args.seed))
    if args.out:
        Path(args.out).write_text(json.dumps(res, indent=2))
    for b in args.budgets:
        gaps = [r["relative_gap"] for r in res if r["log2M"] == float(b)]
        print(f"log2M={b:g}: median relative gap {np.median(gaps):.4f} over {len(gaps)} instances")


def cmd_ingest(args):
    sg, sig, model = ingest_signals(args.graph, args.signals, threshold=args.threshold, bandwidth=args.bandwidth)
    if args.out:
        _save_model(args.out, args.graph, model)
    print(json.dumps({"n": sg.n, "signals": int(sig.shape[1]), "k": model.k, "noise_var": model.noise_var}))


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gsqc", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="random geometric graph")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--radius", type=float, default=0.2)
    p.add_argument("--kernel", choices=["unit", "gaussian"], default="unit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="manifest path (JSON)")
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("design", help="build and save a compression design")
    _model_args(p)
    p.add_argument("--method", choices=["unconstrained", "freq", "identical", "separate"], default="unconstrained")
    p.add_argument("--bits", type=float, required=True, help="total budget log2 M")
    p.add_argument("--samples", type=int, help="number of samples P (default K)")
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--freq-options", help="JSON dict passed to the frequency-domain design")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("compress", help="encode one signal")
    p.add_argument("--design", required=True)
    p.add_argument("--signal", required=True, help="CSV or .npy vector")
    p.add_argument("--trial-seed", type=int, default=0)
    p.add_argument("--no-dither", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="decode a bitstream")
    p.add_argument("--design", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="reconstructed signal CSV")
    p.add_argument("--coeffs", help="also write the spectral estimate")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("eval", help="Monte-Carlo MSE of a design (MMSE without --design)")
    _model_args(p)
    p.add_argument("--design")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="methods x budgets x noise grid")
    p.add_argument("--config", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fig2", help="greedy vs water-filling allocation study")
    p.add_argument("--instances", type=int, default=30)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--budgets", type=float, nargs="+", default=[10, 20])
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fig2)

    p = sub.add_parser("ingest", help="fit a model to a graph and signal CSV")
    p.add_argument("--graph", required=True)
    p.add_argument("--signals", required=True)
    p.add_argument("--threshold", type=float, default=0.99)
    p.add_argument("--bandwidth", type=int)
    p.add_argument("--out", help="model JSON")
    p.set_defaults(func=cmd_ingest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"gsqc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
