"""Monte-Carlo evaluation, parameter sweeps and the discrete-vs-relaxed allocation study."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..codec import compress, decompress
from ..designs import CompressionDesign
from ..freq_filter import design_frequency_domain
from ..graph import eigendecompose, load_graph, random_geometric_graph
from ..signal_model import SignalModel, db_to_power, inverse_eigenvalue_variances, mmse_estimator, mmse_floor, sample_signal
from ..unconstrained import achievable_excess_mse, design_unconstrained, greedy_bit_allocation, waterfill_real_bits
from .baselines import baseline_identical, baseline_separate

__all__ = [
    "ResultRow",
    "ExperimentConfig",
    "METHODS",
    "trial_rng",
    "evaluate",
    "evaluate_mmse",
    "make_design",
    "build_model",
    "sweep",
    "write_results",
    "fig2_study",
    "CSV_HEADER",
]

log = logging.getLogger(__name__)

METHODS = ("unconstrained", "freq", "identical", "separate", "mmse")
CSV_HEADER = ["method", "log2M", "noise_db", "mse_empirical", "mse_predicted", "trials", "seconds"]


@dataclass
class ResultRow:
    method: str
    log2M: float
    noise_db: float
    mse_empirical: float
    mse_predicted: float
    trials: int
    seconds: float
    mse_spectral: float = float("nan")
    stderr: float = float("nan")
    errors: Optional[np.ndarray] = field(default=None, repr=False)

    def as_dict(self, with_errors: bool = False) -> dict:
        d = asdict(self)
        d.pop("errors")
        if with_errors and self.errors is not None:
            d["errors"] = self.errors.tolist()
        return d


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Signal generator for one trial; the same signals are used for every method."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


def _pairwise_sum(v: np.ndarray) -> float:
    # fixed reduction order so that results are bit-stable
    return float(np.add.reduce(v, dtype=float))


def evaluate(
    design: CompressionDesign,
    model: SignalModel,
    trials: int,
    seed: int,
    *,
    method: Optional[str] = None,
    log2m: Optional[float] = None,
    noise_db: float = float("nan"),
) -> ResultRow:
    """Empirical ``E||U_K c - x_hat||^2`` through the full bit-exact codec."""
    if trials < 1:
        raise ValueError("need at least one trial")
    t0 = time.perf_counter()
    err = np.empty(trials)
    err_c = np.empty(trials)
    uk = model.basis
    for t in range(trials):
        x, c = sample_signal(model, trial_rng(seed, t))
        cs = compress(design, x, trial_seed=t)
        c_hat, x_hat = decompress(design, cs)
        err[t] = float(np.sum((uk @ c - x_hat) ** 2))
        err_c[t] = float(np.sum((c - c_hat) ** 2))
    mse = _pairwise_sum(err) / trials
    se = float(np.std(err, ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
    return ResultRow(
        method=method or design.method,
        log2M=float(design.extras.get("bits", np.nan) if log2m is None else log2m),
        noise_db=noise_db,
        mse_empirical=mse,
        mse_predicted=design.predicted_mse,
        trials=trials,
        seconds=time.perf_counter() - t0,
        mse_spectral=_pairwise_sum(err_c) / trials,
        stderr=se,
        errors=err,
    )


def evaluate_mmse(model: SignalModel, trials: int, seed: int, *, log2m: float = float("nan"), noise_db: float = float("nan")) -> ResultRow:
    """Unquantized MMSE estimate on the same signals as :func:`evaluate`."""
    t0 = time.perf_counter()
    est = mmse_estimator(model)
    err = np.empty(trials)
    for t in range(trials):
        x, c = sample_signal(model, trial_rng(seed, t))
        err[t] = float(np.sum((c - est.gamma @ x) ** 2))
    mse = _pairwise_sum(err) / trials
    se = float(np.std(err, ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
    return ResultRow("mmse", float(log2m), float(noise_db), mse, mmse_floor(model), trials, time.perf_counter() - t0, mse, se, err)


# ------------------------------------------------------------------ config


@dataclass
class ExperimentConfig:
    """Grid of methods x budgets x noise levels on one graph."""

    methods: Sequence[str] = ("unconstrained", "identical", "separate", "mmse")
    budgets: Sequence[float] = (20, 40, 60, 80, 100, 120)
    noises_db: Sequence[float] = (-30.0,)
    trials: int = 1000
    seed: int = 0
    n: int = 100
    radius: float = 0.2
    kernel: str = "unit"
    graph_seed: Optional[int] = None
    graph_manifest: Optional[str] = None
    k: int = 20
    prior: object = "inverse_eigenvalue"
    samples: Optional[int] = None
    eta: float = 2.0
    freq_options: dict = field(default_factory=dict)
    csv: Optional[str] = None
    json: Optional[str] = None

    def __post_init__(self):
        if not self.methods:
            raise ValueError("method list is empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if any(b <= 0 for b in self.budgets):
            raise ValueError("budgets must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        cfg = cls.from_dict(json.loads(Path(path).read_text()))
        env = os.environ.get("GSQ_SEED")
        if env is not None:
            cfg.seed = int(env)
        return cfg


def build_model(cfg: ExperimentConfig, noise_db: float) -> SignalModel:
    if cfg.graph_manifest:
        g = load_graph(cfg.graph_manifest)
    else:
        gseed = cfg.seed if cfg.graph_seed is None else cfg.graph_seed
        g = random_geometric_graph(cfg.n, cfg.radius, gseed, kernel=cfg.kernel)
    sg = eigendecompose(g)
    if isinstance(cfg.prior, str):
        if cfg.prior != "inverse_eigenvalue":
            raise ValueError(f"unknown prior rule {cfg.prior!r}")
        pv = inverse_eigenvalue_variances(sg, cfg.k)
    else:
        pv = np.asarray(cfg.prior, dtype=float)
    return SignalModel(sg, cfg.k, pv, db_to_power(noise_db))


def make_design(method: str, model: SignalModel, p: int, bits: float, eta: float = 2.0, **freq_options) -> CompressionDesign:
    if method == "unconstrained":
        return design_unconstrained(model, p, bits, eta)
    if method == "identical":
        return baseline_identical(model, min(p, model.k), bits, eta)
    if method == "separate":
        return baseline_separate(model, p, bits, eta)
    if method == "freq":
        return design_frequency_domain(model, p, bits, eta, **freq_options).design
    raise ValueError(f"no design for method {method!r}")


def sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    """One row per (noise, method, budget); MMSE rows do not depend on the budget."""
    rows = []
    for nd in cfg.noises_db:
        model = build_model(cfg, nd)
        p = cfg.samples or cfg.k
        for method in cfg.methods:
            for b in cfg.budgets:
                t0 = time.perf_counter()
                if method == "mmse":
                    row = evaluate_mmse(model, cfg.trials, cfg.seed, log2m=b, noise_db=nd)
                else:
                    design = make_design(method, model, p, b, cfg.eta, **cfg.freq_options)
                    row = evaluate(design, model, cfg.trials, cfg.seed, method=method, log2m=b, noise_db=nd)
                row.seconds = time.perf_counter() - t0
                log.info("%s bits=%g noise=%gdB mse=%.6g (pred %.6g)", method, b, nd, row.mse_empirical, row.mse_predicted)
                rows.append(row)
    return rows


def write_results(rows: Sequence[ResultRow], csv_path=None, json_path=None) -> None:
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(CSV_HEADER)
            for r in rows:
                wr.writerow([r.method, repr(r.log2M), repr(r.noise_db), repr(r.mse_empirical), repr(r.mse_predicted), r.trials, repr(r.seconds)])
    if json_path:
        Path(json_path).write_text(json.dumps([r.as_dict() for r in rows], indent=2))


# -------------------------------------------------------------------- fig2


def fig2_study(instances: int = 30, k: int = 10, budgets: Sequence[float] = (10, 20), eta: float = 2.0, seed: int = 0) -> list[dict]:
    """Greedy integer levels against the real-valued water-filling bound.

    The singular values are |N(0,1)| draws sorted descending; both excess
    MSEs use the same closed form, so the gap isolates the integer rounding.
    """
    rng = np.random.default_rng(seed)
    lams = [np.sort(np.abs(rng.standard_normal(k)))[::-1] for _ in range(instances)]
    out = []
    for b in budgets:
        for idx, lam in enumerate(lams):
            alloc = greedy_bit_allocation(lam, k, b, eta)
            greedy = achievable_excess_mse(lam, alloc.levels, eta)
            wf = waterfill_real_bits(lam, k, b, eta)
            gap = (greedy - wf.excess_mse) / wf.excess_mse if wf.excess_mse > 0 else 0.0
            out.append({
                "instance": idx,
                "log2M": float(b),
                "greedy_excess": greedy,
                "waterfill_excess": wf.excess_mse,
                "relative_gap": gap,
                "levels": list(alloc.levels),
            })
    return out
