"""Subcommand bodies: simulate, bounds, fisher and fit.

Each function writes its artifacts into an output directory in a fixed
order and returns a small summary dict; exit-code mapping lives in the CLI.
"""

from __future__ import annotations

import platform
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from ..asymptotics import FIT_MODELS, bn_bounds, dn_coefficients, fisher_matrices, fit_lambda_arrays
from ..estimation import curve_seed, estimate_errors, replicate_seeds
from ..evidence import Hyper
from ..model import BNParams, NetworkShape, ShapeError, save_fixture
from .config import BudgetViolation, ConfigError, ExperimentConfig, budget_violations
from .results import (
    ResultRow,
    fmt_float,
    read_results,
    write_gnuplot,
    write_json,
    write_replicates,
    write_results,
)
from .svg import Plot

SEED_RULE = "replicate seed = splitmix64(splitmix64(curve_seed) ^ r); curve_seed = splitmix64(splitmix64(master_seed) ^ n)"


def versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba", "scikit-learn"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _budget_status(cells, n) -> str:
    hits = [f"{kind} needs 2^{bits}" for kind, m, bits in cells if m == n]
    return "budget: " + "; ".join(hits)


def simulate(config: ExperimentConfig, out_dir, workers: int = 1, record_timing: bool = False,
             allow_partial: bool = False) -> dict:
    """Run every (eta, n) cell for all kinds on paired datasets.

    Over-budget cells abort before any computation unless ``allow_partial``,
    in which case they are written as rows with an empty mean and a
    ``budget: ...`` status.
    """
    cells = budget_violations(config)
    if cells and not allow_partial:
        raise BudgetViolation(cells)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shape = config.shape
    bad_n = {n for _, n, _ in cells}

    rows, reps = [], []
    seeds_doc = {}
    for n in config.n_grid:
        seed_n = curve_seed(config.master_seed, n)
        seeds_doc[str(n)] = {"curve_seed": seed_n, "first_replicate_seed": replicate_seeds(seed_n, 1)[0]}
    for eta in config.eta_grid:
        by_kind = {k: [] for k in config.kinds}
        for n in config.n_grid:
            base = dict(K=shape.K, Kstar=shape.Kstar, Kt=shape.Kt, M=shape.M, eta1=eta.eta1, eta2=eta.eta2,
                        n=n, replicates=config.replicates, master_seed=config.master_seed)
            if n in bad_n:
                for k in config.kinds:
                    by_kind[k].append(ResultRow(kind=k, mean=None, stderr=None, status=_budget_status(cells, n), **base))
                continue
            seed_n = curve_seed(config.master_seed, n)
            t0 = time.perf_counter()
            ests = estimate_errors(config.kinds, config.true, shape, eta, n, config.replicates, seed_n, workers)
            wall = (time.perf_counter() - t0) * 1e3 if record_timing else None
            seeds = replicate_seeds(seed_n, config.replicates)
            for k in config.kinds:
                e = ests[k]
                status = "ok" if e.failures == 0 else f"ok: {e.failures} replicates failed"
                by_kind[k].append(ResultRow(kind=k, mean=e.mean, stderr=e.stderr, wall_time_ms=wall, status=status, **base))
                if e.failures == 0:
                    reps += [(k, eta.eta1, eta.eta2, n, r, s, v) for r, (s, v) in enumerate(zip(seeds, e.values))]
        for k in config.kinds:
            rows += by_kind[k]

    write_results(out / "results.csv", rows)
    write_replicates(out / "replicates.csv", reps)
    save_fixture(out / "true_model.json", config.true, shape)
    write_json(out / "manifest.json", {
        "config": config.to_dict(),
        "versions": versions(),
        "seeds": {"rule": SEED_RULE, "per_n": seeds_doc},
        "budget_gaps": [{"evidence": ev, "n": n, "bits": b} for ev, n, b in cells],
        "files": ["results.csv", "replicates.csv", "true_model.json"],
    })
    return {"rows": len(rows), "gaps": len(cells)}


def bounds_table(shape: NetworkShape, eta_grid, out_dir) -> list[dict]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for eta in eta_grid:
        rec = {"K": shape.K, "Kstar": shape.Kstar, "M": shape.M, "eta1": eta.eta1, "eta2": eta.eta2}
        rec.update(bn_bounds(shape, eta).to_dict())
        records.append(rec)
    write_json(out / "bounds.json", {"shape": shape.to_dict(), "rows": records})
    header = list(records[0])
    lines = [",".join(header)]
    for rec in records:
        lines.append(",".join(str(v) if isinstance(v, int) else fmt_float(v) for v in rec.values()))
    (out / "bounds.csv").write_text("\n".join(lines) + "\n")
    return records


def fisher_summary(true: BNParams, shape: NetworkShape, Kt: int | None, out_dir) -> dict:
    """Fisher matrices and coefficients of the true model with its own ``Kstar`` latents.

    Singular triples are reported with ``c_n1 = c_n2 = null``.
    """
    Kt = shape.Kt if Kt is None else int(Kt)
    if not 1 <= Kt <= true.K:
        raise ConfigError(f"Kt must be in 1..{true.K}")
    triple = fisher_matrices(true, Kt)
    doc = {
        "shape": shape.to_dict(),
        "Kt": Kt,
        "I_X": triple.I_X.tolist(),
        "I_XY": triple.I_XY.tolist(),
        "I_XY11": triple.I_XY11.tolist(),
        "conditions": list(triple.conditions),
        "singular": triple.singular,
        "c_n1": None,
        "c_n2": None,
    }
    if not triple.singular:
        doc["c_n1"], doc["c_n2"] = dn_coefficients(triple)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "fisher.json", doc)
    return doc


def select_rows(rows, kind: str, eta1: float | None = None, eta2: float | None = None) -> list[ResultRow]:
    """Usable rows of one kind and one configuration, sorted by ``n``."""
    picked = [
        r for r in rows
        if r.kind == kind and r.status.startswith("ok") and r.mean is not None
        and (eta1 is None or r.eta1 == eta1) and (eta2 is None or r.eta2 == eta2)
    ]
    keys = {r.config_key for r in picked}
    if len(keys) > 1:
        raise ConfigError(
            f"{len(keys)} configurations mixed in rows of kind {kind}; select one with --eta1/--eta2"
        )
    if len({r.n for r in picked}) != len(picked):
        raise ConfigError(f"duplicate n among rows of kind {kind}")
    return sorted(picked, key=lambda r: r.n)


def _band(kind: str, shape: NetworkShape, eta: Hyper):
    """``(lower, upper)`` ln-n coefficient bracket drawn behind a fit, if any."""
    if not shape.redundant:
        return None
    b = bn_bounds(shape, eta)
    if kind == "Dr1":
        return b.diff_lower, b.dr1_upper
    if kind == "Dr2":
        return 0.0, b.dr2_upper
    return None


def fit_results(results_csv, kind: str, model: str, out_dir, eta1=None, eta2=None) -> dict:
    if model not in FIT_MODELS:
        raise ConfigError(f"model must be one of {FIT_MODELS}")
    rows = select_rows(read_results(results_csv), kind, eta1, eta2)
    if len(rows) < 3:
        raise ConfigError(f"need at least 3 usable rows of kind {kind}, found {len(rows)}")
    r0 = rows[0]
    shape = NetworkShape(K=r0.K, Kstar=r0.Kstar, Kt=r0.Kt, M=r0.M)
    eta = Hyper(r0.eta1, r0.eta2)
    n = np.array([r.n for r in rows], dtype=float)
    mean = np.array([r.mean for r in rows])
    se = np.array([r.stderr if r.stderr is not None else 0.0 for r in rows])
    fit = fit_lambda_arrays(n, mean, se, model)

    doc = {"kind": kind, "eta1": eta.eta1, "eta2": eta.eta2, "shape": shape.to_dict(),
           "master_seed": r0.master_seed, "replicates": r0.replicates, "fit": fit.to_dict()}
    band = _band(kind, shape, eta)
    if band is not None:
        doc["bracket"] = {"lower": band[0], "upper": band[1],
                          "inside": bool(band[0] <= fit.lambda_hat <= band[1])}

    stem = f"fit_{kind}_eta1={fmt_float(eta.eta1)}_eta2={fmt_float(eta.eta2)}"
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / f"{stem}.json", doc)

    grid = np.linspace(n.min(), n.max(), 50)
    fitted = fit.lambda_hat * np.log(grid) + fit.intercept
    if fit.mhat_minus_one is not None:
        fitted -= fit.mhat_minus_one * np.log(np.log(grid))
    plot = Plot(title=f"{kind}, eta1={eta.eta1:g}, eta2={eta.eta2:g}", xlabel="n", ylabel="n * D(n)")
    if band is not None:
        anchor = fitted - fit.lambda_hat * np.log(grid)
        plot.bands.append((f"bound bracket [{band[0]:g}, {band[1]:g}] ln n",
                           list(grid), list(anchor + band[0] * np.log(grid)), list(anchor + band[1] * np.log(grid))))
    plot.lines.append((f"fit lambda={fit.lambda_hat:.3f}", list(grid), list(fitted), False))
    plot.points.append(("estimate +- 1 se", list(n), list(n * mean), list(n * se)))
    (out / f"{stem}.svg").write_text(plot.render())
    write_gnuplot(out / f"{stem}.dat", "n n*D n*stderr fitted", [n, n * mean, n * se,
                  fit.lambda_hat * np.log(n) + fit.intercept
                  - (fit.mhat_minus_one or 0.0) * np.log(np.log(n))])
    return doc


def shape_from_args(K, Kstar, Kt, M) -> NetworkShape:
    try:
        return NetworkShape(K=K, Kstar=Kstar, Kt=Kt if Kt is not None else Kstar, M=M)
    except ShapeError as exc:
        raise ConfigError(str(exc)) from exc

