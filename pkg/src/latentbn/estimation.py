"""Monte Carlo estimates of latent-variable estimation errors and free energies.

One replicate draws a dataset ``(X, Y1)`` from the true model and evaluates
every needed log evidence on it exactly.  For an error of kind ``A`` with
target labels ``T`` (all true latents, or the first ``Kt`` of them) the
replicate value is::

    (1/n) [ ln q(T | X) - ln Z_A(X, T) + ln Z(X) ]

whose expectation is the KL divergence between the true and the Bayes label
posteriors.  All kinds requested together share the same datasets, so their
differences are paired.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .evidence import (
    BudgetError,
    Hyper,
    check_budget,
    log_Z_complete,
    log_Z_X,
    log_Z_XY1,
    log_Z_XY1C,
    log_Z_XY11,
)
from .model import BNParams, NetworkShape, ShapeError, entropies, joint_table, marginal_entropy, pattern_index, sample_dataset

ERROR_KINDS = ("Dn1", "Dn2", "Dr1", "Dr2", "Dr3")
FREE_ENERGY_KINDS = ("X", "XY", "XY1", "XY1C", "XY11")

# error kind -> (target labels, evidence kind)
_ERROR_PARTS = {
    "Dn1": ("Y1", "XY"),
    "Dn2": ("Y11", "XY11"),
    "Dr1": ("Y1", "XY1C"),
    "Dr2": ("Y1", "XY1"),
    "Dr3": ("Y11", "XY11"),
}
_FE_TARGET = {"X": None, "XY": "Y1", "XY1": "Y1", "XY1C": "Y1", "XY11": "Y11"}

_MASK64 = (1 << 64) - 1
_GOLDEN64 = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer (Steele, Lea and Flood constants)."""
    z = (x + _GOLDEN64) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(master_seed: int, index: int) -> int:
    """Seed of replicate ``index`` under ``master_seed``: ``splitmix64(splitmix64(master) ^ index)``."""
    return splitmix64(splitmix64(int(master_seed) & _MASK64) ^ (int(index) & _MASK64))


class EstimationError(RuntimeError):
    pass


def check_error_kind(kind: str, shape: NetworkShape):
    if kind not in ERROR_KINDS:
        raise ValueError(f"unknown error kind {kind!r}; expected one of {ERROR_KINDS}")
    if kind in ("Dn1", "Dn2") and shape.redundant:
        raise ShapeError(f"{kind} needs K == Kstar")
    if kind in ("Dr1", "Dr2", "Dr3") and not shape.redundant:
        raise ShapeError(f"{kind} needs K > Kstar")
    if kind in ("Dn2", "Dr3"):
        shape.require_marginal_target()


def check_free_energy_kind(kind: str, shape: NetworkShape):
    if kind not in FREE_ENERGY_KINDS:
        raise ValueError(f"unknown free-energy kind {kind!r}; expected one of {FREE_ENERGY_KINDS}")
    if kind == "XY" and shape.redundant:
        raise ShapeError("the complete-data free energy needs K == Kstar")
    if kind == "XY11":
        shape.require_marginal_target()


def evidences_for(kinds, shape: NetworkShape) -> list[str]:
    """Evidence kinds needed for a set of error kinds (always including ``X``)."""
    needed = {"X"}
    for kind in kinds:
        check_error_kind(kind, shape)
        needed.add(_ERROR_PARTS[kind][1])
    return sorted(needed)


def check_replicate_budget(evidences, shape: NetworkShape, n: int):
    for ev in evidences:
        check_budget("complete" if ev == "XY" else ev, shape, n)


@dataclass(frozen=True, eq=False)
class _TrueTables:
    log_qx: np.ndarray
    log_qxy1: np.ndarray
    log_qxy11: np.ndarray | None

    @classmethod
    def build(cls, true: BNParams, shape: NetworkShape) -> _TrueTables:
        table = joint_table(true)
        with np.errstate(divide="ignore"):
            log_qx = np.log(table.marginal_x())
            log_qxy1 = np.log(table.probs)
            log_qxy11 = np.log(table.marginal_prefix(shape.Kt)) if shape.Kt < shape.Kstar else None
        return cls(log_qx, log_qxy1, log_qxy11)


@dataclass(frozen=True)
class ReplicateRecord:
    """Log quantities of one simulated dataset; ``log_q`` maps target name to ``ln q(X, T)``."""

    seed: int
    n: int
    log_q: dict
    log_z: dict

    def error(self, kind: str) -> float:
        target, ev = _ERROR_PARTS[kind]
        cond = self.log_q[target] - self.log_q["X"]
        return (cond - self.log_z[ev] + self.log_z["X"]) / self.n

    def free_energy(self, kind: str) -> float:
        target = _FE_TARGET[kind]
        return self.log_q["X" if target is None else target] - self.log_z[kind]


def _evidence(ev: str, X, Y1, eta: Hyper, shape: NetworkShape) -> float:
    if ev == "X":
        return log_Z_X(X, eta, shape).value
    if ev == "XY":
        return log_Z_complete(X, Y1, eta).value
    if ev == "XY1":
        return log_Z_XY1(X, Y1, eta, shape).value
    if ev == "XY1C":
        return log_Z_XY1C(X, Y1, eta, shape).value
    return log_Z_XY11(X, Y1[:, : shape.Kt], eta, shape).value


def run_replicate(true: BNParams, shape: NetworkShape, eta: Hyper, n: int, seed: int, evidences, tables=None) -> ReplicateRecord:
    """Simulate one dataset and evaluate the requested log evidences on it."""
    if tables is None:
        tables = _TrueTables.build(true, shape)
    data = sample_dataset(true, n, seed)
    if n:
        xi = pattern_index(data.X)
        yi = pattern_index(data.Y1)
        log_q = {"X": float(tables.log_qx[xi].sum()), "Y1": float(tables.log_qxy1[yi, xi].sum())}
        if tables.log_qxy11 is not None:
            y11 = yi >> (shape.Kstar - shape.Kt)
            log_q["Y11"] = float(tables.log_qxy11[y11, xi].sum())
    else:
        log_q = {"X": 0.0, "Y1": 0.0, "Y11": 0.0}
    log_z = {ev: _evidence(ev, data.X, data.Y1, eta, shape) for ev in evidences}
    values = list(log_q.values()) + list(log_z.values())
    if not all(math.isfinite(v) for v in values):
        raise FloatingPointError(f"non-finite log quantity in replicate with seed {seed}")
    return ReplicateRecord(seed=int(seed), n=n, log_q=log_q, log_z=log_z)


def _run_one(args):
    true, shape, eta, n, seed, evidences, tables = args
    try:
        return run_replicate(true, shape, eta, n, seed, evidences, tables)
    except (FloatingPointError, ValueError) as exc:
        return exc


def run_replicates(true, shape, eta, n, seeds, evidences, workers: int = 1):
    """Records for every seed, in seed order; failed replicates come back as exceptions."""
    if true.K != shape.Kstar or true.M != shape.M:
        raise ShapeError(f"true model must have Kstar={shape.Kstar} latents and M={shape.M} observables")
    evidences = list(evidences)
    check_replicate_budget(evidences, shape, n)
    tables = _TrueTables.build(true, shape)
    jobs = [(true, shape, eta, n, int(s), evidences, tables) for s in seeds]
    if workers <= 1 or len(jobs) < 2:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _successes(results, max_failure_rate: float = 0.01):
    good = [r for r in results if isinstance(r, ReplicateRecord)]
    bad = [r for r in results if not isinstance(r, ReplicateRecord)]
    if len(bad) > max_failure_rate * len(results):
        raise EstimationError(f"{len(bad)} of {len(results)} replicates failed; first: {bad[0]}")
    return good, len(bad)


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return math.nan, math.nan
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else math.nan
    return mean, stderr


@dataclass(frozen=True, eq=False)
class ErrorEstimate:
    kind: str
    n: int
    mean: float
    stderr: float
    replicates: int
    master_seed: int
    values: np.ndarray = field(repr=False)
    failures: int = 0


@dataclass(frozen=True, eq=False)
class FreeEnergyEstimate:
    """``mean`` uses ``ln q(X, T)`` per replicate (expectation ``-n S``); ``plugin`` uses ``-n S`` with the exact entropy instead."""

    kind: str
    n: int
    mean: float
    stderr: float
    plugin: float
    replicates: int
    master_seed: int
    values: np.ndarray = field(repr=False)
    failures: int = 0


def replicate_seeds(master_seed: int, replicates: int) -> list[int]:
    return [mix_seed(master_seed, r) for r in range(replicates)]


def replicate_error(kind: str, true: BNParams, shape: NetworkShape, eta: Hyper, n: int, seed: int) -> float:
    """One-dataset estimate of the error ``kind`` in nats per datum."""
    check_error_kind(kind, shape)
    if n < 1:
        raise ValueError("n must be at least 1")
    rec = run_replicate(true, shape, eta, n, seed, evidences_for([kind], shape))
    return rec.error(kind)


def estimate_errors(kinds, true, shape, eta, n, replicates, master_seed, workers=1, seeds=None) -> dict:
    """Paired estimates of several error kinds on the same datasets."""
    kinds = list(kinds)
    if n < 1:
        raise ValueError("n must be at least 1")
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    seeds = replicate_seeds(master_seed, replicates) if seeds is None else list(seeds)
    if len(seeds) != replicates:
        raise ValueError("need one seed per replicate")
    evidences = evidences_for(kinds, shape)
    good, failures = _successes(run_replicates(true, shape, eta, n, seeds, evidences, workers))
    out = {}
    for kind in kinds:
        values = np.array([r.error(kind) for r in good])
        mean, stderr = _mean_stderr(values)
        out[kind] = ErrorEstimate(kind, n, mean, stderr, len(good), int(master_seed), values, failures)
    return out


def estimate_error(kind, true, shape, eta, n, replicates, master_seed, workers=1, seeds=None) -> ErrorEstimate:
    return estimate_errors([kind], true, shape, eta, n, replicates, master_seed, workers, seeds)[kind]


def estimate_free_energies(kinds, true, shape, eta, n, replicates, master_seed, workers=1) -> dict:
    """Paired free-energy estimates ``F_A(n)`` for several evidence kinds."""
    kinds = list(kinds)
    for kind in kinds:
        check_free_energy_kind(kind, shape)
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    seeds = replicate_seeds(master_seed, replicates)
    good, failures = _successes(run_replicates(true, shape, eta, n, seeds, sorted(set(kinds) | {"X"}), workers))
    s_x, s_xy = entropies(true)
    s_xy11 = marginal_entropy(true, shape.Kt)
    out = {}
    for kind in kinds:
        values = np.array([r.free_energy(kind) for r in good])
        mean, stderr = _mean_stderr(values)
        entropy = {"X": s_x, "XY11": s_xy11}.get(kind, s_xy)
        plugin = -n * entropy - float(np.mean([r.log_z[kind] for r in good]))
        out[kind] = FreeEnergyEstimate(kind, n, mean, stderr, plugin, len(good), int(master_seed), values, failures)
    return out


def estimate_free_energy(kind, true, shape, eta, n, replicates, master_seed, workers=1) -> FreeEnergyEstimate:
    return estimate_free_energies([kind], true, shape, eta, n, replicates, master_seed, workers)[kind]


def paired_difference(a: ErrorEstimate, b: ErrorEstimate) -> tuple[float, float]:
    """Mean and standard error of ``a - b`` replicate by replicate."""
    if a.values.shape != b.values.shape or a.n != b.n:
        raise ValueError("estimates are not paired")
    return _mean_stderr(a.values - b.values)


@dataclass(frozen=True, eq=False)
class ErrorCurve:
    kind: str
    shape: NetworkShape
    true: BNParams
    eta: Hyper
    estimates: list
    gaps: list = field(default_factory=list)
    master_seed: int = 0

    @property
    def n_grid(self) -> list[int]:
        return [e.n for e in self.estimates]

    def arrays(self):
        """``(n, mean, stderr)`` arrays over the estimated points."""
        return (
            np.array([e.n for e in self.estimates], dtype=float),
            np.array([e.mean for e in self.estimates]),
            np.array([e.stderr for e in self.estimates]),
        )


def curve_seed(master_seed: int, n: int) -> int:
    """Master seed for the grid point ``n`` of a curve."""
    return mix_seed(master_seed, n)


def error_curves(kinds, true, shape, eta, n_grid, replicates, master_seed, workers=1) -> dict:
    """Paired curves for several kinds over ``n_grid``.

    Grid points that exceed the enumeration budget are skipped and listed in
    ``gaps`` as ``(n, reason)``.
    """
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly increasing")
    kinds = list(kinds)
    evidences = evidences_for(kinds, shape)
    per_kind = {k: [] for k in kinds}
    gaps = []
    for n in n_grid:
        try:
            check_replicate_budget(evidences, shape, n)
        except BudgetError as exc:
            gaps.append((n, str(exc)))
            continue
        ests = estimate_errors(kinds, true, shape, eta, n, replicates, curve_seed(master_seed, n), workers)
        for k in kinds:
            per_kind[k].append(ests[k])
    return {
        k: ErrorCurve(k, shape, true, eta, per_kind[k], list(gaps), int(master_seed)) for k in kinds
    }


def error_curve(kind, true, shape, eta, n_grid, replicates, master_seed, workers=1) -> ErrorCurve:
    return error_curves([kind], true, shape, eta, n_grid, replicates, master_seed, workers)[kind]
