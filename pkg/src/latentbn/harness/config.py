"""Experiment configuration: JSON schema and fail-fast validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..estimation import ERROR_KINDS, check_error_kind, evidences_for
from ..evidence import ENUMERATION_CAP_BITS, BudgetError, Hyper, enumeration_bits
from ..model import BNParams, NetworkShape, ShapeError


class ConfigError(ValueError):
    pass


class BudgetViolation(BudgetError):
    """One or more grid cells exceed the enumeration cap."""

    def __init__(self, cells):
        super().__init__(max(bits for _, _, bits in cells), ENUMERATION_CAP_BITS)
        self.cells = cells
        listing = ", ".join(f"{kind} at n={n} needs 2^{bits}" for kind, n, bits in cells)
        self.args = (f"enumeration budget exceeded (cap 2^{ENUMERATION_CAP_BITS}): {listing}",)


@dataclass(frozen=True)
class ExperimentConfig:
    shape: NetworkShape
    true: BNParams
    eta_grid: tuple
    kinds: tuple
    n_grid: tuple
    replicates: int
    master_seed: int
    output_dir: str = "run"
    true_source: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "shape": self.shape.to_dict(),
            "true": self.true_source or self.true.to_dict(),
            "eta": [{"eta1": h.eta1, "eta2": h.eta2} for h in self.eta_grid],
            "kinds": list(self.kinds),
            "n_grid": list(self.n_grid),
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
        }

    def with_overrides(self, **kw) -> ExperimentConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _true_model(entry: dict, shape: NetworkShape) -> tuple[BNParams, dict]:
    if "generator_seed" in entry:
        margin = float(entry.get("margin", 0.05))
        if not 0 < margin < 0.5:
            raise ConfigError("margin must be in (0, 0.5)")
        true = BNParams.random(shape.Kstar, shape.M, int(entry["generator_seed"]), margin)
        return true, {"generator_seed": int(entry["generator_seed"]), "margin": margin}
    try:
        true = BNParams.from_dict(entry)
    except (KeyError, ShapeError, ValueError) as exc:
        raise ConfigError(f"bad true model: {exc}") from exc
    if true.K != shape.Kstar or true.M != shape.M:
        raise ConfigError(f"true model must have Kstar={shape.Kstar} latents and M={shape.M} observables")
    return true, {}


def parse_config(doc: dict) -> ExperimentConfig:
    try:
        shape = NetworkShape.from_dict(doc["shape"])
        true, source = _true_model(doc["true"], shape)
        eta_grid = tuple(Hyper(float(e["eta1"]), float(e["eta2"])) for e in doc["eta"])
        kinds = tuple(doc["kinds"])
        n_grid = tuple(int(n) for n in doc["n_grid"])
        replicates = int(doc["replicates"])
        master_seed = int(doc["master_seed"])
    except KeyError as exc:
        raise ConfigError(f"missing config field {exc}") from exc
    except (ShapeError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    try:
        true.check_true()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not eta_grid:
        raise ConfigError("eta grid is empty")
    if not kinds or any(k not in ERROR_KINDS for k in kinds):
        raise ConfigError(f"kinds must be a nonempty subset of {ERROR_KINDS}")
    for kind in kinds:
        try:
            check_error_kind(kind, shape)
        except ShapeError as exc:
            raise ConfigError(str(exc)) from exc
    if not n_grid or any(n < 1 for n in n_grid) or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigError("n_grid must be a strictly increasing list of positive integers")
    if replicates < 2:
        raise ConfigError("replicates must be at least 2")
    if not 0 <= master_seed < 2**64:
        raise ConfigError("master_seed must be an unsigned 64-bit integer")
    return ExperimentConfig(
        shape=shape,
        true=true,
        eta_grid=eta_grid,
        kinds=kinds,
        n_grid=n_grid,
        replicates=replicates,
        master_seed=master_seed,
        output_dir=str(doc.get("output_dir", "run")),
        true_source=source,
    )


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(doc)


def budget_violations(config: ExperimentConfig) -> list[tuple[str, int, int]]:
    """``(evidence kind, n, bits)`` for every cell above the cap."""
    evidences = evidences_for(config.kinds, config.shape)
    out = []
    for n in config.n_grid:
        for ev in evidences:
            bits = enumeration_bits("complete" if ev == "XY" else ev, config.shape, n)
            if bits > ENUMERATION_CAP_BITS:
                out.append((f"Z_{ev}", n, bits))
    return out


def example_config() -> dict:
    return {
        "shape": {"K": 2, "Kstar": 1, "Kt": 1, "M": 2},
        "true": {"a": [0.3], "b": {"0": [0.85, 0.75], "1": [0.2, 0.3]}},
        "eta": [{"eta1": 1.0, "eta2": 1.0}],
        "kinds": ["Dr1", "Dr2"],
        "n_grid": [3, 4, 5, 6],
        "replicates": 100,
        "master_seed": 20240601,
        "output_dir": "runs/example",
    }

