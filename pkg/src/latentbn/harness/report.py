"""Collate a run directory into ``report.md`` with invariant checks.

Checks carry stable claim ids:

``C-NONNEG``
    every error mean is >= -3 se (errors are expected KL divergences).
``C-DN-ORDER``
    Dn1 >= Dn2 at every (eta, n): knowing all labels costs at least as much
    as knowing a prefix.
``C-DR-ORDER``
    Dr1 >= Dr2 >= Dr3 at every (eta, n).
``C-SEED-TRACE``
    every replicate seed equals the value derived from the manifest.
``C-FIT-BRACKET``
    fitted ln-n coefficients against the bound bracket; informational only,
    since the bracket is asymptotic.

Ordering margins use the paired standard error of replicate differences.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..estimation import curve_seed, mix_seed
from .results import read_replicates, read_results

SIGMAS = 3.0
ORDER_CHAINS = {"C-DN-ORDER": ("Dn1", "Dn2"), "C-DR-ORDER": ("Dr1", "Dr2", "Dr3")}


@dataclass
class Check:
    claim: str
    description: str
    outcome: str  # PASS, FAIL or INFO
    detail: str = ""


@dataclass
class Report:
    sections: list = field(default_factory=list)  # (title, markdown body)
    checks: list = field(default_factory=list)
    missing: list = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(c.outcome == "FAIL" for c in self.checks)

    def render(self) -> str:
        lines = ["# Run report", ""]
        if self.missing:
            lines += ["Missing artifacts: " + ", ".join(self.missing), ""]
        if self.checks:
            lines += ["## Checks", "", "| claim | outcome | check | detail |", "|---|---|---|---|"]
            lines += [f"| {c.claim} | {c.outcome} | {c.description} | {c.detail} |" for c in self.checks]
            lines.append("")
        for title, body in self.sections:
            lines += [f"## {title}", "", body.rstrip(), ""]
        return "\n".join(lines).rstrip() + "\n"


def _g(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6g}"


def _results_section(rows) -> str:
    out = ["| kind | eta1 | eta2 | n | replicates | mean | stderr | n*mean | status |", "|---|---|---|---|---|---|---|---|---|"]
    for r in rows:
        nm = r.n * r.mean if r.mean is not None else None
        out.append(f"| {r.kind} | {r.eta1:g} | {r.eta2:g} | {r.n} | {r.replicates} | {_g(r.mean)} | "
                   f"{_g(r.stderr)} | {_g(nm)} | {r.status} |")
    return "\n".join(out)


def _nonneg(rows) -> Check:
    bad = [r for r in rows if r.mean is not None and r.stderr is not None and r.mean < -SIGMAS * r.stderr]
    detail = "; ".join(f"{r.kind} eta1={r.eta1:g} n={r.n}: {r.mean:.3g}" for r in bad)
    return Check("C-NONNEG", "error means >= -3 se", "FAIL" if bad else "PASS", detail)


def _ordering(reps, claim: str, chain) -> tuple[Check, str] | None:
    groups = defaultdict(dict)
    for d in reps:
        groups[(d["eta1"], d["eta2"], d["n"])].setdefault(d["kind"], []).append((d["replicate"], d["value"]))
    table = ["| eta1 | eta2 | n | pair | paired mean diff | paired se | margin / se |", "|---|---|---|---|---|---|---|"]
    failures, seen = [], False
    for (e1, e2, n), kinds in sorted(groups.items()):
        for hi, lo in zip(chain, chain[1:]):
            if hi not in kinds or lo not in kinds:
                continue
            a = dict(kinds[hi])
            b = dict(kinds[lo])
            common = sorted(set(a) & set(b))
            if len(common) < 2:
                continue
            seen = True
            diff = np.array([a[r] - b[r] for r in common])
            mean = float(diff.mean())
            se = float(diff.std(ddof=1) / math.sqrt(diff.size))
            z = mean / se if se > 0 else (math.inf if mean >= 0 else -math.inf)
            table.append(f"| {e1:g} | {e2:g} | {n} | {hi} - {lo} | {mean:.6g} | {se:.6g} | {z:.3g} |")
            if mean < -SIGMAS * se:
                failures.append(f"{hi}<{lo} at eta1={e1:g} n={n}")
    if not seen:
        return None
    check = Check(claim, " >= ".join(chain) + " within -3 paired se", "FAIL" if failures else "PASS", "; ".join(failures))
    return check, "\n".join(table)


def _seed_trace(manifest, reps) -> Check:
    master = manifest["config"]["master_seed"]
    bad = [d for d in reps if d["seed"] != mix_seed(curve_seed(master, d["n"]), d["replicate"])]
    detail = f"{len(bad)} of {len(reps)} seeds do not match" if bad else f"{len(reps)} seeds"
    return Check("C-SEED-TRACE", "replicate seeds derive from the manifest", "FAIL" if bad else "PASS", detail)


def _fit_checks(fits) -> tuple[list, str]:
    checks = []
    table = ["| file | kind | eta1 | lambda | se | residual rms | bracket |", "|---|---|---|---|---|---|---|"]
    for path, doc in fits:
        f = doc["fit"]
        br = doc.get("bracket")
        brs = f"[{br['lower']:g}, {br['upper']:g}]" if br else ""
        table.append(f"| {path.name} | {doc['kind']} | {doc['eta1']:g} | {f['lambda_hat']:.4g} | "
                     f"{f['lambda_stderr']:.3g} | {f['residual_rms']:.3g} | {brs} |")
        if br:
            where = "inside" if br["inside"] else "outside"
            checks.append(Check("C-FIT-BRACKET", f"{doc['kind']} eta1={doc['eta1']:g} fit vs bound bracket", "INFO",
                                f"lambda {f['lambda_hat']:.3g} {where} {brs}"))
    return checks, "\n".join(table)


def build_report(run_dir) -> Report:
    run = Path(run_dir)
    rep = Report()
    manifest_path, results_path, reps_path = run / "manifest.json", run / "results.csv", run / "replicates.csv"
    for p in (manifest_path, results_path, reps_path):
        if not p.exists():
            rep.missing.append(p.name)
    fits = [(p, json.loads(p.read_text())) for p in sorted(run.glob("fit_*.json"))]
    bounds = run / "bounds.json"
    fisher = run / "fisher.json"

    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else None
    if manifest is not None:
        cfg = manifest["config"]
        body = [f"- shape: {json.dumps(cfg['shape'], sort_keys=True)}", f"- kinds: {', '.join(cfg['kinds'])}",
                f"- n grid: {cfg['n_grid']}", f"- replicates: {cfg['replicates']}",
                f"- master seed: {cfg['master_seed']}", f"- seed rule: {manifest['seeds']['rule']}",
                f"- versions: {json.dumps(manifest['versions'], sort_keys=True)}"]
        rep.sections.append(("Configuration", "\n".join(body)))
    if results_path.exists():
        rows = read_results(results_path)
        rep.sections.append(("Results", _results_section(rows)))
        rep.checks.append(_nonneg(rows))
    if reps_path.exists():
        reps = read_replicates(reps_path)
        for claim, chain in ORDER_CHAINS.items():
            got = _ordering(reps, claim, chain)
            if got is not None:
                rep.checks.append(got[0])
                rep.sections.append((f"Ordering {' >= '.join(chain)}", got[1]))
        if manifest is not None:
            rep.checks.append(_seed_trace(manifest, reps))
    if fits:
        checks, table = _fit_checks(fits)
        rep.checks += checks
        rep.sections.append(("Fits", table))
    if bounds.exists():
        doc = json.loads(bounds.read_text())
        head = ["eta1", "dr1_upper", "dr2_upper", "diff_lower", "eta_t"]
        body = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        body += ["| " + " | ".join(_g(r[h]) for h in head) + " |" for r in doc["rows"]]
        rep.sections.append(("Bounds", "\n".join(body)))
    if fisher.exists():
        doc = json.loads(fisher.read_text())
        rep.sections.append(("Fisher coefficients", f"- Kt: {doc['Kt']}\n- singular: {doc['singular']}\n"
                                                    f"- c_n1: {_g(doc['c_n1'])}\n- c_n2: {_g(doc['c_n2'])}"))
    return rep


def write_report(run_dir) -> Report:
    rep = build_report(run_dir)
    (Path(run_dir) / "report.md").write_text(rep.render())
    return rep
