"""Versioned JSON characterization reports.

Unknown keys found on read are kept and written back unchanged, so older
tools can round-trip documents produced by newer ones.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ReportSchemaError
from ..estimation import EfficiencyEstimate, ExpFitResult, TailFitResult, TauSweepResult
from ..waiting import BoundSet

SCHEMA = "spadstats.report"
SCHEMA_VERSION = 1


@dataclass
class ReportDocument:
    input: dict
    tail_fit: TailFitResult
    bounds: BoundSet
    exp_fit: Optional[ExpFitResult] = None
    tau_sweep: Optional[TauSweepResult] = None
    efficiency: Optional[EfficiencyEstimate] = None
    tool_version: str = ""
    seed: Optional[int] = None
    raw: dict = field(default_factory=dict, repr=False)


def _tail_to_dict(f: TailFitResult) -> dict:
    return {"mu_hat_per_slot": f.mu_hat, "c_delta_hat": f.c_delta_hat,
            "fit_window_slots": [int(f.fit_window[0]), int(f.fit_window[1])],
            "residual_rms": f.residual_rms, "bins_used": f.bins_used,
            "bin_width_ps": f.bin_width, "weighted": f.weighted}


def _tail_from_dict(d: dict) -> TailFitResult:
    return TailFitResult(d["mu_hat_per_slot"], d["c_delta_hat"], tuple(d["fit_window_slots"]),
                         d["residual_rms"], d["bins_used"], d["bin_width_ps"], d["weighted"])


_BOUND_OPTIONAL = ("pa_lower", "pa_upper_exact", "ps_lower", "ps_upper", "r0_delta_raw")


def _bounds_to_dict(b: BoundSet) -> dict:
    d = {"r0_delta": b.r0_delta, "pa_upper": b.pa_upper,
         "n_ap_per_trigger_upper": b.n_ap_per_trigger_upper, "clamped": b.clamped}
    for key in _BOUND_OPTIONAL:
        value = getattr(b, key)
        if value is not None:
            d[key] = value
    if b.per_slot_ap_upper is not None:
        d["per_slot_ap_upper"] = [float(v) for v in b.per_slot_ap_upper]
    return d


def _bounds_from_dict(d: dict) -> BoundSet:
    per_slot = d.get("per_slot_ap_upper")
    return BoundSet(d["r0_delta"], d["pa_upper"], d["n_ap_per_trigger_upper"],
                    np.asarray(per_slot) if per_slot is not None else None,
                    clamped=d["clamped"], **{k: d.get(k) for k in _BOUND_OPTIONAL})


def _exp_to_dict(e: ExpFitResult) -> dict:
    return {"p_a0_hat": e.p_a0_hat, "tau0_hat_ps": e.tau0_hat, "objective_value": e.objective_value,
            "p_a0_delta_hat": e.p_a0_delta_hat, "at_boundary": e.at_boundary}


def _exp_from_dict(d: dict) -> ExpFitResult:
    return ExpFitResult(d["p_a0_hat"], d["tau0_hat_ps"], d["objective_value"],
                        d["p_a0_delta_hat"], d["at_boundary"])


def _sweep_to_dict(s: TauSweepResult) -> dict:
    return {"taus_ps": [float(t) for t in s.taus],
            "pa_bounds": [float(v) if math.isfinite(v) else None for v in s.pa_bounds],
            "plateau_tau_ps": s.plateau_tau,
            "errors": {repr(float(k)): v for k, v in s.errors.items()}}


def _sweep_from_dict(d: dict) -> TauSweepResult:
    bounds = np.array([np.nan if v is None else v for v in d["pa_bounds"]], dtype=float)
    return TauSweepResult(np.asarray(d["taus_ps"], dtype=float), bounds, d["plateau_tau_ps"],
                          {float(k): v for k, v in d.get("errors", {}).items()})


def _eff_to_dict(e: EfficiencyEstimate) -> dict:
    return {"eta": e.eta, "mu_s_hat_per_slot": e.mu_s_hat, "mu_d_hat_per_slot": e.mu_d_hat,
            "source_rate_hz": e.source_rate, "clamped": e.clamped}


def _eff_from_dict(d: dict) -> EfficiencyEstimate:
    return EfficiencyEstimate(d["eta"], d["mu_s_hat_per_slot"], d["mu_d_hat_per_slot"],
                              d["source_rate_hz"], d["clamped"])


_SECTIONS = (
    ("tail_fit", _tail_to_dict, _tail_from_dict),
    ("bounds", _bounds_to_dict, _bounds_from_dict),
    ("exp_fit", _exp_to_dict, _exp_from_dict),
    ("tau_sweep", _sweep_to_dict, _sweep_from_dict),
    ("efficiency", _eff_to_dict, _eff_from_dict),
)


def _merge(base, new):
    """Overlay ``new`` on ``base`` recursively, keeping keys only ``base`` knows."""
    if isinstance(base, dict) and isinstance(new, dict):
        out = dict(base)
        for k, v in new.items():
            out[k] = _merge(base.get(k), v)
        return out
    return new


def report_to_dict(doc: ReportDocument) -> dict:
    d = {"schema": SCHEMA, "schema_version": SCHEMA_VERSION, "tool_version": doc.tool_version,
         "input": doc.input}
    if doc.seed is not None:
        d["seed"] = doc.seed
    for name, dump, _ in _SECTIONS:
        value = getattr(doc, name)
        if value is not None:
            d[name] = dump(value)
    return _merge(copy.deepcopy(doc.raw), d)


def report_from_dict(d: dict) -> ReportDocument:
    if d.get("schema") != SCHEMA:
        raise ReportSchemaError(f"not a {SCHEMA} document", version=d.get("schema_version"))
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ReportSchemaError(f"schema version {version!r} is not supported (expected {SCHEMA_VERSION})",
                                version=version)
    try:
        sections = {name: load(d[name]) if d.get(name) is not None else None
                    for name, _, load in _SECTIONS}
        if sections["tail_fit"] is None or sections["bounds"] is None:
            raise ReportSchemaError("tail_fit and bounds sections are required", version=version)
        return ReportDocument(input=d["input"], tool_version=d.get("tool_version", ""),
                              seed=d.get("seed"), raw=copy.deepcopy(d), **sections)
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportSchemaError(f"malformed report: {exc}", version=version) from None


def dumps_report(doc: ReportDocument) -> str:
    try:
        return json.dumps(report_to_dict(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"
    except ValueError as exc:
        raise ReportSchemaError(f"report holds a non-finite number: {exc}", version=SCHEMA_VERSION) from None


def write_report(doc: ReportDocument, path):
    text = dumps_report(doc)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def read_report(path) -> ReportDocument:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ReportSchemaError(f"invalid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise ReportSchemaError("report must be a JSON object")
    return report_from_dict(d)
