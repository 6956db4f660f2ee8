"""Problem files, pilot data and potential-outcome tables.

Problem files are YAML (JSON is accepted as a subset)::

    design:
      K: 2
      N: 1656                 # CRD; or
      blocks:                 # blocked design
        - {name: female, size: 948}
        - {name: male, size: 708}
    criterion: A
    variances: [1, 1, 1, 1]  # one row per block for blocked designs
    costs: {per_unit: [500, 5000, 5000, 10000], budget: 4500000}
    bounds: {lower: 2, upper: [...]}
    tolerance: 1.0e-9
    allocation: [...]         # optional, used by ``alloc simulate``

Pilot data and potential-outcome tables are comma- or tab-delimited with a
header row.
"""
from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
import yaml

from .exact import CostSpec
from .factorial import Criterion, PotentialOutcomes, VarianceSpec, sample_variances, treatment_index

_number = {"type": "number"}
_int_or_list = {
    "anyOf": [
        {"type": "integer", "minimum": 0},
        {"type": "array", "items": {"type": "integer", "minimum": 0}},
        {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
    ]
}

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["design", "criterion", "variances"],
    "additionalProperties": False,
    "properties": {
        "design": {
            "type": "object",
            "required": ["K"],
            "additionalProperties": False,
            "properties": {
                "K": {"type": "integer", "minimum": 1, "maximum": 16},
                "N": {"type": "integer", "minimum": 1},
                "blocks": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["size"],
                        "additionalProperties": False,
                        "properties": {"name": {"type": "string"}, "size": {"type": "integer", "minimum": 1}},
                    },
                },
            },
        },
        "criterion": {"enum": ["A", "D", "E", "a", "d", "e"]},
        "variances": {
            "anyOf": [
                {"type": "array", "items": {"type": "number", "minimum": 0}},
                {"type": "array", "items": {"type": "array", "items": {"type": "number", "minimum": 0}}},
            ]
        },
        "costs": {
            "type": "object",
            "required": ["per_unit", "budget"],
            "additionalProperties": False,
            "properties": {
                "per_unit": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "budget": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lower": _int_or_list, "upper": _int_or_list},
        },
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "allocation": {
            "anyOf": [
                {"type": "array", "items": {"type": "integer", "minimum": 0}},
                {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
            ]
        },
    },
}


class SpecError(ValueError):
    """Problem or data file does not follow its documented format."""


@dataclass(frozen=True)
class Problem:
    K: int
    criterion: Criterion
    variances: VarianceSpec
    N: Optional[int] = None
    block_names: Optional[tuple] = None
    costs: Optional[CostSpec] = None
    lower: object = None
    upper: object = None
    tolerance: float = 1e-9
    allocation: Optional[np.ndarray] = None

    @property
    def J(self) -> int:
        return 2**self.K

    @property
    def is_block(self) -> bool:
        return self.variances.is_block


def parse_problem(doc: dict) -> Problem:
    try:
        jsonschema.validate(doc, PROBLEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SpecError(f"problem file invalid at {where}: {exc.message}") from None
    design = doc["design"]
    K = design["K"]
    J = 2**K
    variances = np.array(doc["variances"], dtype=float)
    blocks = design.get("blocks")
    if blocks is not None and "N" in design:
        raise SpecError("design gives both N and blocks; use one")
    if blocks is not None:
        sizes = [b["size"] for b in blocks]
        names = tuple(b.get("name", f"block {h + 1}") for h, b in enumerate(blocks))
        if variances.shape != (len(blocks), J):
            raise SpecError(f"block variances must be a {len(blocks)} x {J} matrix, got shape {variances.shape}")
        vs = VarianceSpec(variances, block_sizes=sizes)
        N = int(sum(sizes))
    else:
        names = None
        if variances.shape != (J,):
            raise SpecError(f"variances must list {J} values for K={K}, got shape {variances.shape}")
        vs = VarianceSpec(variances)
        N = design.get("N")
    costs = None
    if "costs" in doc:
        c = doc["costs"]
        if len(c["per_unit"]) != J:
            raise SpecError(f"costs.per_unit must list {J} values")
        costs = CostSpec(c["per_unit"], c["budget"])
    bounds = doc.get("bounds", {})
    allocation = doc.get("allocation")
    return Problem(
        K=K,
        criterion=Criterion.parse(doc["criterion"]),
        variances=vs,
        N=N,
        block_names=names,
        costs=costs,
        lower=bounds.get("lower"),
        upper=bounds.get("upper"),
        tolerance=float(doc.get("tolerance", 1e-9)),
        allocation=None if allocation is None else np.array(allocation, dtype=np.int64),
    )


def load_problem(path) -> Problem:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise SpecError(f"cannot parse {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: expected a mapping at the top level")
    return parse_problem(doc)


# ---------------------------------------------------------------------------
# Delimited files
# ---------------------------------------------------------------------------


def _read_rows(path) -> tuple:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise SpecError(f"{path} is empty")
    delimiter = "\t" if "\t" in lines[0] else ","
    reader = csv.reader(_io.StringIO("\n".join(lines)), delimiter=delimiter)
    header = [h.strip().lower() for h in next(reader)]
    rows = [[cell.strip() for cell in row] for row in reader]
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SpecError(f"{path}: line {i} has {len(row)} fields, header has {len(header)}")
    return header, rows


def parse_treatment(code: str, K: int) -> int:
    """Accept a 1-based index (``"8"``) or a K-character bit string (``"0111"``).

    For K = 1 a single character is always read as an index.
    """
    code = code.strip()
    if K > 1 and len(code) == K and set(code) <= {"0", "1"}:
        return treatment_index([int(c) for c in code])
    try:
        j = int(code)
    except ValueError:
        raise SpecError(f"unknown treatment code {code!r}") from None
    if not 1 <= j <= 2**K:
        raise SpecError(f"treatment code {code!r} outside 1..{2**K}")
    return j


@dataclass(frozen=True)
class PilotData:
    treatments: np.ndarray
    outcomes: np.ndarray
    blocks: Optional[np.ndarray] = None
    replicates: Optional[np.ndarray] = None


def load_pilot(path, K: int) -> PilotData:
    """Columns: ``unit_id``, ``treatment``, ``outcome`` and optional ``block``, ``replicate``.

    With K = 1 the codes ``1``/``2`` are indices; bit strings need K >= 2.
    """
    header, rows = _read_rows(path)
    for col in ("treatment", "outcome"):
        if col not in header:
            raise SpecError(f"{path}: missing column {col!r}")
    idx = {name: header.index(name) for name in header}
    t = np.array([parse_treatment(r[idx["treatment"]], K) for r in rows], dtype=np.int64)
    try:
        y = np.array([float(r[idx["outcome"]]) for r in rows])
    except ValueError as exc:
        raise SpecError(f"{path}: non-numeric outcome ({exc})") from None
    blocks = np.array([r[idx["block"]] for r in rows]) if "block" in idx else None
    reps = np.array([r[idx["replicate"]] for r in rows]) if "replicate" in idx else None
    return PilotData(t, y, blocks, reps)


def load_potential_outcomes(path) -> PotentialOutcomes:
    """N x J numeric table; a column named ``block`` is taken as block labels."""
    header, rows = _read_rows(path)
    block_col = header.index("block") if "block" in header else None
    keep = [i for i in range(len(header)) if i != block_col]
    try:
        y = np.array([[float(r[i]) for i in keep] for r in rows])
    except ValueError as exc:
        raise SpecError(f"{path}: non-numeric potential outcome ({exc})") from None
    blocks = None if block_col is None else np.array([r[block_col] for r in rows])
    try:
        return PotentialOutcomes(y, blocks)
    except ValueError as exc:
        raise SpecError(f"{path}: {exc}") from None


def pool_variances(variances, counts) -> np.ndarray:
    """Degrees-of-freedom weighted pooling: sum (n_r - 1) s2_r / sum (n_r - 1), per group.

    ``variances`` and ``counts`` are R x J (one row per replicate).
    """
    v = np.asarray(variances, dtype=float)
    df = np.asarray(counts, dtype=float) - 1
    if v.shape != df.shape:
        raise ValueError("variances and counts must have the same shape")
    if np.any(df < 1):
        raise ValueError("every replicate group needs at least 2 observations")
    return (df * v).sum(axis=0) / df.sum(axis=0)


def pilot_variances(data: PilotData, K: int, pool: bool = False) -> dict:
    """Per-replicate, pooled and per-block sample variances of a pilot file."""
    J = 2**K
    out = {}
    groups = [("all", np.ones(len(data.outcomes), dtype=bool))]
    if data.blocks is not None:
        groups = [(str(b), data.blocks == b) for b in np.unique(data.blocks)]
    for name, mask in groups:
        t, y = data.treatments[mask], data.outcomes[mask]
        entry = {}
        if data.replicates is not None and pool:
            reps = data.replicates[mask]
            labels = np.unique(reps)
            rows, counts = [], []
            for lab in labels:
                sel = reps == lab
                rows.append(sample_variances(t[sel], y[sel], K).variances)
                counts.append(np.bincount(t[sel] - 1, minlength=J))
            entry["replicates"] = {str(lab): row for lab, row in zip(labels, rows)}
            entry["pooled"] = pool_variances(rows, counts)
        else:
            entry["pooled"] = sample_variances(t, y, K).variances
        out[name] = entry
    return out
