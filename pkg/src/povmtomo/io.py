"""JSON documents for experiments, POVM sets and estimation results.

All documents carry ``"format_version": "1"``.  Complex entries are
``[re, im]`` pairs and floats are written with Python's shortest
round-trip representation, so reading a file back gives bit-identical
numbers.  Counts are always stored as integers.

Parse errors raise `FileFormatError` with a JSON path such as
``$.probes[3].matrix[1][0]`` pointing at the offending value.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import CountTable, DensityMatrix, PovmSet, ProbeEnsemble, validate_povm
from .errors import FileFormatError, PovmTomoError

FORMAT_VERSION = "1"


@dataclass(frozen=True)
class ExperimentFile:
    probes: ProbeEnsemble
    counts: CountTable
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.counts.shape[1] != len(self.probes):
            raise FileFormatError(
                f"$.counts: table has {self.counts.shape[1]} columns for {len(self.probes)} probes"
            )

    @property
    def dim(self) -> int:
        return self.probes.dim


@dataclass(frozen=True)
class ResultFile:
    povm: PovmSet
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.povm.dim


# encoding ------------------------------------------------------------------


def encode_matrix(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def json_safe(value):
    """Make diagnostics JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return json_safe(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def experiment_to_dict(exp: ExperimentFile) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "dim": exp.dim,
        "probes": [
            {"label": label, "matrix": encode_matrix(s.matrix)}
            for label, s in zip(exp.probes.labels, exp.probes.states)
        ],
        "counts": exp.counts.counts.tolist(),
        "metadata": json_safe(exp.metadata),
    }


def povm_to_dict(povm, diagnostics: Optional[dict] = None) -> dict:
    povm = povm if isinstance(povm, PovmSet) else PovmSet(povm)
    doc = {
        "format_version": FORMAT_VERSION,
        "dim": povm.dim,
        "povms": [encode_matrix(op) for op in povm.operators],
    }
    if diagnostics is not None:
        doc["diagnostics"] = json_safe(diagnostics)
    return doc


def result_to_dict(res: ResultFile) -> dict:
    return povm_to_dict(res.povm, res.diagnostics)


def probes_to_dict(probes: ProbeEnsemble) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "dim": probes.dim,
        "probes": [
            {"label": label, "matrix": encode_matrix(s.matrix)}
            for label, s in zip(probes.labels, probes.states)
        ],
    }


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def write_json(path, doc: dict):
    Path(path).write_text(dumps(doc), encoding="utf-8", newline="\n")


def write_experiment(path, exp: ExperimentFile):
    write_json(path, experiment_to_dict(exp))


def write_result(path, res: ResultFile):
    write_json(path, result_to_dict(res))


def write_povm(path, povm):
    write_json(path, povm_to_dict(povm))


def write_probes(path, probes: ProbeEnsemble):
    write_json(path, probes_to_dict(probes))


# decoding ------------------------------------------------------------------


def _fail(path: str, msg: str):
    raise FileFormatError(f"{path}: {msg}")


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _require(doc: dict, key: str, path: str = "$"):
    if key not in doc:
        _fail(path, f"missing field '{key}'")
    return doc[key]


def decode_matrix(obj, path: str, dim: Optional[int] = None) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        _fail(path, "expected a non-empty list of rows")
    n = len(obj)
    if dim is not None and n != dim:
        _fail(path, f"expected {dim} rows, found {n}")
    out = np.empty((n, n), dtype=complex)
    for i, row in enumerate(obj):
        if not isinstance(row, list) or len(row) != n:
            _fail(f"{path}[{i}]", f"expected a row of {n} entries")
        for j, z in enumerate(row):
            if not (isinstance(z, list) and len(z) == 2 and all(_is_number(v) for v in z)):
                _fail(f"{path}[{i}][{j}]", "expected a [re, im] pair of finite numbers")
            out[i, j] = complex(z[0], z[1])
    return out


def _check_header(doc, path: str = "$") -> int:
    if not isinstance(doc, dict):
        _fail(path, "expected a JSON object")
    version = _require(doc, "format_version")
    if version != FORMAT_VERSION:
        _fail("$.format_version", f"unsupported version {version!r}, expected {FORMAT_VERSION!r}")
    dim = _require(doc, "dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        _fail("$.dim", f"expected a positive integer, found {dim!r}")
    return dim


def _decode_probes(doc: dict, dim: int) -> ProbeEnsemble:
    items = _require(doc, "probes")
    if not isinstance(items, list) or not items:
        _fail("$.probes", "expected a non-empty list")
    states, labels = [], []
    for m, item in enumerate(items):
        path = f"$.probes[{m}]"
        if not isinstance(item, dict):
            _fail(path, "expected an object with 'label' and 'matrix'")
        labels.append(str(item.get("label", f"rho{m}")))
        mat = decode_matrix(_require(item, "matrix", path), f"{path}.matrix", dim)
        try:
            states.append(DensityMatrix(mat))
        except PovmTomoError as exc:
            _fail(f"{path}.matrix", str(exc))
    return ProbeEnsemble(tuple(states), tuple(labels))


def _decode_counts(obj, k_expected: Optional[int], m: int) -> CountTable:
    if not isinstance(obj, list) or not obj:
        _fail("$.counts", "expected a non-empty k x M list of integers")
    for l, row in enumerate(obj):
        if not isinstance(row, list) or len(row) != m:
            _fail(f"$.counts[{l}]", f"expected {m} entries (one per probe)")
        for j, c in enumerate(row):
            if not isinstance(c, int) or isinstance(c, bool) or c < 0:
                _fail(f"$.counts[{l}][{j}]", f"expected a nonnegative integer, found {c!r}")
    if k_expected is not None and len(obj) != k_expected:
        _fail("$.counts", f"expected {k_expected} rows, found {len(obj)}")
    return CountTable(np.array(obj, dtype=np.int64))


def experiment_from_dict(doc) -> ExperimentFile:
    dim = _check_header(doc)
    probes = _decode_probes(doc, dim)
    counts = _decode_counts(_require(doc, "counts"), None, len(probes))
    meta = doc.get("metadata", {})
    if not isinstance(meta, dict):
        _fail("$.metadata", "expected an object")
    return ExperimentFile(probes, counts, meta)


def povm_from_dict(doc) -> PovmSet:
    dim = _check_header(doc)
    items = _require(doc, "povms")
    if not isinstance(items, list) or not items:
        _fail("$.povms", "expected a non-empty list of matrices")
    return PovmSet(np.stack([decode_matrix(op, f"$.povms[{l}]", dim) for l, op in enumerate(items)]))


def result_from_dict(doc) -> ResultFile:
    povm = povm_from_dict(doc)
    diag = doc.get("diagnostics", {})
    if not isinstance(diag, dict):
        _fail("$.diagnostics", "expected an object")
    return ResultFile(povm, diag)


def probes_from_dict(doc) -> ProbeEnsemble:
    return _decode_probes(doc, _check_header(doc))


def read_json(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _with_source(path, reader):
    try:
        return reader(read_json(path))
    except FileFormatError as exc:
        msg = str(exc)
        raise FileFormatError(msg if str(path) in msg else f"{path}: {msg}") from None


def read_experiment(path) -> ExperimentFile:
    return _with_source(path, experiment_from_dict)


def read_result(path) -> ResultFile:
    """Read a result file; a bare POVM file gives empty diagnostics."""
    return _with_source(path, result_from_dict)


def read_povm(path) -> PovmSet:
    return _with_source(path, povm_from_dict)


def read_probes(path) -> ProbeEnsemble:
    return _with_source(path, probes_from_dict)


def result_diagnostics(result, options: Optional[dict] = None) -> dict:
    """Diagnostics block for an `EstimateResult` or `LinearInversionResult`.

    ``converged`` is ``None`` for linear inversion, which does not iterate.
    """
    rep = result.validation if hasattr(result, "validation") else validate_povm(result.povm)
    diag = {
        "estimator": getattr(result, "method", "linear"),
        "options": options or {},
        "iterations": getattr(result, "iterations_used", 0),
        "final_loglik": None,
        "converged": getattr(result, "converged", None),
        "physical": rep.passed,
        "constraint_residuals": {
            "min_eigenvalue": rep.min_eigenvalue,
            "worst_outcome": rep.worst_outcome,
            "completeness": rep.completeness_residual,
            "hermiticity": rep.hermiticity_defect,
            "outcome_min_eigenvalues": list(rep.outcome_min_eigenvalues),
        },
    }
    if hasattr(result, "loglik_trace"):
        diag["final_loglik"] = result.final_loglik
        diag["support_rank"] = result.support_rank
    return json_safe(diag)
