"""Writing scenario results and traces to disk.

Layout: ``<output_dir>/<scenario name>/`` holding one CSV per table,
``summary.json``, ``config.cfg`` (the effective configuration) and
``manifest.json`` with a SHA-256 digest of every other file.  Numbers are
written with 9 significant digits so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .configfile import config_to_text
from .errors import DomainError
from .scenarios import ScenarioResult

SIG_DIGITS = 9


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.{SIG_DIGITS}g}"


def write_table(path, columns: dict) -> None:
    names = list(columns)
    data = [np.atleast_1d(np.asarray(columns[k])) for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*data):
            w.writerow([_cell(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def emit_outputs(result: ScenarioResult, output_dir) -> dict:
    """Write ``result`` under ``output_dir/result.name`` and return the
    manifest (file name -> sha256)."""
    for name, cols in result.tables.items():
        if not cols or any(len(np.atleast_1d(c)) == 0 for c in cols.values()):
            raise DomainError(f"refusing to write empty table {name!r}")
    out = Path(output_dir) / result.name
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, cols in result.tables.items():
        fname = f"{name}.csv"
        write_table(out / fname, cols)
        files.append(fname)
    summary = {"scenario": result.name, "summary": result.summary, "warnings": list(result.warnings)}
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    files.append("summary.json")
    (out / "config.cfg").write_text(config_to_text(result.config_echo))
    files.append("config.cfg")
    manifest = {"scenario": result.name, "files": {f: sha256_file(out / f) for f in sorted(files)}}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def trace_table(trace) -> dict:
    """Columns for a mean-field :class:`TimeTrace`."""
    cols = {
        "t_s": trace.t,
        "re_a": trace.a.real,
        "im_a": trace.a.imag,
        "photon_number": trace.photon_number,
    }
    for k in range(trace.s_minus.shape[1]):
        cols[f"re_sminus_{k}"] = trace.s_minus[:, k].real
        cols[f"im_sminus_{k}"] = trace.s_minus[:, k].imag
        cols[f"sz_{k}"] = trace.s_z[:, k]
    return cols


def lindblad_table(trace) -> dict:
    """Columns for a :class:`LindbladTrace`."""
    return {
        "t_s": trace.t,
        "re_a": trace.a.real,
        "im_a": trace.a.imag,
        "photon_number": trace.photon_number,
        "re_sminus_0": trace.s_minus.real,
        "im_sminus_0": trace.s_minus.imag,
        "sz_0": trace.s_z,
        "fock_tail": trace.fock_tail,
    }


def spectrum_table(spectrum) -> dict:
    return {"freq_Hz": spectrum.freq, "amplitude": spectrum.amplitude}
