"""Chain, bias-model and metadata files.

Chain CSV columns: ``iteration, level, accepted, log_posterior, qoi,
state_0 .. state_{D-1}``, followed at levels above 0 by ``proposal_qoi,
proposal_0 .. proposal_{C-1}`` describing the coarse proposal drawn at that
iteration.  Floats are written with 17 significant digits, which round-trips
every double exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path

import numpy as np

from .aem import BiasModel, BiasPairModel
from .model import ContractViolation
from .samplers import ChainRecord

BASE_COLUMNS = ["iteration", "level", "accepted", "log_posterior", "qoi"]


class ChainFormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_chain(record: ChainRecord, path) -> None:
    path = Path(path)
    dim = record.states.shape[1]
    has_prop = record.proposal_qoi is not None
    n_prop = record.proposal_coarse.shape[1] if has_prop and record.proposal_coarse is not None else 0
    header = BASE_COLUMNS + [f"state_{i}" for i in range(dim)]
    if has_prop:
        header += ["proposal_qoi"] + [f"proposal_{i}" for i in range(n_prop)]
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for j in range(len(record)):
                row = [str(j), str(record.level), "1" if record.accepted[j] else "0",
                       _fmt(record.log_posterior[j]), _fmt(record.qoi[j])]
                row += [_fmt(v) for v in record.states[j]]
                if has_prop:
                    row.append(_fmt(record.proposal_qoi[j]))
                    if n_prop:
                        row += [_fmt(v) for v in record.proposal_coarse[j]]
                w.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write chain file {path}: {exc}") from exc


def read_chain(path, burn_in: int = 0) -> ChainRecord:
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise OSError(f"cannot read chain file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ChainFormatError(f"{path}: empty file, expected a header") from None
        if header[: len(BASE_COLUMNS)] != BASE_COLUMNS:
            raise ChainFormatError(f"{path}:1: unexpected header {header[:len(BASE_COLUMNS)]}")
        n_state = sum(1 for h in header if h.startswith("state_"))
        has_prop = "proposal_qoi" in header
        n_prop = sum(1 for h in header if h.startswith("proposal_") and h != "proposal_qoi")
        rows = []
        level = None
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ChainFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                it, lev, acc = int(row[0]), int(row[1]), row[2]
                if acc not in ("0", "1"):
                    raise ValueError(f"accepted flag {acc!r}")
                values = [float(v) for v in row[3:]]
            except ValueError as exc:
                raise ChainFormatError(f"{path}:{lineno}: {exc}") from None
            if it != len(rows):
                raise ChainFormatError(f"{path}:{lineno}: iteration {it} out of sequence")
            if level is not None and lev != level:
                raise ChainFormatError(f"{path}:{lineno}: level changes from {level} to {lev}")
            level = lev
            rows.append((acc == "1", values))
    n = len(rows)
    vals = np.array([r[1] for r in rows], dtype=float).reshape(n, len(header) - 3)
    prop_qoi = prop = None
    if has_prop:
        prop_qoi = vals[:, 2 + n_state]
        prop = vals[:, 3 + n_state: 3 + n_state + n_prop]
    return ChainRecord(
        level=level if level is not None else 0,
        states=vals[:, 2: 2 + n_state],
        log_posterior=vals[:, 0],
        accepted=np.array([r[0] for r in rows], dtype=bool),
        qoi=vals[:, 1],
        proposal_coarse=prop,
        proposal_qoi=prop_qoi,
        burn_in=burn_in,
    )


def write_bias_model(bias: BiasModel, path) -> None:
    """Plain-text snapshot: per pair a ``pair k count n dim m`` line, the mean, then the covariance rows.

    A mean-only model appends ``mean_only`` to the header and omits the rows.
    """
    lines = []
    for p in bias.pairs:
        if bias.with_covariance:
            lines.append(f"pair {p.k} count {p.count} dim {p.dim}")
        else:
            lines.append(f"pair {p.k} count {p.count} dim {p.dim} mean_only")
        lines.append(" ".join(_fmt(v) for v in p.mean))
        if bias.with_covariance:
            lines.extend(" ".join(_fmt(v) for v in row) for row in p.cov)
    Path(path).write_text("\n".join(lines) + "\n")


def read_bias_pairs(path) -> list:
    lines = Path(path).read_text().splitlines()
    pairs, i = [], 0
    while i < len(lines):
        parts = lines[i].split()
        mean_only = len(parts) == 7 and parts[6] == "mean_only"
        if len(parts) not in (6, 7) or parts[0] != "pair" or (len(parts) == 7 and not mean_only):
            raise ChainFormatError(f"{path}:{i + 1}: expected a pair header")
        k, count, dim = int(parts[1]), int(parts[3]), int(parts[5])
        mean = np.array([float(v) for v in lines[i + 1].split()])
        if mean_only:
            pairs.append(BiasPairModel(k, mean, np.zeros((dim, dim)), count))
            i += 2
            continue
        cov = np.array([[float(v) for v in lines[i + 2 + r].split()] for r in range(dim)]).reshape(dim, dim)
        pairs.append(BiasPairModel(k, mean, cov, count))
        i += 2 + dim
    return pairs


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def software_versions() -> dict:
    import scipy

    from . import kernels

    try:
        from importlib.metadata import version

        pkg = version("artifact")
    except Exception:
        pkg = "unknown"
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "package": pkg,
        "kernel_backend": kernels.BACKEND,
    }


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def write_metadata(config: dict, seed: int, path, extra=None) -> None:
    meta = {"config_hash": config_hash(config), "seed": int(seed), "versions": software_versions()}
    if extra:
        meta.update(extra)
    write_json(meta, path)


def write_series_csv(path, columns: dict) -> None:
    """Columns of equal length as a CSV with a header row."""
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    lengths = {a.shape[0] for a in arrays}
    if len(lengths) > 1:
        raise ContractViolation(f"series lengths differ: {sorted(lengths)}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(arrays[0].shape[0] if arrays else 0):
            w.writerow([_fmt(a[i]) if np.issubdtype(a.dtype, np.floating) else str(a[i]) for a in arrays])
