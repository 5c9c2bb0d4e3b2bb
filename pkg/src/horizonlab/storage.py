"""File formats: trajectory CSV + JSON sidecar, atomic writes, CSV ingestion.

Trajectory CSV header is ``t,x0,...,x{D-1}`` with 17-significant-digit
floats; the sidecar ``<name>.json`` holds ``{dt, seed, noise_sigma, system,
params}`` (plus ``t0`` and ``normalization`` when present).
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .dynamics import Trajectory
from .errors import IngestionError


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def fmt(x: float) -> str:
    return f"{x:.17g}"


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def trajectory_metadata(traj: Trajectory) -> dict:
    meta = {
        "dt": traj.dt,
        "seed": traj.seed,
        "noise_sigma": traj.noise_sigma,
        "system": traj.system,
        "params": list(traj.params) if traj.params is not None else None,
        "t0": traj.t0,
    }
    if traj.normalization is not None:
        mean, std = traj.normalization
        meta["normalization"] = {"mean": mean.tolist(), "std": std.tolist()}
    return meta


def write_trajectory(traj: Trajectory, path) -> None:
    """Write ``path`` (CSV) and its JSON sidecar."""
    lines = [",".join(["t"] + [f"x{i}" for i in range(traj.dim)])]
    for t, row in zip(traj.times, traj.states):
        lines.append(",".join([fmt(t)] + [fmt(v) for v in row]))
    atomic_write_text(path, "\n".join(lines) + "\n")
    write_json(sidecar_path(path), trajectory_metadata(traj))


def read_trajectory(path, rtol: float = 1e-9) -> Trajectory:
    """Read and validate a trajectory CSV (sidecar metadata used when present).

    Raises:
        IngestionError: bad header, ragged or non-numeric rows, non-finite
            values or non-uniform time spacing; ``row`` names the first bad
            data row (1-based, header excluded).
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "t" or len(header) < 2:
            raise IngestionError("header must be 't,x0,...,x{D-1}'", row=0)
        expected = ["t"] + [f"x{i}" for i in range(len(header) - 1)]
        if [h.strip() for h in header] != expected:
            raise IngestionError(f"header must be {','.join(expected)}", row=0)
        rows = []
        for k, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise IngestionError(f"row {k} has {len(rec)} fields, expected {len(header)}", row=k)
            try:
                vals = [float(c) for c in rec]
            except ValueError as exc:
                raise IngestionError(f"row {k} is not numeric", row=k) from exc
            if not all(math.isfinite(v) for v in vals):
                raise IngestionError(f"row {k} contains a non-finite value", row=k)
            rows.append(vals)
    if len(rows) < 2:
        raise IngestionError("need at least two samples")
    data = np.array(rows)
    t = data[:, 0]
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (len(t) - 1)
    if not dt > 0:
        raise IngestionError("time column must increase", row=2)
    bad = np.nonzero(np.abs(steps - dt) > rtol * abs(dt) + 1e-12 * max(1.0, abs(t[-1])))[0]
    if bad.size:
        raise IngestionError(f"non-uniform time spacing at row {bad[0] + 2}", row=int(bad[0] + 2))
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
    normalization = None
    if meta.get("normalization"):
        normalization = (meta["normalization"]["mean"], meta["normalization"]["std"])
    return Trajectory(
        states=data[:, 1:],
        dt=float(meta.get("dt", dt)),
        t0=float(t[0]),
        seed=int(meta.get("seed", 0)),
        noise_sigma=float(meta.get("noise_sigma", 0.0)),
        normalization=normalization,
        system=meta.get("system"),
        params=tuple(meta["params"]) if meta.get("params") is not None else None,
    )


def write_table(path, columns, rows) -> None:
    """Write a CSV of ``rows`` (sequences aligned with ``columns``)."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
