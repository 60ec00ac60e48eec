"""Deterministic JSON reports, CSV tables, plot scripts and trajectory files."""

import csv
import dataclasses
import json
import logging
import math
import struct
from collections.abc import Mapping, Sequence
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .amplitude import AmplitudeSystem, AttractorPrediction, Equilibrium, RegionMap
from .eigenbasis import EigenBasis
from .errors import InputError
from .normalform import NormalFormCoeffs
from .simulate import PatternReport, Trajectory
from .spectrum import TuringHopfPoint
from .version import __version__

_LOGGER = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_FORMAT = ".17g"

TRAJECTORY_MAGIC = b"THK1"
TRAJECTORY_HEADER = struct.Struct("<4sIIdI")


# -----------------------------------------------------------------------------
# JSON


def plain(value: Any) -> Any:
    """Reduce a result object to JSON types; complex numbers become {"re", "im"}."""
    if value is None or isinstance(value, (bool, np.bool_)):
        return None if value is None else bool(value)
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(value.real), "im": float(value.imag)}
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Mapping):
        return {str(key): plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(item) for item in value]
    return repr(value)


def _number(value: float) -> str:
    if not math.isfinite(value):
        return "null"
    text = format(value, FLOAT_FORMAT)
    if "." not in text and "e" not in text and "n" not in text:
        text += ".0"
    return text


def _encode(value: Any, indent: int) -> str:
    pad = "  " * (indent + 1)
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _number(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(key)}: {_encode(value[key], indent + 1)}" for key in sorted(value)]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if not value:
        return "[]"
    if all(not isinstance(item, (dict, list)) for item in value):
        return "[" + ", ".join(_encode(item, indent + 1) for item in value) + "]"
    items = [pad + _encode(item, indent + 1) for item in value]
    return "[\n" + ",\n".join(items) + "\n" + "  " * indent + "]"


def dumps(document: Any) -> str:
    """Byte-stable JSON: sorted keys, 17 significant digits, two-space indent."""
    return _encode(plain(document), 0) + "\n"


def envelope(kind: str, body: Mapping[str, Any], config: Mapping[str, Any] | None = None) -> dict[str, Any]:
    document = {"schema_version": SCHEMA_VERSION, "tool_version": __version__, "kind": kind}
    document.update(body)
    if config is not None:
        document["config"] = dict(config)
    return document


def point_document(p: TuringHopfPoint) -> dict[str, Any]:
    return {
        "parameters": list(p.parameters),
        "mu": list(p.mu),
        "omega": p.omega,
        "omega_original": p.omega_original,
        "n1": p.n1,
        "n2": p.n2,
        "length": p.length,
        "time_scale": p.time_scale,
        "transversality": {"d_alpha": p.d_alpha, "d_gamma": p.d_gamma},
        "residuals": list(p.residuals),
        "certification": None
        if p.certification is None
        else {
            "counts": {str(n): count for n, count in p.certification.counts.items()},
            "delta": p.certification.delta,
            "n_max": p.certification.n_max,
            "n_tail": p.certification.n_tail,
        },
        "candidates": [plain(c) for c in p.candidates],
    }


def basis_document(eb: EigenBasis) -> dict[str, Any]:
    return {
        "k1": eb.k1,
        "k2": eb.k2,
        "k3": eb.k3,
        "k4": eb.k4,
        "T1": eb.T1,
        "T2": eb.T2,
        "residuals": dict(eb.residuals),
    }


def normal_form_document(nf: NormalFormCoeffs) -> dict[str, Any]:
    return {
        "coefficients": nf.coefficients,
        "omega": nf.omega,
        "intermediates": dict(nf.intermediates),
        "conventions": dict(nf.conventions),
        "validation": None if nf.validation is None else plain(nf.validation),
    }


def equilibrium_document(e: Equilibrium) -> dict[str, Any]:
    return {
        "id": e.id,
        "r": e.r,
        "v": e.v,
        "exists": e.exists,
        "eigenvalues": [complex(z) for z in np.atleast_1d(e.eigenvalues)],
        "stability": e.stability,
    }


def amplitude_document(amp: AmplitudeSystem, case: str | None) -> dict[str, Any]:
    return {
        "epsilon": amp.epsilon,
        "eps1": list(amp.eps1),
        "eps2": list(amp.eps2),
        "b": amp.b,
        "c": amp.c,
        "d": amp.d,
        "d_minus_bc": amp.d_minus_bc,
        "case": case,
        "stability_time": "original",
    }


def prediction_document(prediction: AttractorPrediction, equilibria: Sequence[Equilibrium]) -> dict[str, Any]:
    return {
        "alpha": list(prediction.alpha),
        "signature": str(prediction.signature),
        "equilibria": [equilibrium_document(e) for e in equilibria],
        "attractors": [
            {
                "case": a.case,
                "kind": a.kind,
                "multiplicity": a.multiplicity,
                "equilibrium": a.equilibrium,
                "params": dict(a.params),
                "h": None if a.h is None else list(a.h),
            }
            for a in prediction.attractors
        ],
    }


def regions_document(rmap: RegionMap) -> dict[str, Any]:
    return {
        "case": rmap.case,
        "regions": [
            {
                "label": r.label,
                "signature": str(r.signature),
                "existing": list(r.signature.existing),
                "stable": list(r.signature.stable),
                "cycle": r.signature.cycle,
                "angle": r.angle,
                "cells": r.cells,
                "kinds": list(r.kinds),
            }
            for r in rmap.regions
        ],
        "rays": [
            {"label": ray.label, "equation": ray.equation, "angle": ray.angle, "direction": list(ray.direction)}
            for ray in rmap.rays
        ],
    }


def pattern_document(report: PatternReport) -> dict[str, Any]:
    return plain(report)


def write_json(path: str | Path, document: Any) -> None:
    Path(path).write_text(dumps(document), encoding="utf-8")


# -----------------------------------------------------------------------------
# Region tables and plot script


def write_regions_csv(path: str | Path, rmap: RegionMap) -> None:
    """One row per grid cell: alpha1, alpha2, region index, region label (-1/origin at the origin)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["alpha1", "alpha2", "region", "label"])
        for i, a1 in enumerate(rmap.alpha1):
            for j, a2 in enumerate(rmap.alpha2):
                k = int(rmap.index[i, j])
                label = rmap.regions[k].label if k >= 0 else "origin"
                writer.writerow([_number(float(a1)), _number(float(a2)), k, label])


def write_rays_csv(path: str | Path, rmap: RegionMap, radius: float) -> None:
    """Each ray as a two-point polyline from the origin out to ``radius``."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["label", "equation", "alpha1", "alpha2"])
        for ray in rmap.rays:
            writer.writerow([ray.label, ray.equation, "0.0", "0.0"])
            end = (radius * ray.direction[0], radius * ray.direction[1])
            writer.writerow([ray.label, ray.equation, _number(end[0]), _number(end[1])])


def gnuplot_script(rmap: RegionMap, regions_csv: str = "regions.csv", rays_csv: str = "rays.csv") -> str:
    labels = ", ".join(f'"{r.label}" {k}' for k, r in enumerate(rmap.regions))
    return "\n".join(
        [
            "# Region map of the amplitude system",
            'set datafile separator ","',
            'set xlabel "alpha1"',
            'set ylabel "alpha2"',
            "set size ratio -1",
            f"set cbtics ({labels})" if labels else "unset colorbox",
            f"set palette maxcolors {max(len(rmap.regions), 1)}",
            f'plot "{regions_csv}" using 1:2:3 every ::1 with points pt 5 ps 0.4 lc palette notitle, \\',
            f'     "{rays_csv}" using 3:4 every ::1 with lines lw 2 lc rgb "black" title "critical rays"',
            "",
        ]
    )


def write_region_files(directory: str | Path, rmap: RegionMap, radius: float) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / "regions.csv", directory / "rays.csv", directory / "regions.gp"]
    write_regions_csv(paths[0], rmap)
    write_rays_csv(paths[1], rmap, radius)
    paths[2].write_text(gnuplot_script(rmap), encoding="utf-8")
    _LOGGER.debug("Wrote region files to %s", directory)
    return paths


# -----------------------------------------------------------------------------
# Trajectories


def write_trajectory_csv(path: str | Path, tr: Trajectory) -> None:
    """Rows (t, x, u, v) in time-major order."""
    count, _, n = tr.values.shape
    table = np.column_stack(
        [
            np.repeat(tr.times, n),
            np.tile(tr.x, count),
            tr.values[:, 0, :].ravel(),
            tr.values[:, 1, :].ravel(),
        ]
    )
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header="t,x,u,v", comments="")


def _record_dtype(n: int) -> np.dtype:
    return np.dtype([("t", "<f8"), ("u", "<f8", (n,)), ("v", "<f8", (n,))])


def write_trajectory_binary(path: str | Path, tr: Trajectory) -> None:
    """THK1 framing: header (magic, N, count, dt, stride), the grid, then (t, u[N], v[N]) per snapshot."""
    count, _, n = tr.values.shape
    records = np.empty(count, dtype=_record_dtype(n))
    records["t"] = tr.times
    records["u"] = tr.values[:, 0, :]
    records["v"] = tr.values[:, 1, :]
    with open(path, "wb") as f:
        f.write(TRAJECTORY_HEADER.pack(TRAJECTORY_MAGIC, n, count, float(tr.dt), int(tr.stride)))
        f.write(np.asarray(tr.x, dtype="<f8").tobytes())
        f.write(records.tobytes())


def read_trajectory_binary(path: str | Path, equilibrium: Sequence[float] = (0.0, 0.0)) -> Trajectory:
    data = Path(path).read_bytes()
    if len(data) < TRAJECTORY_HEADER.size:
        raise InputError("Trajectory file is truncated", path=str(path))
    magic, n, count, dt, stride = TRAJECTORY_HEADER.unpack_from(data)
    if magic != TRAJECTORY_MAGIC:
        raise InputError("Not a THK1 trajectory file", path=str(path))
    offset = TRAJECTORY_HEADER.size
    dtype = _record_dtype(n)
    expected = offset + 8 * n + count * dtype.itemsize
    if len(data) != expected:
        raise InputError("Trajectory file size does not match its header", path=str(path), size=len(data))
    x = np.frombuffer(data, dtype="<f8", count=n, offset=offset)
    records = np.frombuffer(data, dtype=dtype, count=count, offset=offset + 8 * n)
    values = np.stack([records["u"], records["v"]], axis=1)
    return Trajectory(
        times=records["t"].copy(),
        x=x.copy(),
        values=values.copy(),
        equilibrium=(float(equilibrium[0]), float(equilibrium[1])),
        dt=dt,
        stride=stride,
    )


def read_trajectory_csv(path: str | Path, equilibrium: Sequence[float] = (0.0, 0.0)) -> Trajectory:
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise InputError(f"Cannot read trajectory CSV: {e}", path=str(path)) from e
    if table.shape[1] != 4 or table.shape[0] == 0:
        raise InputError("Trajectory CSV must have columns t,x,u,v", path=str(path))
    changes = np.flatnonzero(table[:, 0] != table[0, 0])
    n = int(changes[0]) if changes.size else table.shape[0]
    if table.shape[0] % n:
        raise InputError("Trajectory CSV rows are not a full grid per snapshot", path=str(path))
    blocks = table.reshape(-1, n, 4)
    values = np.stack([blocks[:, :, 2], blocks[:, :, 3]], axis=1)
    step = float(np.diff(blocks[:, 0, 0]).mean()) if blocks.shape[0] > 1 else 0.0
    return Trajectory(
        times=blocks[:, 0, 0].copy(),
        x=blocks[0, :, 1].copy(),
        values=values,
        equilibrium=(float(equilibrium[0]), float(equilibrium[1])),
        dt=step,
        stride=1,
    )


def read_trajectory(path: str | Path, equilibrium: Sequence[float] = (0.0, 0.0)) -> Trajectory:
    """Read either export format, chosen by the leading magic bytes."""
    try:
        with open(path, "rb") as f:
            head = f.read(len(TRAJECTORY_MAGIC))
    except OSError as e:
        raise InputError(f"Cannot read trajectory: {e}", path=str(path)) from e
    if head == TRAJECTORY_MAGIC:
        return read_trajectory_binary(path, equilibrium)
    return read_trajectory_csv(path, equilibrium)
