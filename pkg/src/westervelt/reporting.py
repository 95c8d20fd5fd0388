"""Artifact writers: round-trip CSV tables, key-value reports and the run summary.

Floats are written with ``repr`` so every value reads back bit-identically; key-value
files hold one ``key = value`` pair per line, with ``true``/``false`` for flags and
``none`` for absent values.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .evolution import Trajectory
from .fixedpoint import IterationLog
from .norms import spatial_norms

STATUSES = ("pass", "skipped", "inconclusive", "fail", "degenerate")


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value).replace("\n", " ")


def write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def write_records(path: Path, records: Iterable[Mapping]) -> Path:
    """CSV from dict records; the header is the union of keys in first-seen order."""
    records = list(records)
    header: list[str] = []
    for rec in records:
        header.extend(k for k in rec if k not in header)
    return write_csv(path, header, ([rec.get(k) for k in header] for rec in records))


def read_kv(path: Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if " = " in line:
            key, value = line.split(" = ", 1)
            out[key] = value
    return out


def write_kv(path: Path, pairs: Iterable[tuple[str, object]]) -> Path:
    path = Path(path)
    path.write_text("".join(f"{k} = {format_value(v)}\n" for k, v in pairs))
    return path


def write_error(path: Path, record: Mapping) -> Path:
    path = Path(path)
    path.write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")
    return path


def write_trajectory(path: Path, traj: Trajectory) -> Path:
    """Columns: step, time, node, coordinates (x or x, y), u, ut."""
    nodes = traj.mesh.nodes
    coords = ["x", "y"][:nodes.shape[1]]

    def rows():
        for s, t in enumerate(traj.times):
            for n in range(traj.mesh.n_nodes):
                yield (s, float(t), n, *map(float, nodes[n]), float(traj.u[s, n]),
                       float(traj.v[s, n]))

    return write_csv(path, ["step", "time", "node", *coords, "u", "ut"], rows())


def norm_rows(traj: Trajectory, q: float):
    """Per-step norms: L2 and sup of u and ut, L2 of their gradients, L^{q+1} of grad ut."""
    sn = spatial_norms(traj.mesh)
    p = q + 1.0
    columns = {
        "u_L2": sn.l2(traj.u), "u_Linf": sn.linf(traj.u),
        "grad_u_L2": sn.grad_l2(traj.u),
        "ut_L2": sn.l2(traj.v), "ut_Linf": sn.linf(traj.v),
        "grad_ut_L2": sn.grad_l2(traj.v), "grad_ut_Lq1": sn.grad_lp(traj.v, p),
    }
    columns = {k: np.atleast_1d(v) for k, v in columns.items()}
    for s, t in enumerate(traj.times):
        yield {"step": s, "time": float(t), **{k: float(v[s]) for k, v in columns.items()}}


def write_norms(path: Path, traj: Trajectory, q: float) -> Path:
    return write_records(path, norm_rows(traj, q))


def write_iterations(path: Path, log: IterationLog) -> Path:
    """Iteration log without wall-clock times, so repeated runs give identical files."""
    return write_records(path, ({k: v for k, v in row.items() if k != "wall_time"}
                                for row in log.rows()))


# ---------------------------------------------------------------- summary


@dataclass(frozen=True)
class Check:
    name: str
    status: str
    detail: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")


def overall_status(checks: Iterable[Check]) -> str:
    """Worst status present: degenerate > fail > inconclusive > pass (skips are neutral)."""
    present = {c.status for c in checks}
    for status in ("degenerate", "fail", "inconclusive"):
        if status in present:
            return status
    return "pass"


def emit_summary(path: Path, checks: Iterable[Check], extra: Mapping | None = None) -> str:
    """Write the run summary and return its overall status.

    The summary names every check that is not a pass under ``not_passed``.
    """
    checks = list(checks)
    status = overall_status(checks)
    pairs: list[tuple[str, object]] = [("status", status)]
    pairs.append(("not_passed", ",".join(c.name for c in checks
                                          if c.status not in ("pass", "skipped")) or None))
    pairs.extend((k, v) for k, v in (extra or {}).items())
    for c in checks:
        pairs.append((f"check.{c.name}", c.status))
        if c.detail:
            pairs.append((f"check.{c.name}.detail", c.detail))
    write_kv(path, pairs)
    return status
