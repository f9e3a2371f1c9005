"""Result serialization: per-step CSV series and legacy-VTK snapshots.

Both writers are byte deterministic: the CSV uses shortest round-trip float
representations and the VTK uses fixed ``%.12e`` formatting, so repeated
runs of the same configuration produce identical files.
"""

from __future__ import annotations

import os

import numpy as np

from . import fem
from .mesh import Mesh

__all__ = [
    "CSV_HEADER",
    "format_timeseries_csv",
    "write_timeseries_csv",
    "format_vtk_snapshot",
    "write_vtk_snapshot",
    "CONVERGENCE_HEADER",
    "format_convergence_csv",
    "write_convergence_csv",
]

CSV_HEADER = "t,tau,G_total,G_cov,G_mag,G_pot,max_psi"


def format_timeseries_csv(rows, cadence: int = 1) -> str:
    """CSV text for a list of time-series rows.

    With ``cadence > 1`` only every ``cadence``-th step is kept; the initial
    row and the final row always survive thinning.
    """
    if not rows:
        raise ValueError("no rows to write")
    if cadence < 1:
        raise ValueError("cadence must be a positive integer")
    last = len(rows) - 1
    lines = [CSV_HEADER]
    for k, row in enumerate(rows):
        if k != 0 and k != last and k % cadence != 0:
            continue
        lines.append(
            ",".join(
                repr(float(v))  # builtin floats: repr round-trips and has no numpy prefix
                for v in (
                    row.t,
                    row.tau,
                    row.total,
                    row.covariant,
                    row.magnetic,
                    row.potential,
                    row.max_psi,
                )
            )
        )
    return "\n".join(lines) + "\n"


def write_timeseries_csv(path, rows, cadence: int = 1) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_timeseries_csv(rows, cadence))


def _e(v: float) -> str:
    return f"{v:.12e}"


def format_vtk_snapshot(mesh: Mesh, A, psi, t: float) -> str:
    """Legacy ASCII VTK unstructured grid with the standard field set.

    Point data: ``|psi|``, ``Re psi``, ``Im psi``. Cell data: ``curl A``
    (constant per cell) and ``|A|`` at the centroid.
    """
    psi = np.asarray(psi, dtype=complex)
    A = np.asarray(A, dtype=float)
    nv, nc = mesh.num_vertices, mesh.num_cells

    out = [
        "# vtk DataFile Version 3.0",
        f"order parameter and vector potential at t={t!r}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    out.extend(f"{_e(x)} {_e(y)} {_e(0.0)}" for x, y in mesh.vertices)
    out.append(f"CELLS {nc} {4 * nc}")
    out.extend(f"3 {i} {j} {k}" for i, j, k in mesh.cells)
    out.append(f"CELL_TYPES {nc}")
    out.extend("5" for _ in range(nc))

    out.append(f"POINT_DATA {nv}")
    for name, values in (
        ("psi_abs", np.abs(psi)),
        ("psi_re", psi.real),
        ("psi_im", psi.imag),
    ):
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out.extend(_e(v) for v in values)

    curls = fem.curl_values(mesh, A)
    centroid_vals = fem.corner_values(mesh, A).mean(axis=1)
    a_mag = np.sqrt(np.einsum("cx,cx->c", centroid_vals, centroid_vals))
    out.append(f"CELL_DATA {nc}")
    for name, values in (("curl_A", curls), ("A_mag", a_mag)):
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out.extend(_e(v) for v in values)
    return "\n".join(out) + "\n"


def write_vtk_snapshot(path, mesh: Mesh, A, psi, t: float) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_vtk_snapshot(mesh, A, psi, t))


CONVERGENCE_HEADER = (
    "one_over_h,h,tau,"
    "err_A,rate_A,err_curl_A,rate_curl_A,err_psi,rate_psi,err_grad_psi,rate_grad_psi,"
    "rel_err_A,rel_err_curl_A,rel_err_psi,rel_err_grad_psi"
)

_RATE_NAMES = ("A", "curl_A", "psi", "grad_psi")


def format_convergence_csv(reports, rates: dict) -> str:
    """CSV table of a mesh-refinement study.

    ``reports`` is a list of error reports ordered coarse to fine and
    ``rates`` maps each field name to the list of observed orders (one
    shorter than the reports). Rate cells in the first row are empty.
    """
    lines = [CONVERGENCE_HEADER]
    for k, rep in enumerate(reports):
        cells = [repr(round(1.0 / rep.h)), repr(float(rep.h)), repr(float(rep.tau))]
        for name in _RATE_NAMES:
            cells.append(repr(float(getattr(rep, "err_" + name))))
            cells.append("" if k == 0 else repr(float(rates[name][k - 1])))
        for name in _RATE_NAMES:
            cells.append(repr(float(rep.relative(name))))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_convergence_csv(path, reports, rates: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_convergence_csv(reports, rates))


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
