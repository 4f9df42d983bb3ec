"""Plot-ready data files, run manifest, and debug field dumps.

All data files are plain columnar CSV with '#'-prefixed header metadata
(units, config hash). Formatting is fixed-width scientific with a fixed
column order, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .device import FieldMap

PLOT_KINDS = ("iv", "te", "bands", "barrier")


class OutputError(ValueError):
    pass


def _fmt_val(v) -> str:
    if isinstance(v, str):
        return v
    return f"{float(v):.12e}"


def write_columns(path: str, columns: dict[str, np.ndarray],
                  meta: dict[str, str] | None = None) -> None:
    """Columnar CSV: '# key: value' header lines, then a column-name row."""
    names = list(columns)
    arrays = [np.atleast_1d(columns[k]) for k in names]
    n = arrays[0].shape[0]
    if any(a.shape[0] != n for a in arrays):
        raise OutputError("columns have mismatched lengths")
    with open(path, "w", newline="\n") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        fh.write("# columns: " + ",".join(names) + "\n")
        for row in range(n):
            fh.write(",".join(_fmt_val(a[row]) for a in arrays) + "\n")


def read_columns(path: str) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    """Inverse of write_columns (round-trip contract)."""
    meta: dict[str, str] = {}
    names: list[str] = []
    rows: list[list[str]] = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# columns: "):
                names = line[len("# columns: "):].split(",")
            elif line.startswith("# "):
                k, _, v = line[2:].partition(": ")
                meta[k] = v
            elif line:
                rows.append(line.split(","))
    if not names:
        raise OutputError(f"{path}: missing column header")
    cols: dict[str, np.ndarray] = {}
    for idx, name in enumerate(names):
        raw = [r[idx] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in raw])
        except ValueError:
            cols[name] = np.array(raw)
    return meta, cols


def write_grid(path: str, fm: FieldMap, meta: dict[str, str] | None = None) -> None:
    """Long-format (x, y, value) dump of a FieldMap."""
    mesh = fm.mesh
    xx, yy = np.meshgrid(mesh.x, mesh.y, indexing="ij")
    header = dict(meta or {})
    header.setdefault("quantity", fm.tag)
    header.setdefault("units", fm.units)
    write_columns(path, {"x_nm": xx.ravel(), "y_nm": yy.ravel(),
                         fm.tag or "value": fm.values.ravel()}, header)


def dump_iteration_fields(out_dir: str, iteration: int, **fields: FieldMap) -> list[str]:
    """Debug dump of per-iteration solver fields (V, Ec, Ev, n, p)."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, fm in fields.items():
        path = os.path.join(out_dir, f"iter{iteration:03d}_{name}.csv")
        write_grid(path, fm)
        written.append(path)
    return written


@dataclass
class RunManifest:
    """Reproducibility record for one CLI run."""

    config_hash: str
    version: str
    bias_points: list[dict] = field(default_factory=list)
    files: list[str] = field(default_factory=list)

    def add_file(self, path: str) -> str:
        self.files.append(os.path.basename(path))
        return path

    def write(self, path: str) -> None:
        payload = {
            "config_hash": self.config_hash,
            "version": self.version,
            "bias_points": self.bias_points,
            "files": sorted(self.files),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_manifest(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def emit_plots(results: list, kind: str, out_dir: str,
               meta: dict[str, str] | None = None) -> list[str]:
    """Write plot-data files for a completed sweep.

    Kinds: 'iv' (adds a log10 column), 'te' (T(E) rows per kz and bias),
    'bands' (band and sub-band cuts along x at mid thickness), 'barrier'
    (2D effective-barrier grid at mid window). `results` holds SweepPoint
    objects from the CLI runner (or anything with the same attributes).
    """
    from .bands import SubbandSlice
    from .carriers import FermiLevels

    if kind not in PLOT_KINDS:
        raise OutputError(f"unknown plot kind '{kind}'; known kinds: "
                          + ", ".join(PLOT_KINDS))
    os.makedirs(out_dir, exist_ok=True)
    written = []
    meta = dict(meta or {})

    if kind == "iv":
        i_vals = np.array([r.i_per_width for r in results])
        floor = 1e-300
        path = os.path.join(out_dir, "iv_plot.csv")
        write_columns(path, {
            "vg_v": np.array([r.bias.vg for r in results]),
            "vd_v": np.array([r.bias.vd for r in results]),
            "i_a_per_nm": i_vals,
            "log10_i": np.log10(np.maximum(np.abs(i_vals), floor)),
        }, {**meta, "units": "V, V, A/nm, log10(A/nm)"})
        written.append(path)

    elif kind == "te":
        for r in results:
            cur = r.current
            if cur is None or cur.status != "ok":
                continue
            path = os.path.join(out_dir, f"t_spectrum_vg{r.bias.vg:+.3f}"
                                         f"_vd{r.bias.vd:+.3f}.csv")
            kz_col, e_col, t_col = [], [], []
            for a, kz in enumerate(cur.kz_nodes):
                kz_col.append(np.full(cur.e_grid.size, kz))
                e_col.append(cur.e_grid)
                t_col.append(cur.t_matrix[a])
            write_columns(path, {
                "kz_per_nm": np.concatenate(kz_col),
                "e_ev": np.concatenate(e_col),
                "transmission": np.concatenate(t_col),
            }, {**meta, "vg_v": f"{r.bias.vg}", "vd_v": f"{r.bias.vd}"})
            written.append(path)

    elif kind == "bands":
        for r in results:
            mesh = r.ec.mesh
            j = mesh.ny // 2
            kz_ref = 0.5 * r.current.window.kz_max if (
                r.current is not None and r.current.status == "ok") else 0.0
            slc = SubbandSlice.build(r.ec, r.ev, kz_ref, r.fields)
            path = os.path.join(out_dir, f"bands_vg{r.bias.vg:+.3f}"
                                         f"_vd{r.bias.vd:+.3f}.csv")
            write_columns(path, {
                "x_nm": mesh.x,
                "ec_ev": r.ec.values[:, j],
                "ev_ev": r.ev.values[:, j],
                "ec_sub_ev": slc.ec_sub.values[:, j],
                "ev_sub_ev": slc.ev_sub.values[:, j],
            }, {**meta, "y_nm": f"{mesh.y[j]}", "kz_per_nm": f"{kz_ref}",
                "vg_v": f"{r.bias.vg}", "vd_v": f"{r.bias.vd}",
                "mu1_ev": f"{FermiLevels.from_bias(r.bias).mu1}",
                "mu2_ev": f"{FermiLevels.from_bias(r.bias).mu2}"})
            written.append(path)

    elif kind == "barrier":
        for r in results:
            if r.current is None or r.current.status != "ok":
                continue
            window = r.current.window
            e_mid = 0.5 * (window.e_min + window.e_max)
            slc = SubbandSlice.build(r.ec, r.ev, 0.0, r.fields)
            eff = slc.fields_at(e_mid)
            path = os.path.join(out_dir, f"barrier_vg{r.bias.vg:+.3f}"
                                         f"_vd{r.bias.vd:+.3f}.csv")
            write_grid(path, eff.u, {**meta, "e_ev": f"{e_mid}",
                                     "kz_per_nm": "0.0",
                                     "vg_v": f"{r.bias.vg}",
                                     "vd_v": f"{r.bias.vd}"})
            written.append(path)

    return written
