"""Plain-text readers and writers: polygons, OFF meshes, CSV dumps, flat
key = value config files. Writes are atomic (temp file + rename)."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from isolab.grid import BallGrid, ScalarField, VectorMap


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header, rows) -> Path:
    return atomic_write(path, csv_text(header, rows))


def read_numeric_csv(path, expected_header=None) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[float(x) for x in r] for r in reader if r and any(c.strip() for c in r)]
    if expected_header is not None and header != list(expected_header):
        raise ValueError(f"{path}: expected header {','.join(expected_header)}, got {','.join(header)}")
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return header, data


# --- polygons and meshes ------------------------------------------------------


def read_polygon(path) -> np.ndarray:
    """One vertex per line, ``x y`` or ``x,y``; '#' starts a comment."""
    pts = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].replace(",", " ").strip()
        if line:
            xy = [float(t) for t in line.split()]
            if len(xy) != 2:
                raise ValueError(f"{path}: polygon lines need two coordinates")
            pts.append(xy)
    if len(pts) < 3:
        raise ValueError(f"{path}: a polygon needs at least three vertices")
    return np.array(pts)


def write_polygon(path, vertices) -> Path:
    return atomic_write(path, "".join(f"{x!r} {y!r}\n" for x, y in np.asarray(vertices, dtype=float).tolist()))


def read_off(path) -> tuple[np.ndarray, np.ndarray]:
    tokens = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise ValueError(f"{path}: not an ASCII OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    verts = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        k = int(tokens[pos])
        idx = [int(t) for t in tokens[pos + 1:pos + 1 + k]]
        pos += 1 + k
        faces.extend([idx[0], idx[i], idx[i + 1]] for i in range(1, k - 1))
    return verts, np.array(faces, dtype=int)


def write_off(path, vertices, faces) -> Path:
    v = np.asarray(vertices, dtype=float)
    f = np.asarray(faces, dtype=int)
    lines = ["OFF", f"{len(v)} {len(f)} 0"]
    lines += [" ".join(repr(float(c)) for c in p) for p in v]
    lines += [f"{len(t)} " + " ".join(str(int(i)) for i in t) for t in f]
    return atomic_write(path, "\n".join(lines) + "\n")


# --- grid dumps ---------------------------------------------------------------


def _coord_header(n):
    return [f"x{i + 1}" for i in range(n)]


def write_field_csv(path, f: ScalarField) -> Path:
    g = f.grid
    x = g.coords()[g.valid]
    rows = np.column_stack([x, f.values[g.valid]])
    return write_csv(path, _coord_header(g.n) + ["value"], rows.tolist())


def read_field_csv(path, grid: BallGrid) -> ScalarField:
    """Field given at the grid's nodes; every non-exterior node must appear."""
    _, data = read_numeric_csv(path, _coord_header(grid.n) + ["value"])
    pts, vals = data[:, :-1], data[:, -1]
    idx = grid.index_of(pts)
    snapped = grid.coords()[tuple(idx.T)]
    if np.max(np.abs(snapped - pts), initial=0.0) > 1e-9:
        raise ValueError(f"{path}: points do not lie on the n={grid.n}, h={grid.h} lattice")
    out = np.full(grid.shape, np.nan)
    out[tuple(idx.T)] = vals
    if np.any(np.isnan(out[grid.valid])):
        raise ValueError(f"{path}: field does not cover every node of the ball grid")
    return ScalarField.from_values(grid, out)


def write_map_csv(path, phi: VectorMap) -> Path:
    g = phi.grid
    n = g.n
    rows = np.column_stack([g.coords()[g.valid], phi.values[g.valid]])
    return write_csv(path, _coord_header(n) + [f"phi{i + 1}" for i in range(n)], rows.tolist())


def write_plan_csv(path, coupling, threshold: float = 0.0) -> Path:
    """Sparse triplets ``i,j,mass`` in row-major order."""
    from scipy import sparse

    c = sparse.coo_matrix(coupling)
    c.sum_duplicates()
    order = np.lexsort((c.col, c.row))
    keep = c.data[order] > threshold
    rows = zip(c.row[order][keep].tolist(), c.col[order][keep].tolist(), c.data[order][keep].tolist())
    return write_csv(path, ["i", "j", "mass"], rows)


def write_solution_csv(path, sol, contact_mask) -> Path:
    g = sol.problem.grid
    m = g.valid
    grad = np.linalg.norm(sol.gradient(), axis=-1)
    rows = [list(x) + [u, gn, bool(c)] for x, u, gn, c in
            zip(g.coords()[m].tolist(), sol.u.values[m].tolist(), grad[m].tolist(), contact_mask[m].tolist())]
    return write_csv(path, _coord_header(g.n) + ["u", "grad_norm", "in_contact"], rows)


def read_chart_csv(path) -> np.ndarray:
    _, data = read_numeric_csv(path, ["s", "t", "x", "y", "z"])
    return data


# --- config ---------------------------------------------------------------------


def read_config(path) -> dict:
    """Flat ``key = value`` lines; '#' comments; optional quotes on values.
    Dashes in keys are normalised to underscores."""
    out: dict[str, str] = {}
    for k, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{k}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        if val[:1] in "\"'" and val[-1:] == val[:1] and len(val) >= 2:
            val = val[1:-1]
        else:
            val = val.split("#", 1)[0].strip()
        key = key.replace("-", "_")
        if not key:
            raise ValueError(f"{path}:{k}: empty key")
        if key in out:
            raise ValueError(f"{path}:{k}: duplicate key {key!r}")
        out[key] = val
    return out
