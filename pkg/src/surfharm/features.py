"""Projection of atom-level descriptors onto surface vertices.

Each vertex gathers nearby atoms (fixed radius by default, or a fixed count),
averages their descriptor vectors augmented with inverse distance, and the
result becomes chemical channels alongside geometric ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParseError
from .harmonics import SurfaceField
from .validation import check_positive

__all__ = [
    "AtomDescriptorTable",
    "default_descriptor_table",
    "load_descriptor_table",
    "save_descriptor_table",
    "project_atom_features",
    "ProjectionReport",
    "assemble_input_features",
    "AssemblyReport",
    "DEFAULT_RADIUS",
]

DEFAULT_RADIUS = 6.0
DEFAULT_ELEMENTS = ("C", "N", "O", "S", "H", "P")
UNKNOWN_KEY = "other"


@dataclass(frozen=True)
class AtomDescriptorTable:
    """Keyed descriptor vectors with a designated fallback row.

    ``rows`` maps a key (element symbol, residue name, ...) to a 1D vector;
    every vector has the same length and a column name.  Lookups for keys not
    in the table return the ``unknown_key`` row.
    """

    rows: dict
    columns: tuple
    unknown_key: str = UNKNOWN_KEY

    def __post_init__(self):
        if self.unknown_key not in self.rows:
            raise ValueError(f"table lacks its fallback row {self.unknown_key!r}")
        width = len(self.columns)
        clean = {}
        for key, vec in self.rows.items():
            arr = np.asarray(vec, dtype=np.float64).ravel()
            if arr.shape[0] != width:
                raise ValueError(
                    f"row {key!r} has {arr.shape[0]} entries, expected {width}"
                )
            clean[str(key)] = arr
        object.__setattr__(self, "rows", clean)
        object.__setattr__(self, "columns", tuple(str(c) for c in self.columns))

    @property
    def width(self):
        return len(self.columns)

    def lookup(self, key):
        return self.rows.get(str(key), self.rows[self.unknown_key])

    def matrix_for(self, keys):
        """Stack the rows for a sequence of keys into a (len(keys), width) array."""
        return np.vstack([self.lookup(k) for k in keys]) if len(keys) else np.empty(
            (0, self.width)
        )


def default_descriptor_table():
    """One-hot element table over {C, N, O, S, H, P, other}."""
    keys = DEFAULT_ELEMENTS + (UNKNOWN_KEY,)
    eye = np.eye(len(keys))
    return AtomDescriptorTable(
        rows={k: eye[i] for i, k in enumerate(keys)},
        columns=tuple(f"el_{k}" for k in keys),
    )


def load_descriptor_table(path_or_text, unknown_key=UNKNOWN_KEY):
    """Read a table from CSV: header ``key,col1,col2,...`` then one row per key."""
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        text = path_or_text
    else:
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty descriptor table", line=1)
    header = [c.strip() for c in lines[0].split(",")]
    if len(header) < 2 or header[0] != "key":
        raise ParseError("descriptor table header must start with 'key'", line=1)
    columns = tuple(header[1:])
    rows = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = [c.strip() for c in line.split(",")]
        if len(parts) != len(header):
            raise ParseError(
                f"row has {len(parts)} fields, header has {len(header)}", line=lineno
            )
        try:
            rows[parts[0]] = np.array([float(v) for v in parts[1:]])
        except ValueError:
            raise ParseError(f"bad number in row {parts[0]!r}", line=lineno)
    return AtomDescriptorTable(rows=rows, columns=columns, unknown_key=unknown_key)


def save_descriptor_table(table, path):
    lines = ["key," + ",".join(table.columns)]
    for key in table.rows:
        lines.append(key + "," + ",".join("%.9g" % v for v in table.rows[key]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


@dataclass
class ProjectionReport:
    """Vertices that gathered no atoms (left as zero vectors)."""

    empty_vertices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def n_empty(self):
        return int(self.empty_vertices.size)

    def __bool__(self):
        return self.n_empty > 0


def project_atom_features(atoms, mesh, table=None, radius=DEFAULT_RADIUS, k_nearest=None):
    """Average per-atom descriptors over each vertex's atom neighborhood.

    Each gathered atom contributes its table row concatenated with the
    inverse vertex-atom distance; the vertex channel vector is the mean over
    gathered atoms.  Neighborhoods are all atoms within ``radius`` of the
    vertex, or the ``k_nearest`` closest atoms when that is given.  Vertices
    with an empty neighborhood get zero vectors and are listed in the report.

    Returns
    -------
    (SurfaceField, ProjectionReport)
        Channels are the table columns plus ``inv_dist``.
    """
    if table is None:
        table = default_descriptor_table()
    if len(atoms) == 0:
        raise ValueError("atom set is empty")
    positions = atoms.positions
    descriptors = table.matrix_for(atoms.elements)  # (n_atoms, width)
    tree = cKDTree(positions)
    verts = mesh.vertices
    n = mesh.n_vertices
    out = np.zeros((n, table.width + 1))
    empty = []

    if k_nearest is not None:
        k_nearest = int(k_nearest)
        if k_nearest < 1:
            raise ValueError(f"k_nearest must be >= 1, got {k_nearest}")
        kq = min(k_nearest, len(atoms))
        dist, idx = tree.query(verts, k=kq)
        dist = np.atleast_2d(dist.reshape(n, kq))
        idx = idx.reshape(n, kq)
        if (dist == 0).any():
            raise ValueError("a vertex coincides with an atom (zero distance)")
        desc = descriptors[idx]  # (n, kq, width)
        inv = 1.0 / dist
        out[:, : table.width] = desc.mean(axis=1)
        out[:, table.width] = inv.mean(axis=1)
    else:
        radius = check_positive(radius, "radius")
        neighborhoods = tree.query_ball_point(verts, r=radius)
        for vi, atom_idx in enumerate(neighborhoods):
            if not atom_idx:
                empty.append(vi)
                continue
            atom_idx = np.asarray(atom_idx)
            d = np.linalg.norm(positions[atom_idx] - verts[vi], axis=1)
            if (d == 0).any():
                raise ValueError(
                    f"vertex {vi} coincides with an atom (zero distance)"
                )
            out[vi, : table.width] = descriptors[atom_idx].mean(axis=0)
            out[vi, table.width] = np.mean(1.0 / d)

    names = table.columns + ("inv_dist",)
    fld = SurfaceField(out, names=names, mesh_hash=mesh.identity_hash)
    report = ProjectionReport(empty_vertices=np.asarray(empty, dtype=np.int64))
    return fld, report


@dataclass
class AssemblyReport:
    """Channels zeroed because their variance vanished under standardization."""

    constant_channels: tuple = ()

    def __bool__(self):
        return bool(self.constant_channels)


def assemble_input_features(geometric, chemical, standardize=False, mass=None):
    """Concatenate geometric and chemical channels into one field.

    Channel names get ``geom:`` / ``chem:`` prefixes.  With ``standardize``
    each channel is z-scored under the mass-weighted inner product (``mass``
    required); channels whose variance vanishes are set to zero and flagged
    in the report instead of dividing by ~0.

    Returns
    -------
    (SurfaceField, AssemblyReport)
    """
    parts = []
    names = []
    hashes = set()
    for prefix, fld in (("geom", geometric), ("chem", chemical)):
        if fld is None:
            continue
        if not isinstance(fld, SurfaceField):
            fld = SurfaceField(fld)
        parts.append(fld.values)
        names.extend(f"{prefix}:{n}" for n in fld.names)
        if fld.mesh_hash:
            hashes.add(fld.mesh_hash)
    if not parts:
        raise ValueError("nothing to assemble: both inputs are None")
    if len({p.shape[0] for p in parts}) != 1:
        raise ValueError("geometric and chemical fields disagree in vertex count")
    if len(hashes) > 1:
        raise ValueError("fields belong to different meshes (hash mismatch)")
    values = np.hstack(parts)
    report = AssemblyReport()

    if standardize:
        if mass is None:
            raise ValueError("standardize=True requires the mass matrix")
        ones = np.ones(values.shape[0])
        total = float(ones @ (mass @ ones))
        mean = (ones @ (mass @ values)) / total
        centered = values - mean
        var = np.einsum("ij,ij->j", centered, mass @ centered) / total
        std = np.sqrt(np.maximum(var, 0.0))
        scale_floor = 1e-12 * np.maximum(1.0, np.abs(values).max(axis=0))
        degenerate = std <= scale_floor
        safe = np.where(degenerate, 1.0, std)
        values = centered / safe
        values[:, degenerate] = 0.0
        report = AssemblyReport(
            constant_channels=tuple(
                n for n, bad in zip(names, degenerate) if bad
            )
        )

    fld = SurfaceField(values, names=tuple(names), mesh_hash=next(iter(hashes), None))
    return fld, report
