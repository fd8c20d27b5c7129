"""Binary and CSV containers for bases, fields, and transforms.

The basis container is a little-endian binary block: an 8-byte magic,
uint64 counts, the eigenvalues, the basis columns (column-major float64),
and the mass matrix in CSR form; a JSON sidecar (``<path>.json``) carries
provenance (mesh hash, request, tolerances).  Fields serialize either to
CSV (vertex index + named channels, 9 significant digits) or to a binary
block with the same conventions.  All writers are deterministic.
"""

from __future__ import annotations

import json
import os

import numpy as np
from scipy.sparse import csr_matrix

from .errors import ParseError
from .harmonics import SurfaceField
from .spectral import SpectralBasis

__all__ = [
    "save_basis",
    "load_basis",
    "save_field_csv",
    "load_field_csv",
    "save_field_binary",
    "load_field_binary",
    "save_transform",
    "load_transform",
    "load_index_list",
    "write_json",
]

BASIS_MAGIC = b"SHRMBAS1"
FIELD_MAGIC = b"SHRMFLD1"
_FLOAT_FMT = "%.9g"


def write_json(obj, path):
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2))
        fh.write("\n")
    return path


def _write_array(fh, arr, dtype):
    np.ascontiguousarray(arr, dtype=dtype).tofile(fh)


def _read_array(fh, dtype, count):
    arr = np.fromfile(fh, dtype=dtype, count=count)
    if arr.shape[0] != count:
        raise ParseError("binary container is truncated")
    return arr


def save_basis(basis, path, sidecar=True):
    """Write a SpectralBasis to ``path`` (+ ``path``.json provenance sidecar)."""
    mass = basis.mass.tocsr()
    with open(path, "wb") as fh:
        fh.write(BASIS_MAGIC)
        _write_array(fh, [basis.n_vertices, basis.k], "<u8")
        _write_array(fh, basis.eigenvalues, "<f8")
        _write_array(fh, np.asfortranarray(basis.vectors).ravel(order="F"), "<f8")
        _write_array(fh, [mass.nnz], "<u8")
        _write_array(fh, mass.indptr, "<i8")
        _write_array(fh, mass.indices, "<i8")
        _write_array(fh, mass.data, "<f8")
    if sidecar:
        write_json(
            {
                "format": "surfharm-basis",
                "version": 1,
                "n_vertices": basis.n_vertices,
                "k": basis.k,
                "mesh_hash": basis.mesh_hash,
                "request": basis.request,
                "tolerances": {"solver_tol": basis.tol},
                "max_residual": basis.max_residual,
            },
            str(path) + ".json",
        )
    return path


def load_basis(path):
    """Read a basis container written by save_basis (sidecar optional)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != BASIS_MAGIC:
            raise ParseError(f"not a basis container (magic {magic!r})")
        n, k = (int(v) for v in _read_array(fh, "<u8", 2))
        eigenvalues = _read_array(fh, "<f8", k)
        vectors = _read_array(fh, "<f8", n * k).reshape((n, k), order="F")
        nnz = int(_read_array(fh, "<u8", 1)[0])
        indptr = _read_array(fh, "<i8", n + 1)
        indices = _read_array(fh, "<i8", nnz)
        data = _read_array(fh, "<f8", nnz)
    mass = csr_matrix((data, indices, indptr), shape=(n, n))
    meta = {}
    sidecar = str(path) + ".json"
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    return SpectralBasis(
        eigenvalues=eigenvalues,
        vectors=vectors,
        mass=mass,
        mesh_hash=meta.get("mesh_hash"),
        request=meta.get("request", {}),
        max_residual=meta.get("max_residual", 0.0),
        tol=meta.get("tolerances", {}).get("solver_tol", 1e-9),
    )


# -- fields -------------------------------------------------------------------


def save_field_csv(field, path):
    """CSV with header ``vertex,<name>,...``; floats at 9 significant digits."""
    if not isinstance(field, SurfaceField):
        field = SurfaceField(field)
    lines = ["vertex," + ",".join(field.names)]
    for i, row in enumerate(field.values):
        lines.append(str(i) + "," + ",".join(_FLOAT_FMT % v for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def load_field_csv(path_or_text, mesh_hash=None):
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        text = path_or_text
    else:
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty field CSV", line=1)
    header = [h.strip() for h in lines[0].split(",")]
    if header[0] != "vertex" or len(header) < 2:
        raise ParseError("field CSV header must be 'vertex,<channel>,...'", line=1)
    names = tuple(header[1:])
    values = np.empty((len(lines) - 1, len(names)))
    for row, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise ParseError(
                f"row has {len(parts)} fields, header has {len(header)}", line=row
            )
        try:
            index = int(parts[0])
            values[row - 2] = [float(v) for v in parts[1:]]
        except ValueError:
            raise ParseError(f"bad number in field row: {line!r}", line=row)
        if index != row - 2:
            raise ParseError(
                f"vertex indices must be consecutive from 0, got {parts[0]}",
                line=row,
            )
    return SurfaceField(values, names=names, mesh_hash=mesh_hash)


def save_field_binary(field, path):
    if not isinstance(field, SurfaceField):
        field = SurfaceField(field)
    names_blob = json.dumps(list(field.names)).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        _write_array(fh, [field.n_vertices, field.n_channels, len(names_blob)], "<u8")
        fh.write(names_blob)
        _write_array(fh, field.values, "<f8")
    return path


def load_field_binary(path, mesh_hash=None):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != FIELD_MAGIC:
            raise ParseError(f"not a field container (magic {magic!r})")
        n, c, blob_len = (int(v) for v in _read_array(fh, "<u8", 3))
        names = tuple(json.loads(fh.read(blob_len).decode("utf-8")))
        values = _read_array(fh, "<f8", n * c).reshape(n, c)
    return SurfaceField(values, names=names, mesh_hash=mesh_hash)


# -- transforms and index lists ----------------------------------------------


def save_transform(transform, path):
    """4x4 homogeneous matrix as four text rows, full float precision.

    Rotations are validated to 1e-10 orthogonality on load, so the text
    round trip must preserve every bit (%.17g); truncating to fewer digits
    would make freshly saved transforms unreadable.
    """
    m = transform.as_matrix()
    lines = [" ".join("%.17g" % v for v in row) for row in m]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def load_transform(path):
    from .correspondence import RigidTransform

    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError:
                raise ParseError(f"bad number in transform row {line!r}", line=lineno)
    m = np.asarray(rows)
    if m.shape != (4, 4):
        raise ParseError(f"transform file must hold a 4x4 matrix, got {m.shape}")
    return RigidTransform.from_matrix(m)


def load_index_list(path):
    """Whitespace/newline-separated vertex indices (comments with #)."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0]
            for tok in body.split():
                try:
                    out.append(int(tok))
                except ValueError:
                    raise ParseError(f"bad vertex index {tok!r}", line=lineno)
    return np.asarray(out, dtype=np.int64)
