"""Readers and writers for mesh and atom text formats.

Meshes: OFF, OBJ and ascii PLY in; OFF and OBJ out (floats printed with
9 significant digits).  Atoms: XYZ and fixed-column PDB in.
Parse failures raise ParseError carrying the offending line number.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError
from .mesh import TriangleMesh
from .validation import check_points

logger = logging.getLogger(__name__)

__all__ = [
    "load_mesh",
    "save_mesh",
    "mesh_to_string",
    "parse_atoms",
    "AtomSet",
    "MESH_FORMATS",
    "ATOM_FORMATS",
]

MESH_FORMATS = ("off", "obj", "ply")
ATOM_FORMATS = ("xyz", "pdb")

_FLOAT_FMT = "%.9g"


# -- atoms -------------------------------------------------------------------


@dataclass
class AtomSet:
    """Point cloud of atoms: positions (n, 3), element symbols, optional labels.

    ``scalars`` holds optional per-atom numeric columns (e.g. occupancy);
    ``labels`` holds optional per-atom string columns (residue name, chain);
    ``source_info`` records parse statistics such as skipped altloc rows.
    """

    positions: np.ndarray
    elements: list
    scalars: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    source_info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = check_points(self.positions, "atom positions")
        if len(self.elements) != len(self.positions):
            raise ValueError("elements and positions disagree in length")
        for name, col in self.scalars.items():
            if len(col) != len(self.positions):
                raise ValueError(f"scalar column {name!r} has the wrong length")

    def __len__(self):
        return len(self.positions)


def _normalize_element(symbol):
    symbol = symbol.strip()
    return symbol[:1].upper() + symbol[1:].lower() if symbol else ""


# -- input plumbing ----------------------------------------------------------


def _as_text(source):
    """Accept a filesystem path, bytes or str of file content; return text."""
    if isinstance(source, bytes):
        return source.decode("utf-8", errors="replace")
    if isinstance(source, os.PathLike):
        source = os.fspath(source)
    if isinstance(source, str):
        # heuristics: multi-line strings are content, not paths
        if "\n" not in source and os.path.exists(source):
            with open(source, "rb") as fh:
                return fh.read().decode("utf-8", errors="replace")
        if "\n" in source:
            return source
        raise FileNotFoundError(f"no such file: {source}")
    raise TypeError(f"unsupported source type: {type(source).__name__}")


def _guess_format(source, choices, kind):
    if isinstance(source, (str, os.PathLike)) and "\n" not in str(source):
        ext = os.path.splitext(str(source))[1].lstrip(".").lower()
        if ext in choices:
            return ext
    raise ValueError(
        f"could not infer a {kind} format from {source!r}; pass format= explicitly"
    )


def _tokens(text):
    """Yield (line_number, token_list) for non-empty, non-comment lines."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if body:
            yield lineno, body.split()


# -- mesh readers ------------------------------------------------------------


def _parse_floats(parts, count, lineno, what):
    if len(parts) < count:
        raise ParseError(f"expected {count} numbers for {what}", line=lineno)
    try:
        return [float(p) for p in parts[:count]]
    except ValueError:
        raise ParseError(f"bad number in {what}: {' '.join(parts)}", line=lineno)


def _parse_face_row(parts, n_verts, lineno, one_based=False):
    idx = []
    for p in parts:
        head = p.split("/", 1)[0]
        try:
            v = int(head)
        except ValueError:
            raise ParseError(f"bad face index {p!r}", line=lineno)
        if one_based:
            if v == 0:
                raise ParseError("face indices are 1-based; 0 is invalid", line=lineno)
            v = v - 1 if v > 0 else n_verts + v
        if not 0 <= v < n_verts:
            raise ParseError(
                f"face index {p} out of range (mesh has {n_verts} vertices)",
                line=lineno,
            )
        idx.append(v)
    return idx


def _fan_triangulate(polygon):
    return [(polygon[0], polygon[i], polygon[i + 1]) for i in range(1, len(polygon) - 1)]


def read_off(text):
    rows = _tokens(text)
    try:
        lineno, parts = next(rows)
    except StopIteration:
        raise ParseError("empty OFF input", line=1)
    if parts[0] != "OFF":
        raise ParseError("missing OFF header", line=lineno)
    parts = parts[1:]
    if not parts:
        try:
            lineno, parts = next(rows)
        except StopIteration:
            raise ParseError("missing OFF count line", line=lineno)
    if len(parts) < 2:
        raise ParseError("OFF count line needs vertex and face counts", line=lineno)
    try:
        n_verts, n_faces = int(parts[0]), int(parts[1])
    except ValueError:
        raise ParseError(f"bad OFF counts: {' '.join(parts)}", line=lineno)

    verts = np.empty((n_verts, 3))
    for i in range(n_verts):
        try:
            lineno, parts = next(rows)
        except StopIteration:
            raise ParseError(
                f"OFF ended after {i} of {n_verts} vertices", line=lineno
            )
        verts[i] = _parse_floats(parts, 3, lineno, "vertex")

    faces = []
    n_fanned = 0
    for i in range(n_faces):
        try:
            lineno, parts = next(rows)
        except StopIteration:
            raise ParseError(f"OFF ended after {i} of {n_faces} faces", line=lineno)
        try:
            count = int(parts[0])
        except ValueError:
            raise ParseError(f"bad face vertex count {parts[0]!r}", line=lineno)
        if count < 3 or len(parts) < 1 + count:
            raise ParseError(f"face row needs {count} indices", line=lineno)
        poly = _parse_face_row(parts[1 : 1 + count], n_verts, lineno)
        if count > 3:
            n_fanned += 1
        faces.extend(_fan_triangulate(poly))
    return verts, np.asarray(faces, dtype=np.int64).reshape(-1, 3), n_fanned


def read_obj(text):
    verts = []
    face_rows = []  # (lineno, parts), resolved after all vertices are known
    for lineno, parts in _tokens(text):
        tag = parts[0]
        if tag == "v":
            verts.append(_parse_floats(parts[1:], 3, lineno, "vertex"))
        elif tag == "f":
            if len(parts) < 4:
                raise ParseError("face needs at least 3 indices", line=lineno)
            face_rows.append((lineno, parts[1:]))
        # vn/vt/usemtl/etc are ignored
    faces = []
    n_fanned = 0
    for lineno, parts in face_rows:
        poly = _parse_face_row(parts, len(verts), lineno, one_based=True)
        if len(poly) > 3:
            n_fanned += 1
        faces.extend(_fan_triangulate(poly))
    return (
        np.asarray(verts, dtype=np.float64).reshape(-1, 3),
        np.asarray(faces, dtype=np.int64).reshape(-1, 3),
        n_fanned,
    )


def read_ply(text):
    """Ascii PLY with x/y/z vertex properties and a face index list."""
    lines = list(_tokens(text))
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("unexpected end of PLY input", line=lines[-1][0] if lines else 1)
        item = lines[pos]
        pos += 1
        return item

    lineno, parts = take()
    if parts[0] != "ply":
        raise ParseError("missing ply header", line=lineno)
    elements = []  # (name, count, [property names]) in declaration order
    fmt_seen = None
    while True:
        lineno, parts = take()
        if parts[0] == "format":
            fmt_seen = parts[1] if len(parts) > 1 else ""
            if fmt_seen != "ascii":
                raise ParseError(
                    f"only ascii PLY is supported, got format {fmt_seen!r}", line=lineno
                )
        elif parts[0] == "element":
            if len(parts) < 3:
                raise ParseError("element needs a name and a count", line=lineno)
            try:
                elements.append([parts[1], int(parts[2]), []])
            except ValueError:
                raise ParseError(f"bad element count {parts[2]!r}", line=lineno)
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property before any element", line=lineno)
            elements[-1][2].append(parts[-1])
        elif parts[0] == "end_header":
            break
        elif parts[0] == "comment":
            continue
        else:
            raise ParseError(f"unexpected header keyword {parts[0]!r}", line=lineno)
    if fmt_seen is None:
        raise ParseError("PLY header has no format line", line=lineno)

    verts = None
    faces = []
    n_fanned = 0
    for name, count, props in elements:
        if name == "vertex":
            try:
                cols = [props.index(c) for c in ("x", "y", "z")]
            except ValueError:
                raise ParseError("vertex element lacks x/y/z properties", line=lineno)
            verts = np.empty((count, 3))
            for i in range(count):
                lineno, parts = take()
                if len(parts) < len(props):
                    raise ParseError("short vertex row", line=lineno)
                vals = _parse_floats(parts, len(props), lineno, "vertex")
                verts[i] = [vals[c] for c in cols]
        elif name == "face":
            if verts is None:
                raise ParseError("face element before vertex element", line=lineno)
            for _ in range(count):
                lineno, parts = take()
                try:
                    k = int(parts[0])
                except ValueError:
                    raise ParseError(f"bad face list count {parts[0]!r}", line=lineno)
                if k < 3 or len(parts) < 1 + k:
                    raise ParseError(f"face row needs {k} indices", line=lineno)
                poly = _parse_face_row(parts[1 : 1 + k], len(verts), lineno)
                if k > 3:
                    n_fanned += 1
                faces.extend(_fan_triangulate(poly))
        else:
            for _ in range(count):  # skip unknown elements row-wise
                take()
    if verts is None:
        raise ParseError("PLY file has no vertex element", line=1)
    return verts, np.asarray(faces, dtype=np.int64).reshape(-1, 3), n_fanned


_MESH_READERS = {"off": read_off, "obj": read_obj, "ply": read_ply}


def load_mesh(source, format=None):
    """Read a triangle mesh from a path, bytes, or text content.

    Polygons with more than 3 vertices are fan-triangulated (the count is
    logged).  1-based OBJ indices, slash-separated OBJ attributes, and PLY
    comments are handled; parse errors carry line numbers.
    """
    fmt = (format or _guess_format(source, MESH_FORMATS, "mesh")).lower()
    if fmt not in _MESH_READERS:
        raise ValueError(f"unknown mesh format {fmt!r}; expected one of {MESH_FORMATS}")
    verts, faces, n_fanned = _MESH_READERS[fmt](_as_text(source))
    if n_fanned:
        logger.info("fan-triangulated %d non-triangle faces", n_fanned)
    return TriangleMesh(verts, faces)


# -- mesh writers ------------------------------------------------------------


def _fmt_vertex(v):
    return " ".join(_FLOAT_FMT % c for c in v)


def mesh_to_string(mesh, format="off"):
    fmt = format.lower()
    lines = []
    if fmt == "off":
        lines.append("OFF")
        lines.append(f"{mesh.n_vertices} {mesh.n_faces} 0")
        lines.extend(_fmt_vertex(v) for v in mesh.vertices)
        lines.extend(f"3 {f[0]} {f[1]} {f[2]}" for f in mesh.faces)
    elif fmt == "obj":
        lines.extend("v " + _fmt_vertex(v) for v in mesh.vertices)
        lines.extend(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}" for f in mesh.faces)
    else:
        raise ValueError(f"unsupported output format {format!r}; use 'off' or 'obj'")
    return "\n".join(lines) + "\n"


def save_mesh(mesh, path, format=None):
    fmt = (format or _guess_format(path, ("off", "obj"), "mesh")).lower()
    text = mesh_to_string(mesh, fmt)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


# -- atom readers ------------------------------------------------------------


def read_xyz(text):
    raw = text.splitlines()
    if not raw:
        raise ParseError("empty XYZ input", line=1)
    try:
        count = int(raw[0].split()[0])
    except (IndexError, ValueError):
        raise ParseError(f"bad XYZ atom count line {raw[0]!r}", line=1)
    rows = [
        (lineno, line.split())
        for lineno, line in enumerate(raw, start=1)
        if lineno >= 3 and line.strip()
    ]
    if len(rows) != count:
        raise ParseError(
            f"XYZ header promises {count} atoms but {len(rows)} rows follow", line=1
        )
    elements = []
    positions = np.empty((count, 3))
    for i, (lineno, parts) in enumerate(rows):
        if len(parts) < 4:
            raise ParseError("atom row needs 'element x y z'", line=lineno)
        elements.append(_normalize_element(parts[0]))
        positions[i] = _parse_floats(parts[1:], 3, lineno, "atom position")
    return AtomSet(positions, elements, source_info={"format": "xyz"})


def _pdb_element(line):
    el = line[76:78].strip() if len(line) >= 78 else ""
    if not el:
        # fall back to the first alphabetic character of the atom name
        for ch in line[12:16]:
            if ch.isalpha():
                el = ch
                break
    return _normalize_element(el)


def read_pdb(text):
    positions = []
    elements = []
    res_names = []
    chains = []
    res_seqs = []
    occupancy = []
    bfactor = []
    skipped_altloc = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        record = line[:6].strip()
        if record not in ("ATOM", "HETATM"):
            continue
        if len(line) < 54:
            raise ParseError("ATOM/HETATM record shorter than coordinates", line=lineno)
        altloc = line[16]
        if altloc not in (" ", "A"):
            skipped_altloc += 1
            continue
        try:
            xyz = (float(line[30:38]), float(line[38:46]), float(line[46:54]))
        except ValueError:
            raise ParseError(f"bad coordinates in record {line[:54]!r}", line=lineno)
        positions.append(xyz)
        elements.append(_pdb_element(line))
        res_names.append(line[17:20].strip())
        chains.append(line[21].strip())
        try:
            res_seqs.append(int(line[22:26]))
        except ValueError:
            res_seqs.append(-1)

        def _opt_float(span):
            s = line[span[0] : span[1]].strip() if len(line) >= span[1] else ""
            try:
                return float(s) if s else np.nan
            except ValueError:
                return np.nan

        occupancy.append(_opt_float((54, 60)))
        bfactor.append(_opt_float((60, 66)))
    if not positions:
        raise ParseError("no ATOM/HETATM records found", line=1)
    if skipped_altloc:
        logger.info("skipped %d alternate-location atom rows", skipped_altloc)
    return AtomSet(
        np.asarray(positions),
        elements,
        scalars={"occupancy": np.asarray(occupancy), "bfactor": np.asarray(bfactor)},
        labels={
            "res_name": res_names,
            "chain": chains,
            "res_seq": res_seqs,
        },
        source_info={"format": "pdb", "skipped_altloc": skipped_altloc},
    )


_ATOM_READERS = {"xyz": read_xyz, "pdb": read_pdb}


def parse_atoms(source, format=None):
    """Read an atom point cloud from XYZ or fixed-column PDB content.

    PDB rows with an alternate-location flag other than blank or 'A' are
    skipped and counted in ``AtomSet.source_info``; the element symbol comes
    from columns 77-78 with a fallback to the atom name.
    """
    fmt = (format or _guess_format(source, ATOM_FORMATS, "atom")).lower()
    if fmt not in _ATOM_READERS:
        raise ValueError(f"unknown atom format {fmt!r}; expected one of {ATOM_FORMATS}")
    return _ATOM_READERS[fmt](_as_text(source))
