"""Command-line front end.

Subcommands compose the library into reproducible batch pipelines:

* ``spectrum``   mesh -> eigenvalues.csv + basis.bin + report.json
* ``filter``     mesh + field CSV -> filtered field CSV
* ``hks``        mesh -> heat-kernel-signature CSV
* ``curvature``  mesh -> per-vertex curvature/normal CSV
* ``smooth``     mesh -> spectrally low-passed mesh (OFF/OBJ)
* ``dock``       ligand + receptor meshes -> rigid transform + report.json
* ``fixture``    generate deterministic test meshes

Conventions shared by all commands: option precedence is flags > config file
(flat ``key=value`` lines) > defaults; all CSV floats use 9 significant
digits and outputs are byte-for-byte deterministic (timing lives only under
the report "timing" key); ``--json-errors`` switches stderr to one JSON
object; exit codes are 0 (ok), 1 (computation error), 2 (io/parse error).
Mesh-reading commands accept ``-`` for stdin together with ``--format``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .correspondence import (
    DockOptions,
    complex_rmsd,
    extract_interface,
    interface_rmsd,
    rigid_dock,
)
from .curvature import curvature_field
from .errors import MatchError, MeshError, ParseError, SpectralError
from .features import load_descriptor_table, project_atom_features
from .fileio import MESH_FORMATS, load_mesh, parse_atoms, save_mesh
from .harmonics import (
    FilterParams,
    SurfaceField,
    apply_filter,
    heat_kernel_signature,
    smooth_coordinates,
)
from .mesh import (
    TriangleMesh,
    bumpy_icosphere,
    cleanup_mesh,
    icosphere,
    plane_grid,
    surface_area,
)
from .serialize import (
    load_field_csv,
    load_index_list,
    save_basis,
    save_field_csv,
    save_transform,
    write_json,
)
from .spectral import (
    DEFAULT_RESIDUAL_TOL,
    DEFAULT_SOLVER_TOL,
    solve_spectrum,
    weyl_slope,
)

__all__ = ["main"]

DEFAULT_LAMBDA_MAX = 0.3
_FLOAT_FMT = "%.9g"

_TRUE_WORDS = frozenset({"1", "true", "yes", "on"})
_FALSE_WORDS = frozenset({"0", "false", "no", "off"})


# -- configuration ------------------------------------------------------------


def parse_config(path):
    """Flat ``key = value`` lines; ``#`` starts a comment; keys use '_' or '-'."""
    cfg = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ParseError(f"expected key=value, got {line!r}", line=lineno)
            cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


class Options:
    """Resolved option access: command-line flag > config file > default."""

    def __init__(self, args, config):
        self.args = args
        self.config = config

    def get(self, name, default=None, type=str):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.config:
            raw = self.config[name]
            if type is bool:
                low = raw.lower()
                if low in _TRUE_WORDS:
                    return True
                if low in _FALSE_WORDS:
                    return False
                raise ParseError(f"config value for {name} is not a boolean: {raw!r}")
            try:
                return type(raw)
            except ValueError:
                raise ParseError(f"config value for {name} is not a {type.__name__}: {raw!r}")
        return default

    def float_list(self, name, default=None):
        raw = getattr(self.args, name, None)
        if raw is None:
            raw = self.config.get(name)
        if raw is None:
            return default
        try:
            return [float(tok) for tok in str(raw).split(",") if tok.strip()]
        except ValueError:
            raise ParseError(f"value for {name} must be comma-separated numbers: {raw!r}")


def _spectral_request(opt):
    k = opt.get("k", type=int)
    lambda_max = opt.get("lambda_max", type=float)
    if k is not None and lambda_max is not None:
        raise ValueError("give only one of --k and --lambda-max")
    if k is None and lambda_max is None:
        lambda_max = DEFAULT_LAMBDA_MAX
    return {"k": k} if k is not None else {"lambda_max": lambda_max}


def _tolerances(opt):
    return {
        "tol": opt.get("solver_tol", default=DEFAULT_SOLVER_TOL, type=float),
        "residual_tol": opt.get("residual_tol", default=DEFAULT_RESIDUAL_TOL, type=float),
    }


# -- input/output helpers ------------------------------------------------------


def _read_mesh(path, fmt):
    """Load a mesh from a path or stdin ('-'); returns (mesh, stem)."""
    if path == "-":
        if fmt is None:
            raise ParseError("--format is required when reading a mesh from stdin")
        return load_mesh(sys.stdin.buffer.read(), format=fmt), "stdin"
    mesh = load_mesh(path, format=fmt)
    stem = os.path.splitext(os.path.basename(path))[0]
    return mesh, stem


def _file_out(opt, stem, suffix, multiple):
    """Output path for one-file-per-input commands.

    With several inputs --out names a directory; with one input it names the
    file directly (or a directory if it exists / ends with a separator).
    """
    out = opt.get("out")
    if out is None:
        return stem + suffix
    if multiple or out.endswith(os.sep) or os.path.isdir(out):
        os.makedirs(out, exist_ok=True)
        return os.path.join(out, stem + suffix)
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return out


def _dir_out(opt, stem, multiple):
    """Output directory for multi-file commands (spectrum, dock)."""
    root = opt.get("out", default=".")
    outdir = os.path.join(root, stem) if multiple else root
    os.makedirs(outdir, exist_ok=True)
    return outdir


def _run_many(task, items, workers):
    if workers <= 1 or len(items) <= 1:
        for item in items:
            task(item)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # list() re-raises the first worker exception in submission order
        list(pool.map(task, items))


# -- subcommands ---------------------------------------------------------------


def cmd_spectrum(opt):
    fmt = opt.get("format")
    request = _spectral_request(opt)
    tols = _tolerances(opt)
    inputs = opt.args.meshes
    multiple = len(inputs) > 1

    def one(path):
        t0 = time.perf_counter()
        mesh, stem = _read_mesh(path, fmt)
        raw_vertices, raw_faces = mesh.n_vertices, mesh.n_faces
        mesh, cleanup = cleanup_mesh(mesh)
        t_load = time.perf_counter()
        basis = solve_spectrum(mesh, **request, **tols)
        t_solve = time.perf_counter()

        outdir = _dir_out(opt, stem, multiple)
        lines = ["index,eigenvalue"]
        lines += [
            "%d,%s" % (i, _FLOAT_FMT % v) for i, v in enumerate(basis.eigenvalues)
        ]
        with open(
            os.path.join(outdir, "eigenvalues.csv"), "w", encoding="utf-8", newline="\n"
        ) as fh:
            fh.write("\n".join(lines) + "\n")
        save_basis(basis, os.path.join(outdir, "basis.bin"))

        area = surface_area(mesh)
        weyl = None
        if basis.k >= 30:
            fit = weyl_slope(basis, area)
            weyl = {"slope": fit.slope, "expected": fit.expected, "ratio": fit.ratio}
        write_json(
            {
                "command": "spectrum",
                "input": stem,
                "n_vertices": mesh.n_vertices,
                "n_faces": mesh.n_faces,
                "n_vertices_raw": raw_vertices,
                "n_faces_raw": raw_faces,
                "cleanup": cleanup.as_dict(),
                "area": area,
                "request": basis.request,
                "k": basis.k,
                "lambda_first": float(basis.eigenvalues[0]),
                "lambda_last": float(basis.eigenvalues[-1]),
                "max_residual": basis.max_residual,
                "weyl": weyl,
                "timing": {
                    "load_s": t_load - t0,
                    "solve_s": t_solve - t_load,
                    "total_s": time.perf_counter() - t0,
                },
            },
            os.path.join(outdir, "report.json"),
        )

    _run_many(one, inputs, opt.get("workers", default=1, type=int))


def cmd_filter(opt):
    fmt = opt.get("format")
    request = _spectral_request(opt)
    tols = _tolerances(opt)
    mesh, stem = _read_mesh(opt.args.mesh, fmt)
    field = load_field_csv(opt.get("field"))
    if field.n_vertices != mesh.n_vertices:
        raise ValueError(
            f"field has {field.n_vertices} rows but the mesh has "
            f"{mesh.n_vertices} vertices"
        )
    params = FilterParams(
        mu=opt.get("mu", default=0.0, type=float),
        sigma=opt.get("sigma", default=1.0, type=float),
        t=opt.get("t", default=0.0, type=float),
    )
    basis = solve_spectrum(mesh, **request, **tols)
    out = apply_filter(field, basis, params)
    save_field_csv(out, _file_out(opt, stem, "_filtered.csv", multiple=False))


def cmd_hks(opt):
    fmt = opt.get("format")
    request = _spectral_request(opt)
    tols = _tolerances(opt)
    times = opt.float_list("times")
    n_times = opt.get("n_times", default=16, type=int)
    normalize = opt.get("normalize", default=False, type=bool)
    inputs = opt.args.meshes
    multiple = len(inputs) > 1

    def one(path):
        mesh, stem = _read_mesh(path, fmt)
        basis = solve_spectrum(mesh, **request, **tols)
        field = heat_kernel_signature(
            basis, times=times, n_times=n_times, normalize=normalize
        )
        save_field_csv(field, _file_out(opt, stem, "_hks.csv", multiple))

    _run_many(one, inputs, opt.get("workers", default=1, type=int))


def cmd_curvature(opt):
    fmt = opt.get("format")
    inputs = opt.args.meshes
    multiple = len(inputs) > 1

    def one(path):
        mesh, stem = _read_mesh(path, fmt)
        cf = curvature_field(mesh)
        values = np.column_stack(
            [cf.gaussian, cf.mean, cf.normals, cf.boundary.astype(np.float64)]
        )
        field = SurfaceField(
            values,
            names=("gaussian", "mean", "normal_x", "normal_y", "normal_z", "boundary"),
            mesh_hash=mesh.identity_hash,
        )
        save_field_csv(field, _file_out(opt, stem, "_curvature.csv", multiple))

    _run_many(one, inputs, opt.get("workers", default=1, type=int))


def cmd_smooth(opt):
    fmt = opt.get("format")
    tols = _tolerances(opt)
    k_keep = opt.get("k_keep", type=int)
    if k_keep is None:
        raise ValueError("--k-keep is required")
    # default to solving exactly k_keep pairs; an explicit --k/--lambda-max
    # may request a larger basis (smooth_coordinates checks it covers k_keep)
    if opt.get("k", type=int) is None and opt.get("lambda_max", type=float) is None:
        request = {"k": k_keep}
    else:
        request = _spectral_request(opt)
    inputs = opt.args.meshes
    multiple = len(inputs) > 1

    def one(path):
        mesh, stem = _read_mesh(path, fmt)
        basis = solve_spectrum(mesh, **request, **tols)
        smoothed = smooth_coordinates(mesh, basis, k_keep)
        save_mesh(smoothed, _file_out(opt, stem, "_smooth.off", multiple))

    _run_many(one, inputs, opt.get("workers", default=1, type=int))


def _dock_features(opt, atoms_path, mesh, table):
    atoms = parse_atoms(atoms_path, format=opt.get("atom_format"))
    field, _report = project_atom_features(
        atoms, mesh, table=table, radius=opt.get("radius", default=6.0, type=float)
    )
    return field


def cmd_dock(opt):
    t0 = time.perf_counter()
    fmt = opt.get("format")
    outdir = _dir_out(opt, "", multiple=False)
    report_path = os.path.join(outdir, "report.json")

    mesh_lig, _ = _read_mesh(opt.args.ligand, fmt)
    mesh_rec, _ = _read_mesh(opt.args.receptor, fmt)

    options = DockOptions(
        interface_threshold=opt.get("threshold", default=3.0, type=float),
        min_interface_vertices=opt.get("min_interface", default=10, type=int),
        k=opt.get("k", type=int),
        lambda_max=opt.get("lambda_max", type=float),
        alpha=opt.get("alpha", default=1e-3, type=float),
        include_hks=not opt.get("no_hks", default=False, type=bool),
        n_hks=opt.get("n_hks", default=16, type=int),
        solver_tol=opt.get("solver_tol", default=DEFAULT_SOLVER_TOL, type=float),
        residual_tol=opt.get("residual_tol", default=DEFAULT_RESIDUAL_TOL, type=float),
    )

    table_path = opt.get("table")
    table = load_descriptor_table(table_path) if table_path else None
    lig_atoms_path = opt.get("ligand_atoms")
    rec_atoms_path = opt.get("receptor_atoms")
    if (lig_atoms_path is None) != (rec_atoms_path is None):
        raise ValueError("atom files must be given for both bodies or neither")
    fields_lig = fields_rec = None
    if lig_atoms_path is not None:
        fields_lig = _dock_features(opt, lig_atoms_path, mesh_lig, table)
        fields_rec = _dock_features(opt, rec_atoms_path, mesh_rec, table)

    truth = None
    truth_path = opt.get("ground_truth")
    if truth_path is not None:
        truth, _ = _read_mesh(truth_path, fmt)
        if truth.n_vertices != mesh_lig.n_vertices:
            raise ValueError(
                "ground-truth mesh must be the ligand mesh in its true pose "
                f"({truth.n_vertices} vs {mesh_lig.n_vertices} vertices)"
            )

    iface_lig = iface_rec = None
    lig_list = opt.get("interface_ligand")
    rec_list = opt.get("interface_receptor")
    if (lig_list is None) != (rec_list is None):
        raise ValueError("interface lists must be given for both bodies or neither")
    if lig_list is not None:
        iface_lig = load_index_list(lig_list)
        iface_rec = load_index_list(rec_list)
    elif opt.get("full_interface", default=False, type=bool):
        iface_lig = np.arange(mesh_lig.n_vertices)
        iface_rec = np.arange(mesh_rec.n_vertices)
    elif truth is not None:
        pair = extract_interface(mesh_rec, truth, options.interface_threshold)
        iface_rec, iface_lig = pair.left_indices, pair.right_indices

    try:
        transform, dock_report = rigid_dock(
            mesh_rec,
            mesh_lig,
            fields_source=fields_rec,
            fields_target=fields_lig,
            interface_source=iface_rec,
            interface_target=iface_lig,
            options=options,
        )
    except MatchError as err:
        write_json(
            {
                "command": "dock",
                "failed_at": err.stage or "match",
                "error": str(err),
                "ligand_vertices": mesh_lig.n_vertices,
                "receptor_vertices": mesh_rec.n_vertices,
                "timing": {"total_s": time.perf_counter() - t0},
            },
            report_path,
        )
        raise

    save_transform(transform, os.path.join(outdir, "transform.txt"))
    moved = TriangleMesh(transform.apply(mesh_lig.vertices), mesh_lig.faces)
    save_mesh(moved, os.path.join(outdir, "ligand_aligned.off"))

    metrics = None
    if truth is not None:
        reference = np.vstack([truth.vertices, mesh_rec.vertices])
        predicted = np.vstack([moved.vertices, mesh_rec.vertices])
        metrics = {
            "complex_rmsd": complex_rmsd(reference, predicted),
            "interface_rmsd": interface_rmsd(
                reference, predicted, n_first=mesh_lig.n_vertices
            ),
        }

    write_json(
        {
            "command": "dock",
            "failed_at": None,
            "ligand_vertices": mesh_lig.n_vertices,
            "receptor_vertices": mesh_rec.n_vertices,
            "dock": dock_report.as_dict(),
            "metrics": metrics,
            "transform": {
                "rotation": transform.rotation.tolist(),
                "translation": transform.translation.tolist(),
            },
            "timing": {
                "stages_s": dock_report.timing,
                "total_s": time.perf_counter() - t0,
            },
        },
        report_path,
    )


def cmd_fixture(opt):
    kind = opt.args.kind
    out = opt.get("out")
    if out is None:
        raise ValueError("--out is required for fixture")
    if kind == "icosphere":
        mesh = icosphere(
            opt.get("subdivisions", default=3, type=int),
            radius=opt.get("radius", default=1.0, type=float),
        )
    elif kind == "bumpy":
        mesh = bumpy_icosphere(
            opt.get("subdivisions", default=3, type=int),
            radius=opt.get("radius", default=1.0, type=float),
            amplitude=opt.get("amplitude", default=0.1, type=float),
            seed=opt.get("seed", default=0, type=int),
        )
    elif kind == "grid":
        mesh = plane_grid(
            opt.get("nx", default=10, type=int),
            opt.get("ny", default=10, type=int),
            spacing=opt.get("spacing", default=1.0, type=float),
        )
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown fixture kind {kind!r}")
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_mesh(mesh, out)


# -- parser --------------------------------------------------------------------


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument(
        "--json-errors",
        action="store_true",
        default=None,
        help="report errors as a JSON object on stderr",
    )
    common.add_argument("--out", help="output file or directory")

    mesh_in = argparse.ArgumentParser(add_help=False)
    mesh_in.add_argument(
        "--format", choices=MESH_FORMATS, help="mesh format override (required for stdin)"
    )

    spectral = argparse.ArgumentParser(add_help=False)
    spectral.add_argument("--k", type=int, help="number of eigenpairs")
    spectral.add_argument(
        "--lambda-max",
        type=float,
        help="eigenvalue cap (default 0.3 when neither --k nor --lambda-max is given)",
    )
    spectral.add_argument("--solver-tol", type=float, help="eigensolver tolerance")
    spectral.add_argument(
        "--residual-tol", type=float, help="acceptance threshold on eigen-residuals"
    )

    workers = argparse.ArgumentParser(add_help=False)
    workers.add_argument(
        "--workers", type=int, help="parallel workers over input files (default 1)"
    )

    parser = argparse.ArgumentParser(
        prog="surfharm",
        description="Harmonic analysis and rigid docking on surface meshes.",
    )
    parser.add_argument("--version", action="version", version=f"surfharm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser(
        "spectrum",
        parents=[common, mesh_in, spectral, workers],
        help="clean a mesh and solve its Laplace-Beltrami spectrum",
    )
    p.add_argument("meshes", nargs="+", help="mesh files (or '-' for stdin)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser(
        "filter",
        parents=[common, mesh_in, spectral],
        help="apply a spectral band filter to a per-vertex field CSV",
    )
    p.add_argument("mesh", help="mesh file (or '-' for stdin)")
    p.add_argument("--field", required=True, help="input field CSV (vertex,<channels>)")
    p.add_argument("--mu", type=float, help="band center (default 0)")
    p.add_argument("--sigma", type=float, help="band width (default 1)")
    p.add_argument("--t", type=float, help="heat time (default 0)")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser(
        "hks",
        parents=[common, mesh_in, spectral, workers],
        help="compute heat-kernel signatures",
    )
    p.add_argument("meshes", nargs="+", help="mesh files (or '-' for stdin)")
    p.add_argument("--times", help="comma-separated diffusion times")
    p.add_argument("--n-times", type=int, help="size of the automatic time grid (16)")
    p.add_argument(
        "--normalize", action="store_true", default=None, help="divide by the heat trace"
    )
    p.set_defaults(func=cmd_hks)

    p = sub.add_parser(
        "curvature",
        parents=[common, mesh_in, workers],
        help="per-vertex curvatures and normals",
    )
    p.add_argument("meshes", nargs="+", help="mesh files (or '-' for stdin)")
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser(
        "smooth",
        parents=[common, mesh_in, spectral, workers],
        help="rebuild the mesh from its first k_keep harmonics",
    )
    p.add_argument("meshes", nargs="+", help="mesh files (or '-' for stdin)")
    p.add_argument("--k-keep", type=int, help="number of harmonics to keep")
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser(
        "dock",
        parents=[common, mesh_in, spectral],
        help="rigidly dock a ligand surface onto a receptor surface",
    )
    p.add_argument("ligand", help="ligand (moving) surface mesh")
    p.add_argument("receptor", help="receptor (fixed) surface mesh")
    p.add_argument("--ligand-atoms", help="ligand atom file (xyz/pdb)")
    p.add_argument("--receptor-atoms", help="receptor atom file (xyz/pdb)")
    p.add_argument("--atom-format", choices=("xyz", "pdb"), help="atom format override")
    p.add_argument("--table", help="atom descriptor table CSV")
    p.add_argument("--radius", type=float, help="atom gathering radius (default 6)")
    p.add_argument(
        "--ground-truth", help="ligand mesh in its true pose (enables RMSD metrics)"
    )
    p.add_argument("--interface-ligand", help="file with ligand interface vertex ids")
    p.add_argument(
        "--interface-receptor", help="file with receptor interface vertex ids"
    )
    p.add_argument(
        "--full-interface",
        action="store_true",
        default=None,
        help="use every vertex of both surfaces as the interface",
    )
    p.add_argument(
        "--threshold", type=float, help="interface distance threshold (default 3)"
    )
    p.add_argument(
        "--min-interface", type=int, help="minimum interface vertices (default 10)"
    )
    p.add_argument("--alpha", type=float, help="functional-map regularizer (1e-3)")
    p.add_argument("--n-hks", type=int, help="HKS channels for matching (16)")
    p.add_argument(
        "--no-hks",
        action="store_true",
        default=None,
        help="match on supplied fields only, no HKS channels",
    )
    p.set_defaults(func=cmd_dock)

    p = sub.add_parser(
        "fixture",
        parents=[common],
        help="generate a deterministic test mesh",
    )
    p.add_argument("kind", choices=("icosphere", "bumpy", "grid"))
    p.add_argument("--subdivisions", type=int, help="icosphere subdivisions (3)")
    p.add_argument("--radius", type=float, help="sphere radius (1)")
    p.add_argument("--amplitude", type=float, help="bump amplitude (0.1)")
    p.add_argument("--seed", type=int, help="bump RNG seed (0)")
    p.add_argument("--nx", type=int, help="grid cells along x (10)")
    p.add_argument("--ny", type=int, help="grid cells along y (10)")
    p.add_argument("--spacing", type=float, help="grid spacing (1)")
    p.set_defaults(func=cmd_fixture)

    return parser


# -- entry point ---------------------------------------------------------------


def _report_error(category, err, json_errors, code):
    if json_errors:
        payload = {"category": category, "message": str(err)}
        stage = getattr(err, "stage", None)
        if stage:
            payload["stage"] = stage
        line = getattr(err, "line", None)
        if line is not None:
            payload["line"] = line
        sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    else:
        sys.stderr.write(f"surfharm: {category} error: {err}\n")
    return code


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    json_errors = bool(getattr(args, "json_errors", None))
    try:
        config_path = getattr(args, "config", None)
        config = parse_config(config_path) if config_path else {}
        opt = Options(args, config)
        json_errors = opt.get("json_errors", default=False, type=bool)
        args.func(opt)
        return 0
    except ParseError as err:
        return _report_error("parse", err, json_errors, 2)
    except OSError as err:
        return _report_error("io", err, json_errors, 2)
    except (
        MeshError,
        SpectralError,
        MatchError,
        ValueError,
        TypeError,
        RuntimeError,
        np.linalg.LinAlgError,
    ) as err:
        return _report_error("solve", err, json_errors, 1)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
