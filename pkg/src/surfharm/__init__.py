"""Spectral geometry toolkit for molecular surface meshes.

Builds Laplace-Beltrami eigenbases on triangle meshes with finite-element
operators, filters and diffuses per-vertex fields spectrally, projects atom
descriptors onto surfaces, and rigidly docks two surfaces by functional-map
correspondence.  A command-line front end is installed as ``surfharm``.
"""

from .correspondence import (
    DockOptions,
    DockReport,
    FunctionalMap,
    InterfaceResult,
    RigidTransform,
    VertexCorrespondence,
    complex_rmsd,
    extract_interface,
    fmap_to_p2p,
    interface_rmsd,
    kabsch,
    rigid_dock,
    solve_fmap,
    submesh,
)
from .curvature import (
    CurvatureField,
    curvature_field,
    gaussian_curvature,
    mean_curvature,
    vertex_normals,
)
from .errors import MatchError, MeshError, ParseError, SpectralError, SurfharmError
from .estimators import (
    AtomFeatureProjector,
    FunctionalMapping,
    HarmonicFilter,
    HeatDiffusion,
    HeatKernelSignature,
    ManifoldHarmonics,
    RigidAlignment,
)
from .features import (
    AtomDescriptorTable,
    default_descriptor_table,
    load_descriptor_table,
    save_descriptor_table,
    project_atom_features,
    assemble_input_features,
)
from .fileio import AtomSet, load_mesh, mesh_to_string, parse_atoms, save_mesh
from .harmonics import (
    FilterParams,
    SpectralCoeffs,
    SurfaceField,
    apply_filter,
    default_hks_times,
    filter_gradients,
    fit_filter,
    from_spectral,
    heat_diffuse,
    heat_kernel_signature,
    smooth_coordinates,
    to_spectral,
)
from .mesh import (
    CleanupReport,
    TriangleMesh,
    bumpy_icosphere,
    cleanup_mesh,
    icosphere,
    plane_grid,
    surface_area,
)
from .serialize import (
    load_basis,
    load_field_csv,
    load_transform,
    save_basis,
    save_field_csv,
    save_transform,
)
from .spectral import (
    SpectralBasis,
    WeylFit,
    assemble_mass,
    assemble_stiffness,
    solve_spectrum,
    weyl_slope,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "SurfharmError",
    "ParseError",
    "MeshError",
    "SpectralError",
    "MatchError",
    # meshes
    "TriangleMesh",
    "CleanupReport",
    "cleanup_mesh",
    "icosphere",
    "bumpy_icosphere",
    "plane_grid",
    "surface_area",
    "load_mesh",
    "save_mesh",
    "mesh_to_string",
    "parse_atoms",
    "AtomSet",
    # operators and spectra
    "assemble_stiffness",
    "assemble_mass",
    "solve_spectrum",
    "SpectralBasis",
    "weyl_slope",
    "WeylFit",
    # curvature
    "vertex_normals",
    "gaussian_curvature",
    "mean_curvature",
    "curvature_field",
    "CurvatureField",
    # harmonics
    "SurfaceField",
    "SpectralCoeffs",
    "FilterParams",
    "to_spectral",
    "from_spectral",
    "apply_filter",
    "heat_diffuse",
    "heat_kernel_signature",
    "default_hks_times",
    "smooth_coordinates",
    "filter_gradients",
    "fit_filter",
    # features
    "AtomDescriptorTable",
    "default_descriptor_table",
    "load_descriptor_table",
    "save_descriptor_table",
    "project_atom_features",
    "assemble_input_features",
    # correspondence
    "InterfaceResult",
    "extract_interface",
    "submesh",
    "FunctionalMap",
    "solve_fmap",
    "VertexCorrespondence",
    "fmap_to_p2p",
    "RigidTransform",
    "kabsch",
    "complex_rmsd",
    "interface_rmsd",
    "DockOptions",
    "DockReport",
    "rigid_dock",
    # serialization
    "save_basis",
    "load_basis",
    "save_field_csv",
    "load_field_csv",
    "save_transform",
    "load_transform",
    # estimators
    "ManifoldHarmonics",
    "HarmonicFilter",
    "HeatDiffusion",
    "HeatKernelSignature",
    "AtomFeatureProjector",
    "FunctionalMapping",
    "RigidAlignment",
]
