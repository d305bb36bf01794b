"""Non-rigid shape correspondence with functional maps over gain-adapted
spectral bases."""

from .basis import (
    InhibitionFilter,
    LearnableBasis,
    make_basis,
    mass_norm_decomposition,
    shared_filter_pair,
)
from .descriptors import (
    FeatureKind,
    FeatureSet,
    FeatureTransform,
    apply_transform,
    hks,
    hks_default_times,
    wks,
    wks_default_energies,
    xyz_features,
)
from .fmap import (
    FunctionalMap,
    energy_bijectivity,
    energy_coupling,
    energy_orthogonality,
    fmap_project,
    fmap_solve,
    load_fmap,
    save_fmap,
)
from .mesh import (
    Operators,
    TriMesh,
    build_operators,
    geodesic_matrix,
    load_mesh,
    save_off,
)
from .pointwise import (
    PointwiseMap,
    alignment_energy,
    g_zoomout,
    load_hard_map,
    load_soft_map,
    mrs_loss,
    nn_map,
    recover_map,
    save_hard_map,
    save_soft_map,
    soft_map,
)
from .spectral import (
    DiagonalGainFilter,
    HeatFilter,
    PolynomialFilter,
    Spectrum,
    eigendecompose,
    heat_diffuse,
    load_spectrum,
    save_spectrum,
    spectral_convolve,
)

__version__ = "0.1.0"

__all__ = [
    "DiagonalGainFilter",
    "FeatureKind",
    "FeatureSet",
    "FeatureTransform",
    "FunctionalMap",
    "HeatFilter",
    "InhibitionFilter",
    "LearnableBasis",
    "Operators",
    "PointwiseMap",
    "PolynomialFilter",
    "Spectrum",
    "TriMesh",
    "alignment_energy",
    "apply_transform",
    "build_operators",
    "eigendecompose",
    "energy_bijectivity",
    "energy_coupling",
    "energy_orthogonality",
    "fmap_project",
    "fmap_solve",
    "g_zoomout",
    "geodesic_matrix",
    "heat_diffuse",
    "hks",
    "hks_default_times",
    "load_fmap",
    "load_hard_map",
    "load_mesh",
    "load_soft_map",
    "load_spectrum",
    "make_basis",
    "mass_norm_decomposition",
    "mrs_loss",
    "nn_map",
    "recover_map",
    "save_fmap",
    "save_hard_map",
    "save_off",
    "save_soft_map",
    "save_spectrum",
    "shared_filter_pair",
    "soft_map",
    "spectral_convolve",
    "wks",
    "wks_default_energies",
    "xyz_features",
]
