"""Neural varifold kernels for oriented point clouds.

Closed-form NTK kernels over positions and normals, the varifold distance
they induce, and three applications: shape matching, few-shot
classification by kernel ridge regression, and implicit surface
reconstruction.
"""

__version__ = "0.1.0"

from .geometry import (
    OrientedPointCloud,
    TriangleMesh,
    load_cloud,
    load_mesh,
    normalize_unit_sphere,
    sample_area_weighted,
    sample_face_centers,
    save_cloud,
    save_mesh,
)
from .ntk import empirical_ntk, ntk_mlp
from .varifold import KernelConfig, cloud_kernel, pairwise_cloud_gram, varifold_distance
from .metrics import chamfer, emd_exact
from .krr import EpisodeSpec, LabeledCloudSet, krr_predict, krr_solve, run_episodes

__all__ = [
    "OrientedPointCloud",
    "TriangleMesh",
    "load_cloud",
    "load_mesh",
    "save_cloud",
    "save_mesh",
    "normalize_unit_sphere",
    "sample_area_weighted",
    "sample_face_centers",
    "ntk_mlp",
    "empirical_ntk",
    "KernelConfig",
    "cloud_kernel",
    "pairwise_cloud_gram",
    "varifold_distance",
    "chamfer",
    "emd_exact",
    "EpisodeSpec",
    "LabeledCloudSet",
    "krr_solve",
    "krr_predict",
    "run_episodes",
]
