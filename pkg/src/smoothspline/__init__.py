"""Smoothing splines fitted under a roughness budget, a residual budget or a penalty."""

from .basis import AnchorSet, MultiIndex, PolyBasis, basis_size, check_unisolvent, choose_anchors, monomial_basis
from .data import Dataset, ReplicatedDataset
from .errors import (
    DuplicatePointError,
    InvalidOrderError,
    ModelFormatError,
    NotUnisolventError,
    RootFindingError,
    SingularSystemError,
    SplineError,
    UnsupportedDerivativeError,
    VersionMismatchError,
)
from .estimator import (
    FitRequest,
    FitResult,
    Problem,
    cross_validate,
    default_cv_grid,
    duality_roundtrip,
    fit,
    fit_problem_a,
    fit_problem_b,
    fit_problem_c,
    fit_problem_c_cv,
    interpolant,
    poly_least_squares,
    psi_n,
)
from .kernel import SplineSetup, make_setup, r_kernel, theta
from .model import SplineModel, deserialize, serialize
from .variance import partition_estimate, partition_s_n, replicate_s_n

__version__ = "0.1.0"

__all__ = [
    "AnchorSet",
    "Dataset",
    "DuplicatePointError",
    "FitRequest",
    "FitResult",
    "InvalidOrderError",
    "ModelFormatError",
    "MultiIndex",
    "NotUnisolventError",
    "PolyBasis",
    "Problem",
    "ReplicatedDataset",
    "RootFindingError",
    "SingularSystemError",
    "SplineError",
    "SplineModel",
    "SplineSetup",
    "UnsupportedDerivativeError",
    "VersionMismatchError",
    "basis_size",
    "check_unisolvent",
    "choose_anchors",
    "cross_validate",
    "default_cv_grid",
    "deserialize",
    "duality_roundtrip",
    "fit",
    "fit_problem_a",
    "fit_problem_b",
    "fit_problem_c",
    "fit_problem_c_cv",
    "interpolant",
    "make_setup",
    "monomial_basis",
    "partition_estimate",
    "partition_s_n",
    "poly_least_squares",
    "psi_n",
    "r_kernel",
    "replicate_s_n",
    "serialize",
    "theta",
]
