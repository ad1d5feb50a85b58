"""Heteroskedastic PCA estimators, entrywise inference and mixture simulations."""

from ._core import (  # noqa: F401
    DegenerateError,
    Error,
    ParameterError,
    ShapeError,
    __version__,
    chi2_quantile,
    diagonal_deletion_pca,
    generate,
    gram,
    hetero_pca,
    ks_stat,
    preset_json,
    procrustes,
    sin_theta,
    two_inf_norm,
    vanilla_pca,
)
