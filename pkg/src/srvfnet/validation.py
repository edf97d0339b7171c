"""Input checks shared by the estimators and the CLI."""
import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionError
from .functional import check_unit


def check_functions(X, min_length=3):
    """2-D float array of sampled functions, one per row."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if X.shape[1] < min_length:
        raise DimensionError(f"need at least {min_length} samples per function, got {X.shape[1]}")
    return X


def check_srvfs(X, unit=True, length=None):
    X = check_functions(X)
    if length is not None and X.shape[1] != length:
        raise DimensionError(f"expected SRVFs of length {length}, got {X.shape[1]}")
    if unit:
        check_unit(X, "X")
    return X


def check_template(template, length=None):
    if template is None:
        return None
    template = np.asarray(template, dtype=np.float64)
    if template.ndim != 1:
        raise DimensionError("template must be a single 1-D SRVF")
    if length is not None and template.shape[0] != length:
        raise DimensionError(f"template length {template.shape[0]} != {length}")
    check_unit(template, "template")
    return template
