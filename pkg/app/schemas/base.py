from typing import Any, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict


class ArrayModel(BaseModel):
    """Base for immutable models that carry numpy arrays."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def frozen_array(value: Any, dtype: Any, ndim: Optional[int] = None,
                 shape: Optional[Tuple[Optional[int], ...]] = None, name: str = "array") -> np.ndarray:
    """
    Copy ``value`` into a read-only numpy array and check rank, shape and finiteness.

    Args:
        value: Array-like input
        dtype: Target dtype (float or complex)
        ndim: Required number of dimensions, if any
        shape: Required shape; ``None`` entries match any extent
        name: Field name used in error messages

    Returns:
        np.ndarray: A read-only copy
    """
    arr = np.array(value, dtype=dtype, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if shape is not None:
        if arr.ndim != len(shape) or any(s is not None and s != a for s, a in zip(shape, arr.shape)):
            raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr
