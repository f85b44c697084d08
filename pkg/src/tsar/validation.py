"""Input checks shared by the estimators and the functional API."""

import numbers

import numpy as np

__all__ = ["check_series", "check_frame", "check_count", "check_real"]


def check_series(series):
    """Return ``series`` as a 1-D float64 array; ``nan`` marks missing."""
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D series, got shape {arr.shape}")
    if np.isinf(arr).any():
        raise ValueError("series contains infinite values")
    return arr


def check_frame(data, step=None):
    """Coerce ``data`` to a :class:`~tsar.frame.SeriesFrame`.

    Accepts a frame, a pandas DataFrame with a datetime index, or a 2-D array
    (placed on a unit grid starting at 0).
    """
    from .frame import SeriesFrame

    if isinstance(data, SeriesFrame):
        frame = data
    elif hasattr(data, "columns") and hasattr(data, "index"):
        frame = SeriesFrame.from_pandas(data)
    else:
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError(f"expected 2-D data, got shape {arr.shape}")
        frame = SeriesFrame.from_array(arr, step=1 if step is None else step)
    if np.isinf(frame.values).any():
        raise ValueError("data contains infinite values")
    return frame


def check_count(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_real(value, name, low=None, high=None, low_open=False, high_open=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if low is not None and (value < low or (low_open and value == low)):
        raise ValueError(f"{name} must be {'>' if low_open else '>='} {low}, got {value}")
    if high is not None and (value > high or (high_open and value == high)):
        raise ValueError(f"{name} must be {'<' if high_open else '<='} {high}, got {value}")
    return value
