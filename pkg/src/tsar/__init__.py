"""Seasonal baselines plus a low-rank Gaussian process for vector time series.

Forecasts and imputes series with arbitrary missing values. The main entry
point is :class:`TsarForecaster`; the building blocks live in the submodules.
"""

from .baseline import HarmonicCounts, PeriodSet, SeasonalBaseline
from .frame import SeriesFrame, TimeGrid, read_csv, write_csv
from .ggs import greedy_grid_search
from .model import TsarForecaster
from .persistence import load, load_file, save, save_file
from .residual import NotPositiveDefiniteError

__all__ = [
    "TsarForecaster",
    "SeasonalBaseline",
    "SeriesFrame",
    "TimeGrid",
    "HarmonicCounts",
    "PeriodSet",
    "NotPositiveDefiniteError",
    "greedy_grid_search",
    "read_csv",
    "write_csv",
    "save",
    "load",
    "save_file",
    "load_file",
]

__version__ = "0.1.0"
