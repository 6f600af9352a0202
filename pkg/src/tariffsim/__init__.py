"""Demand response of electricity consumers to grid tariffs and spot prices.

Each consumer minimizes its own cost with a limited ability to reduce load;
a coordinated benchmark minimizes the aggregate peak instead.  The linear
programs are solved by the bounded-variable simplex in ``lp_engine``.
"""

from .errors import (
    AssemblyError,
    CalibrationError,
    ConfigurationError,
    IngestionError,
    InvariantViolation,
    OutputError,
    RejectedInput,
    SolverError,
    TariffSimError,
)
from .model_core import (
    CostBreakdown,
    FlexibilityParams,
    LoadSeries,
    ResponseResult,
    SpotPriceSeries,
    TimeIndex,
    build_time_index,
)

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "CalibrationError",
    "ConfigurationError",
    "CostBreakdown",
    "FlexibilityParams",
    "IngestionError",
    "InvariantViolation",
    "LoadSeries",
    "OutputError",
    "RejectedInput",
    "ResponseResult",
    "SolverError",
    "SpotPriceSeries",
    "TariffSimError",
    "TimeIndex",
    "build_time_index",
]
