"""Static figures from LQR benchmark sweep CSVs."""

from .figures import (
    AXIS_LABELS,
    EXPECTED_COLUMNS,
    FigureSpec,
    SchemaError,
    build_figure,
    read_sweeps,
    render,
)

__all__ = [
    "AXIS_LABELS",
    "EXPECTED_COLUMNS",
    "FigureSpec",
    "SchemaError",
    "build_figure",
    "read_sweeps",
    "render",
]
