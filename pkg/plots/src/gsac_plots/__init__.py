"""Offline figure generation from gsac experiment CSVs.

Strictly read-only post-processing: the training pipeline never imports this
package, and this package touches the pipeline only through its CSV files.
"""

from gsac_plots.figures import (
    CurveSpec,
    fit_rate_slope,
    plot_adaptation,
    plot_estimation_rate,
    plot_tables,
    plot_training,
)
from gsac_plots.io import METRICS_COLUMNS, read_csv_rows

__all__ = [
    "CurveSpec",
    "METRICS_COLUMNS",
    "fit_rate_slope",
    "plot_adaptation",
    "plot_estimation_rate",
    "plot_tables",
    "plot_training",
    "read_csv_rows",
]
