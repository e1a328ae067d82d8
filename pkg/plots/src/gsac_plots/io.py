"""CSV ingestion with column validation.

Input schemas (all produced upstream, consumed read-only here):

- metrics CSV (one per run): method, phase, grid_size, omega_target, seed,
  k_or_episode, domain_index, return_discounted, critic_delta, grad_norm,
  wall_ms
- estimation-diagnostics CSV: t_e, abs_error, seed
- table-size CSV: agent, raw_features, compact_features
"""

from __future__ import annotations

import csv
from typing import Sequence

METRICS_COLUMNS = (
    "method", "phase", "grid_size", "omega_target", "seed", "k_or_episode",
    "domain_index", "return_discounted", "critic_delta", "grad_norm", "wall_ms",
)
RATE_COLUMNS = ("t_e", "abs_error", "seed")
TABLE_COLUMNS = ("agent", "raw_features", "compact_features")


class MissingColumnsError(ValueError):
    """A CSV lacks columns the requested figure needs."""


def read_csv_rows(paths: Sequence[str], required: Sequence[str]) -> list[dict]:
    """Concatenated rows from `paths`, each file checked for `required` columns.

    Raises MissingColumnsError naming the file and the absent columns, and
    ValueError if no rows remain at the end.
    """
    if not paths:
        raise ValueError("no CSV paths given")
    rows: list[dict] = []
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in required if c not in header]
            if missing:
                raise MissingColumnsError(
                    f"{path}: missing columns {missing} (found {header})"
                )
            rows.extend(reader)
    if not rows:
        raise ValueError(f"no data rows in {list(paths)}")
    return rows
