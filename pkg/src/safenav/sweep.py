"""Severity sweeps over the pedestrian speed bound and the prediction horizon."""

from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

import pandas as pd
from tqdm import tqdm

from .scenario import ScenarioConfig, run_scenario, write_run_outputs
from .utils import get_logger

logger = get_logger(__name__)

SUMMARY_FILE = "sweep_summary.csv"


def _cell_dir(out_dir: Path, horizon: float, v_ped: float) -> Path:
    return out_dir / f"T{horizon:g}_v{v_ped:g}"


def run_sweep(
    config: ScenarioConfig,
    v_peds: Sequence[float],
    horizons: Sequence[float],
    out_dir: str | Path | None = None,
) -> pd.DataFrame:
    """Run one scenario for every (T, v̄_ped) pair.

    Args:
        config: Base scenario; its horizon and pedestrian speed are replaced.
        v_peds: Pedestrian speed bounds (m/s), the table columns.
        horizons: Prediction horizons T (s), the table rows.
        out_dir: If given, each run is written to its own sub-directory and the
            summary to ``sweep_summary.csv``.

    Returns:
        DataFrame indexed by T with one column per v̄_ped holding the severity
        class name of each run.

    Raises:
        ValueError: If either grid is empty.
    """
    if len(v_peds) == 0 or len(horizons) == 0:
        raise ValueError("v_peds and horizons must both be non-empty")

    out_path = Path(out_dir) if out_dir is not None else None
    table = pd.DataFrame(
        index=pd.Index(list(horizons), name="T"),
        columns=pd.Index(list(v_peds), name="v_ped"),
        dtype=object,
    )
    cells = [(t, v) for t in horizons for v in v_peds]
    for horizon, v_ped in tqdm(cells, desc="Sweeping scenarios"):
        cell_config = replace(
            config,
            horizon=horizon,
            max_pedestrian_speed=v_ped,
            name=f"{config.name}_T{horizon:g}_v{v_ped:g}",
        )
        result = run_scenario(cell_config)
        table.loc[horizon, v_ped] = result.report.severity.label
        if out_path is not None:
            write_run_outputs(result, _cell_dir(out_path, horizon, v_ped))

    logger.info("Sweep finished: %d runs", len(cells))
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        table.to_csv(out_path / SUMMARY_FILE)
    return table
