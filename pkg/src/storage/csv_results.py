"""
CSV-файлы результатов: решения, пороги, нормы ошибок, отчёты моделирования,
сводки серий. Разделитель ',', десятичная точка, 17 значащих цифр.
"""
import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from src.core.exceptions import ConfigurationException, GridMismatch
from src.models.simulation import SimulationReport
from src.models.solution import Grid, SolutionField
from src.services.free_boundary import ThresholdRow
from src.services.two_time_scale import AggregationRow

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
GRID_TOL = 1e-9


def fmt(value: Optional[float]) -> str:
    """Полная точность double; None -> 'none'"""
    if value is None:
        return "none"
    return f"{float(value):.17g}"


def _write(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    logger.debug(f"Wrote {path}")
    return path


def _read(path: PathLike) -> List[Dict[str, str]]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except OSError as e:
        raise ConfigurationException("", f"cannot read {path}: {e}") from e


# --- Решение: x,v_1..v_m,g_1..g_m,q_1..q_m ---

def solution_header(m: int) -> List[str]:
    return (["x"] + [f"v_{i}" for i in range(1, m + 1)]
            + [f"g_{i}" for i in range(1, m + 1)] + [f"q_{i}" for i in range(1, m + 1)])


def write_solution_csv(path: PathLike, sol: SolutionField) -> Path:
    x = sol.grid.nodes
    rows = (
        [fmt(x[n])] + [fmt(v) for v in sol.values[n]]
        + [fmt(g) for g in sol.obstacle[n]] + [fmt(q) for q in sol.q_field[n]]
        for n in range(sol.grid.n_nodes)
    )
    return _write(path, solution_header(sol.m), rows)


def read_solution_csv(path: PathLike, grid: Grid) -> SolutionField:
    """
    Прочитать решение и проверить, что оно лежит на сетке grid

    Raises:
        GridMismatch: число узлов или координаты не совпадают
        ConfigurationException: файл не читается или повреждён
    """
    records = _read(path)
    if not records:
        raise ConfigurationException("", f"{path}: empty solution file")
    columns = list(records[0].keys())
    m = sum(1 for c in columns if c.startswith("v_"))
    if m == 0 or columns != solution_header(m):
        raise ConfigurationException("", f"{path}: unexpected header {columns}")

    try:
        data = np.array([[float(r[c]) for c in columns] for r in records])
    except (TypeError, ValueError) as e:
        raise ConfigurationException("", f"{path}: non-numeric entry: {e}") from e

    if data.shape[0] != grid.n_nodes:
        raise GridMismatch(f"{path}: {data.shape[0]} rows, grid has {grid.n_nodes} nodes")
    if np.max(np.abs(data[:, 0] - grid.nodes)) > GRID_TOL * max(1.0, abs(grid.x_max)):
        raise GridMismatch(f"{path}: node coordinates differ from grid [{grid.x_min}, {grid.x_max}] h={grid.h}")

    return SolutionField(
        grid=grid,
        values=data[:, 1:1 + m],
        obstacle=data[:, 1 + m:1 + 2 * m],
        q_field=data[:, 1 + 2 * m:1 + 3 * m],
        iterations=0,
        max_complementarity_residual=float("nan"),
    )


# --- Пороги: regime,threshold,smooth_fit_gap ---

def write_threshold_csv(path: PathLike, rows: Sequence[ThresholdRow]) -> Path:
    return _write(
        path, ["regime", "threshold", "smooth_fit_gap"],
        ([str(r.regime), fmt(r.threshold), "" if r.smooth_fit_gap is None else fmt(r.smooth_fit_gap)]
         for r in rows)
    )


def read_threshold_csv(path: PathLike) -> List[ThresholdRow]:
    rows = []
    for record in _read(path):
        threshold = None if record["threshold"] == "none" else float(record["threshold"])
        gap = float(record["smooth_fit_gap"]) if record["smooth_fit_gap"] else None
        rows.append(ThresholdRow(regime=int(record["regime"]), threshold=threshold, smooth_fit_gap=gap))
    return rows


# --- Нормы ошибок: epsilon,N_1..N_L,spread_1..spread_L ---

def write_error_csv(path: PathLike, rows: Sequence[AggregationRow]) -> Path:
    n_blocks = len(rows[0].norms.values) if rows else 0
    header = (["epsilon"] + [f"N_{k}" for k in range(1, n_blocks + 1)]
              + [f"spread_{k}" for k in range(1, n_blocks + 1)])
    return _write(
        path, header,
        ([fmt(r.epsilon)] + [fmt(v) for v in r.norms.values] + [fmt(s) for s in r.spreads] for r in rows)
    )


def read_error_csv(path: PathLike) -> List[Dict[str, float]]:
    return [{k: float(v) for k, v in record.items()} for record in _read(path)]


# --- Отчёт моделирования ---

SIMULATION_HEADER = ["x0", "i0", "policy", "estimate", "std_error", "n_paths", "frac_stopped", "mean_stop_time"]


def write_simulation_csv(path: PathLike, reports: Sequence[SimulationReport]) -> Path:
    return _write(
        path, SIMULATION_HEADER,
        ([fmt(r.x0), str(r.i0 + 1), r.policy, fmt(r.estimate), fmt(r.std_error), str(r.n_paths),
          fmt(r.fraction_stopped_before_T), fmt(r.mean_stop_time)] for r in reports)
    )


def read_simulation_csv(path: PathLike) -> List[Dict[str, Union[str, float, int]]]:
    rows = []
    for record in _read(path):
        rows.append({
            "x0": float(record["x0"]),
            "i0": int(record["i0"]),
            "policy": record["policy"],
            "estimate": float(record["estimate"]),
            "std_error": float(record["std_error"]),
            "n_paths": int(record["n_paths"]),
            "frac_stopped": float(record["frac_stopped"]),
            "mean_stop_time": float(record["mean_stop_time"]),
        })
    return rows


# --- Сводка серии: value,threshold_1..threshold_m ---

def write_sweep_summary_csv(path: PathLike, values: Sequence[float],
                            thresholds: Sequence[Sequence[Optional[float]]]) -> Path:
    m = len(thresholds[0]) if thresholds else 0
    return _write(
        path, ["value"] + [f"threshold_{i}" for i in range(1, m + 1)],
        ([fmt(v)] + [fmt(t) for t in row] for v, row in zip(values, thresholds))
    )


def read_sweep_summary_csv(path: PathLike) -> List[Dict[str, Optional[float]]]:
    return [
        {k: None if v == "none" else float(v) for k, v in record.items()}
        for record in _read(path)
    ]
