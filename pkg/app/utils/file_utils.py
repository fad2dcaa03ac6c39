import os
from typing import Dict, Iterable, Mapping, Tuple
import logging

import numpy as np
import pandas as pd

from app.core.exceptions import ConfigError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def ensure_output_dir(directory: str) -> str:
    """Create the output directory if needed and return it"""
    os.makedirs(directory, exist_ok=True)
    return directory


def resolve_path(path: str, base_dir: str) -> str:
    """Paths in a config file are relative to that file"""
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))


def field_frame(grid, field: np.ndarray, column: str) -> pd.DataFrame:
    """Long a,x,<column> table of a field sampled on the grid"""
    ages, contents = np.meshgrid(grid.a, grid.x, indexing="ij")
    return pd.DataFrame({"a": ages.ravel(), "x": contents.ravel(), column: np.asarray(field).ravel()})


def write_table(frame: pd.DataFrame, directory: str, name: str) -> str:
    """Write a CSV with a fixed float format so serial runs are byte-identical"""
    path = os.path.join(ensure_output_dir(directory), name)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def _format_value(value) -> str:
    if isinstance(value, bool) or value is None:
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def format_summary(summary: Mapping[str, object]) -> str:
    return "".join(f"{key} = {_format_value(value)}\n" for key, value in summary.items())


def write_summary(directory: str, summary: Mapping[str, object], name: str = "summary.txt") -> str:
    """key = value lines in insertion order"""
    path = os.path.join(ensure_output_dir(directory), name)
    with open(path, "w") as handle:
        handle.write(format_summary(summary))
    logger.info(f"Wrote {path}")
    return path


def load_field_table(path: str) -> Tuple[Tuple[float, ...], Tuple[float, ...], Tuple[Tuple[float, ...], ...]]:
    """Read an a,x,value CSV into (ages, contents, values[age][content])"""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise ConfigError(f"cannot read table {path}: {e}")
    missing = {"a", "x", "value"} - set(frame.columns)
    if missing:
        raise ConfigError(f"table {path} lacks columns {sorted(missing)}")
    table = frame.pivot_table(index="a", columns="x", values="value", aggfunc="mean").sort_index().sort_index(axis=1)
    if table.isna().any().any():
        raise ConfigError(f"table {path} is not a full a x x grid")
    values = tuple(tuple(float(v) for v in row) for row in table.to_numpy())
    return tuple(float(a) for a in table.index), tuple(float(x) for x in table.columns), values


def load_profile_table(path: str, columns: Tuple[str, str]) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    """Read a two-column CSV such as z,value or u,value, sorted by the first column"""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise ConfigError(f"cannot read table {path}: {e}")
    missing = set(columns) - set(frame.columns)
    if missing:
        raise ConfigError(f"table {path} lacks columns {sorted(missing)}")
    frame = frame.sort_values(columns[0])
    return tuple(frame[columns[0]].astype(float)), tuple(frame[columns[1]].astype(float))


PLOT_TEMPLATES: Dict[str, str] = {
    "eigen": """
density = pd.read_csv(os.path.join(HERE, "N.csv")).pivot(index="a", columns="x", values="N")
adjoint = pd.read_csv(os.path.join(HERE, "phi.csv")).pivot(index="a", columns="x", values="phi")
fig, axes = plt.subplots(1, 2, figsize=(11, 4))
for ax, table, title in zip(axes, (density, adjoint), ("N(a, x)", "phi(a, x)")):
    mesh = ax.pcolormesh(table.columns, table.index, table.values, shading="auto")
    ax.set_xlabel("x")
    ax.set_ylabel("a")
    ax.set_title(title)
    fig.colorbar(mesh, ax=ax)
""",
    "simulate": """
series = pd.read_csv(os.path.join(HERE, "observables.csv"))
fig, axes = plt.subplots(1, 3, figsize=(13, 4))
for ax, column in zip(axes, ("duality", "entropy", "distance")):
    ax.plot(series["t"], series[column])
    ax.set_xlabel("t")
    ax.set_title(column)
""",
    "twophase": """
series = pd.read_csv(os.path.join(HERE, "trajectory.csv"))
series = series[series["t"] > 0]
fig, axes = plt.subplots(1, 2, figsize=(11, 4))
axes[0].loglog(series["t"], series["N"])
axes[0].set_title("N(t), log-log")
axes[1].plot(series["t"], series["R"])
axes[1].set_title("R(t) = P/(P+Q)")
for ax in axes:
    ax.set_xlabel("t")
""",
    "sweep": """
table = pd.read_csv(os.path.join(HERE, "sweep.csv"))
numeric = table.select_dtypes("number")
fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(table.iloc[:, 0], numeric.iloc[:, 1] if numeric.shape[1] > 1 else numeric.iloc[:, 0], "o-")
ax.set_xlabel(table.columns[0])
""",
}


def write_plot_script(directory: str, command: str, files: Iterable[str] = ()) -> str:
    """Standalone matplotlib script reading the CSVs next to it"""
    body = PLOT_TEMPLATES.get(command)
    if body is None:
        raise ConfigError(f"no plot script for command '{command}'")
    listing = ", ".join(os.path.basename(f) for f in files)
    script = (
        "# Plots " + (listing or command) + "\n"
        "import os\n\n"
        "import matplotlib.pyplot as plt\n"
        "import pandas as pd\n\n"
        "HERE = os.path.dirname(os.path.abspath(__file__))\n"
        + body
        + "fig.tight_layout()\n"
        + f"fig.savefig(os.path.join(HERE, \"{command}.png\"), dpi=150)\n"
    )
    path = os.path.join(ensure_output_dir(directory), "plot.py")
    with open(path, "w") as handle:
        handle.write(script)
    logger.info(f"Wrote {path}")
    return path
