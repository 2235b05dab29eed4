"""Data ingestion and feature engineering for the forecasting pipeline.

CSV layouts (all timestamps ISO-8601 with an explicit UTC offset):

- ``meteo.csv``:    timestamp, cell_id, variable, value   (long format)
- ``asg.csv``:      timestamp, asg_mw
- ``capacity.csv``: timestamp, ic_mw                      (sparse anchors)
- ``grid.csv``:     cell_id, lon, lat

Ingestion validates bounds and hourly continuity and rejects rather than
imputes.  Local wall-clock fields (date, hour) are taken from the offset
part of each timestamp string, so daylight-saving data keeps its 23- and
25-hour days without any timezone database lookups.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ComputationError, IngestionError, ValidationError
from .geocluster import GridSelection, SpatialGrid
from .solarpos import GeoCoordinate, solar_position

METEO_VARIABLES = ("SNR", "SSD", "T2m", "RH", "WCI", "TCC")

FEATURE_SETS = {
    "a": ("SNR",),
    "b": METEO_VARIABLES,
}

# wall-clock hours retained for tuning/training; inclusive bounds
DAYLIGHT_HOURS = (5, 21)

_VARIABLE_BOUNDS = {
    "TCC": (0.0, 1.0),
    "RH": (0.0, 100.0),
}


@dataclass(frozen=True)
class FeatureSetSpec:
    """Feature set tag: 'a' = radiation only, 'b' = all six variables."""

    tag: str

    def __post_init__(self):
        if self.tag not in FEATURE_SETS:
            raise ValidationError(f"unknown feature set tag {self.tag!r}")

    @property
    def variables(self) -> tuple[str, ...]:
        return FEATURE_SETS[self.tag]


@dataclass(frozen=True)
class FeatureName:
    """Column identity: a meteorological (variable, location) or a solar angle."""

    variable: str
    cell_id: int | None  # None for angles and for the averaged pseudo-location

    def __str__(self) -> str:
        if self.variable in ("zenith", "azimuth"):
            return self.variable
        if self.cell_id is None:
            return f"{self.variable}@avg"
        return f"{self.variable}@{self.cell_id}"

    @classmethod
    def parse(cls, text: str) -> "FeatureName":
        if text in ("zenith", "azimuth"):
            return cls(text, None)
        var, _, loc = text.partition("@")
        return cls(var, None if loc == "avg" else int(loc))


def _parse_timestamp(raw: str, row: int, path: str):
    s = str(raw).strip().replace("Z", "+00:00")
    try:
        dt = datetime.fromisoformat(s)
    except ValueError:
        raise IngestionError(f"{path}: unparseable timestamp {raw!r} at row {row}")
    if dt.tzinfo is None or dt.utcoffset() is None:
        raise IngestionError(f"{path}: timestamp without UTC offset at row {row}")
    return dt


def _read_csv(path, required: tuple[str, ...], schema: dict | None = None) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"input file not found: {path}")
    frame = pd.read_csv(path)
    if schema:
        frame = frame.rename(columns={v: k for k, v in schema.items()})
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise IngestionError(f"{path}: missing column(s) {', '.join(missing)}")
    return frame


@dataclass
class ObservationTable:
    """Hourly observations: target, capacity anchors aside, meteorology per cell.

    ``frame`` is indexed by the UTC instant; ``local_date``/``local_hour``
    columns carry the wall clock of the original offset timestamps.
    """

    frame: pd.DataFrame
    cells: tuple[int, ...]
    variables: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def local_dates(self) -> np.ndarray:
        return self.frame["local_date"].to_numpy()

    @property
    def local_hours(self) -> np.ndarray:
        return self.frame["local_hour"].to_numpy()

    def column(self, variable: str, cell_id: int) -> np.ndarray:
        name = f"{variable}@{cell_id}"
        if name not in self.frame.columns:
            raise ValidationError(f"missing series {variable!r} for cell {cell_id}")
        return self.frame[name].to_numpy()


def load_observations(
    meteo_path,
    asg_path,
    meteo_schema: dict | None = None,
    asg_schema: dict | None = None,
) -> ObservationTable:
    """Parse and validate the meteorology and generation files into one table."""
    meteo = _read_csv(meteo_path, ("timestamp", "cell_id", "variable", "value"), meteo_schema)
    asg = _read_csv(asg_path, ("timestamp", "asg_mw"), asg_schema)

    bad = set(meteo["variable"].unique()) - set(METEO_VARIABLES)
    if bad:
        raise IngestionError(f"{meteo_path}: unknown meteorological variable(s) {sorted(bad)}")
    for var, (lo, hi) in _VARIABLE_BOUNDS.items():
        vals = meteo.loc[meteo["variable"] == var, "value"]
        out = vals[(vals < lo) | (vals > hi)]
        if len(out):
            row = int(out.index[0]) + 2  # 1-based with header line
            raise IngestionError(
                f"{meteo_path}: {var} value {out.iloc[0]} outside [{lo}, {hi}] at row {row}"
            )
    if not np.issubdtype(np.asarray(meteo["value"]).dtype, np.number):
        bad_rows = meteo[pd.to_numeric(meteo["value"], errors="coerce").isna()]
        row = int(bad_rows.index[0]) + 2
        raise IngestionError(f"{meteo_path}: unparseable value at row {row}")

    asg_ts = [
        _parse_timestamp(v, i + 2, str(asg_path)) for i, v in enumerate(asg["timestamp"])
    ]
    asg_vals = pd.to_numeric(asg["asg_mw"], errors="coerce")
    if asg_vals.isna().any():
        row = int(asg_vals[asg_vals.isna()].index[0]) + 2
        raise IngestionError(f"{asg_path}: unparseable asg_mw at row {row}")
    if (asg_vals < 0).any():
        row = int(asg_vals[asg_vals < 0].index[0]) + 2
        raise IngestionError(f"{asg_path}: negative ASG at row {row}")

    base = pd.DataFrame(
        {
            "instant": pd.to_datetime(asg_ts, utc=True),
            "local_date": [t.date() for t in asg_ts],
            "local_hour": [t.hour for t in asg_ts],
            "asg_mw": asg_vals.to_numpy(dtype=float),
        }
    )
    dup = base["instant"].duplicated()
    if dup.any():
        row = int(np.flatnonzero(dup.to_numpy())[0]) + 2
        raise IngestionError(f"{asg_path}: duplicate timestamp at row {row}")
    base = base.sort_values("instant").set_index("instant")

    meteo = meteo.copy()
    meteo["instant"] = pd.to_datetime(
        [
            _parse_timestamp(v, i + 2, str(meteo_path))
            for i, v in enumerate(meteo["timestamp"])
        ],
        utc=True,
    )
    if meteo.duplicated(["instant", "cell_id", "variable"]).any():
        raise IngestionError(f"{meteo_path}: duplicate (timestamp, cell_id, variable) row")
    wide = meteo.pivot(index="instant", columns=["variable", "cell_id"], values="value")
    wide.columns = [f"{var}@{int(cid)}" for var, cid in wide.columns]
    cells = sorted({int(c) for c in meteo["cell_id"].unique()})
    variables = [v for v in METEO_VARIABLES if v in set(meteo["variable"])]
    order = [f"{var}@{cid}" for cid in cells for var in variables]
    wide = wide.reindex(columns=order).sort_index()

    joined = base.join(wide, how="left")
    gaps = joined.columns[joined.isna().any()]
    if len(gaps):
        raise IngestionError(
            f"{meteo_path}: missing hours for series {gaps[0]} "
            "(meteorology must cover every generation timestamp)"
        )
    extra = wide.index.difference(base.index)
    if len(extra):
        raise IngestionError(
            f"{meteo_path}: meteorology timestamp {extra[0]} has no matching ASG row"
        )

    # hourly continuity
    deltas = joined.index.to_series().diff().dropna()
    off = deltas[deltas != pd.Timedelta(hours=1)]
    if len(off):
        raise IngestionError(
            f"hourly continuity violated around {off.index[0]} (gap of {off.iloc[0]})"
        )

    return ObservationTable(frame=joined, cells=tuple(cells), variables=tuple(variables))


def load_grid(path, schema: dict | None = None) -> SpatialGrid:
    frame = _read_csv(path, ("cell_id", "lon", "lat"), schema)
    pairs = []
    for i, row in frame.iterrows():
        try:
            pairs.append((int(row["cell_id"]), GeoCoordinate(float(row["lon"]), float(row["lat"]))))
        except (TypeError, ValueError, ValidationError) as exc:
            raise IngestionError(f"{path}: bad grid row {i + 2}: {exc}")
    return SpatialGrid.from_pairs(pairs)


def load_capacity_anchors(path, schema: dict | None = None) -> list[tuple[datetime, float]]:
    frame = _read_csv(path, ("timestamp", "ic_mw"), schema)
    anchors = []
    for i, row in frame.iterrows():
        t = _parse_timestamp(row["timestamp"], i + 2, str(path))
        ic = float(row["ic_mw"])
        if ic <= 0:
            raise IngestionError(f"{path}: non-positive capacity at row {i + 2}")
        anchors.append((t, ic))
    anchors.sort(key=lambda a: a[0])
    return anchors


# -- capacity and target ----------------------------------------------------

@dataclass
class CapacityCurve:
    """Interpolated installed capacity per timeline instant."""

    series: pd.Series  # indexed like the observation table

    def at(self, instants) -> np.ndarray:
        vals = self.series.reindex(pd.DatetimeIndex(instants))
        if vals.isna().any():
            raise ValidationError("timestamp not on the capacity curve timeline")
        return vals.to_numpy(dtype=float)

    def __len__(self) -> int:
        return len(self.series)


def interpolate_capacity(anchors, timeline) -> CapacityCurve:
    """Piecewise-linear capacity through the anchors, held flat beyond them."""
    if len(anchors) < 2:
        raise ValidationError("capacity interpolation needs at least two anchors")
    timeline = pd.DatetimeIndex(timeline)
    at = np.array([pd.Timestamp(a[0]).value for a in anchors], dtype=float)
    av = np.array([a[1] for a in anchors], dtype=float)
    if np.any(np.diff(at) <= 0):
        raise ValidationError("capacity anchors must have strictly increasing timestamps")
    vals = np.interp(timeline.asi8.astype(float), at, av)
    if np.any(vals <= 0):
        raise ValidationError("interpolated capacity must stay positive")
    return CapacityCurve(pd.Series(vals, index=timeline))


def make_load_factor(table: ObservationTable, cap: CapacityCurve) -> pd.Series:
    """Load factor per timestamp: generation divided by interpolated capacity."""
    ic = cap.at(table.frame.index)
    if np.any(ic <= 0):
        raise ComputationError("capacity must be strictly positive on the timeline")
    return pd.Series(table.frame["asg_mw"].to_numpy() / ic, index=table.frame.index)


def attach_load_factor(table: ObservationTable, cap: CapacityCurve) -> ObservationTable:
    frame = table.frame.copy()
    frame["ic_mw"] = cap.at(frame.index)
    frame["load_factor"] = make_load_factor(table, cap).to_numpy()
    return replace(table, frame=frame)


def denormalize_forecast(lf, cap: CapacityCurve, t) -> np.ndarray | float:
    """Back to MW: negative load-factor forecasts clamp to zero first."""
    scalar = np.isscalar(lf)
    lf_arr = np.atleast_1d(np.asarray(lf, dtype=float))
    ic = cap.at(pd.DatetimeIndex(np.atleast_1d(t)))
    mw = np.maximum(lf_arr, 0.0) * ic
    return float(mw[0]) if scalar else mw


# -- row filtering ----------------------------------------------------------

def filter_hours(table: ObservationTable, keep: tuple[int, int] = DAYLIGHT_HOURS) -> ObservationTable:
    """Keep only rows whose local wall-clock hour lies in [keep[0], keep[1]]."""
    lo, hi = keep
    mask = (table.frame["local_hour"] >= lo) & (table.frame["local_hour"] <= hi)
    return replace(table, frame=table.frame.loc[mask])


def expand_to_24h(day: date, hours: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Spread forecasts over hours 0-23 of a day, zero where nothing was forecast."""
    out = np.zeros(24)
    for h, v in zip(hours, values):
        out[int(h)] = v
    return out


def exclude_outlier_days(table: ObservationTable, days) -> ObservationTable:
    """Drop all rows falling on the listed local dates (training-side only)."""
    drop = {d if isinstance(d, date) else date.fromisoformat(str(d)) for d in days}
    if not drop:
        return table
    mask = ~np.isin(table.local_dates, list(drop))
    return replace(table, frame=table.frame.loc[mask])


# -- feature assembly -------------------------------------------------------

@dataclass
class FeatureMatrix:
    """Feature rows aligned with the observation timeline."""

    values: np.ndarray  # (n, p) float64
    names: tuple[FeatureName, ...]
    index: pd.DatetimeIndex
    local_date: np.ndarray
    local_hour: np.ndarray

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return len(self.index)

    def row_mask(self, mask) -> "FeatureMatrix":
        mask = np.asarray(mask)
        return FeatureMatrix(
            values=self.values[mask],
            names=self.names,
            index=self.index[mask],
            local_date=self.local_date[mask],
            local_hour=self.local_hour[mask],
        )


def write_prepared_csv(
    path,
    features: FeatureMatrix,
    target: pd.Series,
    asg_mw: np.ndarray,
    ic_mw: np.ndarray,
) -> None:
    """Persist an assembled modeling table (one row per timestamp)."""
    frame = pd.DataFrame(
        {
            "timestamp": [t.isoformat() for t in features.index],
            "local_date": [d.isoformat() for d in features.local_date],
            "local_hour": features.local_hour,
            "asg_mw": np.asarray(asg_mw, dtype=float),
            "ic_mw": np.asarray(ic_mw, dtype=float),
            "load_factor": np.asarray(target, dtype=float),
        }
    )
    for j, name in enumerate(features.names):
        frame[str(name)] = features.values[:, j]
    frame.to_csv(path, index=False)


def read_prepared_csv(path) -> tuple[FeatureMatrix, np.ndarray, np.ndarray, np.ndarray]:
    """Load a prepared CSV back into (features, target, asg, ic)."""
    frame = _read_csv(
        path, ("timestamp", "local_date", "local_hour", "asg_mw", "ic_mw", "load_factor")
    )
    meta = {"timestamp", "local_date", "local_hour", "asg_mw", "ic_mw", "load_factor"}
    feat_cols = [c for c in frame.columns if c not in meta]
    if not feat_cols:
        raise IngestionError(f"{path}: prepared file has no feature columns")
    features = FeatureMatrix(
        values=frame[feat_cols].to_numpy(dtype=float),
        names=tuple(FeatureName.parse(c) for c in feat_cols),
        index=pd.DatetimeIndex(pd.to_datetime(frame["timestamp"], utc=True)),
        local_date=np.array([date.fromisoformat(d) for d in frame["local_date"]]),
        local_hour=frame["local_hour"].to_numpy(dtype=int),
    )
    return (
        features,
        frame["load_factor"].to_numpy(dtype=float),
        frame["asg_mw"].to_numpy(dtype=float),
        frame["ic_mw"].to_numpy(dtype=float),
    )


def assemble_features(
    table: ObservationTable,
    selection: GridSelection,
    spec: FeatureSetSpec,
    refloc: GeoCoordinate,
    angle_time: str = "start",
) -> tuple[FeatureMatrix, pd.Series]:
    """Feature matrix plus aligned load-factor target.

    Column schema: one column per (selected location, variable in the set),
    then zenith and azimuth computed at the reference coordinate.  In
    average mode each variable is the plain mean across all grid cells.
    ``angle_time`` places the solar angles at the hour start (default) or
    the mid-hour instant.
    """
    if "load_factor" not in table.frame.columns:
        raise ValidationError("attach_load_factor must run before assemble_features")
    if angle_time not in ("start", "mid"):
        raise ValidationError(f"angle_time must be 'start' or 'mid', got {angle_time!r}")

    columns: list[np.ndarray] = []
    names: list[FeatureName] = []
    if selection.mode == "average":
        members = sorted(selection.assignment)
        missing = [c for c in members if f"{spec.variables[0]}@{c}" not in table.frame.columns]
        if missing:
            raise ValidationError(f"table lacks meteorology for cell(s) {missing}")
        for var in spec.variables:
            stack = np.column_stack([table.column(var, cid) for cid in members])
            columns.append(stack.mean(axis=1))
            names.append(FeatureName(var, None))
    elif selection.mode == "clustered":
        for cid, _coord in selection.representatives:
            if cid not in table.cells:
                raise ValidationError(f"selection cell {cid} not present in the table")
            for var in spec.variables:
                columns.append(table.column(var, cid))
                names.append(FeatureName(var, cid))
    else:
        raise ValidationError(f"unknown selection mode {selection.mode!r}")

    shift = timedelta(minutes=30) if angle_time == "mid" else timedelta(0)
    zen = np.empty(len(table))
    azi = np.empty(len(table))
    for i, ts in enumerate(table.frame.index):
        sp = solar_position(ts.to_pydatetime() + shift, refloc)
        zen[i] = sp.zenith
        azi[i] = sp.azimuth
    columns += [zen, azi]
    names += [FeatureName("zenith", None), FeatureName("azimuth", None)]

    values = np.column_stack(columns).astype(float)
    if np.isnan(values).any():
        raise ValidationError("assembled features contain missing values")

    matrix = FeatureMatrix(
        values=values,
        names=tuple(names),
        index=table.frame.index,
        local_date=table.local_dates,
        local_hour=table.local_hours.astype(int),
    )
    target = table.frame["load_factor"].copy()
    return matrix, target
