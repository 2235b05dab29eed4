"""Synthetic dataset generator: a desk-scale stand-in for the real feeds.

Generative model (documented so tests can assert against it):

- hourly timeline at a fixed UTC offset (no DST in synthetic data);
- a cloud process per cell: logistic squash of a shared regional AR(1)
  plus an idiosyncratic AR(1), giving spatially correlated cover in [0,1];
- clear-sky index ``cs = max(0, cos(zenith))**1.15`` at the grid mean;
- load factor ``LF = (cs * shade)**curve * rh_damp * noise`` with
  ``shade = mean_cells(1 - 0.75 * cloud**3)`` and
  ``rh_damp = 1 - RH_COEF * mean_cells(RH)/100`` (humidity mildly damps
  output); the curvature keeps the target nonlinear in the radiation
  features;
- ``SNR = (1 - albedo) * S0 * cs * (1 - 0.75 * cloud**3)`` per cell with
  mild measurement noise (the driver), ``SSD = SNR / (1 - albedo)`` with
  more noise, ``TCC`` is a precise cloud reading (complementary to the
  noisy SNR), ``RH`` feeds the damping pathway above; ``T2m`` and ``WCI``
  are pure seasonal/noise processes with zero generative weight (decoys);
- ASG = LF * IC with linearly growing capacity anchors.

All measurement noise scales to zero when ``noise`` is 0, so the
zero-noise cloudless dataset is an exact function of the solar geometry.
``truth.json`` records the generative feature weights for relevance tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .solarpos import GeoCoordinate, solar_position

S0_JOULES = 3.6e6  # one hour of ~1 kW/m^2 in J/m^2
ALBEDO = 0.12
RH_BASE, RH_SPAN = 52.0, 30.0  # RH = RH_BASE + RH_SPAN * cloud + noise
RH_COEF = 0.12  # humidity damping of the load factor

# generative weight of each variable in the load factor (0 = decoy)
TRUTH_WEIGHTS = {
    "SNR": 1.0,
    "SSD": 0.8,
    "TCC": 0.5,
    "RH": 0.15,
    "T2m": 0.0,
    "WCI": 0.0,
    "zenith": 0.9,
    "azimuth": 0.3,
}


@dataclass
class SynthParams:
    start: date = date(2021, 1, 1)
    months: int = 18
    n_cells: int = 5
    seed: int = 7
    noise: float = 0.04
    curve: float = 2.0  # LF = (cs * shade)**curve
    capacity_start_mw: float = 3400.0
    capacity_end_mw: float = 7600.0
    utc_offset_hours: int = 1
    cloudless: bool = False


def _cloud_process(n_hours: int, n_cells: int, rng) -> np.ndarray:
    shared = np.empty(n_hours)
    own = np.empty((n_hours, n_cells))
    rho_s, rho_o = 0.985, 0.95
    shared[0] = rng.normal()
    own[0] = rng.normal(size=n_cells)
    for t in range(1, n_hours):
        shared[t] = rho_s * shared[t - 1] + np.sqrt(1 - rho_s**2) * rng.normal()
        own[t] = rho_o * own[t - 1] + np.sqrt(1 - rho_o**2) * rng.normal(size=n_cells)
    latent = 0.75 * shared[:, None] + 0.45 * own
    return 1.0 / (1.0 + np.exp(-1.6 * latent))


def generate(params: SynthParams, out_dir) -> dict:
    """Write meteo/asg/capacity/grid CSVs plus truth.json; returns a summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(params.seed)

    end = _add_months(params.start, params.months)
    n_days = (end - params.start).days
    n_hours = n_days * 24
    tz = timezone(timedelta(hours=params.utc_offset_hours))
    t0 = datetime(params.start.year, params.start.month, params.start.day, tzinfo=tz)
    stamps = [t0 + timedelta(hours=h) for h in range(n_hours)]

    # Belgium-like cell scatter
    lons = rng.uniform(2.8, 6.2, size=params.n_cells)
    lats = rng.uniform(49.8, 51.4, size=params.n_cells)
    cells = [(cid + 1, GeoCoordinate(float(lo), float(la))) for cid, (lo, la) in enumerate(zip(lons, lats))]
    ref = GeoCoordinate(float(np.mean(lons)), float(np.mean(lats)))

    zen = np.empty(n_hours)
    for i, ts in enumerate(stamps):
        zen[i] = solar_position(ts, ref).zenith
    cs = np.maximum(0.0, np.cos(np.radians(zen))) ** 1.15

    if params.cloudless:
        cloud = np.zeros((n_hours, params.n_cells))
    else:
        cloud = _cloud_process(n_hours, params.n_cells, rng)

    # measurement noise vanishes entirely in zero-noise runs
    meas = 1.0 if params.noise > 0 else 0.0

    shade_cell = 1.0 - 0.75 * cloud**3
    shade = shade_cell.mean(axis=1)
    rh = np.clip(
        RH_BASE + RH_SPAN * cloud + rng.normal(0, 6.0 * meas, size=cloud.shape), 0.0, 100.0
    )
    rh_damp = 1.0 - RH_COEF * rh.mean(axis=1) / 100.0
    lf = (cs * shade) ** params.curve * rh_damp
    if params.noise > 0:
        lf = lf * np.exp(rng.normal(0.0, params.noise, size=n_hours))
    lf = np.clip(lf, 0.0, 1.0)

    # capacity anchors: linear growth sampled sparsely (~quarterly)
    n_anchors = max(2, params.months // 3 + 1)
    anchor_days = np.linspace(0, n_days - 1, n_anchors).astype(int)
    anchor_vals = np.linspace(params.capacity_start_mw, params.capacity_end_mw, n_anchors)
    ic_hourly = np.interp(
        np.arange(n_hours) / 24.0, anchor_days.astype(float), anchor_vals
    )
    asg = lf * ic_hourly

    doy = np.array([ts.timetuple().tm_yday for ts in stamps])
    hod = np.array([ts.hour for ts in stamps])
    seasonal = np.sin(2 * np.pi * (doy - 100) / 365.25)
    diurnal = np.sin(2 * np.pi * (hod - 9) / 24.0)

    snr = (
        (1.0 - ALBEDO) * S0_JOULES * cs[:, None] * shade_cell
        * np.exp(rng.normal(0, 0.06 * meas, size=cloud.shape))
    )
    ssd = snr / (1.0 - ALBEDO) * np.exp(rng.normal(0, 0.10 * meas, size=snr.shape))
    tcc = np.clip(cloud + rng.normal(0, 0.02 * meas, size=cloud.shape), 0.0, 1.0)
    t2m = 283.0 + 8.0 * seasonal[:, None] + 4.0 * diurnal[:, None] + rng.normal(
        0, 1.5, size=cloud.shape
    )
    wci = (
        6.0
        + 7.0 * seasonal[:, None]
        + rng.normal(0, 3.0, size=cloud.shape)
    )

    iso = [ts.isoformat() for ts in stamps]
    with open(out / "asg.csv", "w") as fh:
        fh.write("timestamp,asg_mw\n")
        for i in range(n_hours):
            fh.write(f"{iso[i]},{asg[i]:.6f}\n")
    with open(out / "capacity.csv", "w") as fh:
        fh.write("timestamp,ic_mw\n")
        for d, v in zip(anchor_days, anchor_vals):
            fh.write(f"{iso[int(d) * 24]},{v:.3f}\n")
    with open(out / "grid.csv", "w") as fh:
        fh.write("cell_id,lon,lat\n")
        for cid, coord in cells:
            fh.write(f"{cid},{coord.longitude:.4f},{coord.latitude:.4f}\n")
    series = {"SNR": snr, "SSD": ssd, "T2m": t2m, "RH": rh, "WCI": wci, "TCC": tcc}
    with open(out / "meteo.csv", "w") as fh:
        fh.write("timestamp,cell_id,variable,value\n")
        for i in range(n_hours):
            ts = iso[i]
            for ci, (cid, _) in enumerate(cells):
                for var, mat in series.items():
                    fh.write(f"{ts},{cid},{var},{mat[i, ci]:.6f}\n")
    with open(out / "truth.json", "w") as fh:
        json.dump(
            {
                "weights": TRUTH_WEIGHTS,
                "decoys": [k for k, v in TRUTH_WEIGHTS.items() if v == 0.0],
                "driver": "SNR",
                "curve": params.curve,
                "rh_base": RH_BASE,
                "rh_coef": RH_COEF,
                "seed": params.seed,
                "n_hours": n_hours,
                "reference": {"lon": ref.longitude, "lat": ref.latitude},
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    return {
        "n_hours": n_hours,
        "n_cells": params.n_cells,
        "start": params.start.isoformat(),
        "end": (end - timedelta(days=1)).isoformat(),
        "files": ["meteo.csv", "asg.csv", "capacity.csv", "grid.csv", "truth.json"],
    }


def _add_months(d: date, months: int) -> date:
    month = d.month - 1 + months
    return date(d.year + month // 12, month % 12 + 1, d.day)
