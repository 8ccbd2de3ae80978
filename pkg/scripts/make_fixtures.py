"""Regenerate the bundled data files under src/dnoport/data."""
from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path

import numpy as np

from dnoport.instances import random_instance, write_orlibrary

DATA = Path(__file__).resolve().parents[1] / "src" / "dnoport" / "data"


def desk_instance() -> None:
    write_orlibrary(random_instance(12, 0, name="desk12"), DATA / "desk12.txt")


def price_history(n_assets: int = 20, days: int = 260, seed: int = 11) -> None:
    """Correlated geometric random walks on business days, plus an equal-weight index."""
    rng = np.random.default_rng(seed)
    load = rng.normal(0.0, 1.0, size=(n_assets, 2))
    vol = rng.uniform(0.008, 0.03, size=n_assets)
    drift = rng.normal(0.0004, 0.0008, size=n_assets)
    prices = np.empty((days, n_assets))
    prices[0] = rng.uniform(5.0, 80.0, size=n_assets)
    for t in range(1, days):
        shock = load @ rng.normal(size=2) * 0.5 + rng.normal(size=n_assets)
        prices[t] = prices[t - 1] * np.exp(drift + vol * shock / np.sqrt(1.25))
    dates, d = [], dt.date(2023, 1, 2)
    while len(dates) < days:
        if d.weekday() < 5:
            dates.append(d.isoformat())
        d += dt.timedelta(days=1)
    with (DATA / "prices20.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["date"] + [f"A{i:02d}" for i in range(n_assets)])
        for day, row in zip(dates, prices):
            wr.writerow([day] + [f"{x:.4f}" for x in row])
    index = (prices / prices[0]).mean(axis=1) * 1000.0
    with (DATA / "index20.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["date", "value"])
        for day, v in zip(dates, index):
            wr.writerow([day, f"{v:.4f}"])


if __name__ == "__main__":
    DATA.mkdir(parents=True, exist_ok=True)
    desk_instance()
    price_history()
