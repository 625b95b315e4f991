"""Bundled synthetic market data for examples, smoke tests, and the CLI.

A deterministic three-factor model generates monthly-scale returns for a
20-asset universe; the same generator wrote the CSV files shipped inside
the package, so ``load_bundled()`` and ``synthetic_returns()`` agree
bit for bit.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from .data import ScenarioSet, load_returns

__all__ = [
    "synthetic_returns",
    "synthetic_market_caps",
    "load_bundled",
    "load_bundled_caps",
]

_SEED = 744218039
_N_ASSETS = 20
_N_PERIODS = 84


def synthetic_returns(n_assets: int = _N_ASSETS, n_periods: int = _N_PERIODS,
                      seed: int = _SEED) -> ScenarioSet:
    """Monthly-scale returns from a fixed three-factor model."""
    rng = np.random.default_rng(seed)
    n_factors = 3
    mu = rng.uniform(0.002, 0.011, size=n_assets)
    loadings = rng.normal(0.0, 1.0, size=(n_assets, n_factors)) \
        * np.array([0.020, 0.012, 0.007])
    idio = rng.uniform(0.012, 0.035, size=n_assets)
    factors = rng.normal(0.0, 1.0, size=(n_periods, n_factors))
    noise = rng.normal(0.0, 1.0, size=(n_periods, n_assets)) * idio
    returns = mu + factors @ loadings.T + noise
    # simple returns cannot go below -100%; the scales above keep a wide
    # margin but clip defensively anyway
    returns = np.maximum(returns, -0.95)
    asset_ids = tuple(f"A{j + 1:02d}" for j in range(n_assets))
    period_ids = tuple(f"m{t + 1:03d}" for t in range(n_periods))
    return ScenarioSet(returns, asset_ids, period_ids)


def synthetic_market_caps(n_assets: int = _N_ASSETS,
                          seed: int = _SEED) -> np.ndarray:
    """Log-normal market values matching the synthetic universe."""
    rng = np.random.default_rng(seed + 1)
    return np.exp(rng.normal(10.0, 1.2, size=n_assets))


def load_bundled() -> ScenarioSet:
    """The packaged 20-asset return matrix."""
    path = resources.files("drpfolio").joinpath("data/synthetic20.csv")
    with resources.as_file(path) as p:
        return load_returns(p)


def load_bundled_caps() -> dict:
    """The packaged market caps as an asset-id -> value mapping."""
    path = resources.files("drpfolio").joinpath("data/synthetic20_caps.csv")
    text = path.read_text().strip().splitlines()
    out = {}
    for line in text[1:]:
        name, value = line.split(",")
        out[name] = float(value)
    return out


def _regenerate(directory) -> None:
    """Rewrite the bundled CSVs from the generator (development helper)."""
    import csv
    import os

    from .data import save_returns

    scen = synthetic_returns()
    save_returns(scen, os.path.join(directory, "synthetic20.csv"))
    caps = synthetic_market_caps()
    with open(os.path.join(directory, "synthetic20_caps.csv"), "w",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["asset", "cap"])
        for name, value in zip(scen.asset_ids, caps):
            writer.writerow([name, repr(float(value))])
