"""Synthetic data sets shared by the CLI and acceptance tests."""
import numpy as np

from mvrecon.hierarchy import NodeTree, aggregate_bottom, build_hierarchy, dump_hierarchy
from mvrecon.io import write_panel_csv

REGIONS = {
    "Norte": ["AC", "AP", "AM", "PA", "RO", "RR", "TO"],
    "Nordeste": ["AL", "BA", "CE", "MA", "PB", "PE", "PI", "RN", "SE"],
    "CentroOeste": ["DF", "GO", "MT", "MS"],
    "Sudeste": ["ES", "MG", "RJ", "SP"],
    "Sul": ["PR", "RS", "SC"],
}


def brazil_hierarchy():
    parents = {"Brazil": None}
    for region, states in REGIONS.items():
        parents[region] = "Brazil"
        parents.update({s: region for s in states})
    return build_hierarchy(NodeTree.from_parents(parents))


def brazil_panel(T=240, seed=0):
    """Bivariate monthly panel: level + seasonal pattern + correlated AR(1) noise per state."""
    h = brazil_hierarchy()
    rng = np.random.default_rng(seed)
    nb = h.n_b
    level = rng.uniform(20, 200, size=(nb, 2))
    amp = rng.uniform(0.05, 0.3, size=(nb, 2)) * level
    phase = rng.uniform(0, 2 * np.pi, size=(nb, 1))
    t = np.arange(T)[:, None, None]
    season = amp[None] * np.sin(2 * np.pi * t / 12 + phase[None])
    L = np.linalg.cholesky(np.array([[1.0, 0.6], [0.6, 1.0]]))
    noise = np.zeros((T, nb, 2))
    for k in range(1, T):
        noise[k] = 0.6 * noise[k - 1] + rng.standard_normal((nb, 2)) @ L.T
    B = level[None] + season + 0.05 * level[None] * noise
    panel = aggregate_bottom(h, B, ("cases", "deaths"))
    return h, panel


def write_brazil(directory, T=240, seed=0):
    from dataclasses import replace

    h, panel = brazil_panel(T, seed)
    panel = replace(panel, t0="2004-01", frequency="M")
    dump_hierarchy(h, directory / "hierarchy.yaml")
    write_panel_csv(panel, directory / "panel.csv")
    return h, panel
