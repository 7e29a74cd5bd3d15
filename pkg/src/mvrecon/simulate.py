"""Sinusoid-plus-VAR(1) simulation of multivariate hierarchies and the replication study.

Bottom node ``i`` follows ``b_it = alpha_i sin(2 pi t / p) 1_m + eta_it`` with
``eta_it = Phi eta_i,t-1 + eps_it`` and ``cov(vec(E_t)) = V kron Sigma`` where
row ``i`` of ``E_t`` is ``eps_it``.

Random streams are Philox generators keyed by ``(seed, replicate)``, so any
replicate can be regenerated on its own and results do not depend on how
replicates are scheduled across threads.
"""
from __future__ import annotations

import hashlib
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .baseforecast import ForecasterSpec
from .evaluate import ErrorCube, evaluate_split
from .hierarchy import Hierarchy, MultiPanel, NodeTree, aggregate_bottom, build_hierarchy, example_tree

__all__ = [
    "ScenarioSpec",
    "SimulatedReplicate",
    "StudyResult",
    "V_MATRICES",
    "SIGMA_MATRICES",
    "PHI",
    "builtin_scenario",
    "replicate_rng",
    "draw_noise",
    "simulate_var1_errors",
    "simulate_replicate",
    "run_study",
]

log = logging.getLogger(__name__)

V_MATRICES = {
    1: np.eye(2),
    2: np.array([[1.0, 0.7], [0.7, 1.0]]),
    3: np.array([[1.0, -0.7], [-0.7, 1.0]]),
}


def _nodal(rho: float) -> np.ndarray:
    # within-subtree correlation for the (AA, AB | BA, BB, BC) layout
    S = np.eye(5)
    S[0, 1] = S[1, 0] = rho
    for i in (2, 3, 4):
        for j in (2, 3, 4):
            if i != j:
                S[i, j] = rho
    return S


SIGMA_MATRICES = {1: np.eye(5), 2: _nodal(0.7), 3: _nodal(-0.4)}
PHI = np.array([[0.7, 0.2], [0.2, 0.7]])

# scenario id -> (V index, Sigma index)
SCENARIOS = {1 + 3 * (v - 1) + (s - 1): (v, s) for v in (1, 2, 3) for s in (1, 2, 3)}

BURN_IN = 200
SLOW_MIXING_RADIUS = 0.95


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    V: np.ndarray
    Sigma: np.ndarray
    Phi: np.ndarray
    period: int = 4
    T: int = 108
    H: int = 12
    alpha_range: tuple[float, float] = (0.0, 4.0)
    replications: int = 1000
    seed: int = 0
    scenario_id: int | str = "custom"
    tree: NodeTree = field(default_factory=example_tree)
    burn_in: int = BURN_IN

    def __post_init__(self):
        for name in ("V", "Sigma", "Phi"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        m, nb = self.V.shape[0], self.Sigma.shape[0]
        if self.V.shape != (m, m) or self.Phi.shape != (m, m):
            raise ValueError(f"V and Phi must be {m} x {m}")
        if self.Sigma.shape != (nb, nb):
            raise ValueError("Sigma must be square")
        for name, M in (("V", self.V), ("Sigma", self.Sigma)):
            if not np.allclose(M, M.T):
                raise ValueError(f"{name} is not symmetric")
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                raise ValueError(f"{name} is not positive definite") from None
        if self.spectral_radius >= 1:
            raise ValueError(f"Phi has spectral radius {self.spectral_radius:.3f}; must be < 1")
        if self.hierarchy.n_b != nb:
            raise ValueError(f"Sigma is {nb} x {nb} but the hierarchy has {self.hierarchy.n_b} bottom nodes")
        if self.T < 1 or self.H < 1 or self.replications < 1:
            raise ValueError("T, H and replications must be positive")
        lo, hi = self.alpha_range
        if not lo <= hi:
            raise ValueError("alpha_range must be (low, high) with low <= high")

    @property
    def m(self) -> int:
        return self.V.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.abs(np.linalg.eigvals(self.Phi)).max())

    @property
    def hierarchy(self) -> Hierarchy:
        return build_hierarchy(self.tree)

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "V": self.V.tolist(),
            "Sigma": self.Sigma.tolist(),
            "Phi": self.Phi.tolist(),
            "period": self.period,
            "T": self.T,
            "H": self.H,
            "alpha_range": list(self.alpha_range),
            "replications": self.replications,
            "seed": self.seed,
            "burn_in": self.burn_in,
            "nodes": [
                {"name": n, **({"parent": self.tree.parent[n]} if n in self.tree.parent else {})}
                for n in self.tree.nodes
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        nodes = d.pop("nodes", None)
        tree = example_tree() if nodes is None else NodeTree.from_parents(
            [(str(e["name"]), e.get("parent")) for e in nodes]
        )
        if "alpha_range" in d:
            d["alpha_range"] = tuple(d["alpha_range"])
        known = {f for f in cls.__dataclass_fields__ if f != "tree"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(tree=tree, **d)

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioSpec":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))

    def replace(self, **changes) -> "ScenarioSpec":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return ScenarioSpec(**d)


def builtin_scenario(scenario_id: int, **overrides) -> ScenarioSpec:
    """One of the nine (V, Sigma) combinations on the 8-node, 2-variable example tree."""
    if isinstance(scenario_id, bool) or scenario_id not in SCENARIOS:
        raise ValueError(f"scenario id must be 1..9, got {scenario_id!r}")
    v, s = SCENARIOS[scenario_id]
    return ScenarioSpec(V=V_MATRICES[v], Sigma=SIGMA_MATRICES[s], Phi=PHI, scenario_id=scenario_id, **overrides)


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replicate)])))


def draw_noise(spec: ScenarioSpec, length: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``length`` noise matrices ``E_t`` of shape (n_b, m).

    ``E_t = L_Sigma Z_t L_V'`` with ``Z_t`` standard normal, so
    ``cov(E_t[i, j], E_t[k, l]) = Sigma[i, k] * V[j, l]``.
    """
    L_V = np.linalg.cholesky(spec.V)
    L_S = np.linalg.cholesky(spec.Sigma)
    Z = rng.standard_normal((length, spec.Sigma.shape[0], spec.m))
    return L_S @ Z @ L_V.T


def simulate_var1_errors(spec: ScenarioSpec, length: int, rng: np.random.Generator) -> np.ndarray:
    """VAR(1) error paths ``eta`` of shape (length, n_b, m), started at zero and burnt in."""
    E = draw_noise(spec, spec.burn_in + length, rng)
    eta = np.empty_like(E)
    prev = np.zeros(E.shape[1:])
    PhiT = spec.Phi.T
    for t in range(E.shape[0]):
        prev = prev @ PhiT + E[t]
        eta[t] = prev
    return eta[spec.burn_in:]


@dataclass(frozen=True, eq=False)
class SimulatedReplicate:
    panel: MultiPanel
    alphas: np.ndarray
    seed_used: int
    replicate: int = 0


def simulate_replicate(spec: ScenarioSpec, rng: np.random.Generator | None = None, replicate: int = 0) -> SimulatedReplicate:
    """Simulate ``T + H`` observations of every node; the panel is coherent by construction."""
    if rng is None:
        rng = replicate_rng(spec.seed, replicate)
    h = spec.hierarchy
    length = spec.T + spec.H
    alphas = rng.uniform(*spec.alpha_range, size=h.n_b)
    eta = simulate_var1_errors(spec, length, rng)
    t = np.arange(1, length + 1)
    wave = np.sin(2 * np.pi * t / spec.period)
    B = alphas[None, :, None] * wave[:, None, None] + eta
    variables = tuple(f"v{j + 1}" for j in range(spec.m))
    return SimulatedReplicate(aggregate_bottom(h, B, variables), alphas, spec.seed, replicate)


@dataclass(eq=False)
class StudyResult:
    spec: ScenarioSpec
    forecasters: tuple[str, ...]
    estimators: tuple[str, ...]
    cubes: dict[str, ErrorCube]
    rmsse: dict[str, dict[str, np.ndarray]]
    failures: list[tuple[int, str]]
    warnings: list[str] = field(default_factory=list)

    @property
    def n_ok(self) -> int:
        return len(next(iter(self.cubes.values())).index) if self.cubes else 0


def _run_one(spec: ScenarioSpec, h: Hierarchy, forecasters, estimators, method, r):
    rep = simulate_replicate(spec, replicate_rng(spec.seed, r), replicate=r)
    data = rep.panel.data
    try:
        return evaluate_split(data[:spec.T], data[spec.T:spec.T + spec.H], h, forecasters, estimators, method, spec.period)
    except ValueError as exc:
        return f"{type(exc).__name__}: {exc}"


def run_study(
    spec: ScenarioSpec,
    forecasters: Sequence[ForecasterSpec],
    estimators: Sequence[str] = ("shrinkage",),
    method: str = "proj-m",
    threads: int = 1,
) -> StudyResult:
    """Simulate every replicate, forecast, reconcile and collect squared errors.

    Replicates that fail to fit or reconcile are skipped and reported in
    ``failures``; results are merged in replicate order.
    """
    h = spec.hierarchy
    notes = []
    if spec.spectral_radius > SLOW_MIXING_RADIUS:
        msg = f"Phi spectral radius {spec.spectral_radius:.3f} mixes slowly; burn-in of {spec.burn_in} may be short"
        warnings.warn(msg)
        notes.append(msg)
    if len({f.label for f in forecasters}) != len(forecasters):
        raise ValueError("forecaster kinds must be distinct")

    def job(r):
        return _run_one(spec, h, forecasters, estimators, method, r)

    reps = range(spec.replications)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(job, reps))
    else:
        outputs = [job(r) for r in reps]

    failures = [(r, out) for r, out in zip(reps, outputs) if isinstance(out, str)]
    for r, msg in failures:
        log.warning("replicate %d skipped: %s", r, msg)
    ok = [(r, out) for r, out in zip(reps, outputs) if not isinstance(out, str)]
    index = tuple(r for r, _ in ok)
    variables = tuple(f"v{j + 1}" for j in range(spec.m))
    cubes, scaled = {}, {}
    for f in forecasters:
        methods = list(ok[0][1][f.label]) if ok else []
        cubes[f.label] = ErrorCube(
            {k: np.stack([out[f.label][k][0] for _, out in ok]) for k in methods},
            index, h.nodes, variables,
        ) if ok else ErrorCube({}, (), h.nodes, variables)
        scaled[f.label] = {k: np.stack([out[f.label][k][1] for _, out in ok]) for k in methods}
    return StudyResult(spec, tuple(f.label for f in forecasters), tuple(estimators), cubes, scaled, failures, notes)
