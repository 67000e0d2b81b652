"""Run configuration: TOML parsing, validation, and built-in presets.

Config documents use TOML sections ``[system]``, ``[gain]``, ``[graph]``,
``[trigger]``, ``[sim]``, ``[output]``.  Agent indices in config documents
are 1-based; the library is 0-based internally.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import sim
from .errors import AssumptionError, ConfigError, DimensionError
from .graph import DirectedGraph
from .model import SystemModel, design_gain

EMIT_CHOICES = ("trace_csv", "events_csv", "summary")

GAIN_EXPLICIT = "explicit"
GAIN_AUTO = "auto"


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; gain may still be synthesized later."""

    a_mat: np.ndarray
    b_mat: np.ndarray
    graph: DirectedGraph
    gain_mode: str                      # "explicit" or "auto"
    k_mat: np.ndarray | None = None
    c_margin: float = 0.5
    c1: float | None = None
    alpha: float | None = None
    horizon: float | None = None
    step: float | None = None
    mode: str = sim.EVENT_TRIGGERED
    init_policy: str = sim.INIT_GLOBAL
    expect_divergence: bool = False
    initial_states: np.ndarray | None = None
    output_dir: str | None = None
    emit: tuple = EMIT_CHOICES

    def build_model(self) -> SystemModel:
        """Instantiate the system model, synthesizing the gain if requested."""
        if self.gain_mode == GAIN_AUTO:
            gain = design_gain(self.a_mat, self.b_mat, self.graph, self.c_margin)
        else:
            gain = self.k_mat
        return SystemModel(self.a_mat, self.b_mat, gain, self.graph)

    def build_scenario(self, replication_check: bool = False) -> sim.Scenario:
        """Instantiate the full scenario; requires the simulation fields."""
        missing = [
            name
            for name, value in (
                ("trigger.c1", self.c1),
                ("trigger.alpha", self.alpha),
                ("sim.horizon", self.horizon),
                ("sim.step", self.step),
                ("sim.initial_states", self.initial_states),
            )
            if value is None
        ]
        if missing:
            raise ConfigError(f"missing required fields: {', '.join(missing)}")
        return sim.Scenario(
            model=self.build_model(),
            initial_states=self.initial_states,
            c1=self.c1,
            alpha=self.alpha,
            horizon=self.horizon,
            step=self.step,
            mode=self.mode,
            init_policy=self.init_policy,
            expect_divergence=self.expect_divergence,
            replication_check=replication_check,
        )


def _matrix(section, key, where, rows=None, cols=None):
    try:
        raw = section[key]
    except KeyError:
        raise ConfigError(f"missing required field {where}.{key}") from None
    try:
        m = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key} is not a numeric matrix: {exc}") from exc
    if m.ndim != 2:
        raise ConfigError(f"{where}.{key} must be a list of rows")
    if rows is not None and m.shape[0] != rows:
        raise ConfigError(f"{where}.{key} must have {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ConfigError(f"{where}.{key} must have {cols} columns, got {m.shape[1]}")
    if not np.isfinite(m).all():
        raise ConfigError(f"{where}.{key} contains non-finite entries")
    return m


def _positive(section, key, where):
    value = section.get(key)
    if value is None:
        raise ConfigError(f"missing required field {where}.{key}")
    if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
        raise ConfigError(f"{where}.{key} must be a positive number")
    return float(value)


def _parse_graph(section) -> DirectedGraph:
    has_matrix = "matrix" in section
    has_edges = "edges" in section
    if has_matrix == has_edges:
        raise ConfigError("graph section needs exactly one of 'matrix' or 'edges'")
    try:
        if has_matrix:
            return DirectedGraph(_matrix(section, "matrix", "graph"))
        n_agents = section.get("n_agents")
        if not isinstance(n_agents, int) or n_agents < 1:
            raise ConfigError("graph.n_agents must be a positive integer")
        edges = []
        for edge in section["edges"]:
            if not isinstance(edge, list) or len(edge) not in (2, 3):
                raise ConfigError(
                    f"graph edge {edge!r} must be [receiver, sender] or "
                    "[receiver, sender, weight] (1-based indices)"
                )
            i, j = int(edge[0]) - 1, int(edge[1]) - 1
            edges.append((i, j, float(edge[2])) if len(edge) == 3 else (i, j))
        return DirectedGraph.from_edges(n_agents, edges)
    except (DimensionError, IndexError) as exc:
        raise ConfigError(f"invalid graph: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML configuration document.

    Structural problems raise ``ConfigError`` with the offending field; a
    missing spanning tree raises ``AssumptionError`` (a method assumption,
    not a syntax problem).
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc

    for name in ("system", "gain", "graph"):
        if name not in doc:
            raise ConfigError(f"missing required section [{name}]")

    system = doc["system"]
    a = _matrix(system, "a", "system")
    if a.shape[0] != a.shape[1]:
        raise ConfigError("system.a must be square")
    n = a.shape[0]
    b = _matrix(system, "b", "system", rows=n)
    m = b.shape[1]
    if "n" in system and system["n"] != n:
        raise ConfigError(f"system.n={system['n']} contradicts a ({n}x{n})")
    if "m" in system and system["m"] != m:
        raise ConfigError(f"system.m={system['m']} contradicts b ({n}x{m})")

    gain = doc["gain"]
    auto = bool(gain.get("auto", False))
    has_k = "k" in gain
    if auto == has_k:
        raise ConfigError("gain section needs exactly one of 'k' or 'auto = true'")
    k_mat = None
    c_margin = 0.5
    if auto:
        if "c_margin" in gain:
            c_margin = _positive(gain, "c_margin", "gain")
    else:
        k_mat = _matrix(gain, "k", "gain", rows=m, cols=n)

    graph = _parse_graph(doc["graph"])
    n_agents = graph.n_agents

    c1 = alpha = None
    if "trigger" in doc:
        c1 = _positive(doc["trigger"], "c1", "trigger")
        alpha = _positive(doc["trigger"], "alpha", "trigger")

    horizon = step = None
    mode = sim.EVENT_TRIGGERED
    init_policy = sim.INIT_GLOBAL
    expect_divergence = False
    initial_states = None
    if "sim" in doc:
        sim_section = doc["sim"]
        horizon = _positive(sim_section, "horizon", "sim")
        step = _positive(sim_section, "step", "sim")
        if step > horizon:
            raise ConfigError("sim.step must not exceed sim.horizon")
        mode = sim_section.get("mode", sim.EVENT_TRIGGERED)
        if mode not in (sim.EVENT_TRIGGERED, sim.CONTINUOUS_BASELINE):
            raise ConfigError(f"sim.mode must be one of "
                              f"'{sim.EVENT_TRIGGERED}', '{sim.CONTINUOUS_BASELINE}'")
        init_policy = sim_section.get("init_policy", sim.INIT_GLOBAL)
        if init_policy not in (sim.INIT_GLOBAL, sim.INIT_BROADCAST):
            raise ConfigError(f"sim.init_policy must be one of "
                              f"'{sim.INIT_GLOBAL}', '{sim.INIT_BROADCAST}'")
        expect_divergence = bool(sim_section.get("expect_divergence", False))
        if "initial_states" in sim_section:
            initial_states = _matrix(
                sim_section, "initial_states", "sim", rows=n_agents, cols=n
            )

    output_dir = None
    emit = EMIT_CHOICES
    if "output" in doc:
        output = doc["output"]
        output_dir = output.get("dir")
        if output_dir is not None and not isinstance(output_dir, str):
            raise ConfigError("output.dir must be a string path")
        if "emit" in output:
            requested = output["emit"]
            if not isinstance(requested, list) or not set(requested) <= set(EMIT_CHOICES):
                raise ConfigError(f"output.emit must be a subset of {EMIT_CHOICES}")
            emit = tuple(o for o in EMIT_CHOICES if o in requested)

    if not graph.has_spanning_tree():
        raise AssumptionError("graph has no directed spanning tree")

    return RunConfig(
        a_mat=a,
        b_mat=b,
        graph=graph,
        gain_mode=GAIN_AUTO if auto else GAIN_EXPLICIT,
        k_mat=k_mat,
        c_margin=c_margin,
        c1=c1,
        alpha=alpha,
        horizon=horizon,
        step=step,
        mode=mode,
        init_policy=init_policy,
        expect_divergence=expect_divergence,
        initial_states=initial_states,
        output_dir=output_dir,
        emit=emit,
    )


# --- built-in presets -------------------------------------------------------

# Six-agent benchmark: rotational agent dynamics over a directed hub/chain
# topology; the stock reproduction scenario for the whole pipeline.
_BENCH_A = [[0.0, 1.0], [-1.0, 0.0]]
_BENCH_B = [[1.0], [1.0]]
_BENCH_K = [[-2.2, -1.1]]
_BENCH_WEIGHTS = [
    [0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
]
_BENCH_X0 = [
    [0.4, 0.3],
    [0.5, 0.2],
    [0.6, 0.1],
    [0.7, 0.0],
    [0.8, -0.1],
    [0.4, -0.2],
]

# Necessity experiment: unforced gain (K = 0) with unstable open-loop
# dynamics, so the disagreement grows without bound.
_DIVERGENCE_A = [[1.5, 1.0], [-1.0, 1.5]]
_DIVERGENCE_K = [[0.0, 0.0]]


def preset_config(name: str) -> RunConfig:
    """Built-in configurations addressable by ``--preset``."""
    if name == "paper-sec5":
        return RunConfig(
            a_mat=np.array(_BENCH_A),
            b_mat=np.array(_BENCH_B),
            graph=DirectedGraph(_BENCH_WEIGHTS),
            gain_mode=GAIN_EXPLICIT,
            k_mat=np.array(_BENCH_K),
            c1=0.6,
            alpha=0.4,
            horizon=20.0,
            step=1e-3,
            initial_states=np.array(_BENCH_X0),
        )
    if name == "divergence":
        return RunConfig(
            a_mat=np.array(_DIVERGENCE_A),
            b_mat=np.array(_BENCH_B),
            graph=DirectedGraph(_BENCH_WEIGHTS),
            gain_mode=GAIN_EXPLICIT,
            k_mat=np.array(_DIVERGENCE_K),
            c1=0.6,
            alpha=0.4,
            horizon=20.0,
            step=1e-3,
            expect_divergence=True,
            initial_states=np.array(_BENCH_X0),
        )
    raise ConfigError(f"unknown preset {name!r} (available: paper-sec5, divergence)")


def preset_scenario(name: str, **overrides) -> sim.Scenario:
    """Convenience: preset straight to a Scenario (used heavily by tests)."""
    scenario = preset_config(name).build_scenario()
    return dataclasses.replace(scenario, **overrides) if overrides else scenario
