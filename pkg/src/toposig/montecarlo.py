"""Scenario simulation and seeded Monte Carlo campaigns.

A scenario is a fixed-length stream: per-bus loads follow independent
Gaussian random walks with constant power factor, bus voltages come from
the exact power-flow solver on the true (possibly switching) topology, and
measurements add complex instrument noise scaled by a total-vector-error
bound. The detector consumes the stream knowing only the initial switch
state; a campaign replays thousands of such scenarios with a random initial
state, a random scripted switch event at a random time, and aggregates the
detector's outcomes.

Ground truth deliberately comes from the exact solver even though the
detector reasons with the linearized model: the campaign then measures the
detector against the world, not against its own approximation.

Outcome taxonomy (per scenario, judged on the first committed event):
  correct          committed the scripted switch within [t1, t1 + 2 tau]
  non_detection    the run ends with no commit at all
  wrong_detection  first commit names the wrong switch (or any commit in a
                   run that had no event)
  decision_error   right switch, but committed outside the time window

The norm gate is calibrated once per campaign from an event-free stream
with quiescent loads at the anchor state (4x the 99th percentile of
lag-tau trend norms). Calibrating on quiescent loads anchors the gate to
the instrument-noise floor; folding load volatility into the gate instead
raises it enough to mask the weakest switch transitions, which turns into
a flat false-negative floor across every noise row.
"""

from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass, replace

import numpy as np

from .detector import (
    DetectorConfig,
    DetectorState,
    calibrate_min_norm,
    detect_step,
)
from .grid import (
    GridModel,
    SwitchState,
    connected_states,
    flip,
    format_state,
    is_connected,
)
from .powerflow import GreenMatrix, exact_voltages_green, green_matrix_for
from .signatures import PmuSet, SignatureLibrary, build_library

__all__ = [
    "LOAD_SD_ROWS_KW",
    "LoadProcess",
    "NoiseModel",
    "ScenarioConfig",
    "ScenarioResult",
    "CommitRecord",
    "RunRecord",
    "CampaignReport",
    "REPORT_COLUMNS",
    "step_loads",
    "measure",
    "calibrated_gate",
    "run_scenario",
    "classify_run",
    "run_campaign",
    "write_report_csv",
    "write_trace_jsonl",
]

# Per-step load SD rows (kW per bus) exercised by the report tables. The
# rows correspond to household aggregates sampled at decreasing rates: a
# slower sampling clock accumulates more load drift between samples.
LOAD_SD_ROWS_KW = (0.0, 0.184, 0.425, 0.604)

CLASSIFICATIONS = ("correct", "non_detection", "wrong_detection", "decision_error")


@dataclass(frozen=True)
class LoadProcess:
    """Per-bus load random walk with a frozen power-factor ratio.

    Only buses with nonzero base load move (``active``); the active power
    takes independent Gaussian steps of SD ``sd_kw`` and is clamped at zero,
    and reactive power tracks it through the fixed per-bus tangent of the
    power-factor angle. ``f_hz`` records the sampling clock the step SD was
    measured at; it does not enter the dynamics.
    """

    p_kw: np.ndarray
    tan_phi: np.ndarray
    active: np.ndarray
    sd_kw: float
    f_hz: float = 1.0

    def __post_init__(self):
        if self.sd_kw < 0:
            raise ValueError("load step SD must be nonnegative")

    @classmethod
    def from_grid(cls, grid: GridModel, sd_kw: float, f_hz: float = 1.0) -> "LoadProcess":
        p = np.array(grid.p_kw, dtype=float)
        q = np.array(grid.q_kvar, dtype=float)
        active = p > 0
        tan_phi = np.zeros_like(p)
        tan_phi[active] = q[active] / p[active]
        return cls(p, tan_phi, active, float(sd_kw), float(f_hz))

    @property
    def q_kvar(self) -> np.ndarray:
        return self.p_kw * self.tan_phi

    def injections(self) -> np.ndarray:
        """Net injected complex power in VA (consumption enters negative)."""
        return -(self.p_kw + 1j * self.q_kvar) * 1e3


def step_loads(proc: LoadProcess, rng: np.random.Generator) -> LoadProcess:
    """One random-walk step; returns a new process, the input is unchanged."""
    steps = rng.normal(0.0, proc.sd_kw, int(np.count_nonzero(proc.active)))
    p = proc.p_kw.copy()
    p[proc.active] = np.maximum(p[proc.active] + steps, 0.0)
    return replace(proc, p_kw=p)


@dataclass(frozen=True)
class NoiseModel:
    """Instrument noise parameterized by a total-vector-error bound.

    Each measured phasor gets an independent circular complex error with
    per-component SD tve*|u|/3, which keeps the error magnitude within
    tve*|u| at the three-sigma level (the two-component magnitude is
    Rayleigh, so roughly 98.9% of draws land inside the bound).
    """

    tve: float = 0.0005

    def __post_init__(self):
        if self.tve < 0:
            raise ValueError("TVE bound must be nonnegative")


def measure(
    u: np.ndarray, pmus: PmuSet, noise: NoiseModel, rng: np.random.Generator
) -> np.ndarray:
    """Noisy PMU reading of a voltage profile.

    Errors are drawn for every bus and the PMU rows selected afterwards, so
    two candidate PMU sets replayed against the same generator see the same
    underlying noise field (paired-seed comparisons stay paired).
    """
    u = np.asarray(u, dtype=complex)
    sd = (noise.tve / 3.0) * np.abs(u)
    e = sd * rng.standard_normal(u.size) + 1j * (sd * rng.standard_normal(u.size))
    return pmus.select(u + e)


@dataclass(frozen=True)
class ScenarioConfig:
    grid: GridModel
    pmus: PmuSet
    initial_state: SwitchState
    events: tuple[tuple[int, int], ...] = ()  # (sample index, switch id)
    duration: int = 200
    sd_kw: float = 0.184
    noise: NoiseModel = NoiseModel()
    detector: DetectorConfig = DetectorConfig()
    seed: int | None = None
    record_samples: bool = False

    def __post_init__(self):
        object.__setattr__(self, "events", tuple((int(t), int(sw)) for t, sw in self.events))
        object.__setattr__(self, "initial_state", tuple(bool(s) for s in self.initial_state))
        if self.duration < 1:
            raise ValueError("duration must be at least one sample")
        if len(self.initial_state) != self.grid.n_switches:
            raise ValueError("initial state length does not match switch count")
        if self.sd_kw < 0:
            raise ValueError("load SD must be nonnegative")
        seen = set()
        for t, sw in self.events:
            if not 0 <= t < self.duration:
                raise ValueError(f"event time {t} outside run of {self.duration} samples")
            if not 0 <= sw < self.grid.n_switches:
                raise ValueError(f"unknown switch id {sw}")
            if t in seen:
                raise ValueError(f"two events scheduled at sample {t}")
            seen.add(t)


@dataclass(frozen=True)
class CommitRecord:
    sample_index: int
    switch_id: int
    closes: bool
    max_projection: float
    trend_norm: float


@dataclass(frozen=True)
class ScenarioResult:
    commits: tuple[CommitRecord, ...]
    events: tuple[tuple[int, int], ...]
    initial_state: SwitchState
    final_true_state: SwitchState
    final_detector_state: SwitchState
    classification: str | None
    samples: np.ndarray | None = None


def _topology(
    grid: GridModel, pmus: PmuSet, state: SwitchState, cache: dict
) -> tuple[GreenMatrix, SignatureLibrary]:
    hit = cache.get(state)
    if hit is None:
        G = green_matrix_for(grid, state)
        hit = (G, build_library(grid, state, pmus, green=G))
        cache[state] = hit
    return hit


def run_scenario(
    cfg: ScenarioConfig,
    rng: np.random.Generator | None = None,
    cache: dict | None = None,
) -> ScenarioResult:
    """Simulate one stream and push it through the detector.

    ``rng`` defaults to a fresh generator built from ``cfg.seed``; the
    campaign driver passes its own per-run generator instead. ``cache``
    shares per-state Green matrices and libraries across runs.

    Power-flow divergence aborts the scenario by raising; a campaign never
    silently drops a diverged run.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if cache is None:
        cache = {}
    grid = cfg.grid
    u_n = grid.nominal_voltage
    det = DetectorState(grid, cfg.initial_state, cfg.pmus, cfg.detector, cache=cache)
    loads = LoadProcess.from_grid(grid, cfg.sd_kw)
    event_at = dict(cfg.events)
    true_state = cfg.initial_state
    G_true = _topology(grid, cfg.pmus, true_state, cache)[0]
    u = None
    commits: list[CommitRecord] = []
    samples = (
        np.empty((cfg.duration, cfg.pmus.size), dtype=complex)
        if cfg.record_samples
        else None
    )
    for t in range(cfg.duration):
        loads = step_loads(loads, rng)
        if t in event_at:
            true_state = flip(true_state, event_at[t])
            G_true = _topology(grid, cfg.pmus, true_state, cache)[0]
        u = exact_voltages_green(G_true, loads.injections(), u_n, u0=u)
        y = measure(u, cfg.pmus, cfg.noise, rng)
        if samples is not None:
            samples[t] = y
        out = detect_step(det, y)
        if out.changed:
            commits.append(
                CommitRecord(
                    t, out.switch_id, out.closes, out.max_projection, out.trend_norm
                )
            )
    classification = (
        classify_run(tuple(commits), cfg.events, cfg.detector.tau)
        if len(cfg.events) <= 1
        else None
    )
    return ScenarioResult(
        tuple(commits),
        cfg.events,
        cfg.initial_state,
        true_state,
        det.state,
        classification,
        samples,
    )


def classify_run(
    commits: tuple[CommitRecord, ...],
    events: tuple[tuple[int, int], ...],
    tau: int,
) -> str:
    """Outcome of a single-event scenario, judged on the first commit.

    The window [t1, t1 + 2 tau] allows the lag-tau trend to form and the
    cluster to fill; a correct switch identified later than that counts as
    a decision error, not a detection.
    """
    if len(events) > 1:
        raise ValueError("outcome taxonomy is defined for single-event runs")
    if not events:
        return "wrong_detection" if commits else "correct"
    t1, ell = events[0]
    if not commits:
        return "non_detection"
    first = commits[0]
    if first.switch_id != ell:
        return "wrong_detection"
    if not t1 <= first.sample_index <= t1 + 2 * tau:
        return "decision_error"
    return "correct"


def calibrated_gate(cfg: ScenarioConfig, rng: np.random.Generator) -> float:
    """Norm gate from a simulated event-free stream at the anchor state.

    The stream runs quiescent loads (SD forced to zero) with the scenario's
    own noise model and duration, so the gate tracks the instrument floor of
    the deployed PMU set. Returns 4x the 99th percentile of lag-tau norms.
    """
    tau = cfg.detector.tau
    grid = cfg.grid
    G = green_matrix_for(grid, cfg.initial_state)
    loads = LoadProcess.from_grid(grid, 0.0)
    u = None
    ys: list[np.ndarray] = []
    norms = np.empty(cfg.duration)
    for t in range(cfg.duration + tau):
        loads = step_loads(loads, rng)
        u = exact_voltages_green(G, loads.injections(), grid.nominal_voltage, u0=u)
        ys.append(measure(u, cfg.pmus, cfg.noise, rng))
        if t >= tau:
            norms[t - tau] = np.linalg.norm(ys[t] - ys[t - tau])
    return calibrate_min_norm(norms)


@dataclass(frozen=True)
class RunRecord:
    run_index: int
    initial_state: SwitchState
    switch_id: int
    event_time: int
    classification: str
    commits: tuple[CommitRecord, ...]


@dataclass(frozen=True)
class CampaignReport:
    sd_kw: float
    pmu_count: int
    runs: int
    non_detections: int
    wrong_detections: int
    decision_errors: int
    min_norm: float | None
    records: tuple[RunRecord, ...] = ()

    @property
    def total_errors(self) -> int:
        return self.non_detections + self.wrong_detections + self.decision_errors

    @property
    def pct_errors(self) -> float:
        return 100.0 * self.total_errors / self.runs


def _draw_initial_state(rng: np.random.Generator, grid: GridModel) -> SwitchState:
    k = grid.n_switches
    while True:
        bits = int(rng.integers(2**k))
        state = tuple(bool((bits >> (k - 1 - i)) & 1) for i in range(k))
        if is_connected(grid, state):
            return state


def _draw_event_switch(
    rng: np.random.Generator, grid: GridModel, state: SwitchState
) -> int:
    while True:
        ell = int(rng.integers(grid.n_switches))
        if is_connected(grid, flip(state, ell)):
            return ell


def _run_indexed(
    base: ScenarioConfig,
    index: int,
    seed_seq: np.random.SeedSequence,
    cache: dict,
) -> RunRecord:
    rng = np.random.default_rng(seed_seq)
    state0 = _draw_initial_state(rng, base.grid)
    ell = _draw_event_switch(rng, base.grid, state0)
    t1 = int(rng.integers(int(0.1 * base.duration), int(0.9 * base.duration)))
    cfg = replace(base, initial_state=state0, events=((t1, ell),), seed=None)
    res = run_scenario(cfg, rng=rng, cache=cache)
    return RunRecord(index, state0, ell, t1, res.classification, res.commits)


def _prebuild_cache(base: ScenarioConfig) -> dict:
    """Green matrices and libraries for every connected state, when tractable.

    Pre-filling makes each run's numbers independent of which other runs a
    worker happened to execute first (a lazily filled cache stores whichever
    of the rank-one-updated or freshly inverted Green matrix got there
    first; the two agree only to rounding).
    """
    cache: dict = {}
    if 2**base.grid.n_switches <= 256:
        for st in connected_states(base.grid):
            _topology(base.grid, base.pmus, st, cache)
    return cache


def _campaign_block(args) -> list[RunRecord]:
    base, start, seeds = args
    cache = _prebuild_cache(base)
    return [
        _run_indexed(base, start + i, s, cache) for i, s in enumerate(seeds)
    ]


def run_campaign(
    base: ScenarioConfig,
    runs: int,
    seed: int = 0,
    jobs: int = 1,
    keep_records: bool = True,
) -> CampaignReport:
    """Error statistics over ``runs`` randomized scenarios.

    Each run draws a uniform connected initial state, a uniform admissible
    switch, and an event time uniform over the middle 80% of the stream,
    then simulates per ``base``. The master seed spawns one child sequence
    per run plus one for gate calibration, so reports are reproducible and
    independent of ``jobs``; worker aggregation is pure counting over run
    records ordered by run index.

    ``base.detector.min_norm is None`` in robust mode triggers calibration
    (see calibrated_gate); pass an explicit value to skip it.
    """
    if runs < 1:
        raise ValueError("campaign needs at least one run")
    children = np.random.SeedSequence(seed).spawn(runs + 1)
    det = base.detector
    min_norm = det.min_norm
    if det.mode == "robust" and min_norm is None:
        min_norm = calibrated_gate(base, np.random.default_rng(children[0]))
        base = replace(base, detector=replace(det, min_norm=min_norm))
    base = replace(base, record_samples=False)

    if jobs > 1 and runs > 1:
        blocks = []
        bounds = np.linspace(0, runs, jobs + 1).astype(int)
        for b in range(jobs):
            lo, hi = int(bounds[b]), int(bounds[b + 1])
            if lo < hi:
                blocks.append((base, lo, children[1 + lo : 1 + hi]))
        with multiprocessing.Pool(processes=min(jobs, len(blocks))) as pool:
            parts = pool.map(_campaign_block, blocks)
        records = [rec for part in parts for rec in part]
    else:
        cache = _prebuild_cache(base)
        records = [
            _run_indexed(base, i, children[i + 1], cache) for i in range(runs)
        ]

    counts = {c: 0 for c in CLASSIFICATIONS}
    for rec in records:
        counts[rec.classification] += 1
    return CampaignReport(
        sd_kw=base.sd_kw,
        pmu_count=base.pmus.size,
        runs=runs,
        non_detections=counts["non_detection"],
        wrong_detections=counts["wrong_detection"],
        decision_errors=counts["decision_error"],
        min_norm=min_norm,
        records=tuple(records) if keep_records else (),
    )


REPORT_COLUMNS = (
    "sd_kw",
    "pmu_count",
    "non_detections",
    "wrong_detections",
    "decision_errors",
    "total_errors",
    "pct_errors",
)


def _text_sink(out):
    """Accept a path or an open text stream; the caller closes its own."""
    if hasattr(out, "write"):
        return out, False
    return open(out, "w"), True


def write_report_csv(reports, out) -> None:
    """Table-shaped campaign summary, one row per report.

    ``out`` is a path or a text file object. Formatting is fixed (general
    format for the SD, two decimals for the percentage) so equal reports
    serialize to identical bytes.
    """
    f, owned = _text_sink(out)
    try:
        f.write(",".join(REPORT_COLUMNS) + "\n")
        for r in reports:
            f.write(
                f"{r.sd_kw:g},{r.pmu_count},{r.non_detections},{r.wrong_detections},"
                f"{r.decision_errors},{r.total_errors},{r.pct_errors:.2f}\n"
            )
    finally:
        if owned:
            f.close()


def write_trace_jsonl(report: CampaignReport, out) -> None:
    """One JSON line per run: scenario draw, outcome, and every commit."""
    f, owned = _text_sink(out)
    try:
        _write_trace_records(report, f)
    finally:
        if owned:
            f.close()


def _write_trace_records(report: CampaignReport, out) -> None:
    for rec in report.records:
        out.write(
            json.dumps(
                {
                    "sd_kw": report.sd_kw,
                    "run": rec.run_index,
                    "initial_state": format_state(rec.initial_state),
                    "switch": rec.switch_id,
                    "event_time": rec.event_time,
                    "classification": rec.classification,
                    "commits": [
                        {
                            "sample_index": c.sample_index,
                            "switch": c.switch_id,
                            "direction": "close" if c.closes else "open",
                            "max_projection": round(c.max_projection, 6),
                            "trend_norm": round(c.trend_norm, 3),
                        }
                        for c in rec.commits
                    ],
                },
                separators=(",", ":"),
            )
            + "\n"
        )
