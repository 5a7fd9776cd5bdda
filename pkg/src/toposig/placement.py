"""PMU placement: minimal observable sets and greedy Monte Carlo growth.

Observability alone (no two signatures collinear on the visible rows) is a
yes/no question and small sets often pass it, but a barely observable set
still misses weak transitions once noise enters. The greedy search instead
scores candidate buses by the detection errors they leave behind over a
batch of randomized scenarios, which is slow but measures the thing that
matters.

Every candidate within a greedy round replays the same scenarios (same
initial states, events, load paths, noise fields), so candidates differ
only through the rows they select; that pairing removes most of the
sampling variance from the comparison.
"""

from __future__ import annotations

import itertools
from dataclasses import replace

import numpy as np

from .detector import DetectorState, detect_step
from .grid import GridModel, connected_states, flip
from .montecarlo import (
    CommitRecord,
    LoadProcess,
    ScenarioConfig,
    _draw_event_switch,
    _draw_initial_state,
    _topology,
    calibrated_gate,
    classify_run,
    measure,
    step_loads,
)
from .powerflow import exact_voltages_green
from .signatures import PmuSet, build_library, check_observability_all_states

__all__ = [
    "greedy_placement",
    "minimal_observable_search",
]


def _noisy_stream(
    grid: GridModel,
    base: ScenarioConfig,
    state0,
    ell: int,
    t1: int,
    rng: np.random.Generator,
    cache: dict,
) -> np.ndarray:
    """Full-width noisy voltage stream for one scenario.

    Simulated once per run with measurements at every bus; each candidate
    PMU set then replays its own row selection. Draw order matches
    run_scenario exactly, so a single-candidate evaluation reproduces a
    campaign run for the same seed material.
    """
    loads = LoadProcess.from_grid(grid, base.sd_kw)
    full = PmuSet.all_buses(grid.n_buses)
    true_state = state0
    G = _topology(grid, full, true_state, cache)[0]
    u = None
    out = np.empty((base.duration, grid.n_buses), dtype=complex)
    for t in range(base.duration):
        loads = step_loads(loads, rng)
        if t == t1:
            true_state = flip(true_state, ell)
            G = _topology(grid, full, true_state, cache)[0]
        u = exact_voltages_green(G, loads.injections(), grid.nominal_voltage, u0=u)
        out[t] = measure(u, full, base.noise, rng)
    return out


def _paired_errors(
    grid: GridModel,
    sets: list[PmuSet],
    num_run: int,
    tstop: int,
    base: ScenarioConfig,
    entropy,
) -> np.ndarray:
    """Detection errors per PMU set over num_run shared scenarios.

    Gates are calibrated per set from the same child sequence (the stream
    noise is drawn full-width, so calibration is paired too). Returns an
    integer error count aligned with ``sets``.
    """
    base = replace(base, grid=grid, duration=int(tstop), record_samples=False)
    children = np.random.SeedSequence(entropy).spawn(num_run + 1)
    det_cfgs = []
    for p in sets:
        d = base.detector
        if d.mode == "robust" and d.min_norm is None:
            gate = calibrated_gate(
                replace(base, pmus=p), np.random.default_rng(children[0])
            )
            d = replace(d, min_norm=gate)
        det_cfgs.append(d)
    prebuild = 2 ** grid.n_switches <= 256
    caches: list[dict] = []
    for p in sets:
        c: dict = {}
        if prebuild:
            for st in connected_states(grid):
                _topology(grid, p, st, c)
        caches.append(c)
    stream_cache: dict = {}
    if prebuild:
        full = PmuSet.all_buses(grid.n_buses)
        for st in connected_states(grid):
            _topology(grid, full, st, stream_cache)
    idxs = [p.index() for p in sets]
    errors = np.zeros(len(sets), dtype=int)
    for i in range(num_run):
        rng = np.random.default_rng(children[i + 1])
        state0 = _draw_initial_state(rng, grid)
        ell = _draw_event_switch(rng, grid, state0)
        t1 = int(rng.integers(int(0.1 * tstop), int(0.9 * tstop)))
        stream = _noisy_stream(grid, base, state0, ell, t1, rng, stream_cache)
        for c in range(len(sets)):
            det = DetectorState(grid, state0, sets[c], det_cfgs[c], cache=caches[c])
            commits = []
            for t in range(tstop):
                o = detect_step(det, stream[t, idxs[c]])
                if o.changed:
                    commits.append(
                        CommitRecord(
                            t, o.switch_id, o.closes, o.max_projection, o.trend_norm
                        )
                    )
            if classify_run(tuple(commits), ((t1, ell),), det_cfgs[c].tau) != "correct":
                errors[c] += 1
    return errors


def greedy_placement(
    grid: GridModel,
    seed: PmuSet,
    num_run: int,
    tstop: int,
    base: ScenarioConfig,
    target_size: int | None = None,
    campaign_seed: int = 0,
    require_observable: bool = True,
) -> tuple[PmuSet, list[dict]]:
    """Grow a PMU set one bus at a time by Monte Carlo error minimization.

    Each round evaluates every bus not yet instrumented: the candidate set
    runs ``num_run`` scenarios of ``tstop`` samples (random connected
    initial state, random admissible switch event, event time uniform over
    the middle 80%), and the bus with the fewest total errors joins the
    set; ties break toward the lowest bus index. One round by default;
    ``target_size`` asks for more.

    The report carries one dict per round: the chosen bus, the incumbent
    set's error count over the same scenarios, and every candidate's count.
    """
    if require_observable:
        rep = check_observability_all_states(grid, seed)
        if not rep["observable"]:
            raise ValueError(
                "seed PMU set does not make every switch state observable"
            )
    if num_run < 1:
        raise ValueError("num_run must be at least 1")
    target = seed.size + 1 if target_size is None else int(target_size)
    if target <= seed.size:
        raise ValueError("target size must exceed the seed size")
    if target > grid.n_buses:
        raise ValueError("target size exceeds the number of buses")
    current = seed
    rounds: list[dict] = []
    for r in range(target - seed.size):
        have = set(current.buses)
        candidates = [b for b in range(grid.n_buses) if b not in have]
        if not candidates:
            raise ValueError("no candidate buses remain")
        sets = [current] + [
            PmuSet(tuple(sorted(current.buses + (b,)))) for b in candidates
        ]
        errors = _paired_errors(
            grid, sets, num_run, tstop, base, [campaign_seed, r]
        )
        k = int(np.argmin(errors[1:]))  # candidates ascend, argmin takes first
        chosen = candidates[k]
        rounds.append(
            {
                "round": r,
                "chosen_bus": chosen,
                "seed_errors": int(errors[0]),
                "per_candidate": [
                    {"bus": b, "errors": int(e)}
                    for b, e in zip(candidates, errors[1:])
                ],
            }
        )
        current = PmuSet(tuple(sorted(current.buses + (chosen,))))
    return current, rounds


def _signature_stacks(grid: GridModel) -> list[np.ndarray]:
    """Full-width signature matrices (one per connected state).

    A flip's Green-matrix difference is an outer product w w^T, so the
    signature restricted to any bus subset is just the normalized row
    selection of the full-width signature. One stack per state lets the
    search below test thousands of subsets without rebuilding libraries.
    """
    full = PmuSet.all_buses(grid.n_buses)
    return [build_library(grid, st, full).matrix for st in connected_states(grid)]


def minimal_observable_search(
    grid: GridModel,
    k: int,
    threshold: float = 0.999,
    exhaustive_limit: int = 3,
    draws: int = 2000,
    seed: int = 0,
) -> list[PmuSet]:
    """PMU sets of size k observable in every connected switch state.

    Exhaustive over all C(n, k) subsets up to ``exhaustive_limit``; above
    that the space is too big and a seeded random sample of ``draws``
    subsets is screened instead (so an empty result only means none were
    found, not that none exist). Returned sets are sorted.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    n = grid.n_buses
    if k > n:
        raise ValueError("k exceeds the number of buses")
    stacks = [S for S in _signature_stacks(grid) if S.shape[0] > 1]

    def passes(cols: list[int]) -> bool:
        for S in stacks:
            M = S[:, cols]
            norms = np.linalg.norm(M, axis=1)
            if np.any(norms < 1e-9):
                return False  # a flip invisible on these rows
            Mn = M / norms[:, None]
            gram = np.abs(Mn @ Mn.conj().T)
            np.fill_diagonal(gram, 0.0)
            if gram.max() >= threshold:
                return False
        return True

    if k <= exhaustive_limit:
        candidates = itertools.combinations(range(n), k)
    else:
        rng = np.random.default_rng(seed)
        seen: set[tuple[int, ...]] = set()
        sampled = []
        for _ in range(draws):
            c = tuple(sorted(rng.choice(n, size=k, replace=False).tolist()))
            if c not in seen:
                seen.add(c)
                sampled.append(c)
        candidates = iter(sampled)
    return [PmuSet(c) for c in candidates if passes(list(c))]
