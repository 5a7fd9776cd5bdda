"""Streaming detectors: gating, clustering, commit timing, topology tracking."""

import numpy as np
import pytest

from toposig import (
    DetectorConfig,
    DetectorState,
    DisconnectedGridError,
    NoiseModel,
    PmuSet,
    calibrate_min_norm,
    detect_step,
    measure,
    reset,
)
from toposig.grid import admittance_matrix, flip
from toposig.powerflow import exact_voltages


def steady_measurement(grid, state, pmus):
    Y = admittance_matrix(grid, state)
    u = exact_voltages(Y, grid.base_injections(), grid.nominal_voltage)
    return pmus.select(u)


def step_stream(grid, pmus, state0, ell, t1, length):
    """Noiseless static-load stream with one flip applied from sample t1."""
    y0 = steady_measurement(grid, state0, pmus)
    y1 = steady_measurement(grid, flip(state0, ell), pmus)
    return [y0 if t < t1 else y1 for t in range(length)]


def run_stream(det, stream):
    return [
        (t, out.switch_id, out.closes, out.max_projection)
        for t, y in enumerate(stream)
        for out in [detect_step(det, y)]
        if out.changed
    ]


def test_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(min_proj=0.0)
    with pytest.raises(ValueError):
        DetectorConfig(min_proj=1.2)
    with pytest.raises(ValueError):
        DetectorConfig(tau=0)
    with pytest.raises(ValueError):
        DetectorConfig(mode="fuzzy")
    with pytest.raises(ValueError):
        DetectorConfig(min_norm=-5.0)


def test_reset_on_all_closed_gives_open_directions(grid, all_pmus):
    det = DetectorState(grid, grid.initial_state(), all_pmus, DetectorConfig())
    reset(det, (True,) * 5)
    assert det.state == (True,) * 5
    assert [s.closes for s in det.library.signatures] == [False] * 5
    assert det.buffer == [] and det.candidate is None and det.length_cluster == 0


def test_reset_on_disconnected_state_raises(bridge_grid):
    pmus = PmuSet((1, 2, 3))
    det = DetectorState(bridge_grid, (True,), pmus, DetectorConfig(mode="simple"))
    with pytest.raises(DisconnectedGridError):
        reset(det, (False,))


def test_simple_detector_commits_on_event_sample(grid, all_pmus):
    cfg = DetectorConfig(mode="simple")
    det = DetectorState(grid, grid.initial_state(), all_pmus, cfg)
    stream = step_stream(grid, all_pmus, grid.initial_state(), 2, 6, 12)
    commits = run_stream(det, stream)
    assert len(commits) == 1
    t, switch_id, closes, proj = commits[0]
    assert (t, switch_id, closes) == (6, 2, True)
    assert proj > 0.999
    assert det.state == flip(grid.initial_state(), 2)


def test_robust_detector_commit_time_is_event_plus_tau(grid, all_pmus):
    for tau in (1, 2, 3, 5):
        cfg = DetectorConfig(mode="robust", tau=tau, min_norm=1.0)
        det = DetectorState(grid, grid.initial_state(), all_pmus, cfg)
        t1 = 10
        commits = run_stream(
            det, step_stream(grid, all_pmus, grid.initial_state(), 4, t1, 25)
        )
        assert [c[0] for c in commits] == [t1 + tau - 1]
        assert commits[0][1] == 4


def test_robust_tau1_equals_simple_on_noiseless_stream(grid, all_pmus):
    stream = step_stream(grid, all_pmus, grid.initial_state(), 1, 8, 16)
    simple = DetectorState(
        grid, grid.initial_state(), all_pmus, DetectorConfig(mode="simple")
    )
    robust = DetectorState(
        grid,
        grid.initial_state(),
        all_pmus,
        DetectorConfig(mode="robust", tau=1, min_norm=0.0),
    )
    assert run_stream(simple, stream) == run_stream(robust, stream)


def test_robust_requires_calibrated_gate(grid, all_pmus):
    det = DetectorState(grid, grid.initial_state(), all_pmus, DetectorConfig())
    with pytest.raises(ValueError, match="min_norm"):
        detect_step(det, steady_measurement(grid, grid.initial_state(), all_pmus))


def test_pure_noise_never_commits(grid, all_pmus):
    """Measurement noise alone must stay under the calibrated gate."""
    tau = 3
    noise = NoiseModel()
    rng = np.random.default_rng(2024)
    Y = admittance_matrix(grid, grid.initial_state())
    u = exact_voltages(Y, grid.base_injections(), grid.nominal_voltage)
    window = np.array([measure(u, all_pmus, noise, rng) for _ in range(400)])
    norms = np.linalg.norm(window[tau:] - window[:-tau], axis=1)
    cfg = DetectorConfig(tau=tau, min_norm=calibrate_min_norm(norms))
    det = DetectorState(grid, grid.initial_state(), all_pmus, cfg)
    commits = 0
    for _ in range(10_000):
        out = detect_step(det, measure(u, all_pmus, noise, rng))
        commits += int(out.changed)
    assert commits == 0
    assert det.state == grid.initial_state()


def test_noisy_event_still_detected(grid, all_pmus):
    tau = 3
    noise = NoiseModel()
    rng = np.random.default_rng(99)
    state0 = grid.initial_state()
    y_pre = steady_measurement(grid, state0, all_pmus)
    cfg = DetectorConfig(tau=tau, min_norm=250.0)
    det = DetectorState(grid, state0, all_pmus, cfg)
    Y1 = admittance_matrix(grid, flip(state0, 0))
    u1 = exact_voltages(Y1, grid.base_injections(), grid.nominal_voltage)
    commits = []
    for t in range(30):
        if t < 15:
            y = y_pre + 0.0
        else:
            y = measure(u1, all_pmus, noise, rng)
        out = detect_step(det, y)
        if out.changed:
            commits.append((t, out.switch_id))
    assert commits == [(15 + tau - 1, 0)]


def test_empty_library_never_commits(bridge_grid):
    # the only flip would disconnect the grid, so nothing is admissible
    pmus = PmuSet((1, 2, 3))
    for cfg in (
        DetectorConfig(mode="simple"),
        DetectorConfig(mode="robust", tau=2, min_norm=0.0),
    ):
        det = DetectorState(bridge_grid, (True,), pmus, cfg)
        assert det.library.signatures == ()
        jump = [np.full(3, 12660.0 + 0j), np.full(3, 9000.0 + 0j)] * 6
        assert run_stream(det, jump) == []
        assert det.state == (True,)


def test_commit_updates_library_for_second_event(grid, all_pmus):
    cfg = DetectorConfig(mode="simple")
    det = DetectorState(grid, grid.initial_state(), all_pmus, cfg)
    s1 = flip(grid.initial_state(), 3)
    s2 = flip(s1, 3)  # reopen the same tie
    stream = step_stream(grid, all_pmus, grid.initial_state(), 3, 5, 10)
    stream += [steady_measurement(grid, s2, all_pmus)] * 5
    commits = run_stream(det, stream)
    assert [(c[1], c[2]) for c in commits] == [(3, True), (3, False)]
    assert det.state == s2


def test_shared_cache_reproduces_outcomes(grid, all_pmus):
    stream = step_stream(grid, all_pmus, grid.initial_state(), 2, 4, 10)
    cache = {}
    cfg = DetectorConfig(mode="simple")
    det_a = DetectorState(grid, grid.initial_state(), all_pmus, cfg, cache=cache)
    out_a = run_stream(det_a, stream)
    assert len(cache) >= 2  # anchor state plus the committed one
    det_b = DetectorState(grid, grid.initial_state(), all_pmus, cfg, cache=cache)
    out_b = run_stream(det_b, stream)
    det_c = DetectorState(grid, grid.initial_state(), all_pmus, cfg)
    out_c = run_stream(det_c, stream)
    assert out_a == out_b == out_c


def test_debug_recompute_accepts_the_update(grid, all_pmus):
    cfg = DetectorConfig(mode="simple", debug_full_recompute=True)
    det = DetectorState(grid, grid.initial_state(), all_pmus, cfg)
    commits = run_stream(
        det, step_stream(grid, all_pmus, grid.initial_state(), 1, 3, 8)
    )
    assert [c[1] for c in commits] == [1]


def test_measurement_length_checked(grid, all_pmus):
    det = DetectorState(grid, grid.initial_state(), all_pmus, DetectorConfig(mode="simple"))
    with pytest.raises(ValueError, match="PMU count"):
        detect_step(det, np.zeros(5, dtype=complex))


def test_calibrate_min_norm():
    assert calibrate_min_norm(np.full(50, 3.0)) == pytest.approx(12.0)
    assert calibrate_min_norm(np.full(50, 3.0), factor=2.5) == pytest.approx(7.5)
    spread = np.arange(101.0)
    assert calibrate_min_norm(spread) == pytest.approx(4 * np.percentile(spread, 99))
    with pytest.raises(ValueError):
        calibrate_min_norm(np.array([]))
