"""Switch-event detection on distribution feeders from PMU voltage phasors.

A switched feeder defines one admittance Laplacian per switch state; the
Green matrix (its slack-anchored inverse) changes by a rank-one term when a
single switch flips, so every admissible transition imprints a fixed
complex direction on the measured voltages. The package builds those
signature libraries, tracks a measurement stream with simple and robust
detectors, and ships a seeded Monte Carlo harness plus a greedy PMU
placement search on a bundled 33-bus feeder.
"""

from .grid import (
    Branch,
    DisconnectedGridError,
    FeederFormatError,
    GridModel,
    Switch,
    SwitchState,
    admittance_matrix,
    bundled_feeder_path,
    connected_states,
    enumerate_adjacent_states,
    flip,
    format_state,
    incidence_matrix,
    is_connected,
    load_feeder,
    parse_state,
)
from .powerflow import (
    GreenMatrix,
    PowerFlowDivergence,
    approx_voltages,
    exact_voltages,
    exact_voltages_green,
    green_matrix,
    green_matrix_for,
    rank_one_update,
    rank_one_update_switch,
    trend_vector,
)
from .signatures import (
    DegenerateTransitionError,
    PmuSet,
    Signature,
    SignatureLibrary,
    build_library,
    check_observability,
    check_observability_all_states,
    projection_index,
    projections,
    transition_signature,
)
from .detector import (
    DetectionOutcome,
    DetectorConfig,
    DetectorState,
    calibrate_min_norm,
    detect_step,
    detect_step_robust,
    detect_step_simple,
    reset,
)
from .montecarlo import (
    LOAD_SD_ROWS_KW,
    CampaignReport,
    LoadProcess,
    NoiseModel,
    ScenarioConfig,
    ScenarioResult,
    calibrated_gate,
    classify_run,
    measure,
    run_campaign,
    run_scenario,
    step_loads,
    write_report_csv,
    write_trace_jsonl,
)
from .placement import greedy_placement, minimal_observable_search

__version__ = "0.1.0"
