"""Command-line front end.

Five subcommands cover the workflow end to end: ``build-library`` exports
transition signatures, ``detect`` replays a recorded measurement stream
through a detector, ``simulate`` generates one synthetic scenario (and its
samples file, which ``detect`` can consume), ``campaign`` runs seeded Monte
Carlo error statistics, and ``place`` greedily grows a PMU set.

simulate/campaign/place read a TOML or JSON config file; command-line flags
override config values. Exit codes: 0 success, 2 bad input or config,
3 numerical failure (power flow did not converge).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace

import numpy as np

try:
    import tomllib
except ImportError:  # python 3.10
    import tomli as tomllib

from .detector import DetectorConfig, DetectorState, calibrate_min_norm, detect_step
from .grid import (
    DisconnectedGridError,
    FeederFormatError,
    GridModel,
    bundled_feeder_path,
    format_state,
    load_feeder,
    parse_state,
)
from .montecarlo import (
    LOAD_SD_ROWS_KW,
    NoiseModel,
    ScenarioConfig,
    calibrated_gate,
    run_campaign,
    run_scenario,
    write_report_csv,
    write_trace_jsonl,
)
from .placement import greedy_placement
from .powerflow import PowerFlowDivergence
from .signatures import (
    DegenerateTransitionError,
    PmuSet,
    build_library,
    check_observability,
)

__all__ = ["main"]


class _InputError(ValueError):
    """User-facing input problem; maps to exit code 2."""


def _load_grid(path: str | None) -> GridModel:
    return load_feeder(path if path is not None else bundled_feeder_path())


def _parse_pmus(text, n_buses: int) -> PmuSet:
    if isinstance(text, (list, tuple)):
        buses = tuple(int(b) for b in text)
    elif text is None or text == "all":
        return PmuSet.all_buses(n_buses)
    else:
        try:
            buses = tuple(int(tok) for tok in str(text).split(",") if tok.strip())
        except ValueError:
            raise _InputError(f"cannot parse PMU list {text!r}") from None
    if not buses:
        raise _InputError("PMU list is empty")
    if any(not 0 <= b < n_buses for b in buses):
        raise _InputError(f"PMU bus outside 0..{n_buses - 1}")
    return PmuSet(buses)


def _parse_min_norm(value) -> float | None:
    """'auto' (or None) defers to calibration; anything else is volts."""
    if value is None or value == "auto":
        return None
    return float(value)


def _load_config(path: str | None, allowed: tuple[str, ...]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise _InputError(f"cannot read config: {e}") from None
    if path.endswith(".toml"):
        doc = tomllib.loads(raw.decode())
    else:
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError:
            try:
                doc = tomllib.loads(raw.decode())
            except tomllib.TOMLDecodeError:
                raise _InputError(f"config {path} is neither JSON nor TOML") from None
    if not isinstance(doc, dict):
        raise _InputError("config root must be a table/object")
    for key in doc:
        if key not in allowed:
            raise _InputError(f"invalid config field {key!r}")
    return doc


def _pick(args, cfg: dict, key: str, default):
    """Flag wins over config file wins over default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    return cfg.get(key, default)


def _out_stream(path: str | None):
    return open(path, "w") if path else sys.stdout


def _detector_config(args, cfg: dict) -> DetectorConfig:
    return DetectorConfig(
        min_proj=float(_pick(args, cfg, "min_proj", 0.98)),
        min_norm=_parse_min_norm(_pick(args, cfg, "min_norm", None)),
        tau=int(_pick(args, cfg, "tau", 5)),
        mode=str(_pick(args, cfg, "mode", "robust")),
    )


# ---------------------------------------------------------------- commands


def cmd_build_library(args) -> int:
    grid = _load_grid(args.feeder)
    pmus = _parse_pmus(args.pmus, grid.n_buses)
    state = (
        parse_state(args.state, grid.n_switches)
        if args.state
        else grid.initial_state()
    )
    lib = build_library(grid, state, pmus)
    if args.check_observability:
        rep = check_observability(lib)
        print(f"max_offdiag {rep['max_offdiag']:.6f}")
        if args.out:
            with open(args.out, "w") as f:
                f.write(lib.to_json() + "\n")
        return 0
    out = _out_stream(args.out)
    try:
        out.write(lib.to_json() + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


SAMPLE_HEADER = "sample_index"


def write_samples_csv(samples: np.ndarray, pmus: PmuSet, out) -> None:
    """Measurement stream as text: sample_index, then re,im per PMU (volts)."""
    names = [SAMPLE_HEADER]
    for b in pmus.buses:
        names += [f"u{b}_re", f"u{b}_im"]
    out.write(",".join(names) + "\n")
    for t in range(samples.shape[0]):
        row = [str(t)]
        for z in samples[t]:
            row += [f"{z.real:.6f}", f"{z.imag:.6f}"]
        out.write(",".join(row) + "\n")


def read_samples_csv(path: str, expected_pmus: int) -> tuple[np.ndarray, np.ndarray]:
    """Parse a samples file; returns (sample indices, complex measurements)."""
    rows = []
    idx = []
    try:
        f = open(path, newline="")
    except OSError as e:
        raise _InputError(f"cannot read samples: {e}") from None
    with f:
        for lineno, rec in enumerate(csv.reader(f)):
            if not rec or (lineno == 0 and rec[0] == SAMPLE_HEADER):
                continue
            if len(rec) != 1 + 2 * expected_pmus:
                raise _InputError(
                    f"samples line {lineno + 1}: {len(rec)} columns, "
                    f"expected {1 + 2 * expected_pmus} for {expected_pmus} PMUs"
                )
            try:
                vals = [float(x) for x in rec]
            except ValueError:
                raise _InputError(f"samples line {lineno + 1}: non-numeric field") from None
            idx.append(int(vals[0]))
            rows.append([complex(vals[j], vals[j + 1]) for j in range(1, len(vals), 2)])
    return np.asarray(idx, dtype=int), np.asarray(rows, dtype=complex)


def _event_line(sample_index: int, outcome) -> str:
    return json.dumps(
        {
            "sample_index": int(sample_index),
            "switch": outcome.switch_id,
            "direction": "close" if outcome.closes else "open",
            "max_projection": round(outcome.max_projection, 6),
            "trend_norm": round(outcome.trend_norm, 3),
        },
        separators=(",", ":"),
    )


def cmd_detect(args) -> int:
    grid = _load_grid(args.feeder)
    pmus = _parse_pmus(args.pmus, grid.n_buses)
    state0 = (
        parse_state(args.state, grid.n_switches)
        if args.state
        else grid.initial_state()
    )
    cfg = _detector_config(args, {})
    indices, samples = read_samples_csv(args.samples, pmus.size)
    if cfg.mode == "robust" and cfg.min_norm is None:
        # gate from the leading (assumed event-free) window of the stream
        window = samples[: min(200 + cfg.tau, len(samples))]
        if len(window) > cfg.tau:
            norms = np.linalg.norm(window[cfg.tau :] - window[: -cfg.tau], axis=1)
            gate = calibrate_min_norm(norms)
        else:
            gate = float("inf")  # too short for any verdict anyway
        cfg = replace(cfg, min_norm=gate)
    det = DetectorState(grid, state0, pmus, cfg)
    out = _out_stream(args.out)
    try:
        for i in range(len(samples)):
            outcome = detect_step(det, samples[i])
            if outcome.changed:
                out.write(_event_line(indices[i], outcome) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


_SIM_KEYS = (
    "feeder", "pmus", "state", "events", "duration", "sd_kw", "tve",
    "seed", "mode", "tau", "min_proj", "min_norm",
)


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, _SIM_KEYS)
    grid = _load_grid(_pick(args, cfg, "feeder", None))
    pmus = _parse_pmus(_pick(args, cfg, "pmus", None), grid.n_buses)
    state_text = _pick(args, cfg, "state", None)
    state0 = (
        parse_state(state_text, grid.n_switches)
        if state_text
        else grid.initial_state()
    )
    events = tuple((int(t), int(sw)) for t, sw in cfg.get("events", ()))
    det_cfg = _detector_config(args, cfg)
    try:
        scenario = ScenarioConfig(
            grid=grid,
            pmus=pmus,
            initial_state=state0,
            events=events,
            duration=int(_pick(args, cfg, "duration", 200)),
            sd_kw=float(_pick(args, cfg, "sd_kw", 0.0)),
            noise=NoiseModel(float(_pick(args, cfg, "tve", 0.0005))),
            detector=det_cfg,
            record_samples=True,
        )
    except ValueError as e:
        raise _InputError(str(e)) from None
    seed = int(_pick(args, cfg, "seed", 0))
    children = np.random.SeedSequence(seed).spawn(2)
    if det_cfg.mode == "robust" and det_cfg.min_norm is None:
        gate = calibrated_gate(scenario, np.random.default_rng(children[0]))
        scenario = replace(scenario, detector=replace(det_cfg, min_norm=gate))
    result = run_scenario(scenario, rng=np.random.default_rng(children[1]))
    out = _out_stream(args.out)
    try:
        write_samples_csv(result.samples, pmus, out)
    finally:
        if out is not sys.stdout:
            out.close()
    if args.summary:
        doc = {
            "initial_state": format_state(state0),
            "events": [list(e) for e in events],
            "min_norm": scenario.detector.min_norm,
            "classification": result.classification,
            "commits": [
                {
                    "sample_index": c.sample_index,
                    "switch": c.switch_id,
                    "direction": "close" if c.closes else "open",
                    "max_projection": round(c.max_projection, 6),
                    "trend_norm": round(c.trend_norm, 3),
                }
                for c in result.commits
            ],
        }
        with open(args.summary, "w") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
    return 0


_CAMPAIGN_KEYS = (
    "feeder", "pmus", "state", "sd_kw", "tve", "runs", "seed", "jobs",
    "duration", "mode", "tau", "min_proj", "min_norm",
)


def cmd_campaign(args) -> int:
    cfg = _load_config(args.config, _CAMPAIGN_KEYS)
    grid = _load_grid(_pick(args, cfg, "feeder", None))
    pmus = _parse_pmus(_pick(args, cfg, "pmus", None), grid.n_buses)
    state_text = _pick(args, cfg, "state", None)
    anchor = (
        parse_state(state_text, grid.n_switches)
        if state_text
        else grid.initial_state()
    )
    sd_value = _pick(args, cfg, "sd_kw", list(LOAD_SD_ROWS_KW))
    if isinstance(sd_value, str):
        rows = [float(tok) for tok in sd_value.split(",") if tok.strip()]
    elif isinstance(sd_value, (int, float)):
        rows = [float(sd_value)]
    else:
        rows = [float(v) for v in sd_value]
    if not rows:
        raise _InputError("no load SD rows given")
    det_cfg = _detector_config(args, cfg)
    runs = int(_pick(args, cfg, "runs", 2000))
    seed = int(_pick(args, cfg, "seed", 0))
    jobs = int(_pick(args, cfg, "jobs", 1))
    noise = NoiseModel(float(_pick(args, cfg, "tve", 0.0005)))
    duration = int(_pick(args, cfg, "duration", 200))
    reports = []
    for sd in rows:
        base = ScenarioConfig(
            grid=grid,
            pmus=pmus,
            initial_state=anchor,
            duration=duration,
            sd_kw=sd,
            noise=noise,
            detector=det_cfg,
        )
        reports.append(
            run_campaign(base, runs, seed=seed, jobs=jobs, keep_records=bool(args.trace))
        )
    out = _out_stream(args.out)
    try:
        write_report_csv(reports, out)
    finally:
        if out is not sys.stdout:
            out.close()
    if args.trace:
        with open(args.trace, "w") as f:
            for rep in reports:
                write_trace_jsonl(rep, f)
    return 0


_PLACE_KEYS = (
    "feeder", "seed_pmus", "num_run", "tstop", "target_size", "sd_kw",
    "tve", "seed", "mode", "tau", "min_proj", "min_norm", "require_observable",
)


def cmd_place(args) -> int:
    cfg = _load_config(args.config, _PLACE_KEYS)
    grid = _load_grid(_pick(args, cfg, "feeder", None))
    if "seed_pmus" not in cfg:
        raise _InputError("invalid config field: 'seed_pmus' is required")
    seed_set = _parse_pmus(cfg["seed_pmus"], grid.n_buses)
    det_cfg = _detector_config(args, cfg)
    num_run = int(args.runs if args.runs is not None else cfg.get("num_run", 200))
    base = ScenarioConfig(
        grid=grid,
        pmus=seed_set,
        initial_state=grid.initial_state(),
        sd_kw=float(_pick(args, cfg, "sd_kw", 0.184)),
        noise=NoiseModel(float(_pick(args, cfg, "tve", 0.0005))),
        detector=det_cfg,
    )
    final, rounds = greedy_placement(
        grid,
        seed_set,
        num_run,
        int(_pick(args, cfg, "tstop", 200)),
        base,
        target_size=cfg.get("target_size"),
        campaign_seed=int(_pick(args, cfg, "seed", 0)),
        require_observable=bool(cfg.get("require_observable", True)),
    )
    doc = {"final": list(final.buses), "rounds": rounds}
    out = _out_stream(args.out)
    try:
        json.dump(doc, out, indent=2)
        out.write("\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# ------------------------------------------------------------------ parser


def _add_common(p: argparse.ArgumentParser, config_cmd: bool) -> None:
    p.add_argument("--feeder", help="feeder JSON file (default: bundled 33-bus)")
    p.add_argument("--pmus", help="comma-separated bus list or 'all'")
    p.add_argument("--mode", choices=("simple", "robust"))
    p.add_argument("--tau", type=int, help="trend lag / cluster length (robust mode)")
    p.add_argument("--min-proj", dest="min_proj", type=float)
    p.add_argument("--min-norm", dest="min_norm", help="volts, or 'auto'")
    p.add_argument("--out", help="output file (default: stdout)")
    if config_cmd:
        p.add_argument("--config", help="TOML or JSON config file")
        p.add_argument("--sd-kw", dest="sd_kw", help="load step SD (comma list for rows)")
        p.add_argument("--tve", type=float)
        p.add_argument("--runs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="toposig",
        description="switch-event detection on PMU voltage streams",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-library", help="export transition signatures")
    _add_common(p, config_cmd=False)
    p.add_argument("--state", help="switch state bitstring, e.g. 00000")
    p.add_argument(
        "--check-observability",
        action="store_true",
        help="print the worst signature collinearity instead of the library",
    )
    p.set_defaults(func=cmd_build_library)

    p = sub.add_parser("detect", help="replay a samples file through a detector")
    _add_common(p, config_cmd=False)
    p.add_argument("--state", help="known initial switch state bitstring")
    p.add_argument("--samples", required=True, help="measurement CSV")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="generate one synthetic scenario")
    _add_common(p, config_cmd=True)
    p.add_argument("--state", help="initial switch state bitstring")
    p.add_argument("--summary", help="write scenario summary JSON here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("campaign", help="Monte Carlo error statistics")
    _add_common(p, config_cmd=True)
    p.add_argument("--state", help="calibration anchor state bitstring")
    p.add_argument("--trace", help="write per-run JSONL trace here")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("place", help="greedy PMU placement")
    _add_common(p, config_cmd=True)
    p.set_defaults(func=cmd_place)
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PowerFlowDivergence as e:
        print(f"error: power flow diverged: {e}", file=sys.stderr)
        return 3
    except (
        _InputError,
        FeederFormatError,
        DisconnectedGridError,
        DegenerateTransitionError,
        ValueError,
        OSError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
