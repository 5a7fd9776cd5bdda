"""Switched feeder model: buses, branches, switchable ties, admittance matrices.

The feeder is a graph whose node 0 is the substation (slack bus, held at the
nominal voltage). A subset of branches carries remotely operated switches;
every open/closed assignment of those switches selects one network topology.
All matrices here are dense: feeders of interest have tens of buses.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

__all__ = [
    "FeederFormatError",
    "DisconnectedGridError",
    "Switch",
    "Branch",
    "SwitchState",
    "GridModel",
    "load_feeder",
    "bundled_feeder_path",
    "incidence_matrix",
    "admittance_matrix",
    "is_connected",
    "flip",
    "format_state",
    "parse_state",
    "enumerate_adjacent_states",
    "connected_states",
]


class FeederFormatError(ValueError):
    """Raised when a feeder description violates the file schema."""


class DisconnectedGridError(ValueError):
    """Raised when an operation requires a connected energized graph."""


@dataclass(frozen=True)
class Switch:
    id: int
    name: str
    initial_closed: bool


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r_ohm: float
    x_ohm: float
    switch: Switch | None = None

    @property
    def admittance(self) -> complex:
        return 1.0 / complex(self.r_ohm, self.x_ohm)


# A switch state is a tuple of booleans, element l true iff switch l closed.
SwitchState = tuple[bool, ...]


@dataclass(frozen=True, eq=False)
class GridModel:
    """Immutable feeder description.

    Attributes
    ----------
    nominal_voltage : float
        Slack-bus voltage magnitude in volts.
    p_kw, q_kvar : ndarray
        Per-bus base load consumption. Entry 0 (slack) is zero by schema.
    branches : tuple of Branch
        All branches, switched or not, in file order.
    switches : tuple of Switch
        Switch descriptors ordered by id 0..r-1.
    """

    nominal_voltage: float
    p_kw: np.ndarray
    q_kvar: np.ndarray
    branches: tuple[Branch, ...]
    switches: tuple[Switch, ...]
    switch_branch: tuple[Branch, ...] = field(init=False)

    def __post_init__(self):
        by_id = {br.switch.id: br for br in self.branches if br.switch}
        object.__setattr__(
            self, "switch_branch", tuple(by_id[i] for i in range(len(by_id)))
        )

    @property
    def n_buses(self) -> int:
        return len(self.p_kw)

    @property
    def n_switches(self) -> int:
        return len(self.switches)

    def initial_state(self) -> SwitchState:
        return tuple(sw.initial_closed for sw in self.switches)

    def base_injections(self) -> np.ndarray:
        """Net injected complex power in VA (loads consume, hence negative)."""
        return -(self.p_kw + 1j * self.q_kvar) * 1e3

    def energized_branches(self, state: SwitchState) -> list[Branch]:
        self._check_state(state)
        return [
            br
            for br in self.branches
            if br.switch is None or state[br.switch.id]
        ]

    def _check_state(self, state: SwitchState) -> None:
        if len(state) != self.n_switches:
            raise ValueError(
                f"switch state has length {len(state)}, grid has {self.n_switches} switches"
            )


_BUS_FIELDS = {"id", "p_kw", "q_kvar"}
_BRANCH_FIELDS = {"from", "to", "r_ohm", "x_ohm", "switch"}
_SWITCH_FIELDS = {"id", "name", "initial_closed"}
_TOP_FIELDS = {"nominal_voltage_v", "buses", "branches"}


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise FeederFormatError(f"unknown field(s) {sorted(unknown)} in {where}")


def load_feeder(source) -> GridModel:
    """Parse a feeder JSON file into a validated GridModel.

    ``source`` may be a path, a file object, or an already-decoded dict.
    The schema is strict: unknown fields anywhere are rejected, bus ids must
    be contiguous from 0, and each switch id must appear on exactly one
    branch.
    """
    if isinstance(source, dict):
        doc = source
    elif hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source) as f:
            doc = json.load(f)
    if not isinstance(doc, dict):
        raise FeederFormatError("feeder document must be a JSON object")
    _reject_unknown(doc, _TOP_FIELDS, "feeder")
    try:
        u_n = float(doc["nominal_voltage_v"])
        buses = doc["buses"]
        branches_doc = doc["branches"]
    except KeyError as e:
        raise FeederFormatError(f"missing field {e.args[0]}") from None
    if u_n <= 0:
        raise FeederFormatError("nominal_voltage_v must be positive")

    n = len(buses)
    if n < 2:
        raise FeederFormatError("feeder needs at least a slack bus and one load bus")
    p = np.zeros(n)
    q = np.zeros(n)
    seen = set()
    for b in buses:
        _reject_unknown(b, _BUS_FIELDS, "bus")
        i = b["id"]
        if not isinstance(i, int) or not 0 <= i < n:
            raise FeederFormatError(f"bus id {i!r} outside 0..{n - 1}")
        if i in seen:
            raise FeederFormatError(f"duplicate bus id {i}")
        seen.add(i)
        p[i] = float(b.get("p_kw", 0.0))
        q[i] = float(b.get("q_kvar", 0.0))
    if p[0] != 0.0 or q[0] != 0.0:
        raise FeederFormatError("slack bus 0 must carry no load")
    if (p < 0).any():
        raise FeederFormatError("negative base active power")

    branches = []
    switches = {}
    for bd in branches_doc:
        _reject_unknown(bd, _BRANCH_FIELDS, "branch")
        try:
            f_, t_ = bd["from"], bd["to"]
            r, x = float(bd["r_ohm"]), float(bd["x_ohm"])
        except KeyError as e:
            raise FeederFormatError(f"branch missing field {e.args[0]}") from None
        for v in (f_, t_):
            if not isinstance(v, int) or not 0 <= v < n:
                raise FeederFormatError(f"branch endpoint {v!r} is not a bus id")
        if f_ == t_:
            raise FeederFormatError(f"self-loop branch at bus {f_}")
        if r < 0 or abs(complex(r, x)) == 0.0:
            raise FeederFormatError(f"branch {f_}-{t_} has invalid impedance {r}+{x}j")
        sw = None
        if bd.get("switch") is not None:
            sd = bd["switch"]
            _reject_unknown(sd, _SWITCH_FIELDS, "switch")
            try:
                sw = Switch(int(sd["id"]), str(sd["name"]), bool(sd["initial_closed"]))
            except KeyError as e:
                raise FeederFormatError(f"switch missing field {e.args[0]}") from None
            if sw.id in switches:
                raise FeederFormatError(f"duplicate switch id {sw.id}")
            switches[sw.id] = sw
        branches.append(Branch(f_, t_, r, x, sw))

    r_count = len(switches)
    if set(switches) != set(range(r_count)):
        raise FeederFormatError("switch ids must be contiguous from 0")
    grid = GridModel(
        nominal_voltage=u_n,
        p_kw=p,
        q_kvar=q,
        branches=tuple(branches),
        switches=tuple(switches[i] for i in range(r_count)),
    )
    grid.p_kw.setflags(write=False)
    grid.q_kvar.setflags(write=False)
    return grid


def bundled_feeder_path() -> str:
    """Path of the bundled 33-bus feeder data file."""
    return str(resources.files("toposig.data") / "ieee33.json")


def incidence_row(branch: Branch, n: int) -> np.ndarray:
    a = np.zeros(n)
    a[branch.from_bus] = 1.0
    a[branch.to_bus] = -1.0
    return a


def incidence_matrix(grid: GridModel, state: SwitchState) -> np.ndarray:
    """Signed incidence matrix of the energized graph, one row per branch."""
    rows = [incidence_row(br, grid.n_buses) for br in grid.energized_branches(state)]
    return np.array(rows) if rows else np.zeros((0, grid.n_buses))


def admittance_matrix(grid: GridModel, state: SwitchState) -> np.ndarray:
    """Bus admittance matrix of the energized topology.

    Complex symmetric with zero row sums: the matrix is the admittance-
    weighted graph Laplacian, so the all-ones vector spans its kernel
    whenever the energized graph is connected.
    """
    n = grid.n_buses
    Y = np.zeros((n, n), dtype=complex)
    for br in grid.energized_branches(state):
        y = br.admittance
        f_, t_ = br.from_bus, br.to_bus
        Y[f_, f_] += y
        Y[t_, t_] += y
        Y[f_, t_] -= y
        Y[t_, f_] -= y
    return Y


def is_connected(grid: GridModel, state: SwitchState) -> bool:
    """True iff every bus is reachable from the slack over energized branches."""
    n = grid.n_buses
    adj = [[] for _ in range(n)]
    for br in grid.energized_branches(state):
        adj[br.from_bus].append(br.to_bus)
        adj[br.to_bus].append(br.from_bus)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return bool(seen.all())


def flip(state: SwitchState, switch_id: int) -> SwitchState:
    return tuple(
        (not s) if i == switch_id else s for i, s in enumerate(state)
    )


def format_state(state: SwitchState) -> str:
    """Bitstring form, character i = switch i, '1' = closed."""
    return "".join("1" if s else "0" for s in state)


def parse_state(text: str, n_switches: int) -> SwitchState:
    text = text.strip()
    if len(text) != n_switches or set(text) - {"0", "1"}:
        raise ValueError(
            f"switch state must be {n_switches} characters of 0/1, got {text!r}"
        )
    return tuple(c == "1" for c in text)


def enumerate_adjacent_states(
    grid: GridModel, state: SwitchState
) -> list[tuple[int, SwitchState]]:
    """All single-switch flips from ``state`` that keep the grid connected.

    Returned in switch-id order. Opening a switch may disconnect a subtree;
    those flips are not admissible transitions and are dropped.
    """
    if not is_connected(grid, state):
        raise DisconnectedGridError("base state is disconnected")
    out = []
    for ell in range(grid.n_switches):
        cand = flip(state, ell)
        if is_connected(grid, cand):
            out.append((ell, cand))
    return out


def connected_states(grid: GridModel) -> list[SwitchState]:
    """Every switch assignment whose energized graph is connected."""
    out = []
    for bits in itertools.product((False, True), repeat=grid.n_switches):
        if is_connected(grid, bits):
            out.append(bits)
    return out
