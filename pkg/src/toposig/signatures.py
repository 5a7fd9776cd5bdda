"""Transition signatures: what a single switch flip imprints on PMU voltages.

Toggling one switch changes the Green matrix by a rank-one term, so the
first-order voltage response to the flip lies on a single complex direction
regardless of the load profile. Restricted to PMU-equipped buses, the
normalized direction is the switch's signature; a library collects one per
admissible flip from the current state. Detection then reduces to checking
which signature the measured trend vector aligns with.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .grid import (
    DisconnectedGridError,
    GridModel,
    SwitchState,
    connected_states,
    enumerate_adjacent_states,
    is_connected,
)
from .powerflow import GreenMatrix, green_matrix_for, rank_one_update_switch

__all__ = [
    "DegenerateTransitionError",
    "PmuSet",
    "Signature",
    "SignatureLibrary",
    "transition_signature",
    "build_library",
    "projection_index",
    "uniform_rx_decomposition",
    "check_observability",
    "check_observability_all_states",
]


class DegenerateTransitionError(ValueError):
    """Switch flip leaves the Green matrix (numerically) unchanged."""


@dataclass(frozen=True)
class PmuSet:
    """Ordered bus indices carrying PMUs."""

    buses: tuple[int, ...]

    def __post_init__(self):
        if len(self.buses) == 0:
            raise ValueError("PMU set is empty")
        if len(set(self.buses)) != len(self.buses):
            raise ValueError("duplicate PMU bus indices")
        if any(b < 0 for b in self.buses):
            raise ValueError("negative bus index")

    @classmethod
    def all_buses(cls, n: int) -> "PmuSet":
        return cls(tuple(range(n)))

    @property
    def size(self) -> int:
        return len(self.buses)

    def index(self) -> np.ndarray:
        return np.asarray(self.buses, dtype=int)

    def select(self, v: np.ndarray) -> np.ndarray:
        """Apply the row-selection operator to a full-length bus vector."""
        return np.asarray(v)[self.index()]


@dataclass(frozen=True, eq=False)
class Signature:
    switch_id: int
    closes: bool  # direction of the flip this signature describes
    g: np.ndarray  # unit complex vector, length = PMU count


@dataclass(frozen=True, eq=False)
class SignatureLibrary:
    state: SwitchState
    pmus: PmuSet
    signatures: tuple[Signature, ...]
    matrix: np.ndarray  # stacked signature rows for vectorized projections
    gram: np.ndarray  # pairwise |<g_u, g_v>|

    @property
    def switch_ids(self) -> tuple[int, ...]:
        return tuple(s.switch_id for s in self.signatures)

    def to_json(self) -> str:
        doc = {
            "state": [int(b) for b in self.state],
            "pmus": list(self.pmus.buses),
            "signatures": [
                {
                    "switch": s.switch_id,
                    "direction": "close" if s.closes else "open",
                    "g": [[float(z.real), float(z.imag)] for z in s.g],
                }
                for s in self.signatures
            ],
        }
        return json.dumps(doc, indent=2)


def _normalize_phase(g: np.ndarray) -> np.ndarray:
    # determinism: rotate so the largest-magnitude entry is real positive
    k = int(np.argmax(np.abs(g)))
    pivot = g[k]
    if pivot == 0:
        return g
    return g * (np.conj(pivot) / abs(pivot))


def transition_signature(
    G_before: GreenMatrix,
    G_after: GreenMatrix,
    pmus: PmuSet,
    switch_id: int = -1,
    closes: bool = True,
) -> Signature:
    """Signature of one flip: dominant left singular direction of the
    PMU-restricted Green-matrix difference.

    The difference is exactly rank one, so the SVD route needs no assumption
    on line impedance ratios; on uniform-R/X grids it coincides with the
    closed-form eigenvector construction.
    """
    D = (G_after.matrix - G_before.matrix)[pmus.index(), :]
    scale = max(np.max(np.abs(G_before.matrix)), np.max(np.abs(G_after.matrix)))
    if np.max(np.abs(D)) < 1e-14 * scale:
        raise DegenerateTransitionError(
            f"switch {switch_id} leaves the Green matrix unchanged"
        )
    # economy SVD: D has at most rank min(p, n) but numerically rank 1
    U, _, _ = np.linalg.svd(D, full_matrices=False)
    g = _normalize_phase(U[:, 0])
    g = g / np.linalg.norm(g)
    return Signature(switch_id, closes, g)


def build_library(
    grid: GridModel,
    state: SwitchState,
    pmus: PmuSet,
    green: GreenMatrix | None = None,
) -> SignatureLibrary:
    """Signature library for all admissible single flips from ``state``.

    Each flipped Green matrix comes from a Sherman-Morrison update of the
    base one, so building a library costs one reduced inverse plus r
    rank-one updates. Pass ``green`` to reuse an already computed Green
    matrix for ``state``.
    """
    if max(pmus.buses) >= grid.n_buses:
        raise ValueError("PMU bus index outside grid")
    if not is_connected(grid, state):
        raise DisconnectedGridError("cannot build a library for a disconnected state")
    G0 = green_matrix_for(grid, state) if green is None else green
    sigs = []
    for ell, _after in enumerate_adjacent_states(grid, state):
        closes = not state[ell]
        G1 = rank_one_update_switch(G0, grid, ell, closes)
        sigs.append(transition_signature(G0, G1, pmus, ell, closes))
    mat = (
        np.array([s.g for s in sigs])
        if sigs
        else np.zeros((0, pmus.size), dtype=complex)
    )
    gram = np.abs(mat @ mat.conj().T)
    return SignatureLibrary(state, pmus, tuple(sigs), mat, gram)


def projection_index(delta: np.ndarray, sig: Signature | np.ndarray) -> float:
    """Alignment of a trend vector with a signature, in [0, 1].

    c = |<delta/||delta||, g>| with the conjugate-linear inner product, so
    the index ignores global phase and scaling of the trend vector.
    """
    delta = np.asarray(delta)
    nd = np.linalg.norm(delta)
    if nd == 0:
        raise ValueError("zero trend vector has no direction")
    g = sig.g if isinstance(sig, Signature) else np.asarray(sig)
    return float(np.abs(np.vdot(delta, g)) / nd)


def projections(lib: SignatureLibrary, delta: np.ndarray) -> np.ndarray:
    """Projection indices of one trend vector against the whole library."""
    nd = np.linalg.norm(delta)
    if nd == 0:
        raise ValueError("zero trend vector has no direction")
    return np.abs(lib.matrix @ np.conj(delta)) / nd


@dataclass(frozen=True, eq=False)
class UniformRxDecomposition:
    alpha: float
    U: np.ndarray
    sigma_r: np.ndarray


def uniform_rx_decomposition(Y: np.ndarray, rel_tol: float = 1e-9) -> UniformRxDecomposition:
    """Factor Y = (1 + i alpha) U diag(sigma_r) U^T for uniform-X/R grids.

    Only valid when every branch has the same X/R ratio, which makes
    Im(Y) = alpha Re(Y) with alpha = -X/R (loads are inductive, so the
    admittance has negative imaginary parts). Used by validation tests
    only; realistic feeders fail the uniformity precondition.
    """
    R = Y.real
    I_ = Y.imag
    scale = np.max(np.abs(R))
    nz = np.abs(R) > 1e-12 * scale
    if not nz.any():
        raise ValueError("admittance matrix has no resistive part")
    ratios = I_[nz] / R[nz]
    alpha = float(np.mean(ratios))
    if np.max(np.abs(ratios - alpha)) > rel_tol * max(1.0, abs(alpha)):
        raise ValueError("X/R ratio is not uniform across branches")
    if np.max(np.abs(I_ - alpha * R)) > rel_tol * np.max(np.abs(I_)):
        raise ValueError("Im(Y) is not a scalar multiple of Re(Y)")
    # Re(Y) is a real symmetric Laplacian: eigh gives the orthonormal basis
    w, V = np.linalg.eigh(R)
    order = np.argsort(w)[::-1]
    w = w[order]
    V = V[:, order]
    n = Y.shape[0]
    # drop the kernel direction (the all-ones vector) from the basis
    keep = w > 1e-9 * max(w.max(), 1.0)
    return UniformRxDecomposition(alpha=alpha, U=V[:, keep], sigma_r=w[keep])


def check_observability(lib: SignatureLibrary, threshold: float = 0.999) -> dict:
    """A library is observable when no two signatures are near collinear.

    Practical threshold below the strict < 1 condition: with measurement
    noise, nearly collinear signatures cannot be told apart.
    """
    if len(lib.signatures) == 0:
        raise ValueError("empty library")
    if len(lib.signatures) == 1:
        return {
            "observable": True,
            "max_offdiag": 0.0,
            "worst_pair": None,
        }
    gram = lib.gram.copy()
    np.fill_diagonal(gram, 0.0)
    k = int(np.argmax(gram))
    u, v = divmod(k, gram.shape[1])
    return {
        "observable": bool(gram[u, v] < threshold),
        "max_offdiag": float(gram[u, v]),
        "worst_pair": (lib.signatures[u].switch_id, lib.signatures[v].switch_id),
    }


def check_observability_all_states(
    grid: GridModel, pmus: PmuSet, threshold: float = 0.999
) -> dict:
    """Worst-case observability over every connected switch state."""
    per_state = []
    worst = None
    for st in connected_states(grid):
        lib = build_library(grid, st, pmus)
        if len(lib.signatures) == 0:
            per_state.append({"state": st, "max_offdiag": 0.0, "observable": True})
            continue
        rep = check_observability(lib, threshold)
        per_state.append(
            {
                "state": st,
                "max_offdiag": rep["max_offdiag"],
                "observable": rep["observable"],
            }
        )
        if worst is None or rep["max_offdiag"] > worst["max_offdiag"]:
            worst = {**rep, "state": st}
    return {
        "observable": all(r["observable"] for r in per_state),
        "worst": worst,
        "per_state": per_state,
    }
