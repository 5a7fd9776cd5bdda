"""Voltage solvers built on the Green matrix of the bus admittance Laplacian.

The Green matrix G is the unique complex-symmetric pseudo-inverse of Y that
vanishes on the slack direction:

    G Y = I - 1 e0^T,    G e0 = 0,

with e0 the slack indicator. It is obtained by inverting the reduced system
(slack row and column deleted) and embedding the result back with zeros.
Both solvers express bus voltages through G: the linearized solver applies a
first-order expansion around the flat profile, the exact solver iterates the
implicit fixed point to convergence and serves as the ground-truth oracle.

Sign convention: solvers take net injected power per bus. Consumption enters
with a negative sign; GridModel stores consumption, so call sites negate
(see GridModel.base_injections). The 2-bus feeder pins the convention: a
load p on admittance y gives u1 = U_N - p / (y U_N) to first order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    DisconnectedGridError,
    GridModel,
    SwitchState,
    admittance_matrix,
    incidence_row,
)

__all__ = [
    "PowerFlowDivergence",
    "GreenMatrix",
    "green_matrix",
    "rank_one_update",
    "approx_voltages",
    "exact_voltages",
    "trend_vector",
]


class PowerFlowDivergence(RuntimeError):
    """Exact solver failed to converge; load likely exceeds feeder capability."""


@dataclass(frozen=True, eq=False)
class GreenMatrix:
    matrix: np.ndarray  # dense n x n complex, slack row/column identically zero
    state: SwitchState | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def reduced(self) -> np.ndarray:
        return self.matrix[1:, 1:]


def green_matrix(Y: np.ndarray, state: SwitchState | None = None) -> GreenMatrix:
    """Green matrix of a connected topology's admittance matrix.

    Inverting the reduced Laplacian enforces both defining identities at
    once: the embedded zero slack column gives G e0 = 0 exactly, and the
    reduced inverse reproduces I - 1 e0^T because each reduced row sum of Y
    equals minus its slack coupling.
    """
    n = Y.shape[0]
    G = np.zeros_like(Y)
    try:
        G[1:, 1:] = np.linalg.inv(Y[1:, 1:])
    except np.linalg.LinAlgError:
        raise DisconnectedGridError(
            "reduced admittance matrix is singular; energized graph disconnected"
        ) from None
    return GreenMatrix(G, state)


def green_matrix_for(grid: GridModel, state: SwitchState) -> GreenMatrix:
    return green_matrix(admittance_matrix(grid, state), state)


def rank_one_update(
    G_before: GreenMatrix,
    y_branch: complex,
    a_row: np.ndarray,
    close: bool,
    state_after: SwitchState | None = None,
    denom_tol: float = 1e-12,
) -> GreenMatrix:
    """Green matrix after toggling one branch, by a Sherman-Morrison step.

    Closing adds y a a^T to the admittance matrix, opening subtracts it; on
    the reduced system the inverse update is rank one:

        (Y +- y a a^T)^{-1} = G -+ (y / (1 +- y a^T G a)) (G a)(G a)^T.

    A vanishing denominator means the flip makes the reduced system
    singular, i.e. opening this branch disconnects the grid.
    """
    c = y_branch if close else -y_branch
    a_red = np.asarray(a_row)[1:]
    Gr = G_before.reduced
    w = Gr @ a_red
    denom = 1.0 + c * (a_red @ w)
    scale = max(abs(c) * float(np.vdot(w, w).real), 1.0)
    if abs(denom) < denom_tol * scale:
        raise DisconnectedGridError(
            "rank-one update denominator vanishes; flip disconnects the grid"
        )
    G = np.zeros_like(G_before.matrix)
    G[1:, 1:] = Gr - (c / denom) * np.outer(w, w)
    return GreenMatrix(G, state_after)


def rank_one_update_switch(
    G_before: GreenMatrix, grid: GridModel, switch_id: int, close: bool,
    state_after: SwitchState | None = None,
) -> GreenMatrix:
    br = grid.switch_branch[switch_id]
    a = incidence_row(br, grid.n_buses)
    return rank_one_update(G_before, br.admittance, a, close, state_after)


def approx_voltages(G: GreenMatrix, s: np.ndarray, u_n: float) -> np.ndarray:
    """First-order voltage profile  u = U_N 1 + (1/U_N) G conj(s).

    ``s`` is the net injected power vector in VA (slack entry ignored since
    G's slack row is zero). The error term is second order in the per-unit
    voltage deviation, so the profile degrades on heavily loaded feeders.
    """
    if u_n <= 0:
        raise ValueError("nominal voltage must be positive")
    return u_n + G.matrix @ np.conj(s) / u_n


def exact_voltages(
    Y: np.ndarray,
    s: np.ndarray,
    u_n: float,
    u0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> np.ndarray:
    """Fixed-point power-flow solution with the slack held at u_n.

    Iterates u <- U_N 1 + G conj(s / u) on non-slack buses until the update
    falls below tol * U_N. Satisfies u_v conj((Y u)_v) = s_v at convergence.
    ``u0`` warm-starts the iteration (full-length voltage vector).
    """
    G = green_matrix(Y)
    return exact_voltages_green(G, s, u_n, u0=u0, tol=tol, max_iter=max_iter)


def exact_voltages_green(
    G: GreenMatrix,
    s: np.ndarray,
    u_n: float,
    u0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> np.ndarray:
    if u_n <= 0:
        raise ValueError("nominal voltage must be positive")
    Gr = G.reduced
    sr = np.conj(np.asarray(s)[1:])
    u = np.full(G.n - 1, complex(u_n)) if u0 is None else np.asarray(u0)[1:].astype(complex)
    limit = tol * u_n
    for _ in range(max_iter):
        u_new = u_n + Gr @ (sr / np.conj(u))
        if np.max(np.abs(u_new - u)) < limit:
            return np.concatenate(([complex(u_n)], u_new))
        u = u_new
    raise PowerFlowDivergence(
        f"no convergence after {max_iter} iterations at tol {tol:g}"
    )


def trend_vector(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    """Difference of two phasor measurement vectors, y1 - y2."""
    y1 = np.asarray(y1)
    y2 = np.asarray(y2)
    if y1.shape != y2.shape:
        raise ValueError(f"measurement shapes differ: {y1.shape} vs {y2.shape}")
    return y1 - y2
