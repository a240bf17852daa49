"""Coordinate-descent solvers for least-squares chordal rotation averaging.

The target problem minimises -tr(R^T M R) over stacks R of n rotations,
where M is the block-symmetric measurement matrix; that objective equals
the summed squared chordal residual minus the constant 6m. Its semidefinite
relaxation minimises -tr(M Y) over PSD Y with identity 3x3 diagonal blocks.

Two solvers share one closed-form block update:

- bcd_solve keeps the dense 3n x 3n iterate Y and rewrites one block
  row/column per iteration (O(n * deg k) block multiplies, O(n^2) memory);
  it is the reference oracle, practical up to roughly n = 300.
- rcd_solve keeps only the n rotations, implicitly the factor of a rank-3
  Y, and updates all of them per iteration at O(n + deg k) block-multiply
  cost. Maintaining rotations also lets a local refinement be interleaved
  (see the local module's rcdl_solve).

All randomised choices (coordinate schedules) come from a Philox generator
keyed by the config seed, so repeated runs are bit-identical.

An epoch is n consecutive coordinate updates covering every vertex once;
convergence is declared when the relative objective change over one epoch
drops below the configured tolerance.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import so3
from .errors import (
    DisconnectedGraphError,
    IndefiniteInputError,
    IsolatedVertexError,
    NotRankThreeError,
    NotSymmetricError,
    NumericalBreakdownError,
)
from .graph import MeasurementMatrix

_I3 = np.eye(3)

TERMINATION_CONVERGED = "converged"
TERMINATION_MAX_EPOCHS = "max_epochs"


@dataclass
class OpCounter:
    """Counts 3x3 block multiplications performed by solver steps."""

    block_multiplies: int = 0


@dataclass
class SolveConfig:
    """Solver configuration shared by BCD, RCD and RCDL.

    tolerance is the relative objective change over one epoch below which
    the solve stops. k_order picks the coordinate schedule: a fresh random
    permutation per epoch ("random", the default) or ascending ("cyclic").
    use_local / local_sweeps only matter for RCDL.
    """

    tolerance: float = 1e-9
    max_epochs: int = 10000
    k_order: str = "random"
    seed: int = 0
    use_local: bool = False
    local_sweeps: int = 30

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.k_order not in ("random", "cyclic"):
            raise ValueError(f"unknown k_order {self.k_order!r}")


@dataclass
class SolveReport:
    """Outcome of one solve.

    objective_trace[0] is the objective of the initial iterate; one entry
    follows per completed epoch. epoch_seconds holds the cumulative wall
    time at the same indices. flips_per_epoch logs how many blocks needed a
    determinant flip during each epoch.
    """

    rotations: np.ndarray
    objective_trace: list
    epochs: int
    iterations: int
    termination: str
    wall_time: float
    flips_per_epoch: list
    epoch_seconds: list
    block_multiplies: int
    solver: str
    config: SolveConfig
    local_attempt_epochs: list = field(default_factory=list)
    local_accepted: list = field(default_factory=list)

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1]


def _dets3(A: np.ndarray) -> np.ndarray:
    """Determinants of an (n, 3, 3) stack via the explicit cofactor formula."""
    return (
        A[:, 0, 0] * (A[:, 1, 1] * A[:, 2, 2] - A[:, 1, 2] * A[:, 2, 1])
        - A[:, 0, 1] * (A[:, 1, 0] * A[:, 2, 2] - A[:, 1, 2] * A[:, 2, 0])
        + A[:, 0, 2] * (A[:, 1, 0] * A[:, 2, 1] - A[:, 1, 1] * A[:, 2, 0])
    )


def flip_improper(R: np.ndarray):
    """Negate det-negative blocks of a stack; returns (flipped, flip count)."""
    neg = _dets3(R) < 0.0
    flipped = np.where(neg[:, None, None], -R, R)
    return flipped, int(neg.sum())


def objective(R: np.ndarray, M: MeasurementMatrix) -> float:
    """Matrix-form objective -tr(R^T M R), computed edge-wise in O(m).

    Equals -2 * sum over edges (i, j) of tr(R_j^T meas_ij R_i), i.e. twice
    the per-edge trace sum; all reported objectives use this normalisation.
    """
    Ri = R[M.edge_i - 1]
    Rj = R[M.edge_j - 1]
    return -2.0 * float(np.einsum("epq,eqr,epr->", M.edge_rot, Ri, Rj))


def chordal_cost(R: np.ndarray, M: MeasurementMatrix) -> float:
    """Summed squared chordal residual over the edges; always >= 0.

    Satisfies chordal_cost = 6m + objective (computed independently here,
    not via that identity).
    """
    Ri = R[M.edge_i - 1]
    Rj = R[M.edge_j - 1]
    D = np.einsum("eab,ecb->eac", Rj, Ri) - M.edge_rot
    return float(np.einsum("eab,eab->", D, D))


def sdp_objective(Y: np.ndarray, M: MeasurementMatrix) -> float:
    """Relaxation objective -tr(M Y), edge-wise in O(m)."""
    n = M.n
    Yb = Y.reshape(n, 3, n, 3)[M.edge_i - 1, :, M.edge_j - 1, :]
    return -2.0 * float(np.einsum("epq,eqp->", M.edge_rot, Yb))


def sdp_from_stack(R: np.ndarray) -> np.ndarray:
    """Dense rank-3 iterate R R^T (3n x 3n) from an (n, 3, 3) stack."""
    F = np.asarray(R, float).reshape(-1, 3)
    return F @ F.T


def sdp_constraint_violations(Y: np.ndarray, M_or_n) -> dict:
    """Feasibility diagnostics for a dense iterate.

    Returns max diagonal-block deviation from identity, max asymmetry and
    the minimum eigenvalue.
    """
    n = M_or_n.n if hasattr(M_or_n, "n") else int(M_or_n)
    diag_dev = 0.0
    for i in range(n):
        blk = Y[3 * i : 3 * i + 3, 3 * i : 3 * i + 3]
        diag_dev = max(diag_dev, float(np.max(np.abs(blk - _I3))))
    return {
        "diag_dev": diag_dev,
        "symmetry_dev": float(np.max(np.abs(Y - Y.T))),
        "min_eigenvalue": float(np.linalg.eigvalsh(Y)[0]),
    }


def _sqrt_pinv_or_breakdown(B: np.ndarray) -> np.ndarray:
    try:
        return so3.sqrt_pseudoinverse(B)
    except (NotSymmetricError, IndefiniteInputError) as exc:
        raise NumericalBreakdownError(
            f"3x3 square-root pseudoinverse failed: {exc}"
        ) from exc


def _rcd_core(R: np.ndarray, M: MeasurementMatrix, k: int, counter=None) -> np.ndarray:
    """One pre-flip coordinate update: returns the new stack with block k = I.

    W is the sparse k-th block column; the temporary Z = R (R^T W) needs a
    single 3x3 accumulation over the neighbours of k plus one pass over the
    stack, so the whole update costs O(n + deg k) block multiplies. All
    products run as flat 2D matmuls to keep per-iteration overhead low.
    """
    col = M.column(k)
    d = int(col.indices.size)
    if d == 0:
        raise IsolatedVertexError(f"vertex {k} has no neighbours")
    n = R.shape[0]
    idx = col.indices - 1
    W = col.blocks.reshape(3 * d, 3)
    A = R[idx].reshape(3 * d, 3).T @ W  # R^T W, one 3x3 accumulation
    Z = R.reshape(3 * n, 3) @ A
    B = W.T @ Z.reshape(n, 3, 3)[idx].reshape(3 * d, 3)  # W^T Z
    S = (Z @ _sqrt_pinv_or_breakdown(B)).reshape(n, 3, 3)
    S[k - 1] = _I3
    if counter is not None:
        counter.block_multiplies += 2 * n + 2 * d
    return S


def rcd_step(R: np.ndarray, M: MeasurementMatrix, k: int, counter=None):
    """One rotation-coordinate update at vertex k.

    Returns (Q, R_next, flips): Q is the pre-flip iterate whose block k is
    the identity, R_next is Q with det-negative blocks negated, flips the
    number of negated blocks.

    Raises:
        IsolatedVertexError: deg(k) == 0.
        NumericalBreakdownError: the 3x3 kernel failed its tolerances.
    """
    Q = _rcd_core(R, M, k, counter)
    R_next, flips = flip_improper(Q)
    return Q, R_next, flips


def _rcd_iterate(R: np.ndarray, M: MeasurementMatrix, k: int, counter=None):
    """Solve-loop fast path: coordinate update plus determinant flips.

    For a proper input stack every non-k block of the update shares one
    determinant sign (they are all right-multiplied by the same orthogonal
    factor), so a single 3x3 determinant decides the flip; the result is
    identical to rcd_step's per-block policy.
    """
    Q = _rcd_core(R, M, k, counter)
    i0 = 0 if k != 1 else 1
    if _dets3(Q[i0 : i0 + 1])[0] < 0.0:
        R_next = -Q
        R_next[k - 1] = _I3
        return R_next, R.shape[0] - 1
    return Q, 0


def _epoch_schedule(n: int, cfg: SolveConfig, rng) -> np.ndarray:
    if cfg.k_order == "random":
        return rng.permutation(n) + 1
    return np.arange(1, n + 1)


def _check_stack(R: np.ndarray, n: int) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (n, 3, 3):
        raise ValueError(f"expected a ({n}, 3, 3) rotation stack, got {R.shape}")
    return R


def rcd_solve(
    M: MeasurementMatrix, R0: np.ndarray, cfg: SolveConfig | None = None
) -> SolveReport:
    """Run rotation coordinate descent from the stack R0 to convergence.

    Raises:
        DisconnectedGraphError: the measurement graph is not connected.
    """
    cfg = cfg or SolveConfig()
    if not M.is_connected():
        raise DisconnectedGraphError("rcd_solve requires a connected graph")
    R = _check_stack(R0, M.n).copy()
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    counter = OpCounter()
    t0 = time.perf_counter()
    f_prev = objective(R, M)
    trace = [f_prev]
    seconds = [0.0]
    flips_log = []
    iterations = 0
    termination = TERMINATION_MAX_EPOCHS
    epochs = 0
    for _ in range(cfg.max_epochs):
        flips_epoch = 0
        for k in _epoch_schedule(M.n, cfg, rng):
            R, fl = _rcd_iterate(R, M, int(k), counter)
            flips_epoch += fl
            iterations += 1
        epochs += 1
        f = objective(R, M)
        trace.append(f)
        seconds.append(time.perf_counter() - t0)
        flips_log.append(flips_epoch)
        if abs(f - f_prev) / (abs(f_prev) + 1e-15) < cfg.tolerance:
            termination = TERMINATION_CONVERGED
            break
        f_prev = f
    return SolveReport(
        rotations=R,
        objective_trace=trace,
        epochs=epochs,
        iterations=iterations,
        termination=termination,
        wall_time=time.perf_counter() - t0,
        flips_per_epoch=flips_log,
        epoch_seconds=seconds,
        block_multiplies=counter.block_multiplies,
        solver="rcd",
        config=cfg,
    )


def _bcd_update_inplace(Y: np.ndarray, M: MeasurementMatrix, k: int, counter=None):
    col = M.column(k)
    d = int(col.indices.size)
    if d == 0:
        raise IsolatedVertexError(f"vertex {k} has no neighbours")
    n = M.n
    cols = (((col.indices - 1) * 3)[:, None] + np.arange(3)).ravel()
    W = col.blocks.reshape(3 * d, 3)
    Z = Y[:, cols] @ W
    B = W.T @ Z[cols]
    S = Z @ _sqrt_pinv_or_breakdown(B)
    kc = slice(3 * (k - 1), 3 * k)
    Y[:, kc] = S
    Y[kc, :] = S.T
    Y[kc, kc] = _I3
    if counter is not None:
        counter.block_multiplies += n * d + n + d


def bcd_step(Y: np.ndarray, M: MeasurementMatrix, k: int, counter=None) -> np.ndarray:
    """One block-coordinate update of the dense iterate at vertex k.

    Replaces block row and column k with the closed-form optimum given the
    rest of Y; every other entry is unchanged and the diagonal block stays
    the identity. The caller is responsible for Y being feasible.

    Raises:
        IsolatedVertexError: deg(k) == 0.
        NumericalBreakdownError: the 3x3 kernel failed its tolerances.
    """
    Ynew = np.array(Y, dtype=float, copy=True)
    _bcd_update_inplace(Ynew, M, k, counter)
    return Ynew


def _stack_from_column(Y: np.ndarray, n: int, k: int) -> np.ndarray:
    """Lenient column extraction: flip improper blocks, project to rotations."""
    blocks = Y[:, 3 * (k - 1) : 3 * k].reshape(n, 3, 3).copy()
    blocks[k - 1] = _I3
    blocks, _ = flip_improper(blocks)
    return so3.project_rotations(blocks)


def bcd_solve(M: MeasurementMatrix, Y0: np.ndarray, cfg: SolveConfig | None = None):
    """Run block coordinate descent from the feasible iterate Y0.

    Returns (Y, report). The relaxation objective -tr(M Y) is non-increasing
    across iterations. The report's rotations come from block column 1 of
    the final iterate (determinant-flipped and projected), which coincides
    with the relaxation optimum whenever the solve converged; on a
    max-epochs stop it is a best-effort rounding.

    The dense iterate needs O(n^2) memory; intended as a reference oracle
    up to roughly n = 300.

    Raises:
        DisconnectedGraphError: the measurement graph is not connected.
        ValueError: Y0 violates the diagonal or symmetry constraints.
    """
    cfg = cfg or SolveConfig()
    if not M.is_connected():
        raise DisconnectedGraphError("bcd_solve requires a connected graph")
    Y = np.array(Y0, dtype=float, copy=True)
    if Y.shape != (3 * M.n, 3 * M.n):
        raise ValueError(f"expected a {3 * M.n} x {3 * M.n} iterate, got {Y.shape}")
    if np.max(np.abs(Y - Y.T)) > 1e-8:
        raise ValueError("Y0 is not symmetric within 1e-8")
    for i in range(M.n):
        if np.max(np.abs(Y[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] - _I3)) > 1e-8:
            raise ValueError(f"diagonal block {i + 1} of Y0 is not the identity")
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    counter = OpCounter()
    t0 = time.perf_counter()
    f_prev = sdp_objective(Y, M)
    trace = [f_prev]
    seconds = [0.0]
    iterations = 0
    termination = TERMINATION_MAX_EPOCHS
    epochs = 0
    for _ in range(cfg.max_epochs):
        for k in _epoch_schedule(M.n, cfg, rng):
            _bcd_update_inplace(Y, M, int(k), counter)
            iterations += 1
        epochs += 1
        f = sdp_objective(Y, M)
        trace.append(f)
        seconds.append(time.perf_counter() - t0)
        if abs(f - f_prev) / (abs(f_prev) + 1e-15) < cfg.tolerance:
            termination = TERMINATION_CONVERGED
            break
        f_prev = f
    report = SolveReport(
        rotations=_stack_from_column(Y, M.n, 1),
        objective_trace=trace,
        epochs=epochs,
        iterations=iterations,
        termination=termination,
        wall_time=time.perf_counter() - t0,
        flips_per_epoch=[0] * epochs,
        epoch_seconds=seconds,
        block_multiplies=counter.block_multiplies,
        solver="bcd",
        config=cfg,
    )
    return Y, report


def extract_rotations(Y: np.ndarray, mode: str = "factorise", k: int = 1) -> np.ndarray:
    """Rotation stack from a numerically rank-3 dense iterate.

    mode "factorise": scale the top-3 eigenvector factor to orthogonal
    blocks, then flip det-negative blocks. mode "column": take block column
    k, set block k to the identity, flip det-negative blocks. Both results
    are cleaned by a nearest-rotation projection and realise the same
    objective (the factorisation is unique up to one global rotation).

    Raises:
        NotRankThreeError: 4th-largest eigenvalue above 1e-6 * largest.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0] // 3
    w = np.linalg.eigvalsh(Y)
    lam_max = w[-1]
    if w[-4] > 1e-6 * lam_max:
        raise NotRankThreeError(
            f"4th eigenvalue {w[-4]:.3e} exceeds 1e-6 * lambda_max ({lam_max:.3e})"
        )
    if mode == "column":
        if not 1 <= k <= n:
            raise IndexError(f"vertex id {k} outside 1..{n}")
        return _stack_from_column(Y, n, k)
    if mode != "factorise":
        raise ValueError(f"unknown extraction mode {mode!r}")
    w3, V3 = np.linalg.eigh(Y)
    F = V3[:, -3:] * np.sqrt(np.clip(w3[-3:], 0.0, None))
    blocks = F.reshape(n, 3, 3)
    blocks, _ = flip_improper(blocks)
    return so3.project_rotations(blocks)


def align_gauge(R_est: np.ndarray, R_ref: np.ndarray) -> np.ndarray:
    """Single rotation G minimising the summed chordal gap of R_est @ G to R_ref.

    Closed form: project the correlation sum of the two stacks onto SO(3).
    Raises DegenerateInputError when the stacks cancel pathologically.
    """
    R_est = np.asarray(R_est, float)
    R_ref = np.asarray(R_ref, float)
    if R_est.shape != R_ref.shape:
        raise ValueError("stacks must have equal length")
    A = np.einsum("nij,nik->jk", R_est, R_ref)
    return so3.project_to_rotation(A)


def error_stats(R_est: np.ndarray, R_ref: np.ndarray):
    """Gauge-aligned per-camera angular errors in degrees: (mean, median, max)."""
    G = align_gauge(R_est, R_ref)
    ang = so3.angular_distances(np.asarray(R_est, float) @ G, np.asarray(R_ref, float))
    deg = np.degrees(ang)
    return float(deg.mean()), float(np.median(deg)), float(deg.max())


def relative_objective_error(f: float, f_best: float) -> float:
    """Signed percent gap of an objective to the best known one.

    100 * (f - f_best) / |f_best|, >= 0 whenever f_best is the lowest
    objective. Raises ZeroDivisionError for f_best == 0.
    """
    if f_best == 0:
        raise ZeroDivisionError("reference objective is zero")
    return 100.0 * (f - f_best) / abs(f_best)
