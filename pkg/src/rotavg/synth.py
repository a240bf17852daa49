"""Synthetic camera-graph generators with controlled density and noise.

Two styles:

- "sfm": uniformly random ground-truth rotations; the edge set is a random
  Hamiltonian cycle (the connectivity backbone matching the density
  baseline) plus uniformly random extra pairs up to the target edge count.
- "slam": ground truth follows a smooth trajectory (random-walk increments
  of at most 0.1 rad per step); edges connect index-nearby cameras, the
  sequential chain plus sliding-window rings (v, v+w) for w = 2, 3, ...,
  widened until the target edge count is met, with the last ring truncated
  at the lowest indices first.

Measurements perturb each ground-truth relative rotation by a rotation with
a uniformly random axis and an angle drawn from a zero-mean normal with the
requested standard deviation.

All randomness comes from a counter-based Philox generator keyed by the
spec seed (ground truth first, then topology, then noise), so instances are
reproducible across platforms.
"""

from dataclasses import dataclass

import numpy as np

from . import so3
from .errors import InfeasibleDensityError
from .graph import CameraGraph

_SLAM_STEP_MAX = 0.1  # rad, per-step ground-truth increment cap


@dataclass
class SynthSpec:
    """Requested instance shape: size, density, noise, style and seed."""

    n: int
    target_density: float
    sigma: float
    style: str = "sfm"
    seed: int = 0

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be >= 3")
        if not 0.0 <= self.target_density <= 1.0:
            raise ValueError("target_density must be in [0, 1]")
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")
        if self.style not in ("sfm", "slam"):
            raise ValueError(f"unknown style {self.style!r}")


@dataclass
class SynthInstance:
    """A generated problem: connected graph, its ground truth and the spec."""

    graph: CameraGraph
    ground_truth: np.ndarray
    spec: SynthSpec


def target_edge_count(n: int, density: float) -> int:
    """Edge count realising a density: round(E_min + d * (E_max - E_min))."""
    e_min = n
    e_max = n * (n - 1) // 2
    m = int(round(e_min + density * (e_max - e_min)))
    if not e_min <= m <= e_max:
        raise InfeasibleDensityError(
            f"density {density} needs {m} edges, outside [{e_min}, {e_max}]"
        )
    return m


def perturb_rotation(R: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Left-multiply R by a random rotation: uniform axis, N(0, sigma) angle."""
    if sigma == 0.0:
        return np.array(R, dtype=float, copy=True)
    axis = rng.standard_normal(3)
    angle = rng.normal(0.0, sigma)
    return so3.rotation_about_axis(axis, angle) @ np.asarray(R, float)


def _perturb_batch(Rs: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma == 0.0:
        return np.array(Rs, dtype=float, copy=True)
    m = Rs.shape[0]
    axes = rng.standard_normal((m, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.normal(0.0, sigma, m)
    q = np.concatenate(
        [axes * np.sin(angles / 2.0)[:, None], np.cos(angles / 2.0)[:, None]], axis=1
    )
    return np.einsum("nij,njk->nik", so3.quats_to_rotations(q), Rs)


def _sfm_topology(n: int, m: int, rng: np.random.Generator):
    perm = rng.permutation(n) + 1
    ci = perm
    cj = np.roll(perm, -1)
    extra = m - n
    if extra == 0:
        return ci, cj
    iu, ju = np.triu_indices(n, k=1)
    iu, ju = iu + 1, ju + 1
    lo = np.minimum(ci, cj)
    hi = np.maximum(ci, cj)
    cycle_keys = lo * (n + 1) + hi
    all_keys = iu * (n + 1) + ju
    candidates = np.flatnonzero(~np.isin(all_keys, cycle_keys))
    pick = rng.choice(candidates.size, size=extra, replace=False)
    chosen = candidates[pick]
    return np.concatenate([ci, iu[chosen]]), np.concatenate([cj, ju[chosen]])


def _slam_topology(n: int, m: int):
    """Chain + scan-ring loop closures + sliding-window rings, m edges exactly.

    The sequential chain keeps the graph connected. The stride-sqrt(n) ring
    mimics a scanning trajectory revisiting the previous sweep (the loop
    closures real SLAM graphs such as sphere or grid scans have); without
    it the graph is a near-1D band on which synchronisation is artificially
    ill-conditioned. Remaining budget goes to windows w = 2, 3, ...,
    truncated at the lowest indices first.
    """
    stride = max(2, int(round(np.sqrt(n))))
    ei = [np.arange(1, n)]
    ej = [np.arange(2, n + 1)]
    count = n - 1
    have_stride_ring = n - stride > 0 and count + (n - stride) <= m
    if have_stride_ring:
        v = np.arange(1, n - stride + 1)
        ei.append(v)
        ej.append(v + stride)
        count += n - stride
    w = 2
    while count < m:
        if w >= n:
            raise InfeasibleDensityError(f"cannot place {m} edges on {n} vertices")
        if w == stride and have_stride_ring:
            w += 1
            continue
        ring = n - w
        take = min(ring, m - count)
        v = np.arange(1, take + 1)
        ei.append(v)
        ej.append(v + w)
        count += take
        w += 1
    return np.concatenate(ei), np.concatenate(ej)


def _slam_ground_truth(n: int, rng: np.random.Generator) -> np.ndarray:
    axes = rng.standard_normal((n - 1, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = _SLAM_STEP_MAX * rng.random(n - 1)
    half = angles / 2.0
    q = np.concatenate([axes * np.sin(half)[:, None], np.cos(half)[:, None]], axis=1)
    steps = so3.quats_to_rotations(q)
    R = np.empty((n, 3, 3))
    R[0] = so3.random_rotation(rng)
    for v in range(1, n):
        R[v] = steps[v - 1] @ R[v - 1]
    return R


def generate(spec: SynthSpec) -> SynthInstance:
    """Generate a connected instance matching the spec.

    Raises:
        InfeasibleDensityError: the rounded edge count is unrealisable.
    """
    rng = np.random.Generator(np.random.Philox(spec.seed))
    m = target_edge_count(spec.n, spec.target_density)
    if spec.style == "sfm":
        gt = so3.random_rotations(spec.n, rng)
        ei, ej = _sfm_topology(spec.n, m, rng)
    else:
        gt = _slam_ground_truth(spec.n, rng)
        ei, ej = _slam_topology(spec.n, m)
    rel = np.einsum("eab,ecb->eac", gt[ej - 1], gt[ei - 1])  # R_j R_i^T
    meas = _perturb_batch(rel, spec.sigma, rng)
    graph = CameraGraph.from_arrays(spec.n, ei, ej, meas)
    return SynthInstance(graph=graph, ground_truth=gt, spec=spec)
