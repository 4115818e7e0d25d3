"""ICP core: matching, robust weighting, the Gaussian-to-plane decomposition,
the linearized rigid solver, and the penalty-augmented objective.

The cost being minimized is a weighted sum of squared plane projections

    J = (s / M) * sum_m w_m ((q_m - p'_m) . n_m)^2
      + (1 / K) * sum_k (q_k - p'_k)^T W_k^-1 (q_k - p'_k)

where the first sum runs over nearest-neighbor matches against the map (n_m
the map normal, w_m a robust outlier weight, s a constant projection scale)
and the second over external penalties with known correspondence. Each
penalty's Mahalanobis term is decomposed into three plane projections along
the eigenvectors of W_k, weighted by the inverse eigenvalues, so a single
point-to-plane solver minimizes everything at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cloud import NeighborIndex, PointCloud, build_index
from .errors import (
    DegenerateConstraintsError,
    DegenerateCovarianceError,
    EmptyOverlapError,
)
from .geometry import RigidTransform, eig_sym3, rotation_from_axis_angle, symmetrize

OUTLIER_MODES = ("trimmed", "cauchy", "none")

# rank-deficiency trigger for the 6x6 normal system
CONDITION_LIMIT = 1e8

_TWIST_NAMES = (
    "roll (rotation x)",
    "pitch (rotation y)",
    "yaw (rotation z)",
    "x (translation)",
    "y (translation)",
    "z (translation)",
)


@dataclass
class IcpConfig:
    """Knobs for the iterative alignment loop.

    outlier selects the robust weighting: "trimmed" keeps the trim_ratio
    fraction of matches with the smallest squared distance, "cauchy" applies
    w = 1 / (1 + d^2 / scale^2), "none" keeps everything. scale_s is the
    constant plane-projection scale of the mixed objective; the default
    treats map planes as having ~3 cm of sensor noise.
    """

    max_iterations: int = 40
    translation_epsilon: float = 1e-4
    rotation_epsilon: float = 1e-5
    outlier: str = "trimmed"
    trim_ratio: float = 0.85
    cauchy_scale: float = 1.0
    scale_s: float = 1.0 / 0.03**2
    # per-iteration step caps; a twist beyond these is outside the small-angle
    # linearization and can hop into a wrong alignment basin
    max_rotation_step: float = 0.15
    max_translation_step: float = 1.0

    def __post_init__(self):
        if self.outlier not in OUTLIER_MODES:
            raise ValueError(f"outlier must be one of {OUTLIER_MODES}")
        if not 0.0 < self.trim_ratio <= 1.0:
            raise ValueError("trim_ratio must be in (0, 1]")
        if not (math.isfinite(self.scale_s) and self.scale_s > 0.0):
            raise ValueError("scale_s must be positive and finite")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class Matches:
    """One nearest-neighbor correspondence per scan point (array-of-fields)."""

    scan_indices: np.ndarray
    map_indices: np.ndarray
    squared_distances: np.ndarray

    def __len__(self) -> int:
        return len(self.scan_indices)


@dataclass
class PlaneConstraint:
    """A weighted point-to-plane term: weight * ((map_point - scan_point) . normal)^2.

    scan_point is expressed in the map frame at the current alignment.
    """

    normal: np.ndarray
    weight: float
    map_point: np.ndarray
    scan_point: np.ndarray


@dataclass
class IcpDiagnostics:
    iterations: int = 0
    converged: bool = False
    objective: float = float("nan")
    match_count: int = 0
    constraint_count: int = 0
    objective_history: list = field(default_factory=list)


def match(scan: PointCloud, index: NeighborIndex, t: RigidTransform) -> Matches:
    """Nearest map point for every scan point moved by `t`."""
    moved = t.apply(scan.points)
    d, i = index.query(moved, k=1)
    n = len(moved)
    return Matches(np.arange(n), np.asarray(i), np.asarray(d) ** 2)


def weight_outliers(matches: Matches, config: IcpConfig) -> np.ndarray:
    """Per-match robust weights according to config.outlier."""
    d2 = matches.squared_distances
    n = len(matches)
    if n == 0:
        raise ValueError("no matches to weight")
    if config.outlier == "none":
        return np.ones(n)
    if config.outlier == "cauchy":
        s2 = config.cauchy_scale**2
        return 1.0 / (1.0 + d2 / s2)
    keep = max(1, int(n * config.trim_ratio + 1e-9))
    order = np.argsort(d2, kind="stable")
    w = np.zeros(n)
    w[order[:keep]] = 1.0
    return w


def decompose_gaussian(map_point, scan_point, w) -> list[PlaneConstraint]:
    """Split a squared Mahalanobis term into three plane constraints.

    The normals are the eigenvectors of W and the weights the inverse
    eigenvalues, so the weighted squared projections of any error vector sum
    to e^T W^-1 e exactly.
    """
    vals, vecs = eig_sym3(w)
    if vals[0] <= 0.0:
        raise DegenerateCovarianceError("covariance is not positive definite")
    map_point = np.asarray(map_point, dtype=float)
    scan_point = np.asarray(scan_point, dtype=float)
    return [
        PlaneConstraint(vecs[:, i].copy(), 1.0 / vals[i], map_point, scan_point)
        for i in range(3)
    ]


def gaussian_to_gaussian_cov(map_cov, scan_cov, t: RigidTransform) -> np.ndarray:
    """Combined covariance for a Gaussian-to-Gaussian pair: map plus rotated scan."""
    r = t.rotation
    return symmetrize(np.asarray(map_cov, dtype=float) + r @ np.asarray(scan_cov, dtype=float) @ r.T)


def build_point_constraints(
    scan: PointCloud,
    map_cloud: PointCloud,
    matches: Matches,
    weights: np.ndarray,
    t: RigidTransform,
):
    """Assemble point-to-plane constraint arrays (q, p, n, w) for the matches.

    Matches with zero weight are dropped; p is the scan point at the current
    alignment. The map cloud must carry normals for the matched points.
    """
    if map_cloud.normals is None:
        raise ValueError("map cloud has no normals")
    sel = weights > 0.0
    si = matches.scan_indices[sel]
    mi = matches.map_indices[sel]
    q = map_cloud.points[mi]
    n = map_cloud.normals[mi]
    p = t.apply(scan.points[si])
    return q, p, n, weights[sel]


def _plane_system(q, p, n, w, center):
    """6x6 normal equations of the linearized plane cost around `center`."""
    pc = p - center
    r = np.einsum("ij,ij->i", q - p, n)
    j = np.empty((len(p), 6))
    j[:, :3] = np.cross(pc, n)
    j[:, 3:] = n
    jw = j * w[:, None]
    h = j.T @ jw
    g = jw.T @ r
    return h, g


def _describe_null_space(vecs, vals, vmax):
    names = []
    for i in range(6):
        if vals[i] > vmax / CONDITION_LIMIT:
            continue
        comps = np.abs(vecs[:, i])
        for k in np.nonzero(comps > 0.3)[0]:
            name = _TWIST_NAMES[k]
            if name not in names:
                names.append(name)
    return names


def _solve_system(h, g, allow_deficient):
    vals, vecs = np.linalg.eigh(h)
    vmax = float(vals[-1])
    if not np.isfinite(vmax) or vmax <= 0.0:
        raise DegenerateConstraintsError("normal system is singular", _TWIST_NAMES)
    deficient = vals[0] <= vmax / CONDITION_LIMIT
    if deficient and not allow_deficient:
        free = _describe_null_space(vecs, vals, vmax)
        raise DegenerateConstraintsError(
            "constraints leave pose directions unconstrained: " + ", ".join(free),
            free,
        )
    if deficient:
        # minimum-norm step restricted to the observable subspace
        keep = vals > vmax / CONDITION_LIMIT
        coef = (vecs.T @ g)[keep] / vals[keep]
        x = vecs[:, keep] @ coef
    else:
        x = np.linalg.solve(h, g)
    return x[:3], x[3:]


def _delta_transform(omega, v, center):
    rd = rotation_from_axis_angle(omega)
    return RigidTransform(rd, center + v - rd @ center)


def solve_arrays(q, p, n, w, center=None, allow_deficient=False):
    """One Gauss-Newton step for stacked plane constraints.

    Returns (delta, omega, v): the incremental RigidTransform plus the raw
    rotation vector and the translation update at the linearization center.
    """
    if len(p) < 6:
        raise DegenerateConstraintsError(
            f"need at least 6 constraints, got {len(p)}", _TWIST_NAMES
        )
    if center is None:
        center = p.mean(axis=0)
    h, g = _plane_system(q, p, n, w, center)
    omega, v = _solve_system(h, g, allow_deficient)
    return _delta_transform(omega, v, center), omega, v


def solve_constraints(constraints, allow_deficient=False) -> RigidTransform:
    """Minimize the weighted plane cost over a small rigid motion.

    Linearizes the residual (q - p - omega x p - v) . n around the current
    alignment and solves the 6x6 normal equations; the twist maps back to a
    proper transform through the rotation exponential. Raises
    DegenerateConstraintsError naming the unconstrained directions when the
    system's condition number exceeds CONDITION_LIMIT, unless
    allow_deficient is set, in which case the step is restricted to the
    observable subspace.
    """
    q = np.array([c.map_point for c in constraints], dtype=float)
    p = np.array([c.scan_point for c in constraints], dtype=float)
    n = np.array([c.normal for c in constraints], dtype=float)
    w = np.array([c.weight for c in constraints], dtype=float)
    delta, _, _ = solve_arrays(q, p, n, w, allow_deficient=allow_deficient)
    return delta


class _PenaltyTerms:
    """Penalties pre-decomposed into plane constraints (W is map-frame constant)."""

    def __init__(self, penalties):
        self.count = len(penalties)
        qs, ps, ns, ws = [], [], [], []
        for pen in penalties:
            for c in decompose_gaussian(pen.map_point, pen.scan_point, pen.covariance):
                qs.append(c.map_point)
                ps.append(pen.scan_point)
                ns.append(c.normal)
                ws.append(c.weight / self.count)
        self.q = np.asarray(qs, dtype=float).reshape(-1, 3)
        self.scan_points = np.asarray(ps, dtype=float).reshape(-1, 3)
        self.n = np.asarray(ns, dtype=float).reshape(-1, 3)
        self.w = np.asarray(ws, dtype=float)

    def arrays(self, t: RigidTransform):
        return self.q, t.apply(self.scan_points), self.n, self.w

    def cost(self, t: RigidTransform) -> float:
        if self.count == 0:
            return 0.0
        e = self.q - t.apply(self.scan_points)
        proj = np.einsum("ij,ij->i", e, self.n)
        return float(self.w @ proj**2)


def _valid_map_subset(map_cloud: PointCloud) -> PointCloud:
    if map_cloud.normals is None:
        raise ValueError("icp needs a map with normals")
    mask = map_cloud.valid_normal_mask()
    if not mask.any():
        raise EmptyOverlapError("map has no points with valid normals")
    if mask.all():
        return map_cloud
    return map_cloud.subset(mask)


def _point_cost(q, p, n, w_over_m, scale_s) -> float:
    proj = np.einsum("ij,ij->i", q - p, n)
    return scale_s * float(w_over_m @ proj**2)


def icp(
    scan: PointCloud,
    map_cloud: PointCloud,
    prior: RigidTransform,
    penalties=(),
    config: IcpConfig | None = None,
) -> tuple[RigidTransform, IcpDiagnostics]:
    """Align `scan` to `map_cloud` starting from `prior`, honoring penalties.

    Iterates nearest-neighbor matching, robust weighting, constraint assembly
    and one linearized rigid solve per iteration until both the translation
    and rotation updates fall below the configured epsilons or the iteration
    budget runs out.

    Args:
        scan: points to align (normals not required).
        map_cloud: reference cloud; must carry normals. Points with invalid
            (NaN) normals are excluded from matching.
        prior: initial scan-to-map transform.
        penalties: external constraints with known correspondence; an empty
            sequence reduces the loop to plain weighted point-to-plane ICP.
        config: IcpConfig; defaults apply when None.

    Returns:
        (estimate, diagnostics) where diagnostics carries iteration count,
        final objective value, match count and the per-iteration objective.

    Raises:
        EmptyOverlapError: no surviving matches.
        DegenerateConstraintsError: unconstrained pose directions.
    """
    cfg = config or IcpConfig()
    if len(scan) == 0:
        raise EmptyOverlapError("scan is empty")
    ref = _valid_map_subset(map_cloud)
    index = build_index(ref)
    pens = _PenaltyTerms(penalties)
    diag = IcpDiagnostics()
    t = prior

    for it in range(1, cfg.max_iterations + 1):
        matches = match(scan, index, t)
        m = len(matches)
        w = weight_outliers(matches, cfg)
        q, p, n, wk = build_point_constraints(scan, ref, matches, w, t)
        if len(p) == 0:
            raise EmptyOverlapError("all matches were rejected by outlier weighting")
        diag.objective_history.append(_point_cost(q, p, n, wk / m, cfg.scale_s) + pens.cost(t))

        wp = wk * (cfg.scale_s / m)
        if pens.count:
            pq, pp, pn, pw = pens.arrays(t)
            q = np.vstack([q, pq])
            p = np.vstack([p, pp])
            n = np.vstack([n, pn])
            wp = np.concatenate([wp, pw])

        center = p.mean(axis=0)
        delta, omega, v = solve_arrays(q, p, n, wp, center=center)
        step = max(
            float(np.linalg.norm(omega)) / cfg.max_rotation_step,
            float(np.linalg.norm(v)) / cfg.max_translation_step,
        )
        if step > 1.0:
            omega = omega / step
            v = v / step
            delta = _delta_transform(omega, v, center)
        t = delta.compose(t)
        diag.iterations = it
        diag.match_count = m
        diag.constraint_count = len(p)
        if (
            float(np.linalg.norm(v)) < cfg.translation_epsilon
            and float(np.linalg.norm(omega)) < cfg.rotation_epsilon
        ):
            diag.converged = True
            break

    diag.objective = objective(scan, map_cloud, t, penalties, cfg, _ref=ref, _index=index)
    diag.objective_history.append(diag.objective)
    return t, diag


def objective(
    scan: PointCloud,
    map_cloud: PointCloud,
    t: RigidTransform,
    penalties=(),
    config: IcpConfig | None = None,
    _ref: PointCloud | None = None,
    _index: NeighborIndex | None = None,
) -> float:
    """Evaluate the mixed alignment cost at transform `t` (matching included)."""
    cfg = config or IcpConfig()
    ref = _ref if _ref is not None else _valid_map_subset(map_cloud)
    index = _index if _index is not None else build_index(ref)
    matches = match(scan, index, t)
    w = weight_outliers(matches, cfg)
    q, p, n, wk = build_point_constraints(scan, ref, matches, w, t)
    pens = penalties if isinstance(penalties, _PenaltyTerms) else _PenaltyTerms(penalties)
    return _point_cost(q, p, n, wk / len(matches), cfg.scale_s) + pens.cost(t)
