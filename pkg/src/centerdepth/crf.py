"""Center-anchored star CRF over a detection region.

Every region pixel is tied to its own unary depth estimate and, through a
feature-similarity weight, to the depth at the region center:

    E(D) = lam_u * sum_j (D_j - u_j)**2 + sum_{i != c} w_i * (D_i - D_c)**2

The energy is a strictly convex quadratic for ``lam_u > 0``. Eliminating the
leaves gives the center in closed form; coordinate descent is kept as an
independent solver.
"""
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import kernels
from .errors import EmptyRegion, LengthMismatch, NotConverged, UnarySourceMissing
from .heatmap import Region

SOLVERS = ("closed_form", "coordinate_descent")


@dataclass(frozen=True)
class CrfConfig:
    sigma_f: float = 0.1
    lambda_u: float = 1.0
    solver: str = "closed_form"
    max_iters: int = 10_000
    # coordinate descent stops once a sweep lowers the energy by less than this
    tol: float = 1e-18
    spatial_term: bool = False
    sigma_s: float = 10.0

    def __post_init__(self):
        if not self.sigma_f > 0:
            raise ValueError("sigma_f > 0")
        if not self.lambda_u > 0:
            raise ValueError("lambda_u > 0")
        if not self.tol > 0:
            raise ValueError("tol > 0")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.max_iters < 1:
            raise ValueError("max_iters >= 1")
        if not self.sigma_s > 0:
            raise ValueError("sigma_s > 0")


@dataclass
class RegionDepthField:
    unary: np.ndarray
    weights: np.ndarray
    center_index: int
    region: Optional[Region] = None
    depths: Optional[np.ndarray] = None
    sweeps: int = 0
    converged: bool = True
    decreases: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.unary = np.ascontiguousarray(self.unary, dtype=np.float64).ravel()
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64).ravel()
        if self.unary.shape != self.weights.shape:
            raise LengthMismatch("unary and weights must have the same length")
        if self.unary.size == 0:
            raise EmptyRegion("field has no pixels")
        if not 0 <= self.center_index < self.unary.size:
            raise IndexError("center_index outside the field")
        if np.any(self.weights <= 0) or np.any(self.weights > 1):
            raise ValueError("weights must lie in (0, 1]")

    @property
    def center_depth(self):
        if self.depths is None:
            raise ValueError("field has not been solved")
        return float(self.depths[self.center_index])

    def depth_map(self):
        """Solved depths reshaped to the region rectangle."""
        if self.region is None or self.depths is None:
            raise ValueError("needs a region and a solution")
        return self.depths.reshape(self.region.shape)


def feature_weight(f_i, f_c, sigma_f):
    f_i = np.asarray(f_i, dtype=np.float64)
    f_c = np.asarray(f_c, dtype=np.float64)
    if f_i.shape != f_c.shape:
        raise LengthMismatch(f"feature lengths differ: {f_i.shape} vs {f_c.shape}")
    if not sigma_f > 0:
        raise ValueError("sigma_f > 0")
    return float(kernels.feature_weights(f_i.reshape(1, -1), f_c.ravel(), float(sigma_f))[0])


def feature_weights(feats, f_c, sigma_f):
    """Vectorized weight of every row of ``feats`` against ``f_c``."""
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    f_c = np.ascontiguousarray(f_c, dtype=np.float64).ravel()
    if feats.ndim != 2 or feats.shape[1] != f_c.size:
        raise LengthMismatch("feature rows must match the center feature length")
    return kernels.feature_weights(feats, f_c, float(sigma_f))


def pairwise_energy(d_i, d_c, omega):
    return omega * (d_i - d_c) ** 2


def _pairwise_mask(field_):
    w = field_.weights.copy()
    w[field_.center_index] = 0.0
    return w


def total_energy(field_: RegionDepthField, cfg: CrfConfig, depths=None):
    d = field_.depths if depths is None else np.asarray(depths, dtype=np.float64)
    if d is None:
        d = field_.unary
    w = _pairwise_mask(field_)
    unary = cfg.lambda_u * np.sum((d - field_.unary) ** 2)
    pair = np.sum(w * (d - d[field_.center_index]) ** 2)
    return float(unary + pair)


def energy_gradient(field_: RegionDepthField, cfg: CrfConfig, depths):
    d = np.asarray(depths, dtype=np.float64)
    c = field_.center_index
    w = _pairwise_mask(field_)
    diff = d - d[c]
    grad = 2.0 * cfg.lambda_u * (d - field_.unary) + 2.0 * w * diff
    grad[c] = 2.0 * cfg.lambda_u * (d[c] - field_.unary[c]) - 2.0 * np.sum(w * diff)
    return grad


def solve_closed_form(field_: RegionDepthField, cfg: CrfConfig) -> RegionDepthField:
    d = kernels.star_solve(field_.unary, field_.weights, field_.center_index, float(cfg.lambda_u))
    return replace(field_, depths=d, sweeps=0, converged=True, decreases=None)


def solve_coordinate_descent(field_: RegionDepthField, cfg: CrfConfig) -> RegionDepthField:
    d, sweeps, drops = kernels.coordinate_descent(
        field_.unary, field_.weights, field_.center_index,
        float(cfg.lambda_u), int(cfg.max_iters), float(cfg.tol),
    )
    converged = bool(drops[-1] < cfg.tol)
    if not converged:
        warnings.warn(
            NotConverged(f"stopped after {sweeps} sweeps with |dE| = {drops[-1]:.3e}"),
            stacklevel=2,
        )
    return replace(field_, depths=d, sweeps=int(sweeps), converged=converged, decreases=drops)


def solve(field_: RegionDepthField, cfg: CrfConfig) -> RegionDepthField:
    if cfg.solver == "closed_form":
        return solve_closed_form(field_, cfg)
    return solve_coordinate_descent(field_, cfg)


def sample_features(features, stride, xs, ys):
    """Nearest-cell feature vectors for image pixels ``(xs, ys)``."""
    n_rows, n_cols = features.shape[:2]
    cols = np.clip(np.floor(xs / stride[0]).astype(np.int64), 0, n_cols - 1)
    rows = np.clip(np.floor(ys / stride[1]).astype(np.int64), 0, n_rows - 1)
    return features[rows, cols]


def build_field(features, stride, region: Region, unary_source, cfg: CrfConfig) -> RegionDepthField:
    """Assemble unaries and weights for ``region``.

    ``unary_source`` is a full-image depth raster ``(H, W)`` or a scalar depth
    applied to every region pixel.
    """
    if unary_source is None:
        raise UnarySourceMissing("no unary depth source given")
    if region.size == 0:
        raise EmptyRegion("region has no pixels")
    xs, ys = region.pixels()
    c = region.center_index
    if np.isscalar(unary_source):
        unary = np.full(xs.size, float(unary_source))
    else:
        raster = np.asarray(unary_source)
        if raster.ndim == 3:
            raster = raster[..., 0]
        rs, cs = region.slices()
        unary = raster[rs, cs].astype(np.float64).ravel()
        if unary.size != xs.size:
            raise EmptyRegion("region falls outside the unary raster")
    feats = sample_features(np.asarray(features, dtype=np.float64), stride, xs, ys)
    w = feature_weights(feats, feats[c], cfg.sigma_f)
    if cfg.spatial_term:
        d2 = (xs - region.xc) ** 2 + (ys - region.yc) ** 2
        w = np.maximum(w * np.exp(-d2 / (2.0 * cfg.sigma_s ** 2)), np.finfo(np.float64).tiny)
    w[c] = 1.0
    return RegionDepthField(unary, w, c, region=region)


@dataclass
class Refinement:
    center_depth: float
    field: RegionDepthField


def refine_center_depth(
    features, stride, region: Region, unary_source: Union[np.ndarray, float, None], cfg: CrfConfig
) -> Refinement:
    """Solve the region CRF and return the center depth with the full solved field."""
    solved = solve(build_field(features, stride, region, unary_source, cfg), cfg)
    return Refinement(solved.center_depth, solved)
