"""Monte Carlo oracle for the limiting Gaussian structure.

Covariance building blocks:

* heavy tail   L_ell(t,s) = B_ell int dy dz1 dz2 h_t(0,y,z1) h_s(0,y,z2)
* light tail   M_ell(t,s) = D_ell int e^{-(2k-ell) rho - (1/c) sum <e1,y_i>}
                            1{rho + <e1,y_i>/c >= 0} h^(ell)_{t,s}(0,y) dy drho

Both integrands are indicators on bounded supports (any point of a unit-t
configuration lies within k*t of the center), so plain Monte Carlo over the
support balls with per-entry standard errors is the estimator of choice;
rho is importance-sampled from its exponential envelope.  All grid entries
share the same draws, which keeps the noise strongly correlated across the
matrix and the symmetrized estimator exactly symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .atlas import FULL_TABLE_MAX, GraphShape, build_atlas, pair_bit_index
from .densities import InvalidParameterError, sphere_surface_area, unit_ball_volume
from .regimes import CRITICAL, DENSE, SPARSE, RegimeClass

_CHUNK = 1 << 15
_MIN_SAMPLES = 1000


class IndefiniteCovarianceError(RuntimeError):
    """Matrix is indefinite beyond the jitter budget."""


def b_constant(d: int, k: int, ell: int, alpha: float) -> float:
    """Heavy-tail block constant s_{d-1} / (ell! ((k-ell)!)^2 (alpha(2k-ell) - d))."""
    _check_ell(k, ell)
    denom = alpha * (2 * k - ell) - d
    if denom <= 0:
        raise InvalidParameterError(
            f"divergent block constant: alpha(2k-ell) = {alpha * (2*k-ell)} <= d = {d}")
    return sphere_surface_area(d) / (
        math.factorial(ell) * math.factorial(k - ell) ** 2 * denom)


def d_constant(d: int, k: int, ell: int) -> float:
    """Light-tail block constant s_{d-1} / (ell! ((k-ell)!)^2)."""
    _check_ell(k, ell)
    return sphere_surface_area(d) / (
        math.factorial(ell) * math.factorial(k - ell) ** 2)


def _check_ell(k: int, ell: int) -> None:
    if not 1 <= ell <= k:
        raise InvalidParameterError(f"need 1 <= ell <= k, got ell={ell}, k={k}")


@dataclass(frozen=True)
class OracleParams:
    d: int
    k: int
    ell: int
    shape: GraphShape
    t_grid: np.ndarray
    alpha: float | None = None      # heavy-tail exponent
    c: float | None = None          # light-tail a-limit, np.inf for subexponential
    annulus: tuple[float, float] | None = None
    n_samples: int = 200_000
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self) -> None:
        _check_ell(self.k, self.ell)
        if self.shape.k != self.k:
            raise InvalidParameterError("shape order must equal k")
        grid = np.asarray(self.t_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or np.any(grid < 0):
            raise InvalidParameterError("t_grid must be a nonempty nonnegative 1-d array")
        object.__setattr__(self, "t_grid", grid)
        if self.n_samples < _MIN_SAMPLES:
            raise InvalidParameterError(f"need at least {_MIN_SAMPLES} MC samples")
        if self.annulus is not None:
            K, L = self.annulus
            if not K < L:
                raise InvalidParameterError("annulus needs K < L")


@dataclass
class LimitCovariance:
    """Covariance matrix over a t-grid with per-entry MC standard errors."""

    t_grid: np.ndarray
    matrix: np.ndarray
    std_err: np.ndarray
    provenance: dict = field(default_factory=dict)

    def psd_projected(self, jitter_budget: float = 1e-10):
        """Eigenvalue-clipped PSD version and the jitter that was needed."""
        return _psd_clip(self.matrix, jitter_budget)


def _psd_clip(matrix: np.ndarray, jitter_budget: float):
    matrix = 0.5 * (matrix + matrix.T)
    vals, vecs = np.linalg.eigh(matrix)
    trace = float(np.trace(matrix))
    budget = jitter_budget * max(trace, np.finfo(float).tiny)
    jitter = max(0.0, -float(vals.min()))
    if jitter > budget:
        raise IndefiniteCovarianceError(
            f"smallest eigenvalue {vals.min():.3e} below jitter budget {budget:.3e}")
    clipped = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    return 0.5 * (clipped + clipped.T), jitter


# ---------------------------------------------------------------------------
# configuration sampling and indicator evaluation
# ---------------------------------------------------------------------------

def _ball_points(rng, count: int, m: int, d: int, radius: float, antithetic: bool):
    """(count, m, d) vectors uniform in B(0, radius); optional radius pairing."""
    if m == 0:
        return np.empty((count, 0, d))
    z = rng.standard_normal((count, m, d))
    nz = np.linalg.norm(z, axis=2, keepdims=True)
    nz[nz == 0] = 1.0
    u = rng.random((count, m))
    if antithetic:
        half = count // 2
        u[half:2 * half] = 1.0 - u[:half]
        z[half:2 * half] = z[:half]
    r = radius * u ** (1.0 / d)
    return z / nz * r[:, :, None]


def _mode_values(atlas, shape: GraphShape, configs: np.ndarray,
                 t_grid: np.ndarray, mode: str) -> np.ndarray:
    """(N, T) indicator values of h / h+ / h- on a batch of k-point configs."""
    N, k, _ = configs.shape
    iu = np.triu_indices(k, 1)
    diff = configs[:, :, None, :] - configs[:, None, :, :]
    dists = np.sqrt((diff * diff).sum(axis=3))[:, iu[0], iu[1]]
    gidx = np.searchsorted(t_grid, dists, side="left")
    bits = (np.int64(1) << pair_bit_index(k)[iu]).astype(np.int64)
    present = gidx[:, :, None] <= np.arange(t_grid.size)[None, None, :]
    masks = (present * bits[None, :, None]).sum(axis=1)
    if k <= FULL_TABLE_MAX:
        cls = atlas.class_table()[masks]
        ecnt = atlas.edge_count_table()[masks]
    else:
        uniq, inv = np.unique(masks, return_inverse=True)
        cls = np.array([atlas.class_index_of_mask(int(m)) for m in uniq])[inv].reshape(masks.shape)
        ecnt = np.bitwise_count(masks).astype(np.int64)
    cid = atlas.shape_index(shape)
    h = cls == cid
    if mode == "h":
        return h
    minus = (cls >= 0) & (ecnt > shape.edge_count)
    if mode == "minus":
        return minus
    if mode == "plus":
        return h | minus
    raise InvalidParameterError(f"unknown mode {mode!r}")


def indicator_values(shape: GraphShape, configs: np.ndarray, t_grid: np.ndarray,
                     mode: str = "h") -> np.ndarray:
    """(N, T) values of h / h+ / h- over a batch of k-point configurations."""
    configs = np.asarray(configs, dtype=float)
    grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    return _mode_values(build_atlas(shape.k), shape, configs, grid, mode)


def _accumulate(sum_m, sq_m, w, a1, a2):
    """Add symmetrized per-sample contributions w * (a1(t) a2(s) + a1(s) a2(t))/2."""
    e = np.einsum("m,mt,ms->ts", w, a1, a2)
    sum_m += 0.5 * (e + e.T)
    w2 = w * w
    e2 = np.einsum("m,mt,ms->ts", w2, a1, a2)
    both = a1 * a2
    cross = np.einsum("m,mt,ms->ts", w2, both, both)
    sq_m += 0.25 * (e2 + e2.T) + 0.5 * cross


def _covariance_core(params: OracleParams, mode: str, light: bool) -> LimitCovariance:
    d, k, ell = params.d, params.k, params.ell
    grid = params.t_grid
    T = grid.size
    t_max = float(grid.max())
    atlas = build_atlas(k)
    n_shared, n_z = ell - 1, k - ell
    m_vectors = 2 * k - ell - 1
    radius = k * max(t_max, np.finfo(float).tiny)
    volume = unit_ball_volume(d) * radius ** d

    if light:
        if params.c is None or not params.c > 0:
            raise InvalidParameterError("light-tail covariance needs c in (0, inf]")
        cinv = 0.0 if math.isinf(params.c) else 1.0 / params.c
        rate = 2 * k - ell
        scale = d_constant(d, k, ell) / rate * volume ** m_vectors
    else:
        if params.alpha is None:
            raise InvalidParameterError("heavy-tail covariance needs alpha")
        scale = b_constant(d, k, ell, params.alpha) * volume ** m_vectors
        cinv = 0.0
        rate = 0.0

    annulus = params.annulus
    if annulus is not None and not light:
        raise InvalidParameterError(
            "annulus restriction enters the heavy-tail blocks through closed-form "
            "weights; pass it to mixture_covariance instead")

    rng = np.random.default_rng(params.seed)
    sum_m = np.zeros((T, T))
    sq_m = np.zeros((T, T))
    remaining = params.n_samples
    zero_col = np.zeros((1, 1, d))
    while remaining > 0:
        count = min(_CHUNK, remaining)
        remaining -= count
        shared = _ball_points(rng, count, n_shared, d, radius, params.antithetic)
        z1 = _ball_points(rng, count, n_z, d, radius, params.antithetic)
        z2 = _ball_points(rng, count, n_z, d, radius, params.antithetic)
        zeros = np.broadcast_to(zero_col, (count, 1, d))
        cfg1 = np.concatenate([zeros, shared, z1], axis=1)
        cfg2 = np.concatenate([zeros, shared, z2], axis=1)
        a1 = _mode_values(atlas, params.shape, cfg1, grid, mode).astype(float)
        a2 = _mode_values(atlas, params.shape, cfg2, grid, mode).astype(float)
        if light:
            rho = rng.exponential(1.0 / rate, size=count)
            proj_shared = shared[:, :, 0] if n_shared else np.zeros((count, 0))
            proj_z1 = z1[:, :, 0] if n_z else np.zeros((count, 0))
            proj_z2 = z2[:, :, 0] if n_z else np.zeros((count, 0))
            proj_all = np.concatenate([proj_shared, proj_z1, proj_z2], axis=1)
            w = np.exp(-cinv * proj_all.sum(axis=1))
            w *= np.all(rho[:, None] + cinv * proj_all >= 0, axis=1)
            if annulus is not None:
                K, L = annulus
                sat1 = np.concatenate([proj_shared, proj_z1], axis=1)
                sat2 = np.concatenate([proj_shared, proj_z2], axis=1)
                top1 = cinv * sat1.max(axis=1, initial=0.0)
                top2 = cinv * sat2.max(axis=1, initial=0.0)
                m1 = np.maximum(rho, rho + top1)
                m2 = np.maximum(rho, rho + top2)
                w *= (K <= m1) & (m1 < L) & (K <= m2) & (m2 < L)
        else:
            w = np.ones(count)
        _accumulate(sum_m, sq_m, w, a1, a2)

    N = params.n_samples
    mean = sum_m / N
    var = np.maximum(sq_m / N - mean ** 2, 0.0)
    matrix = scale * mean
    std_err = scale * np.sqrt(var / N)
    prov = {
        "formula": ("M_ell" if light else "L_ell"), "d": d, "k": k, "ell": ell,
        "mode": mode, "alpha": params.alpha, "c": params.c,
        "annulus": params.annulus, "seed": params.seed, "n_samples": N,
        "shape_canonical": params.shape.canonical_form,
    }
    return LimitCovariance(t_grid=grid.copy(), matrix=matrix, std_err=std_err,
                           provenance=prov)


def covariance_L(params: OracleParams, mode: str = "h") -> LimitCovariance:
    """Heavy-tail block covariance L_ell by Monte Carlo (per-entry SEs)."""
    return _covariance_core(params, mode, light=False)


def covariance_M(params: OracleParams, mode: str = "h") -> LimitCovariance:
    """Light-tail block covariance M_ell, optionally restricted to the
    annulus domain (K, L); c = inf recovers the subexponential case."""
    return _covariance_core(params, mode, light=True)


# ---------------------------------------------------------------------------
# regime mixtures
# ---------------------------------------------------------------------------

HEAVY = "heavy"
LIGHT = "light"


def _heavy_weight(d: int, k: int, ell: int, alpha: float, K: float, L: float) -> float:
    expo = d - alpha * (2 * k - ell)
    upper = 0.0 if math.isinf(L) else L ** expo
    return K ** expo - upper


def mixture_covariance(family: str, regime: RegimeClass | str, params: OracleParams,
                       annulus: tuple[float, float] | None = None,
                       xi: float | None = None) -> LimitCovariance:
    """Regime-appropriate combination of block covariances.

    Heavy family: annuli enter through the closed-form weights
    (K^(d-alpha(2k-ell)) - L^(d-alpha(2k-ell))); light family: the block
    integrals are restricted to the annulus domain directly.
    """
    tag = regime.tag if isinstance(regime, RegimeClass) else regime
    if isinstance(regime, RegimeClass) and xi is None:
        xi = regime.xi
    k = params.k
    if tag == SPARSE:
        ells = [k]
    elif tag == DENSE:
        ells = [1]
    elif tag == CRITICAL:
        if xi is None or not xi > 0:
            raise InvalidParameterError("critical mixture needs a positive xi")
        ells = list(range(1, k + 1))
    else:
        raise InvalidParameterError(f"unknown regime tag {tag!r}")

    if family == HEAVY:
        if params.alpha is None:
            raise InvalidParameterError("heavy mixture needs alpha")
        K, L = annulus if annulus is not None else (1.0, math.inf)
        if not 1 <= K < L:
            raise InvalidParameterError("heavy annulus needs 1 <= K < L")
    elif family == LIGHT:
        if params.c is None:
            raise InvalidParameterError("light mixture needs c")
        if annulus is not None:
            K, L = annulus
            if not 0 <= K < L:
                raise InvalidParameterError("light annulus needs 0 <= K < L")
    else:
        raise InvalidParameterError(f"unknown family {family!r}")

    T = params.t_grid.size
    matrix = np.zeros((T, T))
    var = np.zeros((T, T))
    terms = []
    for ell in ells:
        sub = replace(params, ell=ell, seed=params.seed + ell,
                      annulus=annulus if family == LIGHT else None)
        block = covariance_M(sub) if family == LIGHT else covariance_L(sub)
        weight = 1.0 if tag != CRITICAL else xi ** (2 * k - ell)
        if family == HEAVY:
            weight *= _heavy_weight(params.d, k, ell, params.alpha, K, L)
        matrix += weight * block.matrix
        var += (weight * block.std_err) ** 2
        terms.append({"ell": ell, "weight": weight, "provenance": block.provenance})
    prov = {"formula": f"mixture_{family}_{tag}", "xi": xi,
            "annulus": annulus, "terms": terms}
    return LimitCovariance(t_grid=params.t_grid.copy(), matrix=matrix,
                           std_err=np.sqrt(var), provenance=prov)


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------

def brownian_identity_check(params: OracleParams, mode: str = "plus") -> dict:
    """For ell = k: the +/- block covariance must equal
    K_mode * min(t,s)^(d(k-1)), a time-changed Brownian motion."""
    if params.ell != params.k:
        raise InvalidParameterError("Brownian representation holds for ell = k")
    if mode not in ("plus", "minus"):
        raise InvalidParameterError("mode must be 'plus' or 'minus'")
    d, k = params.d, params.k
    cov = covariance_L(params, mode=mode)

    # independent MC for K = B_k * int h_mode(0, y) dy at unit radius
    atlas = build_atlas(k)
    rng = np.random.default_rng(params.seed + 977)
    radius = float(k)
    volume = unit_ball_volume(d) * radius ** d
    total = ssq = 0.0
    n = params.n_samples
    remaining = n
    while remaining > 0:
        count = min(_CHUNK, remaining)
        remaining -= count
        y = _ball_points(rng, count, k - 1, d, radius, params.antithetic)
        cfg = np.concatenate([np.zeros((count, 1, d)), y], axis=1)
        vals = _mode_values(atlas, params.shape, cfg, np.array([1.0]), mode)[:, 0]
        total += vals.sum()
        ssq += vals.sum()  # indicator: squares equal values
    p_hat = total / n
    factor = b_constant(d, k, k, params.alpha) * volume ** (k - 1)
    k_hat = factor * p_hat
    k_se = factor * math.sqrt(max(p_hat - p_hat ** 2, 0.0) / n)

    expo = d * (k - 1)
    tt, ss = np.meshgrid(params.t_grid, params.t_grid, indexing="ij")
    predicted = k_hat * np.minimum(tt, ss) ** expo
    combined = np.sqrt(cov.std_err ** 2 + (np.minimum(tt, ss) ** expo * k_se) ** 2)
    dev = np.abs(cov.matrix - predicted)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(combined > 0, dev / combined, np.where(dev > 0, np.inf, 0.0))
    return {
        "mode": mode, "exponent": expo, "K_hat": k_hat, "K_se": k_se,
        "covariance": cov, "predicted": predicted, "max_z": float(z.max()),
        "passed": bool(z.max() <= 3.0),
    }


def self_similarity_report(params: OracleParams, t0: float = 1.0,
                           factors=(1.0, 2.0, 4.0), mode: str = "h") -> dict:
    """Estimated log-log slope of L_ell(c t0, c t0) against the exact
    self-similarity exponent d(2k - ell - 1) of the covariance scaling."""
    d, k, ell = params.d, params.k, params.ell
    values, ses = [], []
    for i, c in enumerate(factors):
        sub = replace(params, t_grid=np.array([c * t0]), seed=params.seed + 131 * i)
        block = covariance_L(sub, mode=mode)
        values.append(float(block.matrix[0, 0]))
        ses.append(float(block.std_err[0, 0]))
    x = np.log(np.asarray(factors, dtype=float))
    y = np.log(values)
    w = (x - x.mean()) / np.sum((x - x.mean()) ** 2)
    slope = float(w @ y)
    rel = np.asarray(ses) / np.asarray(values)
    slope_se = float(np.sqrt(np.sum(w ** 2 * rel ** 2)))
    target = d * (2 * k - ell - 1)
    z = abs(slope - target) / slope_se if slope_se > 0 else math.inf
    return {
        "slope": slope, "slope_se": slope_se, "target": float(target),
        "z": float(z), "passed": bool(z <= 3.0),
        "values": values, "std_errs": ses, "factors": list(factors),
    }


def sample_limit_paths(cov, count: int, rng: np.random.Generator,
                       jitter_budget: float = 1e-10) -> np.ndarray:
    """Zero-mean Gaussian vectors with the given covariance (symmetric
    eigen-factorization after PSD clipping within the jitter budget)."""
    matrix = cov.matrix if isinstance(cov, LimitCovariance) else np.asarray(cov, dtype=float)
    clipped, _ = _psd_clip(matrix, jitter_budget)
    vals, vecs = np.linalg.eigh(clipped)
    factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
    z = rng.standard_normal((count, matrix.shape[0]))
    return z @ factor.T
