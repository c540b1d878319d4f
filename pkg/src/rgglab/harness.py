"""Replicated experiments and their statistical reports.

Replications are the unit of parallelism: replication r of rung g draws its
generator from ``SeedSequence(master_seed, spawn_key=(g, r))``, a counter
style derivation that cannot collide, so a report is bit-identical for a
fixed (config, master_seed) regardless of the worker count.  Every reported
ratio carries a standard error and every flag is recomputable from the
persisted raw tables.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import kernels
from .atlas import GraphShape, build_atlas
from .counting import (
    ANNULUS_RADIUS_MULTIPLE,
    ANNULUS_SHIFTED_BY_A,
    AnnulusSpec,
    CountRequest,
    count_decomposed,
)
from .densities import (
    PoissonLayerSchedule,
    RadialDensity,
    RadiusSchedule,
    ScheduleUndefinedError,
    sample_poisson_cloud,
    unit_ball_volume,
)
from .limits import HEAVY, LIGHT, LimitCovariance, OracleParams, indicator_values, mixture_covariance
from .regimes import (
    BoundaryRegimeError,
    RegimeClass,
    check_growth_condition,
    classify_regime,
    log_tau,
    standardize,
)

# engineering defaults for finite-n normality checks; the raw moments are
# always persisted so thresholds can be re-evaluated after the fact
SKEW_THRESHOLD = 0.3
KURT_THRESHOLD = 0.6
KS_P_THRESHOLD = 0.01
BAND_FRACTION = 0.9


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    density: RadialDensity
    schedule: RadiusSchedule
    shape: GraphShape
    t_grid: np.ndarray
    n_ladder: tuple[float, ...]
    replications: int
    master_seed: int = 0
    workers: int = 1
    oracle_samples: int = 400_000
    t_ref: float = 1.0
    band: tuple[float, float] = (0.8, 1.2)
    annulus: tuple[float, float] | None = None
    classify_n_range: tuple[float, float] | None = None
    leave_one_out: bool = True
    kmax_census: int = 3
    core_cell_budget: int = 1 << 27
    out_dir: Path | None = None

    def __post_init__(self) -> None:
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        ladder = tuple(float(n) for n in self.n_ladder)
        if len(ladder) == 0 or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ExperimentError("n_ladder must be nonempty ascending")
        self.n_ladder = ladder
        if self.replications < 2:
            raise ExperimentError("need at least 2 replications for variance tests")


@dataclass
class ExperimentReport:
    kind: str
    rungs: list[dict]
    flags: dict
    seed_audit: dict
    runtime_seconds: float
    oracle: LimitCovariance | None = None
    tables: dict = field(default_factory=dict)


def replication_seed(master_seed: int, rung_idx: int, rep: int) -> np.random.SeedSequence:
    """Injective counter-based stream derivation (no collisions possible)."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(rung_idx, rep))


def _seed_audit(cfg: ExperimentConfig) -> dict:
    return {
        "master_seed": cfg.master_seed,
        "derivation": "SeedSequence(master_seed, spawn_key=(rung_index, replication))",
        "replications": cfg.replications,
        "rungs": len(cfg.n_ladder),
    }


def _run_replications(cfg: ExperimentConfig, rung_idx: int, work) -> list:
    """Map ``work(rep, rng)`` over replications, deterministically ordered."""
    def one(rep: int):
        rng = np.random.default_rng(replication_seed(cfg.master_seed, rung_idx, rep))
        return work(rep, rng)

    reps = range(cfg.replications)
    if cfg.workers <= 1:
        return [one(r) for r in reps]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(one, reps))


def _family(cfg: ExperimentConfig) -> str:
    return LIGHT if cfg.density.family == "vonmises" else HEAVY


def _annulus_spec(cfg: ExperimentConfig) -> AnnulusSpec | None:
    if cfg.annulus is None:
        return None
    K, L = cfg.annulus
    scaling = ANNULUS_SHIFTED_BY_A if _family(cfg) == LIGHT else ANNULUS_RADIUS_MULTIPLE
    return AnnulusSpec(K=K, L=L, scaling=scaling)


def _default_classify_range(cfg: ExperimentConfig) -> tuple[float, float]:
    """Ladder extended down to >= 4 decades, clipped where the schedule works.

    The regimes are tail statements; starting far below the ladder would probe
    the head of the density where the evidence trend is not yet meaningful, so
    the default reaches just two decades below the ladder.  Configs can widen
    it via ``classify_n_range``.
    """
    n_top = cfg.n_ladder[-1]
    n_lo = cfg.n_ladder[0] / 100.0
    for _ in range(60):
        if n_lo >= n_top:
            raise ExperimentError("schedule undefined over any classification range")
        try:
            cfg.schedule.radius(cfg.density, n_lo)
            break
        except (ScheduleUndefinedError, ValueError, OverflowError):
            n_lo *= 10
    return (n_lo, n_top)


def _covariance_with_se(curves: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance over replications with per-entry standard errors."""
    reps = curves.shape[0]
    centered = curves - curves.mean(axis=0, keepdims=True)
    prods = centered[:, :, None] * centered[:, None, :]
    cov = prods.sum(axis=0) / (reps - 1)
    se = prods.std(axis=0, ddof=1) / math.sqrt(reps)
    return cov, se


def _normality_stats(values: np.ndarray) -> dict:
    sd = values.std(ddof=1)
    if sd == 0:
        return {"skew": math.nan, "ex_kurtosis": math.nan, "ks_p": math.nan,
                "degenerate": True}
    z = (values - values.mean()) / sd
    ks = stats.kstest(z, "norm")
    return {
        "skew": float(stats.skew(values)),
        "ex_kurtosis": float(stats.kurtosis(values)),
        "ks_p": float(ks.pvalue),
        "degenerate": False,
    }


# ---------------------------------------------------------------------------
# CLT experiment
# ---------------------------------------------------------------------------

def run_clt_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Replicated counting runs versus the mixture covariance oracle."""
    started = time.perf_counter()
    density, schedule, shape = cfg.density, cfg.schedule, cfg.shape
    k = shape.k
    family = _family(cfg)
    n_range = cfg.classify_n_range or _default_classify_range(cfg)
    regime = classify_regime(density, schedule, n_range)
    growth = check_growth_condition(density, schedule, k, n_range)
    if not growth.passed:
        raise BoundaryRegimeError(
            "growth condition fails on this schedule "
            f"(final-decade log gain {growth.final_decade_gain:.3g}); "
            "the normalizing product must diverge for the CLT experiment")

    oracle_params = OracleParams(
        d=density.d, k=k, ell=k, shape=shape, t_grid=cfg.t_grid,
        alpha=getattr(density, "alpha", None),
        c=getattr(density, "c_limit", None),
        n_samples=cfg.oracle_samples, seed=cfg.master_seed + 10_000,
    )
    oracle = mixture_covariance(family, regime, oracle_params, annulus=cfg.annulus)

    ann_spec = _annulus_spec(cfg)
    rungs = []
    raw_rows = []
    for rung_idx, n in enumerate(cfg.n_ladder):
        R = schedule.radius(density, n)
        a_R = float(density.a_function(R)) if family == LIGHT else None
        tau_n = math.exp(log_tau(density, regime, n, R, k))
        req = CountRequest(shape=shape, t_grid=cfg.t_grid, R=R,
                           annulus=ann_spec, a_of_R=a_R)

        def work(rep, rng, _n=n, _R=R, _req=req):
            cloud = sample_poisson_cloud(_n, density, rng, exterior_radius=_R,
                                         seed=rep)
            h, plus, minus = count_decomposed(cloud, _req)
            return h.counts, plus.counts, minus.counts, len(cloud)

        results = _run_replications(cfg, rung_idx, work)
        curves = np.array([r[0] for r in results], dtype=np.int64)
        plus = np.array([r[1] for r in results], dtype=np.int64)
        minus = np.array([r[2] for r in results], dtype=np.int64)
        sizes = np.array([r[3] for r in results], dtype=np.int64)
        for rep in range(cfg.replications):
            raw_rows.append((n, rep, curves[rep], plus[rep], minus[rep]))

        decomposition_exact = bool(np.array_equal(curves, plus - minus))
        monotone = bool(np.all(np.diff(plus, axis=1) >= 0)
                        and np.all(np.diff(minus, axis=1) >= 0))

        cov, cov_se = _covariance_with_se(curves.astype(float))
        scaled = cov / tau_n
        scaled_se = cov_se / tau_n
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(oracle.matrix != 0, scaled / oracle.matrix, np.nan)
            rel = np.sqrt((scaled_se / np.where(scaled != 0, scaled, np.nan)) ** 2
                          + (oracle.std_err / np.where(oracle.matrix != 0,
                                                       oracle.matrix, np.nan)) ** 2)
            ratio_se = np.abs(ratio) * rel
        finite = np.isfinite(ratio)
        in_band = (ratio[finite] >= cfg.band[0]) & (ratio[finite] <= cfg.band[1])
        band_fraction = float(in_band.mean()) if finite.any() else math.nan

        t_idx = int(np.argmin(np.abs(cfg.t_grid - cfg.t_ref)))
        paths = standardize(curves.astype(float), tau_n,
                            leave_one_out=cfg.leave_one_out)
        per_t_stats = [_normality_stats(curves[:, j].astype(float))
                       for j in range(cfg.t_grid.size)]

        rungs.append({
            "n": n, "R": R, "tau": tau_n,
            "q": n * float(density.radial_profile(R)),
            "mean_cloud_size": float(sizes.mean()),
            "mean_curve": curves.mean(axis=0),
            "cov_scaled": scaled, "cov_scaled_se": scaled_se,
            "ratio": ratio, "ratio_se": ratio_se,
            "band_fraction": band_fraction,
            "ref_ratio": float(ratio[t_idx, t_idx]),
            "ref_ratio_se": float(ratio_se[t_idx, t_idx]),
            "normality_at_ref": per_t_stats[t_idx],
            "normality_per_t": per_t_stats,
            "decomposition_exact": decomposition_exact,
            "monotone_curves": monotone,
            "standardized_mean_max": float(np.abs(paths.mean(axis=0)).max()),
        })

    ref_ratios = [r["ref_ratio"] for r in rungs]
    deltas = [abs(x - 1.0) for x in ref_ratios]
    flags = {
        "regime": regime.tag,
        "xi": regime.xi,
        "growth_passed": growth.passed,
        "top_rung_band_fraction_ok": rungs[-1]["band_fraction"] >= BAND_FRACTION,
        "top_rung_ref_in_band": cfg.band[0] <= ref_ratios[-1] <= cfg.band[1],
        "ratio_trend_monotone_to_one": all(b <= a + 1e-12 for a, b in zip(deltas, deltas[1:])),
        "decomposition_exact_all": all(r["decomposition_exact"] for r in rungs),
        "monotone_curves_all": all(r["monotone_curves"] for r in rungs),
        "ref_ratios": ref_ratios,
    }
    report = ExperimentReport(
        kind="clt", rungs=rungs, flags=flags, seed_audit=_seed_audit(cfg),
        runtime_seconds=time.perf_counter() - started, oracle=oracle,
        tables={"raw_rows": raw_rows, "regime": regime, "growth": growth},
    )
    return report


# ---------------------------------------------------------------------------
# Palm-identity checks
# ---------------------------------------------------------------------------

def palm_expectation(density: RadialDensity, shape: GraphShape, R: float,
                     t_pair: tuple[float, float], n_samples: int,
                     rng: np.random.Generator) -> tuple[float, float, float, float]:
    """MC estimates of E{h_t 1{m>=R}} and E{h_t h_s 1{m>=R}} with SEs.

    Importance scheme: the anchor point follows f conditioned on the
    exterior, the k-1 satellites are uniform in B(anchor, k*t_max) and
    reweighted by their density values.
    """
    t, s = t_pair
    k = shape.k
    d = density.d
    t_max = max(t, s)
    radius = k * t_max
    vol = unit_ball_volume(d) * radius ** d
    p_out = density.tail_prob(R) if R > 0 else 1.0
    chunk = 1 << 14
    tot1 = sq1 = tot2 = sq2 = 0.0
    remaining = n_samples
    grid = np.array(sorted({t, s}))
    ti, si = int(np.searchsorted(grid, t)), int(np.searchsorted(grid, s))
    while remaining > 0:
        count = min(chunk, remaining)
        remaining -= count
        if R > 0:
            anchor = density.sample_exterior(rng, count, R)
        else:
            anchor = density.sample(rng, count)
        z = rng.standard_normal((count, k - 1, density.d))
        nz = np.linalg.norm(z, axis=2, keepdims=True)
        nz[nz == 0] = 1.0
        offs = z / nz * (radius * rng.random((count, k - 1)) ** (1.0 / density.d))[:, :, None]
        sats = anchor[:, None, :] + offs
        cfg = np.concatenate([anchor[:, None, :], sats], axis=1)
        norms = np.linalg.norm(sats, axis=2)
        inside = np.all(norms >= R, axis=1) if R > 0 else np.ones(count, bool)
        dens = np.prod(density.radial_profile(norms), axis=1)
        hv = indicator_values(shape, cfg, grid, "h")
        v1 = dens * inside * hv[:, ti]
        v2 = dens * inside * hv[:, ti] * hv[:, si]
        tot1 += v1.sum(); sq1 += (v1 ** 2).sum()
        tot2 += v2.sum(); sq2 += (v2 ** 2).sum()
    scale = p_out * vol ** (k - 1)
    m1 = tot1 / n_samples
    m2 = tot2 / n_samples
    se1 = math.sqrt(max(sq1 / n_samples - m1 ** 2, 0.0) / n_samples)
    se2 = math.sqrt(max(sq2 / n_samples - m2 ** 2, 0.0) / n_samples)
    return scale * m1, scale * se1, scale * m2, scale * se2


def palm_mean_check(cfg: ExperimentConfig, n: float | None = None,
                    t_pair: tuple[float, float] | None = None,
                    mc_samples: int | None = None) -> ExperimentReport:
    """First two Palm identities as testable mean / joint-count formulas.

    Empirical mean of G_n(t) against (n^k/k!) E{h_t 1{m >= R}}, and the
    joint-persistence count sum h_t h_s against (n^k/k!) E{h_t h_s 1}.
    """
    started = time.perf_counter()
    shape, density, schedule = cfg.shape, cfg.density, cfg.schedule
    k = shape.k
    if k > 3:
        raise ExperimentError("palm check limited to k <= 3 (quadrature cost)")
    n = float(n if n is not None else cfg.n_ladder[-1])
    t, s = t_pair if t_pair is not None else (cfg.t_ref, 0.75 * cfg.t_ref)
    R = schedule.radius(density, n)
    grid = np.array(sorted({t, s}))
    ti, si = int(np.searchsorted(grid, t)), int(np.searchsorted(grid, s))
    req = CountRequest(shape=shape, t_grid=grid, R=R)

    def work(rep, rng):
        cloud = sample_poisson_cloud(n, density, rng, exterior_radius=R, seed=rep)
        h, _, _ = count_decomposed(cloud, req)
        # joint persistence: subsets matching the shape at both radii
        both = _joint_persistence(cloud, req, ti, si)
        return h.counts[ti], both

    results = _run_replications(cfg, 0, work)
    counts = np.array([r[0] for r in results], dtype=float)
    joints = np.array([r[1] for r in results], dtype=float)

    rng = np.random.default_rng(replication_seed(cfg.master_seed, 9999, 0))
    samples = mc_samples or cfg.oracle_samples
    m1, se1, m2, se2 = palm_expectation(density, shape, R, (t, s), samples, rng)
    coeff = math.exp(k * math.log(n) - math.log(math.factorial(k)))
    pred_mean, pred_mean_se = coeff * m1, coeff * se1
    pred_joint, pred_joint_se = coeff * m2, coeff * se2

    emp_mean = counts.mean()
    emp_mean_se = counts.std(ddof=1) / math.sqrt(len(counts))
    emp_joint = joints.mean()
    emp_joint_se = joints.std(ddof=1) / math.sqrt(len(joints))
    z_mean = abs(emp_mean - pred_mean) / math.hypot(emp_mean_se, pred_mean_se)
    z_joint = abs(emp_joint - pred_joint) / math.hypot(emp_joint_se, pred_joint_se)

    flags = {
        "mean_within_3se": bool(z_mean <= 3.0),
        "joint_within_3se": bool(z_joint <= 3.0),
        "z_mean": float(z_mean), "z_joint": float(z_joint),
    }
    rung = {
        "n": n, "R": R, "t": t, "s": s,
        "empirical_mean": emp_mean, "empirical_mean_se": emp_mean_se,
        "palm_mean": pred_mean, "palm_mean_se": pred_mean_se,
        "empirical_joint": emp_joint, "empirical_joint_se": emp_joint_se,
        "palm_joint": pred_joint, "palm_joint_se": pred_joint_se,
    }
    return ExperimentReport(kind="palm", rungs=[rung], flags=flags,
                            seed_audit=_seed_audit(cfg),
                            runtime_seconds=time.perf_counter() - started)


def _joint_persistence(cloud, req: CountRequest, ti: int, si: int) -> int:
    """Number of subsets matching the shape at both grid radii ti and si."""
    if ti == si:
        h, _, _ = count_decomposed(cloud, req)
        return int(h.counts[ti])
    k = req.shape.k
    keep = cloud.norms >= req.R if req.R > 0 else slice(None)
    pts = cloud.points[keep]
    if pts.shape[0] < k:
        return 0
    t_max = float(req.t_grid[-1])
    indptr, indices = kernels.build_adjacency(pts, t_max)
    cand = list(kernels._esu_candidates_python(indptr, indices, k, pts.shape[0]))
    if not cand:
        return 0
    cfgs = pts[np.array(cand, dtype=np.int64)]
    vals = indicator_values(req.shape, cfgs, req.t_grid, "h")
    return int(np.sum(vals[:, ti] & vals[:, si]))


# ---------------------------------------------------------------------------
# Poisson-layer experiment
# ---------------------------------------------------------------------------

def poisson_gof(counts: np.ndarray, min_expected: float = 5.0) -> dict:
    """Chi-square goodness of fit of integer counts against Poisson(mean)."""
    counts = np.asarray(counts, dtype=int)
    n = len(counts)
    lam = counts.mean()
    kmax = int(counts.max())
    obs = np.bincount(counts, minlength=kmax + 2).astype(float)
    exp = stats.poisson.pmf(np.arange(kmax + 2), lam) * n
    exp[-1] = max(n - exp[:-1].sum(), 0.0)   # lump the upper tail
    merged_obs, merged_exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            merged_obs.append(acc_o)
            merged_exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 and merged_obs:
        merged_obs[-1] += acc_o
        merged_exp[-1] += acc_e
    dof = len(merged_obs) - 2
    if dof < 1:
        return {"chi2": 0.0, "dof": 0, "p_value": 1.0, "bins": len(merged_obs)}
    chi2 = float(sum((o - e) ** 2 / e for o, e in zip(merged_obs, merged_exp)))
    return {"chi2": chi2, "dof": dof, "p_value": float(stats.chi2.sf(chi2, dof)),
            "bins": len(merged_obs)}


def run_poisson_layer_experiment(cfg: ExperimentConfig,
                                 t_fixed: float | None = None) -> ExperimentReport:
    """Dispersion and Poisson GOF of G_n(t) at the Poisson-layer radius."""
    started = time.perf_counter()
    if not isinstance(cfg.schedule, PoissonLayerSchedule):
        raise ExperimentError("poisson-layer experiment needs the poisson_layer schedule")
    t = float(t_fixed if t_fixed is not None else cfg.t_ref)
    req_grid = np.array([t])
    rungs = []
    for rung_idx, n in enumerate(cfg.n_ladder):
        R = cfg.schedule.radius(cfg.density, n)
        req = CountRequest(shape=cfg.shape, t_grid=req_grid, R=R)

        def work(rep, rng, _n=n, _R=R, _req=req):
            cloud = sample_poisson_cloud(_n, cfg.density, rng, exterior_radius=_R,
                                         seed=rep)
            h, _, _ = count_decomposed(cloud, _req)
            return int(h.counts[0])

        counts = np.array(_run_replications(cfg, rung_idx, work), dtype=int)
        mean = counts.mean()
        disp = counts.var(ddof=1) / mean if mean > 0 else math.nan
        gof = poisson_gof(counts)
        rungs.append({"n": n, "R": R, "t": t, "mean": float(mean),
                      "dispersion": float(disp), "counts": counts, **gof})
    means = [r["mean"] for r in rungs]
    flags = {
        "top_dispersion_in_band": 0.8 <= rungs[-1]["dispersion"] <= 1.2,
        "top_gof_p_ok": rungs[-1]["p_value"] >= KS_P_THRESHOLD,
        "mean_trend_flat": max(means) <= 4 * max(min(means), 1e-9),
    }
    return ExperimentReport(kind="poisson_layer", rungs=rungs, flags=flags,
                            seed_audit=_seed_audit(cfg),
                            runtime_seconds=time.perf_counter() - started)


# ---------------------------------------------------------------------------
# core-coverage experiment
# ---------------------------------------------------------------------------

def cubes_inside_ball(radius: float, g: float, d: int) -> np.ndarray:
    """Integer coordinates of every grid-g cube contained in B(0, radius)."""
    m = int(math.ceil(radius / g))
    axes = [np.arange(-m - 1, m + 1, dtype=np.int64)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([a.ravel() for a in mesh], axis=1)
    far = np.maximum(np.abs(coords * g), np.abs((coords + 1) * g))
    inside = np.linalg.norm(far, axis=1) <= radius
    return coords[inside]


def run_core_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Frequency of the cube-grid coverage criterion at the core radius.

    The event {every grid-g cube inside B(0, R)} with g = 1/(2 sqrt(d)) is
    sufficient for coverage of B(0, R) by unit balls around the points.
    Dense-region sampling uses full (unrestricted) clouds.
    """
    started = time.perf_counter()
    density = cfg.density
    d = density.d
    g = 1.0 / (2.0 * math.sqrt(d))
    rungs = []
    for rung_idx, n in enumerate(cfg.n_ladder):
        R = cfg.schedule.radius(density, n)
        R_big = 1.5 * R
        n_cells_est = (2 * (R_big / g + 2)) ** d
        if n_cells_est > cfg.core_cell_budget:
            raise ExperimentError(
                f"cube count ~{n_cells_est:.3g} exceeds budget {cfg.core_cell_budget}")
        cubes_R = cubes_inside_ball(R, g, d)
        cubes_big = cubes_inside_ball(R_big, g, d)
        base = cubes_big.min(axis=0) - 1
        dims = cubes_big.max(axis=0) - base + 2
        flat_R = np.ravel_multi_index((cubes_R - base).T, dims)
        flat_big = np.ravel_multi_index((cubes_big - base).T, dims)

        def work(rep, rng, _n=n):
            cloud = sample_poisson_cloud(_n, density, rng, seed=rep)
            occ = kernels.occupied_cells(cloud.points, g, base, dims)
            return bool(occ[flat_R].all()), bool(occ[flat_big].all())

        results = _run_replications(cfg, rung_idx, work)
        cov_R = np.array([r[0] for r in results])
        cov_big = np.array([r[1] for r in results])
        rungs.append({
            "n": n, "R_core": R, "cubes": len(cubes_R), "g": g,
            "frequency": float(cov_R.mean()),
            "frequency_1p5R": float(cov_big.mean()),
            "radius_monotone": bool(np.all(cov_big <= cov_R)),
        })
    freqs = [r["frequency"] for r in rungs]
    flags = {
        "frequency_nondecreasing": all(b >= a for a, b in zip(freqs, freqs[1:])),
        "top_frequency": freqs[-1],
        "radius_monotone_all": all(r["radius_monotone"] for r in rungs),
    }
    return ExperimentReport(kind="core", rungs=rungs, flags=flags,
                            seed_audit=_seed_audit(cfg),
                            runtime_seconds=time.perf_counter() - started)


# ---------------------------------------------------------------------------
# annuli census experiment
# ---------------------------------------------------------------------------

def run_annuli_census_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Layered census: counts of each complete shape per Poisson-layer annulus."""
    from .counting import annuli_census
    from .densities import poisson_layer_radius

    started = time.perf_counter()
    density = cfg.density
    kmax = cfg.kmax_census
    if kmax < 2:
        raise ExperimentError("census needs kmax >= 2")
    shapes = {}
    for j in range(2, kmax + 1):
        atlas = build_atlas(j)
        shapes[j] = atlas.classes[-1]   # complete graph on j vertices
    rungs = []
    for rung_idx, n in enumerate(cfg.n_ladder):
        ladder = np.array([poisson_layer_radius(density, n, j)
                           for j in range(kmax, 1, -1)])

        def work(rep, rng, _n=n, _ladder=ladder):
            cloud = sample_poisson_cloud(_n, density, rng,
                                         exterior_radius=float(_ladder[0]), seed=rep)
            return annuli_census(cloud, shapes, _ladder, cfg.t_ref)["counts"]

        tables = np.array(_run_replications(cfg, rung_idx, work), dtype=float)
        mean_table = tables.mean(axis=0)
        rungs.append({"n": n, "ladder": ladder, "mean_counts": mean_table,
                      "total": float(mean_table.sum())})

    # trend summaries: for shape j (row j-2), its own annulus starts at
    # column kmax - j; cells to the right are beyond the next layer radius
    trends = {}
    for j in range(2, kmax + 1):
        row = j - 2
        own_col = kmax - j
        own = [float(r["mean_counts"][row, own_col:].sum()) for r in rungs]
        beyond = [float(r["mean_counts"][row, own_col + 1:].sum()) if own_col + 1
                  <= kmax - 2 else 0.0 for r in rungs]
        trends[j] = {"beyond_own_layer": own, "beyond_next_layer": beyond}
    flags = {"all_nonnegative": all(np.all(r["mean_counts"] >= 0) for r in rungs)}
    return ExperimentReport(kind="annuli_census", rungs=rungs, flags=flags,
                            seed_audit=_seed_audit(cfg),
                            runtime_seconds=time.perf_counter() - started,
                            tables={"trends": trends, "shapes": shapes})


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_report(report: ExperimentReport, out_dir: Path) -> dict:
    """Persist raw tables, summaries, and the structured text report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}

    if report.kind == "clt":
        raw = out_dir / "raw_curves.csv"
        with open(raw, "w") as fh:
            fh.write("n,seed,t,count_h,count_plus,count_minus\n")
            for n, rep, h, p, m in report.tables["raw_rows"]:
                grid = report.oracle.t_grid
                for j, t in enumerate(grid):
                    fh.write(f"{_fmt(n)},{rep},{_fmt(float(t))},{h[j]},{p[j]},{m[j]}\n")
        files["raw_curves"] = raw
        ratio = out_dir / "covariance_ratio.csv"
        with open(ratio, "w") as fh:
            fh.write("n,t,s,cov_scaled,oracle,ratio,ratio_se\n")
            grid = report.oracle.t_grid
            for rung in report.rungs:
                for i, t in enumerate(grid):
                    for j, s in enumerate(grid):
                        fh.write(
                            f"{_fmt(rung['n'])},{_fmt(float(t))},{_fmt(float(s))},"
                            f"{_fmt(float(rung['cov_scaled'][i, j]))},"
                            f"{_fmt(float(report.oracle.matrix[i, j]))},"
                            f"{_fmt(float(rung['ratio'][i, j]))},"
                            f"{_fmt(float(rung['ratio_se'][i, j]))}\n")
        files["covariance_ratio"] = ratio
        oracle_path = out_dir / "oracle_covariance.csv"
        write_covariance_csv(report.oracle, oracle_path)
        files["oracle_covariance"] = oracle_path
    elif report.kind == "poisson_layer":
        raw = out_dir / "layer_counts.csv"
        with open(raw, "w") as fh:
            fh.write("n,seed,count\n")
            for rung in report.rungs:
                for rep, c in enumerate(rung["counts"]):
                    fh.write(f"{_fmt(rung['n'])},{rep},{int(c)}\n")
        files["layer_counts"] = raw
    elif report.kind == "annuli_census":
        census = out_dir / "census.csv"
        with open(census, "w") as fh:
            fh.write("n,shape_k,annulus_index,annulus_lo,mean_count\n")
            for rung in report.rungs:
                ladder = rung["ladder"]
                table = rung["mean_counts"]
                ks = sorted(report.tables["shapes"])
                for row, kk in enumerate(ks):
                    for col in range(table.shape[1]):
                        fh.write(f"{_fmt(rung['n'])},{kk},{col},"
                                 f"{_fmt(float(ladder[col]))},"
                                 f"{_fmt(float(table[row, col]))}\n")
        files["census"] = census

    summary = out_dir / "summary.csv"
    with open(summary, "w") as fh:
        keys = sorted({k for rung in report.rungs for k, v in rung.items()
                       if np.isscalar(v) or isinstance(v, (bool, int, float, str))})
        fh.write(",".join(keys) + "\n")
        for rung in report.rungs:
            fh.write(",".join(_fmt(rung.get(k, "")) for k in keys) + "\n")
    files["summary"] = summary

    # runtime is deliberately absent from every artifact: outputs must be
    # byte-identical across worker counts for a fixed seed
    text = out_dir / "report.txt"
    with open(text, "w") as fh:
        fh.write(f"experiment: {report.kind}\n")
        for key, val in report.seed_audit.items():
            fh.write(f"seed_audit.{key}: {val}\n")
        for key, val in report.flags.items():
            fh.write(f"flag.{key}: {_fmt(val)}\n")
    files["report"] = text

    manifest = {
        "kind": report.kind,
        "artifacts": {
            name: {
                "path": str(path.name),
                "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
            } for name, path in files.items()
        },
        "flags": {k: (v if not isinstance(v, (np.bool_, np.floating)) else
                      (bool(v) if isinstance(v, np.bool_) else float(v)))
                  for k, v in report.flags.items()
                  if isinstance(v, (bool, int, float, str, np.bool_, np.floating))},
        "seed_audit": report.seed_audit,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                        default=str) + "\n")
    files["manifest"] = manifest_path
    return files


def write_covariance_csv(cov: LimitCovariance, path: Path) -> None:
    """Matrix and SEs as CSV rows with a provenance header."""
    with open(path, "w") as fh:
        prov = {k: v for k, v in cov.provenance.items() if k != "terms"}
        fh.write(f"# provenance: {json.dumps(prov, sort_keys=True, default=str)}\n")
        fh.write("t,s,value,std_err\n")
        for i, t in enumerate(cov.t_grid):
            for j, s in enumerate(cov.t_grid):
                fh.write(f"{_fmt(float(t))},{_fmt(float(s))},"
                         f"{_fmt(float(cov.matrix[i, j]))},"
                         f"{_fmt(float(cov.std_err[i, j]))}\n")
