"""Second-moment distance, weak-spherical-symmetry estimation, and the
random-matrix propagation checks.

A random matrix A is delta-spherically symmetric when every rank-one second
moment E[(u^T A v)^2] moves by at most delta under two-sided orthogonal
transformations.  Since Q1 u and Q2 v sweep all unit vectors, that supremum
equals the full range (max - min) of the rank-one form over unit pairs, so
the estimator here is: build the empirical second-moment operator
K = E[vec(A) vec(A)^T], find the extrema of (v (x) u)^T K (v (x) u) by
alternating eigen-iteration with restarts, and report max - min.

Monte Carlo verdicts carry explicit 3-sigma margins (plug-in variance);
pass/fail is always `statistic <= bound + margin`.

Seeded-parallel contract: worker w of W draws from
``numpy.random.default_rng(SeedSequence(entropy=seed, spawn_key=(w,)))``
and worker blocks are concatenated in worker order, so results are
reproducible for a fixed (seed, worker-count) pair.  Other modules reuse
this rule via :func:`worker_rngs`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError
from .svd import jacobi_svd

PSD_TOL = -1e-8
SYM_TOL = 1e-10


def worker_rngs(seed, workers: int) -> list[np.random.Generator]:
    """Independent per-worker generators derived from one base seed.

    `seed` may be an int or a tuple of ints (a derived stream label).
    """
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    return [
        np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(w,)))
        for w in range(workers)
    ]


def split_count(total: int, workers: int) -> list[int]:
    base, extra = divmod(total, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


@dataclass(frozen=True)
class MatrixEnsemble:
    """Seeded sampler of n x m random matrices.

    ``sample_block(rng, count)`` must return a (count, n, m) array and draw
    from `rng` only, so that one seed reproduces one sample sequence.
    """

    n: int
    m: int
    sample_block: Callable[[np.random.Generator, int], np.ndarray]
    name: str = ""
    declared_delta: float | None = None

    def sample(self, count: int, seed: int, workers: int = 1) -> np.ndarray:
        if count < 1:
            raise ValidationError("count must be >= 1")
        blocks = []
        for rng, share in zip(worker_rngs(seed, workers), split_count(count, workers)):
            if share == 0:
                continue
            block = np.asarray(self.sample_block(rng, share), dtype=float)
            if block.shape != (share, self.n, self.m):
                raise ValidationError(
                    f"sampler for {self.name!r} returned shape {block.shape}, "
                    f"expected ({share}, {self.n}, {self.m})"
                )
            blocks.append(block)
        return np.concatenate(blocks, axis=0)


def gaussian_iid(n: int, m: int, scale: float = 1.0) -> MatrixEnsemble:
    return MatrixEnsemble(
        n, m, lambda rng, c: scale * rng.standard_normal((c, n, m)),
        name=f"gaussian_iid({n}x{m}, scale={scale})",
    )


def entry_variances(variances: np.ndarray) -> MatrixEnsemble:
    """Independent zero-mean Gaussian entries with per-entry variances."""
    v = np.asarray(variances, dtype=float)
    if np.any(v < 0):
        raise ValidationError("variances must be nonnegative")
    sd = np.sqrt(v)
    n, m = v.shape
    return MatrixEnsemble(
        n, m, lambda rng, c: sd[None, :, :] * rng.standard_normal((c, n, m)),
        name=f"entry_variances({n}x{m})",
        declared_delta=float(v.max() - v.min()),
    )


def variance_bump(n: int, m: int, sigma2: float) -> MatrixEnsemble:
    """Unit-variance iid Gaussian entries except entry (0, 0) with variance
    sigma2; the canonical weakly-but-not-exactly symmetric ensemble."""
    v = np.ones((n, m))
    v[0, 0] = sigma2
    ens = entry_variances(v)
    return MatrixEnsemble(
        n, m, ens.sample_block,
        name=f"variance_bump({n}x{m}, sigma2={sigma2})",
        declared_delta=abs(sigma2 - 1.0),
    )


def constant(matrix: np.ndarray) -> MatrixEnsemble:
    a = np.asarray(matrix, dtype=float)
    return MatrixEnsemble(
        a.shape[0], a.shape[1],
        lambda rng, c: np.broadcast_to(a, (c,) + a.shape).copy(),
        name="constant", declared_delta=None,
    )


def scaled_rank_one(u: np.ndarray, v: np.ndarray) -> MatrixEnsemble:
    """A = g * u v^T with scalar g ~ N(0, 1): maximally correlated entries."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    outer = np.outer(u, v)
    return MatrixEnsemble(
        u.size, v.size,
        lambda rng, c: rng.standard_normal(c)[:, None, None] * outer,
        name="scaled_rank_one",
    )


def conjugated(ens: MatrixEnsemble, q1: np.ndarray, q2: np.ndarray) -> MatrixEnsemble:
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    return MatrixEnsemble(
        ens.n, ens.m,
        lambda rng, c: np.einsum(
            "ab,sbk,km->sam", q1.T, ens.sample_block(rng, c), q2
        ),
        name=f"conjugated({ens.name})", declared_delta=ens.declared_delta,
    )


def scaled(ens: MatrixEnsemble, c: float) -> MatrixEnsemble:
    return MatrixEnsemble(
        ens.n, ens.m,
        lambda rng, count: c * ens.sample_block(rng, count),
        name=f"scaled({ens.name}, {c})",
    )


def pushed(ens: MatrixEnsemble, b: np.ndarray) -> MatrixEnsemble:
    """Left-multiplied ensemble {B A}."""
    b = np.asarray(b, dtype=float)
    if b.shape[1] != ens.n:
        raise ValidationError(f"B shape {b.shape} does not match ensemble n={ens.n}")
    return MatrixEnsemble(
        b.shape[0], ens.m,
        lambda rng, c: np.einsum("ab,sbm->sam", b, ens.sample_block(rng, c)),
        name=f"pushed({ens.name})",
    )


def _vec_blocks(samples: np.ndarray) -> np.ndarray:
    """Column-major vec of each sample: vec(A)[j*n + i] = A[i, j]."""
    count, n, m = samples.shape
    return samples.transpose(0, 2, 1).reshape(count, n * m)


@dataclass(frozen=True)
class SecondMomentForm:
    """Empirical second-moment operator K = E[vec(A) vec(A)^T]."""

    k: np.ndarray
    sample_count: int
    dims: tuple[int, int]

    def __post_init__(self):
        k = np.array(self.k, dtype=float)
        n, m = self.dims
        if k.shape != (n * m, n * m):
            raise ValidationError(f"K shape {k.shape} does not match dims {self.dims}")
        if np.max(np.abs(k - k.T)) > SYM_TOL * max(1.0, float(np.abs(k).max())):
            raise ValidationError("second-moment operator not symmetric")
        eigs = np.linalg.eigvalsh((k + k.T) / 2.0)
        if eigs[0] < PSD_TOL * max(1.0, float(eigs[-1])):
            raise ValidationError(f"second-moment operator not PSD: {eigs[0]!r}")
        if self.sample_count < 2:
            raise ValidationError("sample_count must be >= 2")
        k.setflags(write=False)
        object.__setattr__(self, "k", k)

    @property
    def trace(self) -> float:
        """Estimate of E ||A||_F^2."""
        return float(np.trace(self.k))

    def evaluate(self, u: np.ndarray, v: np.ndarray) -> float:
        """Rank-one second moment m(u, v) = (v (x) u)^T K (v (x) u)."""
        w = np.kron(np.asarray(v, float), np.asarray(u, float))
        return float(w @ self.k @ w)


def second_moment_form(
    ens: MatrixEnsemble, samples: int, *, seed: int = 0, workers: int = 1
) -> SecondMomentForm:
    if samples < 2:
        raise ValidationError("need at least 2 samples")
    block = ens.sample(samples, seed=seed, workers=workers)
    vec = _vec_blocks(block)
    k = vec.T @ vec / samples
    k = (k + k.T) / 2.0
    return SecondMomentForm(k=k, sample_count=samples, dims=(ens.n, ens.m))


@dataclass(frozen=True)
class RankOneRange:
    min_val: float
    max_val: float
    argmin: tuple[np.ndarray, np.ndarray]
    argmax: tuple[np.ndarray, np.ndarray]
    unconverged: bool

    @property
    def spread(self) -> float:
        return self.max_val - self.min_val


def _extremize(
    k4: np.ndarray, u0: np.ndarray, v0: np.ndarray,
    largest: bool, max_iter: int, tol: float,
) -> tuple[float, np.ndarray, np.ndarray, bool]:
    u, v = u0.copy(), v0.copy()
    pick = -1 if largest else 0
    obj = None
    for _ in range(max_iter):
        mu = np.einsum("j,l,ijkl->ik", v, v, k4)
        mu = (mu + mu.T) / 2.0
        w, q = np.linalg.eigh(mu)
        u = q[:, pick]
        nv = np.einsum("i,k,ijkl->jl", u, u, k4)
        nv = (nv + nv.T) / 2.0
        w, q = np.linalg.eigh(nv)
        v = q[:, pick]
        new_obj = float(w[pick])
        if obj is not None and abs(new_obj - obj) <= tol * max(1.0, abs(new_obj)):
            return new_obj, u, v, True
        obj = new_obj
    return obj, u, v, False


def rank_one_range(
    form: SecondMomentForm,
    *,
    restarts: int = 16,
    max_iter: int = 200,
    tol: float = 1e-12,
    seed: int = 0,
) -> RankOneRange:
    """Extrema of the rank-one second moment over unit vector pairs.

    Alternating eigen-iteration is monotone for each fixed side but the
    joint problem is non-convex; seeded random restarts plus deterministic
    canonical starts at the extreme diagonal entries of K guard against
    local extrema.
    """
    n, m = form.dims
    k4 = form.k.reshape((n, m, n, m), order="F")
    diag = np.diag(form.k)
    starts: list[tuple[np.ndarray, np.ndarray]] = []
    for pos in (int(np.argmax(diag)), int(np.argmin(diag))):
        i, j = pos % n, pos // n
        starts.append((np.eye(n)[:, i], np.eye(m)[:, j]))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(97,)))
    for _ in range(restarts):
        u = rng.standard_normal(n)
        v = rng.standard_normal(m)
        starts.append((u / np.linalg.norm(u), v / np.linalg.norm(v)))

    best = {True: (-np.inf, None, None, True), False: (np.inf, None, None, True)}
    for largest in (True, False):
        for u0, v0 in starts:
            val, u, v, ok = _extremize(k4, u0, v0, largest, max_iter, tol)
            cur = best[largest]
            if (largest and val > cur[0]) or (not largest and val < cur[0]):
                best[largest] = (val, u, v, ok)
    max_val, umax, vmax, ok_max = best[True]
    min_val, umin, vmin, ok_min = best[False]
    return RankOneRange(
        min_val=min_val,
        max_val=max_val,
        argmin=(umin, vmin),
        argmax=(umax, vmax),
        unconverged=not (ok_max and ok_min),
    )


@dataclass(frozen=True)
class DeltaReport:
    delta: float
    stderr: float
    min_val: float
    max_val: float
    range_result: RankOneRange
    sample_count: int


def delta_report(
    ens: MatrixEnsemble,
    samples: int,
    *,
    seed: int = 0,
    workers: int = 1,
    restarts: int = 16,
) -> DeltaReport:
    """Estimate the symmetry deviation delta with a sampling error bar.

    The stderr combines plug-in standard errors of the rank-one moments at
    the located argmin and argmax directions, evaluated on the same sample
    stream that built the form.
    """
    block = ens.sample(samples, seed=seed, workers=workers)
    vec = _vec_blocks(block)
    k = vec.T @ vec / samples
    form = SecondMomentForm(k=(k + k.T) / 2.0, sample_count=samples, dims=(ens.n, ens.m))
    rng_range = rank_one_range(form, restarts=restarts)
    ses = []
    for u, v in (rng_range.argmin, rng_range.argmax):
        w = np.kron(v, u)
        per_sample = (vec @ w) ** 2
        ses.append(float(per_sample.std(ddof=1)) / np.sqrt(samples))
    return DeltaReport(
        delta=rng_range.spread,
        stderr=float(np.hypot(ses[0], ses[1])),
        min_val=rng_range.min_val,
        max_val=rng_range.max_val,
        range_result=rng_range,
        sample_count=samples,
    )


def delta_estimate(
    ens: MatrixEnsemble, samples: int, *, seed: int = 0, workers: int = 1
) -> float:
    """Point estimate of the symmetry deviation (max - min rank-one moment)."""
    return delta_report(ens, samples, seed=seed, workers=workers).delta


@dataclass(frozen=True)
class MomentSymmetryReport:
    """First/second-moment symptoms of exact spherical symmetry.

    For an exactly spherically symmetric ensemble all three statistics are
    zero: entries have zero mean, identical second moments, and vanishing
    cross-covariances.  Bars are 3-sigma plug-in standard errors at the
    achieving entries.
    """

    mean_norm: float
    mean_norm_bar: float
    max_moment_spread: float
    max_moment_spread_bar: float
    max_cross_covariance: float
    max_cross_covariance_bar: float
    sample_count: int


def moment_symmetry_report(
    ens: MatrixEnsemble, samples: int, *, seed: int = 0, workers: int = 1
) -> MomentSymmetryReport:
    if samples < 2:
        raise ValidationError("need at least 2 samples")
    block = ens.sample(samples, seed=seed, workers=workers)
    vec = _vec_blocks(block)
    mean = vec.mean(axis=0)
    se_mean = vec.std(axis=0, ddof=1) / np.sqrt(samples)
    i_mean = int(np.argmax(np.abs(mean)))

    sq = vec**2
    second = sq.mean(axis=0)
    se_second = sq.std(axis=0, ddof=1) / np.sqrt(samples)
    i_hi, i_lo = int(np.argmax(second)), int(np.argmin(second))

    k = vec.T @ vec / samples
    k2 = sq.T @ sq / samples
    cov = k - np.outer(mean, mean)
    var_prod = np.maximum(k2 - k**2, 0.0)
    se_prod = np.sqrt(var_prod / samples)
    off = ~np.eye(cov.shape[0], dtype=bool)
    flat = int(np.argmax(np.abs(cov[off])))
    idx = np.argwhere(off)[flat]

    return MomentSymmetryReport(
        mean_norm=float(np.abs(mean).max()),
        mean_norm_bar=3.0 * float(se_mean[i_mean]),
        max_moment_spread=float(second[i_hi] - second[i_lo]),
        max_moment_spread_bar=3.0 * float(se_second[i_hi] + se_second[i_lo]),
        max_cross_covariance=float(np.abs(cov[off]).max()),
        max_cross_covariance_bar=3.0 * float(se_prod[idx[0], idx[1]]),
        sample_count=samples,
    )


@dataclass(frozen=True)
class ProjectionBoundResult:
    lhs: float
    bound: float
    margin: float
    passed: bool
    sample_count: int


def projection_bound_check(
    ens: MatrixEnsemble,
    g: np.ndarray,
    h: np.ndarray,
    delta: float,
    samples: int,
    *,
    seed: int = 0,
    workers: int = 1,
) -> ProjectionBoundResult:
    """Monte Carlo check of |E||G^T A H||^2 - c E||A||^2| <= 2||G||^2||H||^2 delta.

    c = ||G||^2 ||H||^2 / (mn); the margin is 3 sigma of the estimated
    difference statistic.
    """
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if g.ndim != 2 or h.ndim != 2 or g.shape[0] != ens.n or h.shape[0] != ens.m:
        raise ValidationError(
            f"G {g.shape} / H {h.shape} incompatible with ensemble "
            f"({ens.n}, {ens.m})"
        )
    block = ens.sample(samples, seed=seed, workers=workers)
    proj = np.einsum("ia,sij,jb->sab", g, block, h)
    s = (proj**2).sum(axis=(1, 2))
    t = (block**2).sum(axis=(1, 2))
    g2 = float((g**2).sum())
    h2 = float((h**2).sum())
    c = g2 * h2 / (ens.m * ens.n)
    d = s - c * t
    lhs = abs(float(d.mean()))
    margin = 3.0 * float(d.std(ddof=1)) / np.sqrt(samples)
    bound = 2.0 * g2 * h2 * delta
    return ProjectionBoundResult(
        lhs=lhs, bound=bound, margin=margin,
        passed=lhs <= bound + margin, sample_count=samples,
    )


def pushed_delta_bound(b: np.ndarray, delta: float, alpha: float) -> float:
    """Symmetry deviation bound for {B A}: (alpha+delta)(s1^2-sn^2) + s1^2 delta."""
    b = np.asarray(b, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValidationError(f"B must be square, got {b.shape}")
    if delta < 0 or alpha < 0:
        raise ValidationError("delta and alpha must be >= 0")
    s = jacobi_svd(b).s
    s1, sn = float(s[0]), float(s[-1])
    return (alpha + delta) * (s1**2 - sn**2) + s1**2 * delta


@dataclass(frozen=True)
class PropagationResult:
    delta_in: float
    alpha: float
    delta_bound: float
    delta_out: float
    margin: float
    passed: bool


def propagation_check(
    ens: MatrixEnsemble,
    b: np.ndarray,
    samples: int,
    *,
    seed: int = 0,
    workers: int = 1,
) -> PropagationResult:
    """Verify delta(BA) <= gamma(B, delta(A), alpha) within 3-sigma margins.

    The pushed ensemble reuses the same seed, so it sees exactly {B A_i}
    for the same draws A_i that produced delta_in.
    """
    b = np.asarray(b, dtype=float)
    rep_in = delta_report(ens, samples, seed=seed, workers=workers)
    block = ens.sample(samples, seed=seed, workers=workers)
    norms = (block**2).sum(axis=(1, 2)) / (ens.n * ens.m)
    alpha = float(norms.mean())
    se_alpha = float(norms.std(ddof=1)) / np.sqrt(samples)
    rep_out = delta_report(pushed(ens, b), samples, seed=seed, workers=workers)

    s = jacobi_svd(b).s
    spread2 = float(s[0] ** 2 - s[-1] ** 2)
    dg_ddelta = spread2 + float(s[0] ** 2)
    gamma = pushed_delta_bound(b, rep_in.delta, alpha)
    margin = 3.0 * float(
        np.sqrt(
            rep_out.stderr**2
            + (dg_ddelta * rep_in.stderr) ** 2
            + (spread2 * se_alpha) ** 2
        )
    )
    return PropagationResult(
        delta_in=rep_in.delta,
        alpha=alpha,
        delta_bound=gamma,
        delta_out=rep_out.delta,
        margin=margin,
        passed=rep_out.delta <= gamma + margin,
    )
