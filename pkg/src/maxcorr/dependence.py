"""Canonical dependence matrix, its SVD, and the feature-selection rule.

The canonical dependence matrix of a joint distribution,

    b[j, i] = (P(x_i, y_j) - P(x_i) P(y_j)) / sqrt(P(x_i) P(y_j)),

annihilates the sqrt-marginal directions on both sides, and its singular
values are the maximal-correlation coefficients of the pair.  The top-k
right/left singular vectors, divided entrywise by the sqrt-marginals,
are the optimal feature functions over X and Y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import FeatureSet
from .model import Channel, JointPmf, Pmf
from .svd import SvdResult, jacobi_svd

NULL_TOL = 1e-10
ZERO_SIGMA = 1e-10
DEGENERATE_GAP = 1e-9


@dataclass(frozen=True)
class CdmMatrix:
    """Centered, sqrt-normalized joint table with its cached SVD."""

    b: np.ndarray  # |Y| x |X|
    px: Pmf
    py: Pmf
    svd: SvdResult = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        rx = np.sqrt(self.px.probs)
        ry = np.sqrt(self.py.probs)
        if b.shape != (self.py.size, self.px.size):
            raise ValidationError(f"b shape {b.shape} does not match marginals")
        if np.max(np.abs(b @ rx)) > NULL_TOL:
            raise ValidationError("b does not annihilate sqrt(P_X)")
        if np.max(np.abs(b.T @ ry)) > NULL_TOL:
            raise ValidationError("b^T does not annihilate sqrt(P_Y)")
        res = jacobi_svd(b)
        if res.s.size and (res.s[0] > 1.0 + NULL_TOL or res.s[-1] < -NULL_TOL):
            raise ValidationError(
                f"singular values outside [0, 1]: top={res.s[0]!r}"
            )
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "svd", res)

    @property
    def sigmas(self) -> np.ndarray:
        return self.svd.s

    def degenerate_groups(self, k: int | None = None) -> tuple[tuple[int, ...], ...]:
        """Index groups of numerically repeated singular values.

        Only groups of size >= 2 that intersect the first k indices are
        reported (all of them when k is None).
        """
        s = self.svd.s
        groups: list[tuple[int, ...]] = []
        start = 0
        for i in range(1, s.size + 1):
            if i == s.size or abs(s[i] - s[i - 1]) > DEGENERATE_GAP * max(1.0, s[0]):
                if i - start >= 2:
                    groups.append(tuple(range(start, i)))
                start = i
        if k is not None:
            groups = [g for g in groups if g[0] < k]
        return tuple(groups)


def canonical_dependence_matrix(joint: JointPmf, smoothing: float = 0.0) -> CdmMatrix:
    """Centered, sqrt-normalized dependence matrix of a joint.

    Empirical joints may carry zero cells; `smoothing` adds that constant
    to every cell (then renormalizes) before the construction.  The default
    of 0 surfaces positivity violations instead of hiding them.
    """
    joint = joint.smoothed(smoothing)
    px = joint.marginal_x()
    py = joint.marginal_y()
    for pmf, name in ((px, "x"), (py, "y")):
        if float(pmf.probs.min()) <= 0.0:
            z = pmf.labels[int(np.argmin(pmf.probs))]
            raise ValidationError(f"{name}-marginal of symbol {z!r} is zero")
    rx = np.sqrt(px.probs)
    ry = np.sqrt(py.probs)
    b = (joint.probs - np.outer(py.probs, px.probs)) / np.outer(ry, rx)
    return CdmMatrix(b=b, px=px, py=py)


@dataclass(frozen=True)
class UncenteredB:
    """Uncentered dependence matrix of (input, output) under a channel.

    b = D_out^{-1/2} P(out|in) D_in^{1/2}; the top singular value is 1,
    achieved by the sqrt-marginal pair.
    """

    b: np.ndarray
    p_in: Pmf
    p_out: Pmf
    svd: SvdResult = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        res = jacobi_svd(b)
        if abs(res.s[0] - 1.0) > NULL_TOL:
            raise ValidationError(f"top singular value {res.s[0]!r} is not 1")
        if res.s[-1] < -NULL_TOL:
            raise ValidationError("negative singular value")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "svd", res)

    @property
    def sigmas(self) -> np.ndarray:
        return self.svd.s

    def spectral_spread(self) -> float:
        """sigma_max^2 - sigma_min^2; O(eta) for P = I + eta*T channels."""
        s = self.svd.s
        return float(s[0] ** 2 - s[-1] ** 2)


def uncentered_b(chan: Channel, input_pmf: Pmf) -> UncenteredB:
    input_pmf.require_positive()
    out = chan.apply(input_pmf)
    out.require_positive()
    b = (chan.P * np.sqrt(input_pmf.probs)[None, :]) / np.sqrt(out.probs)[:, None]
    return UncenteredB(b=b, p_in=input_pmf, p_out=out)


def _deflate_root(vec: np.ndarray, root: np.ndarray) -> np.ndarray:
    """Remove any sqrt-marginal component and renormalize."""
    v = vec - float(root @ vec) * root
    norm = float(np.linalg.norm(v))
    if norm <= 0.5:
        raise ValidationError("feature direction collapsed onto sqrt-marginal")
    return v / norm


def _feature_directions(
    res: SvdResult, vectors: np.ndarray, k: int, root: np.ndarray
) -> tuple[np.ndarray, tuple[int, ...]]:
    """Top-k singular vectors, kept orthogonal to the sqrt-marginal.

    Vectors paired with zero singular values live in a null space that
    also contains the sqrt-marginal; those are re-orthogonalized against
    it (and each other) deterministically, scanning the remaining null
    vectors and canonical basis vectors as fallback candidates.
    """
    n = vectors.shape[0]
    zero = res.s <= ZERO_SIGMA
    cols: list[np.ndarray] = []
    zero_idx: list[int] = []
    for j in range(k):
        if not zero[j]:
            cols.append(_deflate_root(vectors[:, j], root))
        else:
            cols.append(None)
            zero_idx.append(j)
    if zero_idx:
        fixed = [root] + [c for c in cols if c is not None]
        candidates = [vectors[:, j] for j in range(vectors.shape[1]) if zero[j]]
        candidates += [np.eye(n)[:, e] for e in range(n)]
        for j in zero_idx:
            for cand in candidates:
                v = cand.copy()
                for q in fixed:
                    v -= float(q @ v) * q
                norm = float(np.linalg.norm(v))
                if norm > 1e-6:
                    v /= norm
                    cols[j] = v
                    fixed.append(v)
                    break
            else:
                raise ValidationError("cannot complete zero-sigma feature basis")
    return np.column_stack(cols), tuple(zero_idx)


def select_features(
    joint: JointPmf, k: int, smoothing: float = 0.0
) -> tuple[FeatureSet, FeatureSet]:
    """Top-k SVD features (f over X, g over Y) of the dependence matrix.

    f_i(x) = v_i(x) / sqrt(P_X(x)) and g_i(y) = u_i(y) / sqrt(P_Y(y)) for
    the i-th right/left singular vector pair.  Requests that reach into a
    degenerate or zero part of the spectrum succeed but are flagged on the
    returned feature sets.
    """
    k_max = min(len(joint.x_labels), len(joint.y_labels)) - 1
    if not 1 <= k <= k_max:
        raise ValidationError(f"k={k} outside valid range 1..{k_max}")
    cdm = canonical_dependence_matrix(joint, smoothing)
    groups = cdm.degenerate_groups(k)
    rx = np.sqrt(cdm.px.probs)
    ry = np.sqrt(cdm.py.probs)
    v_cols, zero_idx = _feature_directions(cdm.svd, cdm.svd.v, k, rx)
    u_cols, _ = _feature_directions(cdm.svd, cdm.svd.u, k, ry)
    f = FeatureSet(
        h=v_cols / rx[:, None], base=cdm.px,
        degenerate_groups=groups, zero_indices=zero_idx,
    )
    g = FeatureSet(
        h=u_cols / ry[:, None], base=cdm.py,
        degenerate_groups=groups, zero_indices=zero_idx,
    )
    return f, g


def hgr_profile(joint: JointPmf, smoothing: float = 0.0) -> np.ndarray:
    """Full singular-value spectrum of the canonical dependence matrix."""
    return canonical_dependence_matrix(joint, smoothing).sigmas.copy()
