"""Local information geometry: attribute configurations, information
matrices, and normalized feature functions.

An epsilon-attribute W of Z is a latent variable whose conditionals
P(Z|W=w) all lie in the chi-square ball of radius epsilon around the base
distribution.  The information matrix collects the normalized deviation
vectors phi_w(z) = (P(z|w) - P(z)) / (eps * sqrt(P(z))); a conditional on
the ball boundary has a unit-norm column.

Configurations additionally enforce marginal consistency
(sum_w P(w) P(z|w) = P(z)) by default: a latent attribute of Z must
reproduce the declared base.  Pass ``unconstrained=True`` to drop that
check when exercising the matrix-level machinery in isolation.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AlphabetMismatchError,
    FeasibilityError,
    RankDeficiencyError,
    ValidationError,
)
from .model import FLOAT_FMT, Pmf, _check_labels, _fmt_row, _freeze
from .svd import canonical_sign

NULL_TOL = 1e-10
ORTHO_TOL = 1e-8
BALL_SLACK = 1e-9
RANK_TOL = 1e-10


def chi2_divergence(p: Pmf, ref: Pmf) -> float:
    """Pearson chi-square statistic sum_z (p(z) - ref(z))^2 / ref(z)."""
    if p.labels != ref.labels:
        raise AlphabetMismatchError(
            f"alphabets differ: {p.labels} vs {ref.labels}"
        )
    ref.require_positive()
    d = p.probs - ref.probs
    return float(np.sum(d * d / ref.probs))


def in_epsilon_ball(p: Pmf, ref: Pmf, epsilon: float) -> bool:
    return chi2_divergence(p, ref) <= epsilon * epsilon


def _chi2_columns(cond: np.ndarray, base: np.ndarray) -> np.ndarray:
    d = cond - base[:, None]
    return (d * d / base[:, None]).sum(axis=0)


@dataclass(frozen=True)
class Configuration:
    """An epsilon-attribute of Z: prior over W plus per-w conditionals."""

    base: Pmf
    w_labels: tuple[str, ...]
    prior: Pmf
    conditionals: np.ndarray  # |Z| x |W|, column w = P(Z | W=w)
    epsilon: float
    unconstrained: bool = False

    def __post_init__(self):
        object.__setattr__(self, "w_labels", _check_labels(self.w_labels))
        if self.prior.labels != self.w_labels:
            raise AlphabetMismatchError("prior labels do not match w_labels")
        self.base.require_positive()
        self.prior.require_positive()
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")
        cond = _freeze(self.conditionals)
        nz, nw = self.base.size, len(self.w_labels)
        if cond.shape != (nz, nw):
            raise ValidationError(
                f"conditionals shape {cond.shape}, expected ({nz}, {nw})"
            )
        if np.any(cond < 0):
            raise ValidationError("negative conditional probability")
        col_err = np.max(np.abs(cond.sum(axis=0) - 1.0))
        if col_err > 1e-12:
            raise ValidationError(f"conditional columns off by {col_err:g}")
        chi2 = _chi2_columns(cond, self.base.probs)
        limit = self.epsilon**2 * (1.0 + BALL_SLACK) + 1e-15
        if np.any(chi2 > limit):
            w = self.w_labels[int(np.argmax(chi2))]
            raise ValidationError(
                f"conditional for w={w!r} outside the epsilon-ball: "
                f"chi2={chi2.max():.6g} > eps^2={self.epsilon**2:.6g}"
            )
        if not self.unconstrained:
            mix = cond @ self.prior.probs
            err = np.max(np.abs(mix - self.base.probs))
            if err > NULL_TOL:
                raise ValidationError(
                    f"prior-weighted conditionals miss the base by {err:g}"
                )
        object.__setattr__(self, "conditionals", cond)

    @property
    def n_attributes(self) -> int:
        return len(self.w_labels)

    def conditional(self, w: str) -> Pmf:
        return Pmf(self.base.labels, self.conditionals[:, self.w_labels.index(w)])


@dataclass(frozen=True)
class InformationMatrix:
    """Columns are information vectors of a configuration's conditionals."""

    phi: np.ndarray  # |Z| x |W|
    epsilon: float
    base: Pmf

    def __post_init__(self):
        phi = _freeze(self.phi)
        if phi.ndim != 2 or phi.shape[0] != self.base.size:
            raise ValidationError(f"phi shape {phi.shape} does not match base")
        norms = np.linalg.norm(phi, axis=0)
        if np.any(norms > 1.0 + NULL_TOL):
            raise ValidationError(
                f"information column norm {norms.max():.12g} exceeds 1"
            )
        root = np.sqrt(self.base.probs)
        overlap = np.max(np.abs(root @ phi)) if phi.size else 0.0
        if overlap > NULL_TOL:
            raise ValidationError(
                f"columns not orthogonal to sqrt(base): overlap {overlap:g}"
            )
        object.__setattr__(self, "phi", phi)

    @property
    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.phi, axis=0)


def information_matrix(config: Configuration) -> InformationMatrix:
    """phi[i, j] = (P(z_i | w_j) - P(z_i)) / (eps * sqrt(P(z_i)))."""
    base = config.base.probs
    phi = (config.conditionals - base[:, None]) / (
        config.epsilon * np.sqrt(base)[:, None]
    )
    return InformationMatrix(phi=phi, epsilon=config.epsilon, base=config.base)


def max_feasible_epsilon(base: Pmf, phi: np.ndarray) -> float:
    """Largest eps keeping P(z) + eps*sqrt(P(z))*phi inside [0, 1] entrywise."""
    step = np.sqrt(base.probs)[:, None] * np.asarray(phi, dtype=float)
    p = np.broadcast_to(base.probs[:, None], step.shape)
    bound = np.inf
    neg = step < 0
    if np.any(neg):
        bound = min(bound, float(np.min(p[neg] / -step[neg])))
    pos = step > 0
    if np.any(pos):
        bound = min(bound, float(np.min((1.0 - p[pos]) / step[pos])))
    return bound


def config_from_information_matrix(
    base: Pmf,
    prior: Pmf,
    phi: InformationMatrix,
    epsilon: float,
    unconstrained: bool = False,
) -> Configuration:
    """Invert the information-matrix map back to explicit conditionals."""
    if phi.base.labels != base.labels:
        raise AlphabetMismatchError("phi base does not match supplied base")
    feasible = max_feasible_epsilon(base, phi.phi)
    cond = base.probs[:, None] + epsilon * np.sqrt(base.probs)[:, None] * phi.phi
    if np.any(cond < 0) or np.any(cond > 1):
        raise FeasibilityError(
            "epsilon too large for this direction", feasible
        )
    return Configuration(
        base=base,
        w_labels=prior.labels,
        prior=prior,
        conditionals=cond,
        epsilon=epsilon,
        unconstrained=unconstrained,
    )


@dataclass(frozen=True)
class FeatureSet:
    """k zero-mean, unit-covariance feature functions on a base alphabet.

    ``degenerate_groups`` lists index groups sharing a (numerically)
    repeated singular value when the features came from an SVD selection;
    ``zero_indices`` flags features paired with a zero singular value.
    """

    h: np.ndarray  # |Z| x k, column i = feature i
    base: Pmf
    degenerate_groups: tuple[tuple[int, ...], ...] = ()
    zero_indices: tuple[int, ...] = ()

    def __post_init__(self):
        h = _freeze(self.h)
        if h.ndim != 2 or h.shape[0] != self.base.size:
            raise ValidationError(f"h shape {h.shape} does not match base")
        p = self.base.probs
        means = p @ h
        if h.size and np.max(np.abs(means)) > NULL_TOL:
            raise ValidationError(
                f"feature means not zero: max |E[h]| = {np.abs(means).max():g}"
            )
        gram = (h * p[:, None]).T @ h
        if h.size and np.max(np.abs(gram - np.eye(h.shape[1]))) > ORTHO_TOL:
            raise ValidationError("features not orthonormal under the base")
        object.__setattr__(self, "h", h)

    @property
    def k(self) -> int:
        return self.h.shape[1]

    def mean_under(self, p: np.ndarray) -> np.ndarray:
        """Expected feature vector when Z ~ p."""
        return np.asarray(p, dtype=float) @ self.h


def normalize_features(raw: np.ndarray, base: Pmf) -> FeatureSet:
    """Center and orthonormalize raw feature columns under the base measure.

    Columns are processed in input order with P-weighted Gram-Schmidt;
    a column whose centered residual norm falls below RANK_TOL (relative)
    is rejected rather than pseudo-inverted.
    """
    base.require_positive()
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] != base.size:
        raise ValidationError(f"raw shape {raw.shape} does not match base")
    p = base.probs
    done: list[np.ndarray] = []
    for j in range(raw.shape[1]):
        col = raw[:, j] - float(p @ raw[:, j])
        scale = max(1.0, float(np.sqrt(p @ (raw[:, j] ** 2))))
        for q in done:
            col = col - float(p @ (col * q)) * q
        norm = float(np.sqrt(p @ (col * col)))
        if norm <= RANK_TOL * scale:
            raise RankDeficiencyError(
                f"column {j} is linearly dependent after centering", column=j
            )
        col = col / norm
        col = col * canonical_sign(col)
        done.append(col)
    return FeatureSet(h=np.column_stack(done), base=base)


def feature_vectors(fs: FeatureSet) -> np.ndarray:
    """psi_i(z) = sqrt(P(z)) * h_i(z); columns orthonormal, orthogonal to sqrt(P)."""
    return np.sqrt(fs.base.probs)[:, None] * fs.h


def dump_features(fs: FeatureSet, header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    buf.write("features v1\n")
    buf.write("labels: " + " ".join(fs.base.labels) + "\n")
    buf.write("base:\n")
    buf.write(_fmt_row(fs.base.probs) + "\n")
    buf.write(f"k: {fs.k}\n")
    for i in range(fs.k):
        buf.write(f"feature {i}:\n")
        for lab, val in zip(fs.base.labels, fs.h[:, i]):
            buf.write(("%s " + FLOAT_FMT + "\n") % (lab, val))
    return buf.getvalue()


def load_features(text: str) -> FeatureSet:
    labels: list[str] = []
    base_row: list[float] = []
    columns: list[list[float]] = []
    mode = ""
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#") or line == "features v1":
            continue
        if line.startswith("labels:"):
            labels = line.split(":", 1)[1].split()
        elif line == "base:":
            mode = "base"
        elif line.startswith("k:"):
            mode = ""
        elif line.startswith("feature "):
            columns.append([])
            mode = "feature"
        elif mode == "base":
            base_row = [float(v) for v in line.split()]
        elif mode == "feature":
            columns[-1].append(float(line.split()[1]))
    base = Pmf(tuple(labels), np.array(base_row))
    h = np.array(columns).T if columns else np.zeros((len(labels), 0))
    return FeatureSet(h=h, base=base)
