"""Samplers for attribute ensembles and their propagation along the chain.

A sampled attribute is built from an i.i.d. Gaussian seed matrix by

  1. scaling row 0 by (1 + s)      - directional-preference knob,
  2. projecting columns onto the complement of sqrt(base),
  3. subtracting the prior-weighted column mean,
  4. rescaling so the largest column norm equals rho,

then converting to explicit conditionals.  Steps 2-3 are forced by
validity (conditionals sum to one; the prior mixture reproduces the
base), which is why even the s = 0 ensemble is only approximately
spherically symmetric: the sqrt(base) direction carries no variance.
Draws whose conditionals would go negative are rejected and redrawn,
never clipped, so the measured symmetry structure stays unbiased.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .dependence import canonical_dependence_matrix, uncentered_b
from .errors import AlphabetMismatchError, FeasibilityError, ValidationError
from .geometry import (
    Configuration,
    InformationMatrix,
    config_from_information_matrix,
    information_matrix,
)
from .model import Channel, JointPmf, Pmf, uniform_pmf
from .symmetry import MatrixEnsemble, split_count, worker_rngs

PATH_AGREEMENT_TOL = 1e-12


@dataclass(frozen=True)
class AttributeEnsembleSpec:
    """Distribution over configurations of one attribute."""

    base: Pmf
    attribute_size: int
    epsilon: float
    prior: Pmf | None = None
    anisotropy: float = 0.0
    rho: float = 1.0
    rejection_cap: int = 1000

    def __post_init__(self):
        self.base.require_positive()
        if self.attribute_size < 2:
            raise ValidationError("attribute_size must be >= 2")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")
        if not 0 < self.rho <= 1.0:
            raise ValidationError("rho must be in (0, 1]")
        if self.anisotropy < 0:
            raise ValidationError("anisotropy must be >= 0")
        if self.prior is None:
            labels = tuple(f"w{j}" for j in range(self.attribute_size))
            object.__setattr__(self, "prior", uniform_pmf(labels))
        if self.prior.size != self.attribute_size:
            raise ValidationError("prior size does not match attribute_size")
        self.prior.require_positive()

    @property
    def w_labels(self) -> tuple[str, ...]:
        return self.prior.labels


def raw_information_sample(
    rng: np.random.Generator, base: np.ndarray, prior: np.ndarray, anisotropy: float
) -> np.ndarray:
    """One unscaled information-matrix draw (steps 1-3, no norm policy)."""
    n, m = base.size, prior.size
    phi = rng.standard_normal((n, m))
    if anisotropy:
        phi[0, :] *= 1.0 + anisotropy
    root = np.sqrt(base)
    phi -= np.outer(root, root @ phi)
    phi -= np.outer(phi @ prior, np.ones(m))
    return phi


def _scaled_phi(raw: np.ndarray, rho: float) -> np.ndarray | None:
    top = float(np.linalg.norm(raw, axis=0).max())
    if top <= 0.0:
        return None
    return raw * (rho / top)


def _feasible(phi: np.ndarray, base: np.ndarray, epsilon: float) -> bool:
    cond = base[:, None] + epsilon * np.sqrt(base)[:, None] * phi
    return bool(np.all(cond >= 0.0) and np.all(cond <= 1.0))


def _phi_stream(spec: AttributeEnsembleSpec, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Accepted information matrices; raises once the rejection cap is hit."""
    base = spec.base.probs
    prior = spec.prior.probs
    while True:
        for attempt in range(spec.rejection_cap + 1):
            phi = _scaled_phi(
                raw_information_sample(rng, base, prior, spec.anisotropy), spec.rho
            )
            if phi is not None and _feasible(phi, base, spec.epsilon):
                yield phi
                break
        else:
            raise FeasibilityError(
                "epsilon infeasible for spec: rejection cap exceeded",
                max_feasible=0.0,
            )


def information_ensemble(spec: AttributeEnsembleSpec) -> MatrixEnsemble:
    """The attribute spec's information matrices as a plain matrix ensemble.

    Shares the acceptance loop with configuration sampling, so a given
    seed produces exactly the Phi sequence of the configurations used in
    exponent runs.
    """

    def block(rng: np.random.Generator, count: int) -> np.ndarray:
        stream = _phi_stream(spec, rng)
        return np.stack([next(stream) for _ in range(count)])

    return MatrixEnsemble(
        n=spec.base.size,
        m=spec.attribute_size,
        sample_block=block,
        name=f"information_ensemble(s={spec.anisotropy}, rho={spec.rho})",
    )


def sample_configuration(
    spec: AttributeEnsembleSpec, rng: np.random.Generator | None = None, seed: int = 0
) -> Configuration:
    """Draw one configuration from the ensemble."""
    if rng is None:
        rng = worker_rngs(seed, 1)[0]
    phi = next(_phi_stream(spec, rng))
    info = InformationMatrix(phi=phi, epsilon=spec.epsilon, base=spec.base)
    return config_from_information_matrix(spec.base, spec.prior, info, spec.epsilon)


def configuration_stream(
    spec: AttributeEnsembleSpec, count: int, seed: int = 0, workers: int = 1
) -> list[Configuration]:
    """Draw `count` configurations under the seeded-parallel contract."""
    configs: list[Configuration] = []
    for rng, share in zip(worker_rngs(seed, workers), split_count(count, workers)):
        stream = _phi_stream(spec, rng)
        for _ in range(share):
            phi = next(stream)
            info = InformationMatrix(phi=phi, epsilon=spec.epsilon, base=spec.base)
            configs.append(
                config_from_information_matrix(spec.base, spec.prior, info, spec.epsilon)
            )
    return configs


def rejection_rate(spec: AttributeEnsembleSpec, probes: int = 1000, seed: int = 0) -> float:
    """Fraction of raw draws rejected for negativity; should stay below 0.5."""
    rng = worker_rngs(seed, 1)[0]
    base, prior = spec.base.probs, spec.prior.probs
    rejected = 0
    for _ in range(probes):
        phi = _scaled_phi(
            raw_information_sample(rng, base, prior, spec.anisotropy), spec.rho
        )
        if phi is None or not _feasible(phi, base, spec.epsilon):
            rejected += 1
    return rejected / probes


def push_through_channel(config: Configuration, chan: Channel) -> Configuration:
    """Propagate an attribute of X to an attribute of the channel output.

    Conditionals transform by the channel kernel; equivalently the
    information matrix transforms by the uncentered dependence matrix.
    Both paths are computed and must agree to PATH_AGREEMENT_TOL.
    """
    if chan.labels != config.base.labels:
        raise AlphabetMismatchError("channel alphabet does not match configuration")
    new_base = chan.apply(config.base).require_positive()
    new_cond = chan.P @ config.conditionals
    out = Configuration(
        base=new_base,
        w_labels=config.w_labels,
        prior=config.prior,
        conditionals=new_cond,
        epsilon=config.epsilon,
        unconstrained=config.unconstrained,
    )
    b = uncentered_b(chan, config.base).b
    phi_path = b @ information_matrix(config).phi
    gap = float(np.abs(phi_path - information_matrix(out).phi).max())
    if gap > PATH_AGREEMENT_TOL:
        raise ValidationError(
            f"information-matrix path disagrees with conditional path by {gap:g}"
        )
    return out


@dataclass(frozen=True)
class MarkovPushResult:
    """Exact push of an attribute across the chain plus its linearization.

    ``residual = Phi_exact - B~ @ Phi_in`` vanishes when the observed pair
    is the clean pair and otherwise scales linearly with the first
    channel's noise level.
    """

    config: Configuration
    approx_phi: np.ndarray
    residual: np.ndarray

    @property
    def residual_norm(self) -> float:
        return float(np.abs(self.residual).max()) if self.residual.size else 0.0


def markov_push(
    config: Configuration,
    joint: JointPmf,
    *,
    clean_config: Configuration | None = None,
    clean_joint: JointPmf | None = None,
    chan_y: Channel | None = None,
) -> MarkovPushResult:
    """Push an attribute of the joint's X-side to its Y-side.

    With no clean-chain data the exact conditionals are computed through
    P(y|x) of `joint` itself, which is exact precisely when `config`'s
    variable and the joint's X coordinate are the same (no first-channel
    noise).  Supplying (clean_config, clean_joint, chan_y) routes the
    exact computation through the unobserved clean chain instead.
    """
    if config.base.labels != joint.x_labels:
        raise AlphabetMismatchError("configuration alphabet does not match joint X")
    marg_gap = float(np.abs(config.base.probs - joint.marginal_x().probs).max())
    if marg_gap > 1e-10:
        raise ValidationError(
            f"configuration base differs from joint X-marginal by {marg_gap:g}"
        )
    if clean_config is not None:
        if clean_joint is None or chan_y is None:
            raise ValidationError(
                "clean-chain push needs clean_config, clean_joint and chan_y"
            )
        if clean_config.base.labels != clean_joint.x_labels:
            raise AlphabetMismatchError("clean configuration does not match clean joint")
        kernel = chan_y.P @ clean_joint.conditional_y_given_x()
        cond = kernel @ clean_config.conditionals
    else:
        cond = joint.conditional_y_given_x() @ config.conditionals

    out = Configuration(
        base=joint.marginal_y(),
        w_labels=config.w_labels,
        prior=config.prior,
        conditionals=cond,
        epsilon=config.epsilon,
        unconstrained=config.unconstrained,
    )
    cdm = canonical_dependence_matrix(joint)
    approx = cdm.b @ information_matrix(config).phi
    residual = information_matrix(out).phi - approx
    return MarkovPushResult(config=out, approx_phi=approx, residual=residual)
