"""Decay-function calculus: weight evaluation, convolution constants, and
interaction norms.

The weight family is ``F(x) = exp(-R * x**b) / (1 + x)**beta`` on the
nonnegative integers.  Interactions are finite maps from sorted site tuples
to local self-adjoint matrices, optionally depending on a parameter in
``[0, 1]``.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy import integrate

from .errors import DivergentSum, NonSmooth, NotConverged

Array = np.ndarray
TermValue = Union[Array, Callable[[float], Array]]

HERMITICITY_TOL = 1e-12
DEFAULT_T_SAMPLES = 33
DEFAULT_CONV_RADIUS = 1 << 20
_END_WINDOW = 4096
_STABILITY_RTOL = 1e-6
_FD_STEP = 1e-5
_FD_AGREEMENT = 1e-4


@dataclasses.dataclass(frozen=True)
class FSpec:
    """Parameters of the decay weight exp(-R x^b) (1+x)^-beta.

    The stretched-exponential part R*x**b is nonnegative, nondecreasing and
    subadditive on [0, inf) exactly when R >= 0 and 0 < b <= 1.
    """

    beta: float
    R: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.R < 0:
            raise ValueError(f"R must be >= 0, got {self.R}")
        if not 0 < self.b <= 1:
            raise ValueError(f"b must lie in (0, 1], got {self.b}")

    def h(self, x):
        """Stretched-exponential exponent R * x**b."""
        return self.R * np.asarray(x, dtype=float) ** self.b

    def log_f(self, x):
        x = np.asarray(x, dtype=float)
        return -self.R * x**self.b - self.beta * np.log1p(x)

    def shifted(self, dbeta: float) -> "FSpec":
        """Same h with the power-law exponent shifted by dbeta."""
        return FSpec(beta=self.beta + dbeta, R=self.R, b=self.b)


def f_eval(spec: FSpec, x):
    """Evaluate the decay weight at nonnegative x (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("f_eval requires x >= 0")
    out = np.exp(spec.log_f(arr))
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def f_tail(spec: FSpec, z: float) -> float:
    """Upper bound on the sum of F over integers strictly beyond z.

    Uses the integral comparison for the monotone decreasing weight.
    """
    val, _ = integrate.quad(lambda x: f_eval(spec, x), z, np.inf, limit=200)
    return val


@dataclasses.dataclass(frozen=True)
class ConvolutionEstimate:
    """Stabilized upper estimate of the convolution constant."""

    value: float
    stabilized: bool
    truncation_radius: int
    witness_distance: int


def _certified_ratio(spec: FSpec, dist: int, window: int, tail_f: float,
                     middle_bound: float) -> float:
    """Upper bound on sum_z F(|z|) F(|z-dist|) / F(dist), all tails included."""
    log_fd = spec.log_f(dist)
    if dist <= 2 * window + 2:
        z = np.arange(-window, dist + window + 1, dtype=float)
        logs = spec.log_f(np.abs(z)) + spec.log_f(np.abs(z - dist)) - log_fd
        return float(np.exp(logs).sum()) + 2.0 * tail_f
    u = np.arange(-window, window + 1, dtype=float)
    log_u = spec.log_f(np.abs(u))
    left = np.exp(log_u + spec.log_f(dist - u) - log_fd)
    right = np.exp(log_u + spec.log_f(dist + u) - log_fd)
    return float(left.sum() + right.sum()) + 2.0 * tail_f + middle_bound


def _middle_tail(spec: FSpec, window: int) -> float:
    """Bound on the central part of the convolution sum, uniform in distance.

    For z between the end windows, subadditivity of h plus concavity of x**b
    gives h(z) + h(D-z) - h(D) >= (1-b) h(min(z, D-z)), and the power parts
    contribute at most 2**beta per side.
    """
    factor = 2.0 ** (spec.beta + 1.0)
    scale = (1.0 - spec.b) * spec.R
    if scale == 0.0 and spec.beta <= 1.0:
        # Pure power tail with no stretched-exponential reserve: divergent.
        raise NotConverged(
            "central convolution tail diverges for these parameters")

    def integrand(x):
        return math.exp(-scale * x**spec.b - spec.beta * math.log1p(x))

    first = integrand(window)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            integral, _ = integrate.quad(integrand, window, np.inf, limit=200)
        except integrate.IntegrationWarning as exc:
            raise NotConverged(
                "central convolution tail did not converge") from exc
    bound = factor * (first + integral)
    if not math.isfinite(bound):
        raise NotConverged(
            "central convolution tail diverges for these parameters")
    return bound


def _distance_scan(radius: int) -> np.ndarray:
    dense = np.arange(0, min(radius, 1024) + 1)
    if radius <= 1024:
        return dense
    geo = [1024]
    while geo[-1] < radius:
        geo.append(min(radius, max(geo[-1] + 1, int(geo[-1] * 1.17))))
    return np.unique(np.concatenate([dense, np.array(geo)]))


def convolution_constant(spec: FSpec,
                         truncation_radius: int = DEFAULT_CONV_RADIUS
                         ) -> ConvolutionEstimate:
    """Numerical upper estimate of the convolution constant of the weight.

    Scans certified per-distance ratio bounds (exact end windows plus
    integral-comparison tails) over a dense-then-geometric distance ladder and
    reports the supremum.  The estimate must stabilize to relative 1e-6 over
    the last doubling of the scan radius, else NotConverged is raised.
    """
    if truncation_radius < 100:
        raise ValueError("truncation_radius must be >= 100")
    if spec.beta <= 1 and spec.R == 0:
        raise DivergentSum(
            "convolution constant diverges for beta <= 1 with R = 0")
    window = _END_WINDOW
    tail_f = f_tail(spec, window)
    middle = _middle_tail(spec, window)

    distances = _distance_scan(truncation_radius)
    ratios = np.array([
        _certified_ratio(spec, int(d), window, tail_f, middle)
        for d in distances
    ])
    if not np.all(np.isfinite(ratios)):
        raise NotConverged("convolution ratios are not finite")

    best = int(np.argmax(ratios))
    value = float(ratios[best])
    half_mask = distances <= truncation_radius // 2
    value_half = float(ratios[half_mask].max())
    stabilized = abs(value - value_half) <= _STABILITY_RTOL * value
    if not stabilized:
        raise NotConverged(
            f"convolution estimate moved by {abs(value - value_half):.3e} "
            f"over the last radius doubling (value {value:.6e})")
    return ConvolutionEstimate(value=value, stabilized=True,
                               truncation_radius=int(truncation_radius),
                               witness_distance=int(distances[best]))


def _freeze(matrix) -> Array:
    out = np.array(matrix, dtype=complex)
    out.flags.writeable = False
    return out


@dataclasses.dataclass(frozen=True)
class Term:
    """One interaction term: a sorted site tuple and its local matrix.

    ``value`` is either a constant matrix or a callable of the parameter in
    [0, 1].  ``derivative`` optionally supplies the analytic parameter
    derivative; otherwise central differences are used.
    """

    sites: tuple
    value: TermValue
    derivative: Optional[TermValue] = None

    def __post_init__(self):
        sites = tuple(int(s) for s in self.sites)
        if sites != tuple(sorted(set(sites))):
            raise ValueError(f"term sites must be sorted and distinct: {sites}")
        object.__setattr__(self, "sites", sites)
        if not callable(self.value):
            object.__setattr__(self, "value", _freeze(self.value))
        if self.derivative is not None and not callable(self.derivative):
            object.__setattr__(self, "derivative", _freeze(self.derivative))

    @property
    def constant(self) -> bool:
        return not callable(self.value)

    def at(self, t: float = 0.0) -> Array:
        return self.value(t) if callable(self.value) else self.value

    def derivative_at(self, t: float, step: float = _FD_STEP) -> Array:
        if self.derivative is not None:
            return (self.derivative(t) if callable(self.derivative)
                    else self.derivative)
        if self.constant:
            return np.zeros_like(self.value)
        return (np.asarray(self.value(t + step), dtype=complex)
                - np.asarray(self.value(t - step), dtype=complex)) / (2 * step)

    def diameter(self) -> int:
        return self.sites[-1] - self.sites[0]


_CHECK_TS = (0.0, 0.37, 0.5, 0.81, 1.0)


@dataclasses.dataclass(frozen=True)
class Interaction:
    """Finite collection of local self-adjoint terms on the integer chain."""

    onsite_dim: int
    terms: tuple

    def __post_init__(self):
        if self.onsite_dim < 2:
            raise ValueError("onsite_dim must be >= 2")
        object.__setattr__(self, "terms", tuple(self.terms))
        for term in self.terms:
            dim = self.onsite_dim ** len(term.sites)
            samples = (term.at(0.0),) if term.constant else tuple(
                term.at(t) for t in _CHECK_TS)
            for mat in samples:
                mat = np.asarray(mat)
                if mat.shape != (dim, dim):
                    raise ValueError(
                        f"term on {term.sites} has shape {mat.shape}, "
                        f"expected {(dim, dim)}")
                defect = np.abs(mat - mat.conj().T).max()
                scale = max(1.0, np.abs(mat).max())
                if defect > HERMITICITY_TOL * scale:
                    raise ValueError(
                        f"term on {term.sites} is not self-adjoint "
                        f"(defect {defect:.2e})")

    @property
    def constant(self) -> bool:
        return all(term.constant for term in self.terms)

    def sites(self) -> tuple:
        out = set()
        for term in self.terms:
            out.update(term.sites)
        return tuple(sorted(out))

    def terms_within(self, sites: Iterable[int]) -> tuple:
        allowed = set(sites)
        return tuple(t for t in self.terms if set(t.sites) <= allowed)

    def frozen_at(self, t: float) -> "Interaction":
        """Constant snapshot of a parameter-dependent family."""
        return Interaction(self.onsite_dim, tuple(
            Term(term.sites, term.at(t)) for term in self.terms))

    def derivative_interaction(self, t: float) -> "Interaction":
        """Constant interaction made of the parameter derivatives at t."""
        return Interaction(self.onsite_dim, tuple(
            Term(term.sites, _hermitize(term.derivative_at(t)))
            for term in self.terms))


def _hermitize(mat: Array) -> Array:
    return (np.asarray(mat, dtype=complex)
            + np.asarray(mat, dtype=complex).conj().T) / 2.0


def operator_norm_small(mat: Array) -> float:
    """Spectral norm of a small dense matrix."""
    return float(np.linalg.norm(np.asarray(mat, dtype=complex), ord=2))


@dataclasses.dataclass(frozen=True)
class FNormReport:
    """Result of an interaction-norm evaluation."""

    value: float
    witness_pair: Optional[tuple]
    truncation_radius: int

    def __float__(self):
        return self.value


def _pair_sums(phi: Interaction, spec: FSpec,
               term_weights: Sequence[float]):
    """Max over site pairs of the weighted term sums, with the witness."""
    sites = phi.sites()
    best = 0.0
    witness = None
    max_dist = 0
    for i, x in enumerate(sites):
        for y in sites[i:]:
            dist = y - x
            total = 0.0
            for term, weight in zip(phi.terms, term_weights):
                ts = term.sites
                if x in ts and y in ts:
                    total += weight
            if total == 0.0:
                continue
            ratio = total / f_eval(spec, dist)
            max_dist = max(max_dist, dist)
            if ratio > best:
                best = ratio
                witness = (x, y)
    return best, witness, max_dist


def f_norm(phi: Interaction, spec: FSpec,
           t_samples: int = DEFAULT_T_SAMPLES) -> FNormReport:
    """Interaction norm: sup over site pairs of the F-weighted term sums.

    The parameter supremum is taken over a uniform grid of ``t_samples``
    points in [0, 1]; it is exact for parameter-independent interactions.
    """
    if t_samples < 1:
        raise ValueError("t_samples must be >= 1")
    if not phi.terms:
        return FNormReport(0.0, None, 0)
    grid = np.linspace(0.0, 1.0, t_samples)
    weights = []
    for term in phi.terms:
        if term.constant:
            weights.append(operator_norm_small(term.at()))
        else:
            weights.append(max(operator_norm_small(term.at(t)) for t in grid))
    value, witness, radius = _pair_sums(phi, spec, weights)
    return FNormReport(value, witness, radius)


def derivative_f_norm(family: Interaction, spec: FSpec,
                      s_samples: int = DEFAULT_T_SAMPLES) -> float:
    """Smooth-path norm combining term norms with size-weighted derivatives.

    For each term the grid supremum of ``|term| + |sites| * |d term/ds|`` is
    formed; the derivative comes from the supplied rule or central
    differences, cross-checked at two step sizes.
    """
    if s_samples < 1:
        raise ValueError("s_samples must be >= 1")
    if not family.terms:
        return 0.0
    grid = np.linspace(0.0, 1.0, s_samples)
    lo, hi = _FD_STEP, 1.0 - _FD_STEP
    weights = []
    for term in family.terms:
        card = len(term.sites)
        if term.constant:
            weights.append(operator_norm_small(term.at()))
            continue
        best = 0.0
        for s in grid:
            s_eval = min(max(s, lo), hi) if term.derivative is None else s
            deriv = term.derivative_at(s_eval)
            if term.derivative is None:
                coarse = term.derivative_at(s_eval, step=2 * _FD_STEP)
                scale = max(operator_norm_small(deriv), 1e-12)
                if operator_norm_small(deriv - coarse) > _FD_AGREEMENT * scale:
                    raise NonSmooth(
                        f"derivative estimates disagree for term on "
                        f"{term.sites} at s={s_eval:.4f}")
            best = max(best, operator_norm_small(term.at(s))
                       + card * operator_norm_small(deriv))
        weights.append(best)
    value, _, _ = _pair_sums(family, spec, weights)
    return value


def restrict(phi: Interaction, mode: str) -> Interaction:
    """Keep terms on one side of the cut between sites 0 and 1.

    ``left`` keeps terms inside (-inf, 0], ``right`` those inside [1, inf),
    ``decoupled`` their union (all cut-crossing terms are dropped).
    """
    if mode not in ("left", "right", "decoupled"):
        raise ValueError(f"unknown restriction mode: {mode}")
    kept = []
    for term in phi.terms:
        is_left = term.sites[-1] <= 0
        is_right = term.sites[0] >= 1
        if (mode == "left" and is_left) or (mode == "right" and is_right) or \
                (mode == "decoupled" and (is_left or is_right)):
            kept.append(term)
    return Interaction(phi.onsite_dim, tuple(kept))
