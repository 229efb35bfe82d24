"""Numerical spectral flow: the gap-filter weight function, its tail
integral and envelope, the flow generator and unitaries, generator-splitting
defects, and the decay envelopes used to certify them.

The weight is built as W(t) = sgn(t) * int_{|t|}^inf w, where w is an even,
nonnegative, band-limited probability density (a finite product of squared
sinc factors whose bandwidths sum to the gap).  Band-limitation makes the
odd Fourier transform of W equal to -1/E exactly beyond the gap, which is
the property that lets the generated flow transport spectral projections.
"""

from __future__ import annotations

import dataclasses
import functools
import math
import warnings
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate, interpolate

from .chain import (LocalOperator, Volume, assemble_derivative,
                    assemble_hamiltonian, embed, ground_state, operator_norm)
from .errors import (DegenerateSplit, DivergentEnvelope, NotConverged,
                     QuadratureFailure)
from .fnorm import FSpec, Interaction, f_norm, restrict
from .lrcert import lr_constants
from .splitlab import DefectCurve

Array = np.ndarray

_N_FACTORS = 14
_FACTOR_RATIO = 0.75
_GRID_STEP = 0.025
_GRID_MAX = 400.0
_FLOOR = 1e-13  # table floor: below this, the certified power bound takes over
_FILTER_TOL = 1e-10
_GL_ORDER = 12
_TAIL_TARGET = 1e-8
ENVELOPE_VALID_T = 36058.0


def _quad(func, a, b, **kwargs) -> float:
    kwargs.setdefault("limit", 800)
    value, abserr = integrate.quad(func, a, b, **kwargs)
    if abserr > max(1e-11, 1e-8 * abs(value)) * 50:
        raise QuadratureFailure(
            f"quadrature error {abserr:.2e} too large for value {value:.6e}")
    return value


class _WeightProfile:
    """Unit-gap weight table shared by every WeightFunction instance."""

    def __init__(self):
        n = np.arange(1, _N_FACTORS + 1)
        raw = _FACTOR_RATIO ** n
        self.a = 0.5 * raw / raw.sum()  # bandwidths: 2 * sum(a) = gap 1
        # normalization: the density integrates to one
        total = 2.0 * _quad(self._density_raw, 0.0, np.inf)
        self.norm_const = 1.0 / total
        log_prod_a2 = 2.0 * float(np.log(self.a).sum())
        self.log_pow_coef = math.log(self.norm_const) - log_prod_a2

        grid = np.arange(0.0, _GRID_MAX + _GRID_STEP, _GRID_STEP)
        dens = self.density(grid)
        # Integrate the tails backward from the grid end so the small values
        # far out keep their relative accuracy (no large-number cancellation).
        power = 2 * _N_FACTORS - 1
        w_beyond = math.exp(self.log_pow_coef
                            - power * math.log(_GRID_MAX)) / power
        rev = integrate.cumulative_simpson(dens[::-1], x=-grid[::-1],
                                           initial=0.0)
        tail_w = rev[::-1] + w_beyond  # int_x^inf w
        i_beyond = math.exp(self.log_pow_coef
                            - (power - 1) * math.log(_GRID_MAX)) \
            / (power * (power - 1))
        rev_i = integrate.cumulative_simpson(tail_w[::-1], x=-grid[::-1],
                                             initial=0.0)
        tail_i = rev_i[::-1] + i_beyond  # int_x^inf W
        i_zero = _quad(lambda u: u * self.density(u), 0.0, np.inf)

        self.w_cut = self._cut(grid, tail_w)
        self.i_cut = self._cut(grid, tail_i)
        self._w_spline = interpolate.CubicSpline(
            grid[grid <= self.w_cut + 1], tail_w[grid <= self.w_cut + 1])
        mask = grid <= self.i_cut + 1
        self._i_spline = interpolate.CubicSpline(
            grid[mask], np.log(np.maximum(tail_i[mask], 1e-300)))
        self._w_at_cut = float(self._w_spline(self.w_cut))
        self._i_at_cut = float(math.exp(self._i_spline(self.i_cut)))
        self.i_zero = i_zero

        # Norms of W at unit gap by adaptive quadrature of the density
        # moments (W's L1 norm is the first absolute moment of w, the L1
        # norm of t W(t) is half the second moment).
        self.l1 = 2.0 * i_zero
        self.l1_t = _quad(lambda u: u * u * self.density(u), 0.0, np.inf)
        self.linf = 0.5

    @staticmethod
    def _cut(grid: Array, values: Array) -> float:
        below = np.nonzero(values < _FLOOR)[0]
        last = int(below[0]) if below.size else len(grid) - 1
        return float(grid[max(last - 2, 1)])

    def _density_raw(self, t):
        t = np.asarray(t, dtype=float)
        args = np.multiply.outer(self.a, t) / math.pi
        return np.prod(np.sinc(args) ** 2, axis=0)

    def density(self, t):
        return self.norm_const * self._density_raw(t)

    def w_tail(self, x):
        """int_x^inf w for x >= 0 (spline region plus certified power bound)."""
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(arr)
        inside = arr <= self.w_cut
        out[inside] = np.maximum(self._w_spline(arr[inside]), 0.0)
        far = ~inside
        if np.any(far):
            bound = np.exp(self.log_pow_coef
                           - (2 * _N_FACTORS - 1) * np.log(arr[far])) \
                / (2 * _N_FACTORS - 1)
            out[far] = np.minimum(bound, self._w_at_cut)
        return out.reshape(np.shape(x))

    def i_tail(self, y):
        """int_y^inf W for y >= 0 (log-spline plus certified power bound)."""
        arr = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty_like(arr)
        inside = arr <= self.i_cut
        out[inside] = np.exp(self._i_spline(np.maximum(arr[inside], 0.0)))
        far = ~inside
        if np.any(far):
            power = 2 * _N_FACTORS - 2
            bound = np.exp(self.log_pow_coef - power * np.log(arr[far])) \
                / (power * (power + 1))
            out[far] = np.minimum(bound, self._i_at_cut)
        return out.reshape(np.shape(y))


@functools.lru_cache(maxsize=1)
def _profile() -> _WeightProfile:
    return _WeightProfile()


@dataclasses.dataclass(frozen=True)
class WeightFunction:
    """Odd gap filter with tabulated norms.

    Scales as W_gamma(t) = W_1(gamma t), so the L1 norm carries a 1/gamma
    and the odd Fourier transform equals -1/E for |E| >= gamma.
    """

    gamma: float
    l1_norm: float
    linf_norm: float
    l1_t_norm: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.sign(t) * _profile().w_tail(np.abs(t) * self.gamma)

    def fourier(self, E: float) -> float:
        """Odd-part Fourier transform -2 int_0^inf W(t) sin(E t) dt."""
        cut = _profile().w_cut / self.gamma
        value = integrate.quad(lambda t: float(self(t)), 0.0, cut,
                               weight="sin", wvar=E, limit=800)[0]
        return -2.0 * value


def weight_function(gamma: float) -> WeightFunction:
    """Construct the gap filter and tabulate its norms."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    prof = _profile()
    return WeightFunction(gamma=float(gamma),
                          l1_norm=prof.l1 / gamma,
                          linf_norm=prof.linf,
                          l1_t_norm=prof.l1_t / gamma**2)


def i_gamma(w: WeightFunction, t):
    """Tail integral int_t^inf W (t >= 0), scalar or array."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("i_gamma requires t >= 0")
    out = _profile().i_tail(arr * w.gamma) / w.gamma
    return float(out) if arr.ndim == 0 else out


class IGammaEnvelope(NamedTuple):
    value: float
    applicable: bool


def i_gamma_envelope(gamma: float, t: float) -> IGammaEnvelope:
    """Closed-form tail envelope 130 e^2 gamma^9 t^10 exp(-(2/7) gamma t /
    ln(gamma t)^2), applicable for t > 36058."""
    gt = gamma * t
    if gt <= 1.0:
        return IGammaEnvelope(float("inf"), False)
    log_value = math.log(130.0) + 2.0 + 9.0 * math.log(gamma) \
        + 10.0 * math.log(t) - (2.0 / 7.0) * gt / math.log(gt) ** 2
    value = math.exp(log_value) if log_value < 700 else float("inf")
    return IGammaEnvelope(value, t > ENVELOPE_VALID_T)


def check_i_gamma_envelope(w: WeightFunction, t: float) -> bool:
    """True when the closed-form envelope applies and dominates i_gamma."""
    env = i_gamma_envelope(w.gamma, t)
    if not env.applicable:
        return False
    return i_gamma(w, t) <= env.value


def default_t_trunc(w: WeightFunction, dh_norm: float,
                    target: float = _TAIL_TARGET) -> float:
    """Smallest truncation time with i_gamma(T) <= target / |dH|."""
    goal = target / max(dh_norm, 1e-300)
    lo, hi = 0.0, 1.0 / w.gamma
    for _ in range(200):
        if i_gamma(w, hi) <= goal:
            break
        hi *= 2.0
    else:
        raise NotConverged("could not bracket the truncation time")
    for _ in range(80):
        mid = (lo + hi) / 2.0
        if i_gamma(w, mid) <= goal:
            hi = mid
        else:
            lo = mid
    return hi


def _gauss_legendre_panels(T: float, freq: float, refine: int):
    """Composite Gauss-Legendre nodes on [0, T] resolving frequency freq."""
    panel = 1.5 * 2.0 * math.pi / freq
    n_panels = max(4, int(math.ceil(T / panel))) * (1 << refine)
    x, c = np.polynomial.legendre.leggauss(_GL_ORDER)
    edges = np.linspace(0.0, T, n_panels + 1)
    half = np.diff(edges) / 2.0
    mids = (edges[:-1] + edges[1:]) / 2.0
    nodes = (mids[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * c[None, :]).ravel()
    return nodes, weights


def _filter_matrix(eigenvalues: Array, w: WeightFunction, T: float) -> Array:
    """G with G_ij = int_0^T W(t) sin(t (lam_i - lam_j)) dt, via separable
    sine products and panel refinement."""
    lam = np.asarray(eigenvalues, dtype=float)
    freq = max(float(lam.max() - lam.min()), w.gamma, 1.0)
    previous = None
    for refine in range(6):
        nodes, weights = _gauss_legendre_panels(T, freq, refine)
        G = np.zeros((lam.size, lam.size))
        chunk = max(1, (1 << 21) // max(lam.size, 1))
        for start in range(0, nodes.size, chunk):
            t = nodes[start:start + chunk]
            cw = weights[start:start + chunk] * np.asarray(w(t))
            phases = np.outer(t, lam)
            s = np.sin(phases)
            co = np.cos(phases)
            G += (cw[:, None] * s).T @ co - (cw[:, None] * co).T @ s
        if previous is not None and \
                np.abs(G - previous).max() <= _FILTER_TOL * w.l1_norm:
            return G
        previous = G
    raise NotConverged("filter quadrature did not stabilize under refinement")


@dataclasses.dataclass(frozen=True)
class FlowGenerator:
    """Flow generator with its truncation bookkeeping."""

    matrix: Array
    tail_error: float
    t_trunc: float
    hermiticity_defect: float
    dh_norm: float


def hastings_generator(family: Interaction, volume: Volume, s: float,
                       w: WeightFunction, T_trunc: Optional[float] = None,
                       check_gap: bool = True) -> FlowGenerator:
    """Generator int W(t) tau_t(dH/ds) dt for the family frozen at s.

    Computed in the eigenbasis of H(s), where the time integral reduces to
    the odd filter transform of the eigenvalue differences.  The reported
    tail error is 2 |dH/ds| i_gamma(T_trunc).
    """
    H = assemble_hamiltonian(family, volume, s)
    dH = assemble_derivative(family, volume, s)
    dh_norm = operator_norm(dH)
    if check_gap:
        try:
            sd = ground_state(H, w.gamma)
            if sd.gap < w.gamma:
                warnings.warn(
                    f"spectral gap {sd.gap:.4f} below filter gamma "
                    f"{w.gamma:.4f} at s={s:.4f}", stacklevel=2)
        except DegenerateSplit:
            warnings.warn(
                f"no gap >= gamma={w.gamma:.4f} found at s={s:.4f}",
                stacklevel=2)
    if T_trunc is None:
        T_trunc = default_t_trunc(w, dh_norm)
    vals, vecs = np.linalg.eigh(H)
    dH_eig = vecs.conj().T @ dH @ vecs
    G = _filter_matrix(vals, w, T_trunc)
    D_eig = dH_eig * (2j * G)
    D = vecs @ D_eig @ vecs.conj().T
    defect = float(np.abs(D - D.conj().T).max())
    D = (D + D.conj().T) / 2.0
    tail = 2.0 * dh_norm * i_gamma(w, T_trunc)
    return FlowGenerator(matrix=D, tail_error=float(tail),
                         t_trunc=float(T_trunc),
                         hermiticity_defect=defect, dh_norm=float(dh_norm))


def _unitary_exp(D: Array, ds: float) -> Array:
    vals, vecs = np.linalg.eigh(D)
    return (vecs * np.exp(1j * ds * vals)) @ vecs.conj().T


_CF4_NODE = math.sqrt(3.0) / 6.0
_CF4_ALPHA = (3.0 + 2.0 * math.sqrt(3.0)) / 12.0
_CF4_BETA = (3.0 - 2.0 * math.sqrt(3.0)) / 12.0


def _cf4_step(generator, a: float, ds: float) -> Array:
    """Fourth-order commutator-free exponential step over [a, a + ds]."""
    d_early = generator(a + (0.5 - _CF4_NODE) * ds)
    d_late = generator(a + (0.5 + _CF4_NODE) * ds)
    first = _CF4_ALPHA * d_early + _CF4_BETA * d_late
    second = _CF4_BETA * d_early + _CF4_ALPHA * d_late
    return _unitary_exp(second, ds) @ _unitary_exp(first, ds)


def spectral_flow_unitary(family: Interaction, volume: Volume,
                          s_grid: Sequence[float], w: WeightFunction,
                          T_trunc: Optional[float] = None,
                          step_tol: float = 1e-9) -> list:
    """Unitaries solving dU/ds = i D(s) U along the grid, U(0) = identity.

    Each grid interval takes commutator-free fourth-order exponential
    steps, halving the step until the interval endpoint stabilizes; every
    step is exactly unitary by spectral exponentiation.
    """
    s_grid = list(s_grid)
    if not s_grid or abs(s_grid[0]) > 1e-12:
        raise ValueError("s_grid must start at 0")
    if any(b <= a for a, b in zip(s_grid, s_grid[1:])):
        raise ValueError("s_grid must be strictly increasing")
    dim = volume.dimension(family.onsite_dim)
    unitaries = [np.eye(dim, dtype=complex)]
    generator = functools.lru_cache(maxsize=None)(
        lambda s: hastings_generator(family, volume, s, w, T_trunc,
                                     check_gap=False).matrix)
    for a, b in zip(s_grid, s_grid[1:]):
        steps = 1
        previous = None
        for _ in range(12):
            U = np.eye(dim, dtype=complex)
            ds = (b - a) / steps
            for k in range(steps):
                U = _cf4_step(generator, a + k * ds, ds) @ U
            if previous is not None and \
                    operator_norm(U - previous) <= step_tol:
                break
            previous = U
            steps *= 2
        else:
            raise NotConverged("flow step refinement did not stabilize")
        unitaries.append(U @ unitaries[-1])
    return unitaries


def transport_defects(family: Interaction, volume: Volume,
                      s_grid: Sequence[float], w: WeightFunction,
                      T_trunc: Optional[float] = None) -> list:
    """Ground-projector transport defects |U P(0) U* - P(s)| per grid point."""
    unitaries = spectral_flow_unitary(family, volume, s_grid, w, T_trunc)
    defects = []
    P0 = None
    for s, U in zip(s_grid, unitaries):
        H = assemble_hamiltonian(family, volume, s)
        P = ground_state(H, w.gamma).ground_projector()
        if P0 is None:
            P0 = P
        defects.append(float(operator_norm(U @ P0 @ U.conj().T - P)))
    return defects


@dataclasses.dataclass(frozen=True)
class EnvelopeParams:
    """Inputs of the generator-splitting envelopes."""

    kappa: float
    nu: float
    gamma: float
    R: float
    b: float
    psi_f_norm: float
    weight: WeightFunction

    def __post_init__(self):
        for name in ("kappa", "nu", "gamma", "R", "b"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.psi_f_norm < 0:
            raise ValueError("psi_f_norm must be >= 0")
        if abs(self.weight.gamma - self.gamma) > 1e-12:
            raise ValueError("weight function gamma mismatch")

    @property
    def w_norms(self) -> tuple:
        return (self.weight.l1_norm, self.weight.linf_norm,
                self.weight.l1_t_norm)


_PI_SQ_6 = math.pi ** 2 / 6.0
_MAX_TERMS = 1_000_000
_SUM_RTOL = 1e-16


def omega1(x: float, p: EnvelopeParams) -> float:
    """First generator-splitting envelope, as displayed."""
    if x < 1:
        raise ValueError("omega1 needs x >= 1")
    arg = p.R * x**p.b / (2.0 * p.nu)
    coef = _PI_SQ_6 ** 2 * (10.0 * p.weight.l1_t_norm
                            + 2.0 * p.kappa * p.weight.linf_norm / p.nu)
    return 4.0 * i_gamma(p.weight, arg) + coef * p.psi_f_norm * math.exp(-arg)


def q_envelope(y: float, p: EnvelopeParams, variant: str = "display") -> float:
    """Summand envelope for the cut-crossing series.

    ``display`` uses max(psi, psi^2); ``proof`` uses max(psi^2, psi^3) as in
    the derivation.  Neither choice is silently preferred elsewhere.
    """
    psi = p.psi_f_norm
    if variant == "display":
        weight_coef = max(psi, psi**2)
    elif variant == "proof":
        weight_coef = max(psi**2, psi**3)
    else:
        raise ValueError(f"unknown variant: {variant}")
    coef = _PI_SQ_6 ** 4 * (
        12.0 * p.kappa / p.nu * psi * p.weight.linf_norm
        + 10.0 * weight_coef * p.weight.l1_t_norm)
    return coef * math.exp(-(p.R / 2.0) * (y / 4.0) ** p.b)


def _sum_i_gamma_terms(x_start: int, p: EnvelopeParams) -> float:
    """Sum over m >= x_start of i_gamma((R/2) (m/4)^b), tail bounded by
    integral comparison of the certified power envelope."""
    total = 0.0
    m = x_start
    chunk = 1 << 14
    prof = _profile()
    switch = prof.i_cut * 1.05
    while True:
        ms = np.arange(m, m + chunk, dtype=float)
        args = (p.R / 2.0) * (ms / 4.0) ** p.b
        vals = i_gamma(p.weight, args)
        total += float(vals.sum())
        m += chunk
        last = float(vals[-1])
        in_power_regime = args[-1] * p.gamma > switch
        if in_power_regime and last <= _SUM_RTOL * max(total, 1e-300):
            break
        if m - x_start > _MAX_TERMS:
            raise DivergentEnvelope(
                "i_gamma series did not reach its truncation test "
                f"within {_MAX_TERMS} terms")
    tail = _quad(
        lambda u: float(i_gamma(p.weight, (p.R / 2.0) * (u / 4.0) ** p.b)),
        float(m - 1), np.inf)
    return total + tail


def _sum_q_terms(x_start: int, p: EnvelopeParams, variant: str) -> float:
    coef = q_envelope(0.0, p, variant)  # exp factor is 1 at y = 0
    total = 0.0
    m = x_start
    chunk = 1 << 14
    while True:
        ms = np.arange(m, m + chunk, dtype=float)
        vals = coef * np.exp(-(p.R / 2.0) * (ms / 4.0) ** p.b)
        total += float(vals.sum())
        m += chunk
        if float(vals[-1]) <= _SUM_RTOL * max(total, 1e-300):
            break
        if m - x_start > _MAX_TERMS:
            raise DivergentEnvelope(
                "cut-crossing series did not reach its truncation test "
                f"within {_MAX_TERMS} terms")
    tail = coef * _quad(
        lambda u: math.exp(-(p.R / 2.0) * (u / 4.0) ** p.b),
        float(m - 1), np.inf)
    return total + tail


def omega2(x: float, p: EnvelopeParams, variant: str = "display") -> float:
    """Second generator-splitting envelope, as displayed.

    ``display`` evaluates 6 x times the filter-tail series; ``proof``
    carries the extra psi factor written at the end of the derivation.
    """
    if x < 1:
        raise ValueError("omega2 needs x >= 1")
    x_start = int(math.ceil(x))
    first = 6.0 * x * _sum_i_gamma_terms(x_start, p)
    if variant == "proof":
        first *= p.psi_f_norm
    elif variant != "display":
        raise ValueError(f"unknown variant: {variant}")
    second = _sum_q_terms(x_start, p, variant)
    return first + second


def envelope_params(family: Interaction, spec: FSpec, s: float,
                    w: WeightFunction) -> EnvelopeParams:
    """Envelope inputs from the family snapshot at s."""
    snapshot = family.frozen_at(s)
    psi = f_norm(snapshot, spec).value
    k = lr_constants(spec, psi)
    return EnvelopeParams(kappa=k.kappa, nu=k.nu, gamma=w.gamma, R=spec.R,
                          b=spec.b, psi_f_norm=psi, weight=w)


def generator_split_defect(family: Interaction, spec: FSpec, s: float,
                           n_values: Sequence[int], w: WeightFunction,
                           T_trunc: Optional[float] = None) -> DefectCurve:
    """Successive differences of the full-minus-cut generators on growing
    volumes, with the displayed envelope reported (not enforced)."""
    n_values = sorted(set(int(n) for n in n_values))
    if len(n_values) < 2:
        raise ValueError("need at least two volume radii")
    cut_family = restrict(family, "decoupled")
    g_by_n = {}
    for n in n_values:
        volume = Volume(-n, n)
        dh_norm = operator_norm(assemble_derivative(family, volume, s))
        T = T_trunc if T_trunc is not None else default_t_trunc(w, dh_norm)
        full = hastings_generator(family, volume, s, w, T, check_gap=False)
        cut = hastings_generator(cut_family, volume, s, w, T, check_gap=False)
        g_by_n[n] = full.matrix - cut.matrix
    params = envelope_params(family, spec, s, w)
    deriv_norm = f_norm(family.derivative_interaction(s), spec).value
    defects, envelopes, parameter = [], [], []
    for n_small, n_big in zip(n_values, n_values[1:]):
        big_volume = Volume(-n_big, n_big)
        small = LocalOperator(Volume(-n_small, n_small).sites, g_by_n[n_small],
                              onsite_dim=family.onsite_dim)
        diff = g_by_n[n_big] - embed(small, big_volume)
        defects.append(float(operator_norm(diff)))
        n0 = max(n_small, 1)
        envelopes.append(2.0 * (3.0 * n0 * omega1(n0, params)
                                + omega2(n0, params)) * deriv_norm)
        parameter.append(n_small)
    return DefectCurve(tuple(parameter), tuple(defects), tuple(envelopes),
                       enforced=False)
