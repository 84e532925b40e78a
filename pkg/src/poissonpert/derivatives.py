"""Derivative estimators for parametrized intensity measures.

All four estimators target d/dtheta E f(Phi) along a family of intensities:

* ``linear_derivative``: int (E_{lam_theta} D_x f) h(x) rho(dx) along the
  linear family (h_lam + (theta - theta0) h) rho, valid at every theta in
  the declared interval.
* ``nonlinear_derivative``: same integral at theta0 for families carrying a
  remainder; the remainder is dominated and vanishes at theta0, so it
  contributes nothing to the derivative there.
* ``scaled_derivative``: the derivative of theta -> E_{theta lam} f for a
  finite measure, int (E_{theta lam} D_x f) lam(dx); the map is analytic in
  theta and a Taylor report is available through the parametric series.
* ``pivotal_derivative``: the same scaled derivative rewritten by the Mecke
  identity as theta^{-1} E sum_x (f(Phi) - f(Phi - delta_x)), the expected
  (optionally weighted) number of pivotal points of an increasing event.

Finite-difference oracles couple their two measures through the sampler's
thinning construction (common random numbers), which is what makes the
3-sigma comparisons meaningful at desk scale.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .configuration import Functional, difference_n
from .exact import EnumerationPlan, exact_expectation, exact_expected_difference
from .measures import DiscreteMeasure, PerturbationFamily
from .rng import RngStream, combine_batch_means, run_chunked
from .sampler import EstimateResult, MCPlan, sample_poisson, thin_superpose_couple
from .series import SeriesResult, parametric_series


class NonIncreasingEventError(RuntimeError):
    """A sampled pivotal term contradicts the declared increasing event."""


def _direction_weights(family: PerturbationFamily) -> dict:
    rho = family.reference
    return {a: family.direction(a) * rho.mass(a) for a in rho.atoms}


def linear_derivative(f: Functional, family: PerturbationFamily, theta: float,
                      mode: str = "exact", plan: EnumerationPlan | None = None,
                      mc: MCPlan | None = None) -> float | EstimateResult:
    """Derivative of E f along a linear family, at any theta in the interval."""
    if not family.is_linear:
        raise ValueError("linear_derivative expects a remainder-free family")
    if not family.contains(theta):
        raise ValueError(f"theta={theta} outside declared interval {family.interval}")
    lam_theta = family.measure_at(theta)
    weights = _direction_weights(family)
    if mode == "exact":
        return _weighted_first_difference_exact(f, lam_theta, weights, plan)
    if mode == "mc":
        return _weighted_first_difference_mc(f, lam_theta, weights, mc)
    raise ValueError(f"unknown mode {mode!r}")


def nonlinear_derivative(f: Functional, family: PerturbationFamily,
                         mode: str = "exact", plan: EnumerationPlan | None = None,
                         mc: MCPlan | None = None) -> float | EstimateResult:
    """Derivative at theta0 of a family with a dominated vanishing remainder.

    Hypotheses are spot-checked by sampling: densities stay nonnegative on
    the interval, the remainder sits under its envelope and shrinks to zero
    at theta0.  The value itself never sees the remainder.
    """
    rho = family.reference
    if not isinstance(rho, DiscreteMeasure):
        raise ValueError("exact-regime family required (discrete reference)")
    if family.remainder is not None and family.envelope is None:
        # the nu << lam special case drops the envelope requirement: the
        # remainder must then vanish in square mean, sampled the same way
        base_is_flat = all(abs(family.base_density(a) - 1.0) < 1e-12 for a in rho.atoms)
        if not base_is_flat:
            raise ValueError("a remainder family needs a square-integrable envelope "
                             "unless the base density is identically one")
    family.validate(list(rho.support()))
    base = family.base_measure()
    weights = _direction_weights(family)
    if mode == "exact":
        return _weighted_first_difference_exact(f, base, weights, plan)
    if mode == "mc":
        return _weighted_first_difference_mc(f, base, weights, mc)
    raise ValueError(f"unknown mode {mode!r}")


def scaled_derivative(f: Functional, lam: DiscreteMeasure, theta: float,
                      mode: str = "exact", plan: EnumerationPlan | None = None,
                      mc: MCPlan | None = None) -> float | EstimateResult:
    """d/dtheta E_{theta lam} f for a finite measure lam, theta >= 0."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    scaled = lam.scaled(theta)
    weights = {a: lam.mass(a) for a in lam.atoms}
    if mode == "exact":
        return _weighted_first_difference_exact(f, scaled, weights, plan)
    if mode == "mc":
        return _weighted_first_difference_mc(f, scaled, weights, mc)
    raise ValueError(f"unknown mode {mode!r}")


def scaled_taylor_report(f: Functional, lam: DiscreteMeasure, theta: float,
                         n_max: int = 30, plan: EnumerationPlan | None = None
                         ) -> SeriesResult:
    """Taylor expansion of theta -> E_{theta lam} f around zero intensity.

    Exposes the analyticity of the scaled map: coefficients are the empty-
    configuration differences, term n = theta^n/n! int D^n f(empty) dlam^n.
    """
    family = PerturbationFamily.linear(
        rho=lam, base_density=lambda x: 0.0, direction=lambda x: 1.0,
        theta0=0.0, interval=(0.0, max(theta, 1.0)))
    return parametric_series(f, family, theta, n_max=n_max, plan=plan)


def _weighted_first_difference_exact(f, measure, weights, plan) -> float:
    acc = []
    for a, w in sorted(weights.items(), key=lambda kv: repr(kv[0])):
        if w != 0.0:
            acc.append(exact_expected_difference(f, measure, [a], plan) * w)
    return math.fsum(acc)


def _weighted_first_difference_mc(f, measure, weights, mc: MCPlan) -> EstimateResult:
    if mc is None:
        raise ValueError("mc mode needs an MCPlan")
    atoms = [a for a, w in sorted(weights.items(), key=lambda kv: repr(kv[0])) if w != 0.0]
    if not atoms:
        return EstimateResult(0.0, 0.0)
    ws = np.array([weights[a] for a in atoms])
    mass_abs = float(np.abs(ws).sum())
    probs = np.abs(ws) / mass_abs
    signs = np.sign(ws)

    def chunk(index, size, stream):
        gen = stream.generator()
        vals = np.empty(size)
        for i in range(size):
            j = int(gen.choice(len(atoms), p=probs))
            phi = sample_poisson(measure, None, generator=gen)
            vals[i] = mass_abs * signs[j] * difference_n(f, phi, [atoms[j]])
        return (size, float(np.mean(vals)))

    res = run_chunked(chunk, mc.samples, mc.stream, mc.chunks, mc.workers)
    mean, se = combine_batch_means([r[1] for r in res], [r[0] for r in res])
    return EstimateResult(mean, se)


def pivotal_derivative(f: Functional, lam: DiscreteMeasure, theta: float,
                       mc: MCPlan, weight: Callable | None = None,
                       spot_checks: int = 64) -> EstimateResult:
    """Russo-type derivative: expected pivotal count over theta.

    Estimates theta^{-1} E_{theta lam} sum over points x of Phi of
    (f(Phi) - f(Phi - delta_x)) * weight(x).  f must be declared as the
    indicator of an increasing event; the declaration is spot-verified by
    adding points, and any negative sampled pivotal term aborts.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    if not f.increasing:
        raise NonIncreasingEventError("functional not declared increasing")
    scaled = lam.scaled(theta)
    atoms = lam.support()

    def chunk(index, size, stream):
        gen = stream.generator()
        vals = np.empty(size)
        for i in range(size):
            phi = sample_poisson(scaled, None, generator=gen)
            base_val = f(phi)
            if index == 0 and i < spot_checks and atoms:
                probe = atoms[int(gen.integers(len(atoms)))]
                if f(phi.add([probe])) < base_val - 1e-12:
                    raise NonIncreasingEventError(
                        f"adding a point decreased the functional at {probe!r}")
            total = 0.0
            for x, mult in phi.items():
                term = base_val - f(phi.remove_one(x))
                if term < -1e-12:
                    raise NonIncreasingEventError(
                        f"negative pivotal term at {x!r}; event is not increasing")
                w = 1.0 if weight is None else weight(x)
                total += mult * term * w
            vals[i] = total / theta
        return (size, float(np.mean(vals)))

    res = run_chunked(chunk, mc.samples, mc.stream, mc.chunks, mc.workers)
    mean, se = combine_batch_means([r[1] for r in res], [r[0] for r in res])
    return EstimateResult(mean, se)


def coupled_scale_fd(f: Functional, lam: DiscreteMeasure, theta: float,
                     delta: float, mc: MCPlan) -> EstimateResult:
    """Central finite difference of theta -> E_{theta lam} f with common
    random numbers via the thinning coupling."""
    if theta - delta <= 0:
        raise ValueError("theta - delta must stay positive")
    hi = lam.scaled(theta + delta)
    lo = lam.scaled(theta - delta)

    def chunk(index, size, stream):
        vals = np.empty(size)
        for i in range(size):
            pair = thin_superpose_couple(hi, lo, rng=stream.child(i))
            vals[i] = (f(pair.phi_lambda) - f(pair.phi_nu)) / (2.0 * delta)
        return (size, float(np.mean(vals)))

    res = run_chunked(chunk, mc.samples, mc.stream, mc.chunks, mc.workers)
    mean, se = combine_batch_means([r[1] for r in res], [r[0] for r in res])
    return EstimateResult(mean, se)


def richardson_fd(values: Callable[[float], float], theta: float,
                  deltas: Sequence[float] = (1e-2, 1e-3)) -> float:
    """Richardson-extrapolated central difference from two step sizes."""
    d1, d2 = deltas
    fd1 = (values(theta + d1) - values(theta - d1)) / (2 * d1)
    fd2 = (values(theta + d2) - values(theta - d2)) / (2 * d2)
    r = (d1 / d2) ** 2
    return (r * fd2 - fd1) / (r - 1.0)


@dataclass(frozen=True)
class DerivativeRow:
    estimator: str
    theta: float
    estimate: float
    stderr: float
    oracle: float

    @property
    def gap_sigmas(self) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.estimate == self.oracle else float("inf")
        return abs(self.estimate - self.oracle) / self.stderr


def derivative_rows_csv(rows: Sequence[DerivativeRow], target=None) -> str | None:
    own = target is None
    buf = io.StringIO() if own else target
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["estimator", "theta", "estimate", "stderr", "oracle", "gap_over_sigma"])
    for r in rows:
        writer.writerow([r.estimator, format(r.theta, ".17g"), format(r.estimate, ".17g"),
                         format(r.stderr, ".17g"), format(r.oracle, ".17g"),
                         format(r.gap_sigmas, ".17g")])
    if own:
        return buf.getvalue()
    return None
