"""Likelihood ratios between Poisson laws and change-of-measure expectations.

For a target measure nu with density h against a reference rho, the density
of the Poisson law of nu with respect to that of rho evaluated at a finite
configuration phi is

    L(phi) = exp(rho(C) - nu(C)) * prod over points y of phi in C of h(y),

with C the set where h differs from one and the convention log 0 = -inf (a
single point carrying h = 0 forces L = 0).  On a finite discrete space C is
exactly the set {h != 1} and the formula is closed; on a window of finite
mass the same single-set formula is exact with C the whole window.

Standing assumption: int (h-1)^2 drho finite.  Under it E_rho L = 1 and
E_rho L^2 <= exp(int (h-1)^2 drho); on a finite discrete space the second
moment attains the bound exactly.  A classical fact worth recording: for
bounded h the standing assumption is not only sufficient but also necessary
for absolute continuity of the Poisson laws.  The code only reports the
square gap; it never tries to decide absolute continuity beyond that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .configuration import Functional, PointConfiguration
from .exact import EnumerationPlan, exact_expectation
from .measures import DEFAULT_CAP, DiscreteMeasure, MeasureMismatchError
from .sampler import EstimateResult, MCPlan, mc_expectation


class AdmissibilityError(RuntimeError):
    """The square-integrability hypothesis of the reweighting identity fails."""


@dataclass(frozen=True)
class LikelihoodRatio:
    """Radon-Nikodym density of Poisson(nu) with respect to Poisson(rho)."""

    reference: DiscreteMeasure
    target: DiscreteMeasure
    support: tuple
    h: dict
    log_offset: float      # rho(C) - nu(C)
    square_gap: float      # int (h-1)^2 drho

    @staticmethod
    def from_discrete(nu: DiscreteMeasure, rho: DiscreteMeasure,
                      cutoff: float = 0.0) -> "LikelihoodRatio":
        h = nu.density_against(rho)
        support = tuple(a for a in rho.atoms if abs(h[a] - 1.0) > cutoff)
        log_offset = math.fsum(rho.mass(a) - nu.mass(a) for a in support)
        square_gap = math.fsum((h[a] - 1.0) ** 2 * rho.mass(a) for a in rho.atoms)
        return LikelihoodRatio(reference=rho, target=nu, support=support,
                               h=h, log_offset=log_offset, square_gap=square_gap)

    def as_functional(self) -> Functional:
        return Functional(lambda phi: likelihood_eval(self, phi), name="likelihood")


def likelihood_eval(L: LikelihoodRatio, phi: PointConfiguration) -> float:
    """L(phi), computed as exp of a compensated log sum.

    Any point of phi sitting on an atom with h = 0 short-circuits to 0,
    honoring log 0 = -inf.
    """
    support = set(L.support)
    logs = [L.log_offset]
    for y, mult in phi.items():
        if y not in support:
            continue
        hy = L.h.get(y, 0.0)
        if hy == 0.0:
            return 0.0
        logs.append(mult * math.log(hy))
    return math.exp(math.fsum(logs))


def plan_for_measures(measures, tail: float = 1e-14, max_atoms: int = 6) -> EnumerationPlan:
    """Enumeration plan wide enough for likelihood-weighted integrands.

    Count caps must cover wherever the sampling measure or any tilted measure
    puts mass (the weighted integrand concentrates where the tilted measure
    does), so the caps are floored at the worst cap over all given measures.
    """
    base = EnumerationPlan(tail=tail, max_atoms=max_atoms)
    floor = 0
    for m in measures:
        for _, mass in m.items():
            floor = max(floor, base.cap(mass))
    return _FlooredPlan(tail=tail, max_atoms=max_atoms, floor=floor)


@dataclass(frozen=True)
class _FlooredPlan(EnumerationPlan):
    floor: int = 0

    def cap(self, mass: float, growth_degree=None) -> int:
        if mass <= 0.0:
            return 0
        return max(super().cap(mass, growth_degree), self.floor)


def second_moment_bound(nu: DiscreteMeasure, rho: DiscreteMeasure) -> float:
    """exp(int (h-1)^2 drho), the proven ceiling for E_rho L^2."""
    L = LikelihoodRatio.from_discrete(nu, rho)
    return math.exp(L.square_gap)


def reweighted_expectation(g: Functional, nu: DiscreteMeasure, rho: DiscreteMeasure,
                           mode: str = "exact",
                           plan: EnumerationPlan | None = None,
                           mc: MCPlan | None = None,
                           cap: float = DEFAULT_CAP):
    """E_rho[L(Phi) g(Phi)], which equals E_nu g(Phi).

    The square-integrability hypothesis is hard here: a capped gap raises
    instead of warning, because the identity itself assumes it.
    """
    L = LikelihoodRatio.from_discrete(nu, rho)
    if not math.isfinite(L.square_gap) or L.square_gap >= cap:
        raise AdmissibilityError(
            f"int (h-1)^2 drho = {L.square_gap:g} is not acceptably finite")
    weighted = Functional(lambda phi: likelihood_eval(L, phi) * g(phi),
                          growth_degree=g.growth_degree, name=f"L*{g.name}")
    if mode == "exact":
        eff_plan = plan or plan_for_measures([rho, nu])
        return exact_expectation(weighted, rho, eff_plan)
    if mode == "mc":
        if mc is None:
            raise ValueError("mc mode needs an MCPlan")
        return mc_expectation(weighted, rho, plan=mc)
    raise ValueError(f"unknown mode {mode!r}")


def second_moment_exact(nu: DiscreteMeasure, rho: DiscreteMeasure,
                        plan: EnumerationPlan | None = None) -> float:
    """Exact E_rho L^2 by enumeration; equals the bound on finite spaces."""
    L = LikelihoodRatio.from_discrete(nu, rho)
    squared = Functional(lambda phi: likelihood_eval(L, phi) ** 2, name="L^2")
    if plan is None:
        # L^2 weights counts like a Poisson with atom mass h^2 * rho
        tilted = DiscreteMeasure({a: (L.h[a] ** 2) * rho.mass(a) for a in rho.atoms})
        plan = plan_for_measures([rho, nu, tilted])
    return exact_expectation(squared, rho, plan)
