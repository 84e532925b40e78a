"""Exact expectations over Poisson laws on finite discrete spaces.

Everything here enumerates count vectors.  Per-atom counts are truncated at a
Poisson quantile chosen so the neglected tail mass stays below the plan's
``tail`` bound, and the enumeration sum is compensated, so results are exact
to near machine precision at desk scale.  Cost is the product of the per-atom
cap ranges; the plan refuses more than ``max_atoms`` atoms.

Beyond plain expectations this module provides the machinery shared by the
series and derivative engines: tables of shifted expectations

    a(m_1..m_S) = E f(Phi + m_1 delta_{x_1} + ... + m_S delta_{x_S})

and their mixed forward differences, which equal the expected symmetric
differences E D^k f by the subset-sum identity.  Evaluating one table and
differencing it is what makes order-30 series terms affordable; the
definitional subset-sum route stays available as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np
from scipy import stats

from .configuration import Functional, PointConfiguration, difference_n
from .measures import DiscreteMeasure


@dataclass(frozen=True)
class EnumerationPlan:
    """Truncation policy for exact enumeration.

    ``tail``: per-atom Poisson tail mass bound.  ``max_atoms``: enumeration
    refuses wider spaces (cost is the product of cap ranges).
    """

    tail: float = 1e-14
    max_atoms: int = 6

    def cap(self, mass: float, growth_degree: int | None = None) -> int:
        """Smallest count cap whose tail (inflated by polynomial growth of the
        integrand when declared) is below the plan bound."""
        if mass <= 0.0:
            return 0
        if mass > 1e6:
            raise ValueError(f"atom mass {mass:g} is far beyond enumeration scale")
        k = int(stats.poisson.isf(self.tail, mass)) + 1
        p = growth_degree or 0
        while stats.poisson.sf(k, mass) * (k + 2) ** p >= self.tail:
            k += 1
        return k


def _pmf_vector(mass: float, cap: int) -> np.ndarray:
    return stats.poisson.pmf(np.arange(cap + 1), mass)


def exact_expectation(f: Functional, m: DiscreteMeasure,
                      plan: EnumerationPlan | None = None) -> float:
    """E f(Phi) under the Poisson law with intensity m, by enumeration."""
    plan = plan or EnumerationPlan()
    atoms = m.support()
    if len(atoms) > plan.max_atoms:
        raise ValueError(f"{len(atoms)} atoms exceed enumeration limit {plan.max_atoms}")
    growth = getattr(f, "growth_degree", None)
    caps = [plan.cap(m.mass(a), growth) for a in atoms]
    pmfs = [_pmf_vector(m.mass(a), k) for a, k in zip(atoms, caps)]
    terms = []
    for counts in product(*(range(k + 1) for k in caps)):
        w = 1.0
        for pmf, c in zip(pmfs, counts):
            w *= pmf[c]
        cfg = {a: c for a, c in zip(atoms, counts) if c}
        terms.append(w * f(PointConfiguration._trusted(cfg, sum(counts))))
    return math.fsum(terms)


def exact_expected_difference(f: Functional, m: DiscreteMeasure, xs: Sequence,
                              plan: EnumerationPlan | None = None) -> float:
    """E D^n f(Phi) at the points xs, via the definitional subset sum."""
    wrapped = Functional(lambda phi: difference_n(f, phi, xs),
                         bound=None, growth_degree=getattr(f, "growth_degree", None),
                         name=f"D^{len(xs)}[{f.name}]")
    return exact_expectation(wrapped, m, plan)


# ---------------------------------------------------------------------------
# Shifted-expectation tables and their forward differences
# ---------------------------------------------------------------------------


def expectation_table(f: Functional, m: DiscreteMeasure, shift_atoms: Sequence,
                      n_max: int, plan: EnumerationPlan | None = None) -> np.ndarray:
    """Table of E f(Phi + sum_i m_i delta_{x_i}) over the box 0..n_max per axis.

    Axis order follows ``shift_atoms``.  The functional is evaluated once per
    total-count lattice node; the Poisson mixture over the base measure is
    contracted axis by axis afterwards.
    """
    plan = plan or EnumerationPlan()
    shift_atoms = list(shift_atoms)
    base_atoms = [a for a in m.support()]
    if len(base_atoms) > plan.max_atoms:
        raise ValueError(f"{len(base_atoms)} atoms exceed enumeration limit {plan.max_atoms}")
    growth = getattr(f, "growth_degree", None)

    union = shift_atoms + [a for a in base_atoms if a not in shift_atoms]
    caps = [plan.cap(m.mass(a), growth) if m.mass(a) > 0 else 0 for a in union]
    shifts = [n_max if a in shift_atoms else 0 for a in union]
    shape = tuple(k + s + 1 for k, s in zip(caps, shifts))

    table = np.empty(shape, dtype=float)
    for idx in np.ndindex(shape):
        cfg = {a: c for a, c in zip(union, idx) if c}
        table[idx] = f(PointConfiguration._trusted(cfg, sum(idx)))

    # contract the Poisson mixture over base-measure axes
    axis = 0
    for i, atom in enumerate(union):
        k, s = caps[i], shifts[i]
        if k == 0:
            if s > 0:
                axis += 1  # pure shift axis stays
            continue
        pmf = _pmf_vector(m.mass(atom), k)
        if s == 0:
            table = np.tensordot(table, pmf, axes=([axis], [0]))
        else:
            # sliding contraction: out[m] = sum_c pmf[c] * in[m + c]
            window = np.zeros((s + 1, k + s + 1))
            for shift in range(s + 1):
                window[shift, shift:shift + k + 1] = pmf
            moved = np.moveaxis(table, axis, 0)
            table = np.moveaxis(np.tensordot(window, moved, axes=([1], [0])), 0, axis)
            axis += 1
    return table


def forward_difference_table(a: np.ndarray) -> np.ndarray:
    """Mixed forward differences of a lattice table, anchored at the origin.

    ``out[k_1..k_S]`` is the order-(k_1..k_S) forward difference of ``a`` at
    zero, which for a shifted-expectation table equals E D^k f with the
    shift atoms repeated k_i times.
    """
    out = a
    for axis in range(a.ndim):
        moved = np.moveaxis(out, axis, 0)
        res = np.empty_like(moved)
        res[0] = moved[0]
        cur = moved
        for k in range(1, moved.shape[0]):
            cur = cur[1:] - cur[:-1]
            res[k] = cur[0]
        out = np.moveaxis(res, 0, axis)
    return out


def weight_table(weights: Sequence[float], n_max: int) -> np.ndarray:
    """Tensor of prod_i w_i^{k_i} / k_i! over the order box."""
    factorials = np.array([math.factorial(k) for k in range(n_max + 1)], dtype=float)
    vecs = [np.power(float(w), np.arange(n_max + 1)) / factorials for w in weights]
    if not vecs:
        return np.ones(())
    out = vecs[0]
    for vec in vecs[1:]:
        out = np.multiply.outer(out, vec)
    return out


def order_sums(table: np.ndarray, n_max: int) -> np.ndarray:
    """Collapse a lattice table to per-total-order sums t_n = sum_{|k|=n}."""
    if table.ndim == 0:
        out = np.zeros(n_max + 1)
        out[0] = float(table)
        return out
    order = np.zeros(table.shape, dtype=np.int64)
    for axis, size in enumerate(table.shape):
        shape = [1] * table.ndim
        shape[axis] = size
        order = order + np.arange(size).reshape(shape)
    flat_ord = order.ravel()
    keep = flat_ord <= n_max
    return np.bincount(flat_ord[keep], weights=table.ravel()[keep], minlength=n_max + 1)


def expected_difference_orders(f: Functional, m: DiscreteMeasure,
                               weights: dict, n_max: int,
                               plan: EnumerationPlan | None = None
                               ) -> tuple[np.ndarray, np.ndarray]:
    """Per-order sums of weighted expected differences.

    Returns ``(terms, abs_terms)`` where

        terms[n]     = sum_{|k|=n} E D^k f * prod w_i^{k_i} / k_i!
        abs_terms[n] = sum_{|k|=n} |E D^k f| * prod |w_i|^{k_i} / k_i!

    with k running over multisets of the weighted atoms.  ``terms[n]`` equals
    ``1/n! * int (E D^n f) w^{tensor n}`` summed over the atom grid, the exact
    per-order ingredient of the variational and parametric series.
    """
    atoms = [a for a, w in sorted(weights.items(), key=lambda kv: repr(kv[0])) if w != 0.0]
    ws = [weights[a] for a in atoms]
    a_table = expectation_table(f, m, atoms, n_max, plan)
    delta = forward_difference_table(a_table)
    terms = order_sums(delta * weight_table(ws, n_max), n_max)
    abs_terms = order_sums(np.abs(delta) * weight_table([abs(w) for w in ws], n_max), n_max)
    return terms, abs_terms


# ---------------------------------------------------------------------------
# Fock-type identity check: E[fg] as a series of difference products
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FockCheck:
    lhs: float
    rhs_partial: float
    gap: float
    terms: tuple[float, ...]
    partials: tuple[float, ...]


def fock_identity_check(f: Functional, g: Functional, m: DiscreteMeasure,
                        n_max: int, plan: EnumerationPlan | None = None) -> FockCheck:
    """Compare E[f g] with its truncated difference-product expansion

        sum_n 1/n! int (E D^n f)(E D^n g) dm^n.
    """
    plan = plan or EnumerationPlan()
    both = Functional(lambda phi: f(phi) * g(phi),
                      growth_degree=(f.growth_degree or 0) + (g.growth_degree or 0) or None,
                      name=f"{f.name}*{g.name}")
    lhs = exact_expectation(both, m, plan)

    atoms = list(m.support())
    table_f = forward_difference_table(expectation_table(f, m, atoms, n_max, plan))
    table_g = forward_difference_table(expectation_table(g, m, atoms, n_max, plan))
    wt = weight_table([m.mass(a) for a in atoms], n_max)
    terms = order_sums(table_f * table_g * wt, n_max)
    partials = np.cumsum(terms)
    rhs = float(partials[-1])
    return FockCheck(lhs=lhs, rhs_partial=rhs, gap=abs(lhs - rhs),
                     terms=tuple(float(t) for t in terms),
                     partials=tuple(float(p) for p in partials))


def poisson_hellinger_exact(lam: DiscreteMeasure, nu: DiscreteMeasure,
                            plan: EnumerationPlan | None = None) -> float:
    """Squared Hellinger distance between two Poisson laws, by enumeration.

    Counts factorize over atoms, so the Bhattacharyya affinity is a product
    of per-atom sums sum_k sqrt(pmf_lam(k) pmf_nu(k)); the distance is one
    minus that product.  Serves as the independent oracle for the identity
    route in :func:`poissonpert.measures.hellinger_poisson`.
    """
    plan = plan or EnumerationPlan()
    affinity = 1.0
    for a in sorted(set(lam.atoms) | set(nu.atoms), key=repr):
        ml, mn = lam.mass(a), nu.mass(a)
        cap = max(plan.cap(ml), plan.cap(mn))
        ks = np.arange(cap + 1)
        aff = math.fsum(np.sqrt(stats.poisson.pmf(ks, ml) * stats.poisson.pmf(ks, mn)))
        affinity *= aff
    return 1.0 - affinity
