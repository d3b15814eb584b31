"""Height-aware two-tier analysis: association, serving distances, boundary
intensities and handover rates.

Everything is derived from the null probability of the two PPPs.  A user at
height h_u is served by tier k at horizontal distance x when no tier-j BS
lies within horizontal radius sqrt(beta_jk (x^2 + h_uk^2) - h_uj^2); writing
D_k = beta_kj h_uj^2 - h_uk^2 this radius is sqrt(beta_jk (x^2 - D_k)), so for
x^2 <= D_k no tier-j BS can compete at all.  That gives the joint density of
serving distance and serving tier

    g_k(x) = 2 pi lam_k x exp(-pi lam_k x^2) exp(-pi lam_j beta_jk max(0, x^2 - D_k))

whose two pieces ([0, L_k] and [L_k, inf), L_k = sqrt(max(D_k, 0))) integrate
to the near/far association sub-probabilities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .model import ConfigError, PairGeometry, ScenarioConfig, pair_geometry
from .quadrature import (
    DEFAULT_SETTINGS,
    QuadratureSettings,
    integrate_finite,
    integrate_semi_infinite,
    truncation_point,
)

RADICAND_TOL = 1e-9


class RadicandError(ArithmeticError):
    """A radicand that should be non-negative came out clearly negative."""


@dataclass(frozen=True)
class AssociationSplit:
    tier: int
    a1: float  # served from inside the no-competition disc x <= L
    a2: float

    @property
    def total(self) -> float:
        return self.a1 + self.a2


@dataclass(frozen=True)
class ServiceDistanceDensity:
    """Horizontal distance to the serving BS of one tier.

    ``joint`` is g_k(x) = f(x | n=k) P[n=k]; ``conditional`` divides by A_k,
    and ``near``/``far`` are the branch densities normalized by A_k1/A_k2.
    """

    tier: int
    lam: float
    lam_other: float
    beta_other: float  # beta_jk
    D: float
    split: AssociationSplit

    @property
    def L(self) -> float:
        return math.sqrt(self.D) if self.D > 0 else 0.0

    @property
    def far_scale(self) -> float:
        """Gaussian envelope exp(-c x^2) of the far branch."""
        return math.pi * (self.lam + self.lam_other * self.beta_other)

    def joint(self, x):
        x = np.asarray(x, dtype=float)
        excess = np.maximum(x * x - self.D, 0.0)
        return (2 * math.pi * self.lam * x * np.exp(-math.pi * self.lam * x * x)
                * np.exp(-math.pi * self.lam_other * self.beta_other * excess))

    def joint_near(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.L, self.joint(x), 0.0)

    def joint_far(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.L, self.joint(x), 0.0)

    def conditional(self, x):
        if self.split.total == 0:
            return np.zeros_like(np.asarray(x, dtype=float))
        return self.joint(x) / self.split.total

    def near(self, x):
        return self.joint_near(x) / self.split.a1 if self.split.a1 > 0 else np.zeros_like(np.asarray(x, float))

    def far(self, x):
        return self.joint_far(x) / self.split.a2 if self.split.a2 > 0 else np.zeros_like(np.asarray(x, float))

    def cdf(self, x):
        """P[X_k <= x | n = k] in closed form."""
        x = np.asarray(x, dtype=float)
        if self.split.total == 0:
            return np.ones_like(x)
        L2 = self.L**2
        inside = -np.expm1(-math.pi * self.lam * np.minimum(x * x, L2))
        c = self.far_scale
        ratio = self.lam / (self.lam + self.lam_other * self.beta_other)
        shift = math.pi * self.lam_other * self.beta_other * self.D
        outside = ratio * (np.exp(-c * L2 + shift) - np.exp(-c * np.maximum(x * x, L2) + shift))
        return (inside + outside) / self.split.total


@dataclass(frozen=True)
class BoundaryIntensity:
    """Length intensity (m^-1) of the k-j cell boundaries.

    ``k_term`` comes from users served by tier k, ``j_term`` from tier j.
    """

    pair: tuple[int, int]
    k_term: float
    j_term: float

    @property
    def value(self) -> float:
        return self.k_term + self.j_term if self.pair[0] != self.pair[1] else self.k_term


@dataclass(frozen=True)
class HandoverReport:
    """Directed handover rates; ``hol`` per meter, ``rate`` per second."""

    tier_ids: tuple[str, ...]
    velocity: float
    hol: dict[tuple[int, int], float]
    rate: dict[tuple[int, int], float] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rate", {kj: h * self.velocity for kj, h in self.hol.items()})

    @property
    def hol_intra(self) -> float:
        return math.fsum(h for (k, j), h in self.hol.items() if k == j)

    @property
    def hol_inter(self) -> float:
        return math.fsum(h for (k, j), h in self.hol.items() if k != j)

    @property
    def hol_total(self) -> float:
        return math.fsum(self.hol.values())

    @property
    def rate_intra(self) -> float:
        return math.fsum(h for (k, j), h in self.rate.items() if k == j)

    @property
    def rate_inter(self) -> float:
        return math.fsum(h for (k, j), h in self.rate.items() if k != j)

    @property
    def rate_total(self) -> float:
        return math.fsum(self.rate.values())

    def label(self, k: int, j: int) -> str:
        return self.tier_ids[k] + self.tier_ids[j]


def _association_one(lam_k: float, lam_j: float, beta_jk: float, D_k: float) -> tuple[float, float]:
    if lam_k == 0:
        return 0.0, 0.0
    ratio = lam_k / (lam_k + lam_j * beta_jk)
    if D_k > 0:
        a1 = -math.expm1(-math.pi * lam_k * D_k)
        a2 = ratio * math.exp(-math.pi * lam_k * D_k)
    else:
        a1 = 0.0
        a2 = ratio * math.exp(math.pi * lam_j * beta_jk * D_k)
    return a1, a2


def association_probabilities(geom: PairGeometry, lambdas: tuple[float, float]
                              ) -> tuple[AssociationSplit, AssociationSplit]:
    """Association probabilities (A_k, A_j) with their near/far sub-terms."""
    lam_k, lam_j = lambdas
    a_k = _association_one(lam_k, lam_j, geom.beta_jk, geom.D_k)
    a_j = _association_one(lam_j, lam_k, geom.beta_kj, geom.D_j)
    return AssociationSplit(geom.k, *a_k), AssociationSplit(geom.j, *a_j)


def service_distance_density(geom: PairGeometry, lambdas: tuple[float, float], tier: int,
                             splits: tuple[AssociationSplit, AssociationSplit] | None = None
                             ) -> ServiceDistanceDensity:
    if splits is None:
        splits = association_probabilities(geom, lambdas)
    lam_k, lam_j = lambdas
    if tier == geom.k:
        return ServiceDistanceDensity(geom.k, lam_k, lam_j, geom.beta_jk, geom.D_k, splits[0])
    if tier == geom.j:
        return ServiceDistanceDensity(geom.j, lam_j, lam_k, geom.beta_kj, geom.D_j, splits[1])
    raise ValueError(f"tier {tier} is not part of pair ({geom.k}, {geom.j})")


def swap(geom: PairGeometry) -> PairGeometry:
    """The same pair seen from tier j."""
    return PairGeometry(
        k=geom.j, j=geom.k, beta_kj=geom.beta_jk, beta_jk=geom.beta_kj,
        lambda_kj=geom.lambda_jk, lambda_jk=geom.lambda_kj,
        h_uk=geom.h_uj, h_uj=geom.h_uk, D_k=geom.D_j, D_j=geom.D_k, L_k=geom.L_j, L_j=geom.L_k,
    )


def vartheta(geom: PairGeometry, r: float, settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Ring-area kernel for a user served by tier k at horizontal distance ``r``.

    For an intra-tier pair this is 4r.  Across tiers, the tier-j BSs that put
    the user within dd of the k-j boundary fill a ring of area 2 dd vartheta.
    Zero when r^2 < D_k: the equal-power circle does not exist there.
    """
    if geom.k == geom.j:
        return 4.0 * r
    inner = r * r - geom.D_k
    if inner <= 0:
        return 0.0
    beta = geom.beta_kj
    base = r * r * (beta + 1) + geom.h_uk**2 * beta - geom.h_uj**2 * beta**2
    cross = 2 * beta * r * math.sqrt(inner / beta)
    scale = abs(base) + cross
    if base - cross < -RADICAND_TOL * scale:
        raise RadicandError(f"outer radicand {base - cross} < 0 at r={r}")

    def integrand(theta):
        return np.sqrt(np.maximum(base - cross * np.cos(theta), 0.0))

    return integrate_finite(integrand, 0.0, math.pi, settings).value / beta


def _vartheta_array(geom: PairGeometry, x: np.ndarray, settings: QuadratureSettings) -> np.ndarray:
    return np.array([vartheta(geom, xi, settings) for xi in np.asarray(x, dtype=float)])


def _integrate_density(integrand, density: ServiceDistanceDensity, lower: float,
                       settings: QuadratureSettings) -> float:
    """Integral of ``integrand`` over [lower, inf) split at the density's threshold."""
    if density.lam == 0:
        return 0.0
    L = density.L
    total = 0.0
    if lower < L:
        upper = min(L, truncation_point(0.0, math.pi * density.lam, settings))
        if lower < upper:
            total += integrate_finite(integrand, lower, upper, settings).value
        if upper < L:
            return total
    total += integrate_semi_infinite(integrand, max(lower, L), density.far_scale, settings).value
    return total


def area_intensity_inter(geom: PairGeometry, lambdas: tuple[float, float],
                         densities: tuple[ServiceDistanceDensity, ServiceDistanceDensity],
                         settings: QuadratureSettings = DEFAULT_SETTINGS) -> BoundaryIntensity:
    """Length intensity of k-j boundaries (the dd -> 0 limit of area / 2dd).

    Sums, over the serving tier, lam_other * vartheta * joint density.
    """
    if geom.k == geom.j:
        raise ValueError("use area_intensity_intra for k == j")
    lam_k, lam_j = lambdas
    dens_k, dens_j = densities
    mirrored = swap(geom)
    terms = []
    for g, lam_other, dens in ((geom, lam_j, dens_k), (mirrored, lam_k, dens_j)):
        if lam_other == 0 or dens.lam == 0:
            terms.append(0.0)
            continue

        def integrand(x, g=g, lam_other=lam_other, dens=dens):
            return lam_other * _vartheta_array(g, x, settings) * dens.joint(x)

        terms.append(_integrate_density(integrand, dens, g.L_k, settings))
    return BoundaryIntensity((geom.k, geom.j), terms[0], terms[1])


def area_intensity_intra(lam: float, density: ServiceDistanceDensity,
                         settings: QuadratureSettings = DEFAULT_SETTINGS) -> BoundaryIntensity:
    """Length intensity of boundaries between two BSs of the density's tier."""
    if lam == 0:
        return BoundaryIntensity((density.tier, density.tier), 0.0, 0.0)

    def integrand(x):
        return lam * 4.0 * x * density.joint(x)

    value = _integrate_density(integrand, density, 0.0, settings)
    return BoundaryIntensity((density.tier, density.tier), value, 0.0)


def handover_report(intensities: Mapping[tuple[int, int], BoundaryIntensity], velocity: float,
                    tier_ids: tuple[str, ...]) -> HandoverReport:
    """Directed handover rates from boundary length intensities.

    A straight isotropic path crosses (2/pi) mu boundaries per meter; an
    inter-tier crossing is k->j or j->k with equal frequency.
    """
    hol = {}
    for (k, j), mu in sorted(intensities.items()):
        if k == j:
            hol[(k, k)] = 2.0 / math.pi * mu.value
        else:
            hol[(k, j)] = hol[(j, k)] = mu.value / math.pi
    return HandoverReport(tuple(tier_ids), velocity, dict(sorted(hol.items())))


@dataclass(frozen=True)
class Analysis:
    config: ScenarioConfig
    geometry: PairGeometry
    association: tuple[AssociationSplit, AssociationSplit]
    densities: tuple[ServiceDistanceDensity, ServiceDistanceDensity]
    intensities: dict[tuple[int, int], BoundaryIntensity]
    report: HandoverReport


def require_two_tiers(config: ScenarioConfig) -> None:
    if len(config.tiers) != 2:
        raise ConfigError("tiers", f"the analytical engine handles exactly 2 tiers, got {len(config.tiers)}")


def analyze(config: ScenarioConfig, settings: QuadratureSettings = DEFAULT_SETTINGS,
            geometry: PairGeometry | None = None) -> Analysis:
    """Run the whole two-tier pipeline for ``config``.

    ``geometry`` overrides the derived pair geometry (used to inject faults
    when checking that validation notices them).
    """
    require_two_tiers(config)
    geom = pair_geometry(config, 0, 1) if geometry is None else geometry
    lambdas = (config.tiers[0].lam, config.tiers[1].lam)
    splits = association_probabilities(geom, lambdas)
    dens = (service_distance_density(geom, lambdas, 0, splits),
            service_distance_density(geom, lambdas, 1, splits))
    intensities = {
        (0, 0): area_intensity_intra(lambdas[0], dens[0], settings),
        (0, 1): area_intensity_inter(geom, lambdas, dens, settings),
        (1, 1): area_intensity_intra(lambdas[1], dens[1], settings),
    }
    report = handover_report(intensities, config.velocity, tuple(t.id for t in config.tiers))
    return Analysis(config, geom, splits, dens, intensities, report)
