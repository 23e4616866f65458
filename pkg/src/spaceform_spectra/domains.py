"""Symmetric perturbed annular domains in geodesic polar coordinates.

A domain is the region between two star-shaped radial boundaries
rho_in(Theta) < rho_out(Theta) (the inner one optional), described by a
Fourier profile in the plane or by rotation-invariant polynomial
perturbations of the direction vector for n = 3.  Declared symmetry is
checked against the group generators on a dense angular sample at
construction time; integrals over the domain use tensor quadrature that
is spectrally accurate for these smooth boundaries (per-ray
Gauss-Legendre in r, trapezoid in the periodic angle, Gauss-Legendre in
the polar cosine for n = 3).

The moment and gradient integrals here are the test-function machinery
for the annulus-comparison bound: products g(r) * monomial(X) integrate
to zero under the matching symmetry, the gradient cross terms collapse
to a radial factor times X_i X_j, and the Rayleigh quotient of the
constant-extended lowest annulus eigenfunction never exceeds the annulus
eigenvalue on a volume-matched symmetric domain.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import optimize

from .slsolver import BoundaryCondition, SLEigenpair, extend_gk
from .spaceform import (
    GeometryError,
    HEMISPHERE_RADIUS,
    SpaceForm,
    _as_form,
    _gl_rule,
    annulus_volume,
    match_outer_radius,
    sin_m,
)

__all__ = [
    "SymmetryOrder",
    "SymmetryError",
    "VolumeMismatchError",
    "FourierProfile",
    "SphereProfile",
    "RadialTestFunction",
    "DomainSpec",
    "QuadratureGrid",
    "volume",
    "integrate_moment",
    "grad_pair_integral",
    "rayleigh_gk",
    "sum_gradient_identity_check",
    "GradientIdentityReport",
    "matched_annulus",
    "boundary_extrema",
    "random_spec",
    "random_family",
    "spec_to_dict",
    "spec_from_dict",
    "grid_to_csv",
]


class SymmetryError(ValueError):
    """Declared symmetry is violated, or an operation needs more of it."""


class VolumeMismatchError(ValueError):
    """The comparison annulus does not match the domain volume."""


class SymmetryOrder(str, Enum):
    NONE = "none"
    CENTRAL = "central"
    ORDER2 = "order2"
    ORDER4 = "order4"

    def __str__(self) -> str:
        return self.value


def fourier_order(symmetry: SymmetryOrder) -> int:
    """Angular frequency divisor imposed by the symmetry in the plane."""
    return {SymmetryOrder.NONE: 1, SymmetryOrder.CENTRAL: 2,
            SymmetryOrder.ORDER2: 2, SymmetryOrder.ORDER4: 4}[symmetry]


# ---------------------------------------------------------------------------
# Boundary profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FourierProfile:
    """rho(theta) = base + sum_m [a_m cos(m theta) + b_m sin(m theta)]."""

    base: float
    harmonics: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "harmonics", tuple(
            (int(m), float(a), float(b)) for (m, a, b) in self.harmonics))
        if any(m < 1 for (m, _, _) in self.harmonics):
            raise ValueError("harmonic frequencies must be >= 1")

    def at_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        rho = np.full_like(theta, self.base)
        for m, a, b in self.harmonics:
            rho += a * np.cos(m * theta) + b * np.sin(m * theta)
        return rho

    def evaluate(self, omega):
        return self.at_theta(np.arctan2(omega[1], omega[0]))


def _sphere_terms():
    return {
        # signed-permutation invariant (keeps quarter-turn symmetry)
        "quartic_axes": (lambda w: w[0]**4 + w[1]**4 + w[2]**4 - 0.6, 0.4),
        "sextic_prod": (lambda w: (w[0] * w[1] * w[2])**2 - 1.0 / 105.0, 1.0 / 27.0),
        # invariant under even sign flips only
        "axis2_1": (lambda w: w[0]**2 - 1.0 / 3.0, 2.0 / 3.0),
        "axis2_2": (lambda w: w[1]**2 - 1.0 / 3.0, 2.0 / 3.0),
        "axis2_3": (lambda w: w[2]**2 - 1.0 / 3.0, 2.0 / 3.0),
        "odd_prod": (lambda w: w[0] * w[1] * w[2], 0.1925),
        # even under the antipodal map only
        "cross_12": (lambda w: w[0] * w[1], 0.5),
        "cross_13": (lambda w: w[0] * w[2], 0.5),
        "cross_23": (lambda w: w[1] * w[2], 0.5),
        # no symmetry at all (negative controls)
        "dipole_1": (lambda w: w[0], 1.0),
        "dipole_2": (lambda w: w[1], 1.0),
        "dipole_3": (lambda w: w[2], 1.0),
    }


SPHERE_TERMS = _sphere_terms()


@dataclass(frozen=True)
class SphereProfile:
    """rho(omega) = base + sum_t c_t * B_t(omega) for named sphere polynomials.

    The registry holds zero-mean polynomial perturbations of the unit
    direction vector together with their sup norms (used to scale random
    amplitudes).
    """

    base: float
    terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(
            (str(name), float(c)) for (name, c) in self.terms))
        for name, _ in self.terms:
            if name not in SPHERE_TERMS:
                raise ValueError(f"unknown sphere term {name!r}")

    def evaluate(self, omega):
        omega = np.asarray(omega, dtype=float)
        rho = np.full(omega.shape[1:], self.base)
        for name, c in self.terms:
            rho = rho + c * SPHERE_TERMS[name][0](omega)
        return rho


@dataclass(frozen=True)
class RadialTestFunction:
    """Radial profile with value/derivative queries, optionally tagged with
    the coordinate index it multiplies."""

    value_fn: object = field(repr=False)
    derivative_fn: object = field(repr=False, default=None)
    index: int | None = None

    def value(self, r):
        return np.asarray(self.value_fn(np.asarray(r, dtype=float)), dtype=float)

    def derivative(self, r):
        if self.derivative_fn is None:
            raise TypeError("this radial profile has no derivative")
        return np.asarray(self.derivative_fn(np.asarray(r, dtype=float)), dtype=float)

    __call__ = value

    @staticmethod
    def constant(c: float = 1.0) -> "RadialTestFunction":
        return RadialTestFunction(
            value_fn=lambda r: np.full_like(np.asarray(r, dtype=float), c),
            derivative_fn=lambda r: np.zeros_like(np.asarray(r, dtype=float)))


def _g_value(g, r):
    if hasattr(g, "value"):
        return np.asarray(g.value(r), dtype=float)
    return np.asarray(g(np.asarray(r, dtype=float)), dtype=float)


def _g_derivative(g, r):
    if hasattr(g, "derivative"):
        return np.asarray(g.derivative(r), dtype=float)
    raise TypeError("gradient integrals need a profile with a derivative query")


# ---------------------------------------------------------------------------
# Symmetry generators and validation samples
# ---------------------------------------------------------------------------

def _quarter_turn(n: int, i: int, j: int) -> np.ndarray:
    mat = np.eye(n)
    mat[i, i] = mat[j, j] = 0.0
    mat[i, j] = -1.0
    mat[j, i] = 1.0
    return mat


def _pair_flip(n: int, i: int, j: int) -> np.ndarray:
    mat = np.eye(n)
    mat[i, i] = mat[j, j] = -1.0
    return mat


def symmetry_generators(n: int, symmetry: SymmetryOrder) -> list[np.ndarray]:
    """Matrices on the normal-coordinate chart whose invariance defines the class."""
    if symmetry is SymmetryOrder.NONE:
        return []
    if symmetry is SymmetryOrder.CENTRAL:
        return [-np.eye(n)]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if symmetry is SymmetryOrder.ORDER2:
        return [_pair_flip(n, i, j) for i, j in pairs]
    return [_quarter_turn(n, i, j) for i, j in pairs]


def _unit_circle_sample(count: int) -> np.ndarray:
    theta = np.linspace(0.0, 2 * math.pi, count, endpoint=False)
    return np.vstack([np.cos(theta), np.sin(theta)])


def _fibonacci_sphere(count: int) -> np.ndarray:
    i = np.arange(count)
    z = 1.0 - 2.0 * (i + 0.5) / count
    radius = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.vstack([z, radius * np.cos(phi), radius * np.sin(phi)])


def _angular_sample(n: int, count: int) -> np.ndarray:
    return _unit_circle_sample(count) if n == 2 else _fibonacci_sphere(count)


# ---------------------------------------------------------------------------
# Domain specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Star-shaped domain between rho_in and rho_out with declared symmetry.

    Validation at construction: positive boundaries with rho_in strictly
    inside rho_out, the spherical hemisphere bound, and the declared
    symmetry to 1e-12 on a dense angular sample.  ``skip_validation``
    exists for deliberately broken inputs in negative-control tests.
    """

    form: SpaceForm
    n: int
    symmetry_order: SymmetryOrder
    rho_out: object
    rho_in: object = None
    skip_validation: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "form", _as_form(self.form))
        object.__setattr__(self, "symmetry_order", SymmetryOrder(self.symmetry_order))
        if self.n not in (2, 3):
            raise ValueError("quadrature-backed domains support n in {2, 3}")
        if not self.skip_validation:
            _validate_spec(self)

    @property
    def has_hole(self) -> bool:
        return self.rho_in is not None

    @staticmethod
    def exact_annulus(form, n: int, r1: float, r2: float,
                      symmetry: SymmetryOrder = SymmetryOrder.ORDER4) -> "DomainSpec":
        """Round shell (or ball for r1 = 0); invariant under every rotation."""
        if n == 2:
            outer = FourierProfile(r2)
            inner = FourierProfile(r1) if r1 > 0 else None
        else:
            outer = SphereProfile(r2)
            inner = SphereProfile(r1) if r1 > 0 else None
        return DomainSpec(form, n, symmetry, outer, inner)


SYMMETRY_TOLERANCE = 1e-12


def _validate_spec(spec: DomainSpec) -> None:
    omega = _angular_sample(spec.n, 4096 if spec.n == 2 else 8192)
    rho_out = spec.rho_out.evaluate(omega)
    if np.any(rho_out <= 0):
        raise ValueError("outer boundary must be strictly positive")
    if spec.form is SpaceForm.SPHERICAL and np.max(rho_out) > HEMISPHERE_RADIUS + 1e-12:
        raise GeometryError(
            "domain leaves the closed hemisphere: sup rho_out = "
            f"{np.max(rho_out):.6g} > pi/2")
    if spec.rho_in is not None:
        rho_in = spec.rho_in.evaluate(omega)
        if np.any(rho_in <= 0):
            raise ValueError("inner boundary must be strictly positive")
        if np.any(rho_out - rho_in <= 0):
            raise ValueError("inner boundary must stay strictly inside the outer one")
    scale = max(1.0, float(np.max(np.abs(rho_out))))
    for gen in symmetry_generators(spec.n, spec.symmetry_order):
        mapped = gen @ omega
        for profile in (spec.rho_out, spec.rho_in):
            if profile is None:
                continue
            err = float(np.max(np.abs(profile.evaluate(mapped) - profile.evaluate(omega))))
            if err > SYMMETRY_TOLERANCE * scale:
                raise SymmetryError(
                    f"declared {spec.symmetry_order} symmetry violated by {err:.3e} "
                    "on the angular sample")


def boundary_extrema(spec: DomainSpec) -> dict:
    """inf/sup of both boundaries, refined by local optimization.

    The dense-sample argmin/argmax is polished with a bounded scalar
    minimizer (n = 2) or Nelder-Mead in the two angles (n = 3), so the
    values are accurate well beyond the sampling resolution.
    """
    out: dict[str, float] = {}
    for name, profile in (("out", spec.rho_out), ("in", spec.rho_in)):
        if profile is None:
            continue
        for kind, sign in (("inf", 1.0), ("sup", -1.0)):
            if spec.n == 2:
                theta = np.linspace(0.0, 2 * math.pi, 4096, endpoint=False)
                vals = sign * profile.at_theta(theta)
                t0 = theta[int(np.argmin(vals))]
                window = 2 * math.pi / 4096 * 4
                res = optimize.minimize_scalar(
                    lambda t: sign * float(profile.at_theta(np.array([t]))[0]),
                    bounds=(t0 - window, t0 + window), method="bounded",
                    options={"xatol": 1e-12})
                out[f"{kind}_{name}"] = sign * float(res.fun)
            else:
                omega = _fibonacci_sphere(16384)
                vals = sign * profile.evaluate(omega)
                best = omega[:, int(np.argmin(vals))]
                phi2 = math.acos(np.clip(best[0], -1, 1))
                phi3 = math.atan2(best[2], best[1])

                def objective(angles, _profile=profile, _sign=sign):
                    p2, p3 = angles
                    w = np.array([[math.cos(p2)],
                                  [math.sin(p2) * math.cos(p3)],
                                  [math.sin(p2) * math.sin(p3)]])
                    return _sign * float(_profile.evaluate(w)[0])

                res = optimize.minimize(objective, [phi2, phi3], method="Nelder-Mead",
                                        options={"xatol": 1e-10, "fatol": 1e-14})
                out[f"{kind}_{name}"] = sign * float(res.fun)
    return out


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor quadrature over the domain with the metric volume factor baked in.

    ``weight`` integrates against sin_m^{n-1}(r) dr dsigma(Theta), so
    summing it yields the domain volume; ``coords`` are the chart
    coordinates X = r * omega of every node.
    """

    spec: DomainSpec
    radial_points: int
    angular_points: tuple
    omega: np.ndarray
    angular_weight: np.ndarray
    ray_inner: np.ndarray
    ray_outer: np.ndarray
    radius: np.ndarray
    weight: np.ndarray
    coords: np.ndarray

    @staticmethod
    def for_spec(spec: DomainSpec, radial_points: int = 64,
                 angular_points: tuple | int | None = None) -> "QuadratureGrid":
        """Build the grid; angular defaults are 256 nodes (n=2) or 48x96 (n=3)."""
        if spec.n == 2:
            count = 256 if angular_points is None else int(
                angular_points if not isinstance(angular_points, tuple) else angular_points[0])
            if count % 4:
                raise ValueError("angular node count must be divisible by 4")
            theta = np.linspace(0.0, 2 * math.pi, count, endpoint=False)
            omega = np.vstack([np.cos(theta), np.sin(theta)])
            ang_w = np.full(count, 2 * math.pi / count)
            shape = (count,)
        else:
            polar, azimuth = (48, 96) if angular_points is None else angular_points
            if azimuth % 4:
                raise ValueError("azimuthal node count must be divisible by 4")
            u, wu = _gl_rule(int(polar))
            phi3 = np.linspace(0.0, 2 * math.pi, int(azimuth), endpoint=False)
            su = np.sqrt(1.0 - u**2)
            omega = np.empty((3, polar * azimuth))
            omega[0] = np.repeat(u, azimuth)
            omega[1] = np.repeat(su, azimuth) * np.tile(np.cos(phi3), polar)
            omega[2] = np.repeat(su, azimuth) * np.tile(np.sin(phi3), polar)
            ang_w = np.repeat(wu, azimuth) * (2 * math.pi / azimuth)
            shape = (int(polar), int(azimuth))

        lo = (spec.rho_in.evaluate(omega) if spec.rho_in is not None
              else np.zeros(omega.shape[1]))
        hi = spec.rho_out.evaluate(omega)
        x, w = _gl_rule(int(radial_points))
        half = 0.5 * (hi - lo)
        r = lo[:, None] + half[:, None] * (x[None, :] + 1.0)
        wr = half[:, None] * w[None, :]
        metric = sin_m(spec.form, r) ** (spec.n - 1)
        weight = (ang_w[:, None] * wr * metric).ravel()
        radius = r.ravel()
        coords = omega[:, :, None] * r[None, :, :]
        return QuadratureGrid(
            spec=spec, radial_points=int(radial_points), angular_points=shape,
            omega=omega, angular_weight=ang_w, ray_inner=lo, ray_outer=hi,
            radius=radius, weight=weight,
            coords=coords.reshape(spec.n, radius.size))


def _check_grid(spec: DomainSpec, grid: QuadratureGrid) -> None:
    if grid.spec is not spec and grid.spec != spec:
        raise ValueError("quadrature grid was built for a different domain")


def volume(spec: DomainSpec, grid: QuadratureGrid) -> float:
    """Domain volume: the metric weight integrated over the whole grid."""
    _check_grid(spec, grid)
    return float(np.sum(grid.weight))


def integrate_moment(spec: DomainSpec, grid: QuadratureGrid, g,
                     powers, absolute: bool = False) -> float:
    """Integral of g(r) * prod_i X_i^{p_i} over the domain.

    ``powers`` lists one exponent per coordinate.  With ``absolute`` the
    integrand is replaced by its absolute value, which is the natural
    scale against which the symmetric cases vanish.
    """
    _check_grid(spec, grid)
    powers = tuple(int(p) for p in powers)
    if len(powers) != spec.n or any(p < 0 for p in powers):
        raise ValueError(f"powers must be {spec.n} nonnegative exponents")
    integrand = _g_value(g, grid.radius)
    for axis, p in enumerate(powers):
        if p:
            col = grid.coords[axis]
            for _ in range(p):  # small integer powers: multiply, don't pow
                integrand = integrand * col
    if absolute:
        integrand = np.abs(integrand)
    return float(np.dot(grid.weight, integrand))


def grad_pair_integral(spec: DomainSpec, grid: QuadratureGrid, g,
                       i: int, j: int, absolute: bool = False) -> float:
    """Integral of <grad(g X_i), grad(g X_j)> for distinct axes (1-based).

    The integrand collapses to
    [((r g' + g)^2 / r^2) - g^2 / sin_m(r)^2] X_i X_j,
    which this evaluates directly on the grid.
    """
    _check_grid(spec, grid)
    if not (1 <= i <= spec.n and 1 <= j <= spec.n) or i == j:
        raise ValueError("need distinct 1-based axes i, j")
    r = grid.radius
    gv = _g_value(g, r)
    gd = _g_derivative(g, r)
    factor = ((r * gd + gv) ** 2 / r**2
              - gv**2 / sin_m(spec.form, r) ** 2)
    integrand = factor * grid.coords[i - 1] * grid.coords[j - 1]
    if absolute:
        integrand = np.abs(integrand)
    return float(np.dot(grid.weight, integrand))


def matched_annulus(spec: DomainSpec, grid: QuadratureGrid) -> tuple[float, float]:
    """Comparison shell radii: r1 = inf rho_in (0 without a hole) and the
    outer radius that matches the domain volume."""
    _check_grid(spec, grid)
    r1 = boundary_extrema(spec)["inf_in"] if spec.has_hole else 0.0
    r2 = match_outer_radius(spec.form, spec.n, r1, volume(spec, grid))
    return r1, r2


def rayleigh_gk(spec: DomainSpec, grid: QuadratureGrid, k: int,
                pair: SLEigenpair) -> float:
    """Rayleigh quotient of the constant-extended lowest mode-k eigenfunction.

    ``pair`` must be the (k, 1) Neumann eigenpair of the volume-matched
    comparison shell whose inner ball sits inside the hole; both
    preconditions are enforced.  On the exact shell the quotient equals
    the eigenvalue; on symmetric perturbations it cannot exceed it.
    """
    _check_grid(spec, grid)
    problem = pair.problem
    if problem.k != k:
        raise ValueError(f"pair carries mode k={problem.k}, expected {k}")
    if k < 1 or pair.j != 1 or problem.bc is not BoundaryCondition.NEUMANN:
        raise ValueError("need the (k, 1) Neumann pair with k >= 1")
    if problem.form is not spec.form or problem.n != spec.n:
        raise ValueError("pair and domain live on different spaces")

    if spec.has_hole:
        inf_in = boundary_extrema(spec)["inf_in"]
        if problem.r1 > inf_in + 1e-9:
            raise VolumeMismatchError(
                f"inner ball radius {problem.r1:.12g} pokes out of the hole "
                f"(inf rho_in = {inf_in:.12g})")
    elif problem.r1 > 1e-12:
        raise VolumeMismatchError("hole-free domain needs an r1 = 0 comparison ball")

    target = annulus_volume(spec.form, spec.n, problem.r1, problem.r2)
    vol = volume(spec, grid)
    if abs(vol - target) > 1e-8 * target:
        raise VolumeMismatchError(
            f"domain volume {vol:.12g} vs shell volume {target:.12g} "
            "differ beyond 1e-8 relative")

    sup_out = float(np.max(grid.ray_outer))
    gk = extend_gk(pair, max(sup_out, problem.r2))
    r = grid.radius
    gv = gk.value(r)
    gd = gk.derivative(r)
    coef = problem.angular_eigenvalue
    numerator = float(np.dot(grid.weight, gd**2 + coef / sin_m(spec.form, r) ** 2 * gv**2))
    denominator = float(np.dot(grid.weight, gv**2))
    return numerator / denominator


@dataclass(frozen=True)
class GradientIdentityReport:
    max_relative_residual: float
    tolerance: float
    nodes: int

    @property
    def passed(self) -> bool:
        return self.max_relative_residual <= self.tolerance


def sum_gradient_identity_check(spec: DomainSpec, grid: QuadratureGrid,
                                pair: SLEigenpair) -> GradientIdentityReport:
    """Check sum_i |grad(G(r) X_i / r)|^2 = (G')^2 + (n-1) G^2 / sin_m^2.

    Each summand is evaluated from the per-axis closed form with the
    actual node coordinates, so the check exercises the chart (the
    coordinates must satisfy sum X_i^2 = r^2) and the gradient algebra
    at once.
    """
    _check_grid(spec, grid)
    gk = extend_gk(pair, float(np.max(grid.ray_outer)) + 1.0)
    r = grid.radius
    gv = gk.value(r)
    gd = gk.derivative(r)
    inv_sm2 = 1.0 / sin_m(spec.form, r) ** 2
    ratios2 = (grid.coords / r) ** 2
    lhs = np.zeros_like(r)
    for axis in range(spec.n):
        lhs += gd**2 * ratios2[axis] + gv**2 * inv_sm2 * (1.0 - ratios2[axis])
    rhs = gd**2 + (spec.n - 1) * gv**2 * inv_sm2
    scale = gd**2 + (spec.n - 1) * np.abs(gv**2 * inv_sm2) + 1e-300
    worst = float(np.max(np.abs(lhs - rhs) / scale))
    return GradientIdentityReport(max_relative_residual=worst,
                                  tolerance=1e-10, nodes=r.size)


# ---------------------------------------------------------------------------
# Random families
# ---------------------------------------------------------------------------

def _random_fourier(rng: np.random.Generator, base: float, gap: float,
                    amplitude: float, step: int, asymmetric: bool) -> FourierProfile:
    total = amplitude * gap * rng.uniform(0.5, 1.0)
    multipliers = [1, 2] if rng.uniform() < 0.5 else [1]
    freqs = [step * m for m in multipliers]
    if asymmetric:
        freqs.append(1 if step > 1 else 3)
    raw = rng.uniform(-1.0, 1.0, size=(len(freqs), 2))
    norm = np.sum(np.hypot(raw[:, 0], raw[:, 1])) + 1e-300
    raw *= total / norm
    return FourierProfile(base, tuple((f, a, b) for f, (a, b) in zip(freqs, raw)))


_CLASS_TERMS = {
    SymmetryOrder.ORDER4: ["quartic_axes", "sextic_prod"],
    SymmetryOrder.ORDER2: ["axis2_1", "axis2_2", "axis2_3", "odd_prod"],
    SymmetryOrder.CENTRAL: ["axis2_1", "axis2_2", "axis2_3",
                            "cross_12", "cross_13", "cross_23"],
    SymmetryOrder.NONE: ["dipole_1", "dipole_2", "dipole_3"],
}


def _random_sphere_profile(rng: np.random.Generator, base: float, gap: float,
                           amplitude: float, symmetry: SymmetryOrder) -> SphereProfile:
    names = list(_CLASS_TERMS[symmetry])
    count = int(rng.integers(1, min(3, len(names)) + 1))
    picked = list(rng.choice(names, size=count, replace=False))
    total = amplitude * gap * rng.uniform(0.5, 1.0)
    raw = rng.uniform(-1.0, 1.0, size=count)
    norm = sum(abs(c) * SPHERE_TERMS[nm][1] for c, nm in zip(raw, picked)) + 1e-300
    raw *= total / norm
    return SphereProfile(base, tuple(zip(picked, raw)))


def random_spec(rng: np.random.Generator, form, n: int = 2,
                symmetry: SymmetryOrder = SymmetryOrder.ORDER4,
                amplitude: float = 0.08, with_hole: bool = True) -> DomainSpec:
    """One random domain of the requested symmetry class.

    Perturbation amplitudes are scaled to a fraction ``amplitude`` of
    the gap between the mean boundaries; spherical bases stay well
    inside the hemisphere.
    """
    form = _as_form(form)
    symmetry = SymmetryOrder(symmetry)
    hi = 1.2 if form is SpaceForm.SPHERICAL else 1.35
    base_out = rng.uniform(1.0, hi)
    base_in = base_out * rng.uniform(0.32, 0.5) if with_hole else 0.0
    gap = base_out - base_in
    if n == 2:
        step = fourier_order(symmetry)
        asym = symmetry is SymmetryOrder.NONE
        outer = _random_fourier(rng, base_out, gap, amplitude, step, asym)
        inner = _random_fourier(rng, base_in, gap, amplitude, step, asym) if with_hole else None
    else:
        outer = _random_sphere_profile(rng, base_out, gap, amplitude, symmetry)
        inner = _random_sphere_profile(rng, base_in, gap, amplitude, symmetry) if with_hole else None
    return DomainSpec(form, n, symmetry, outer, inner)


def random_family(seed: int, form, n: int = 2,
                  symmetry: SymmetryOrder = SymmetryOrder.ORDER4,
                  count: int = 5, amplitude: float = 0.08) -> list[DomainSpec]:
    """Seed-determined family; holes alternate (even indices have one)."""
    rng = np.random.default_rng(seed)
    return [random_spec(rng, form, n, symmetry, amplitude, with_hole=(idx % 2 == 0))
            for idx in range(count)]


# ---------------------------------------------------------------------------
# Wire formats (planar Fourier domains)
# ---------------------------------------------------------------------------

SCHEMA_VERSION = 1


def spec_to_dict(spec: DomainSpec) -> dict:
    if spec.n != 2 or not isinstance(spec.rho_out, FourierProfile):
        raise ValueError("the JSON schema covers planar Fourier domains only")

    def profile_dict(profile: FourierProfile) -> dict:
        return {"base": profile.base,
                "harmonics": [{"m": m, "a": a, "b": b} for m, a, b in profile.harmonics]}

    return {
        "schema_version": SCHEMA_VERSION,
        "form": str(spec.form),
        "n": spec.n,
        "symmetry_order": str(spec.symmetry_order),
        "rho_out": profile_dict(spec.rho_out),
        "rho_in": profile_dict(spec.rho_in) if spec.rho_in is not None else None,
    }


def spec_from_dict(data: dict) -> DomainSpec:
    """Planar Fourier domain from the wire dict.

    Harmonics whose frequency is not a multiple of the declared symmetry
    order are rejected outright; everything else goes through the same
    validation as programmatic construction.
    """
    if int(data.get("n", 2)) != 2:
        raise ValueError("the JSON schema covers n = 2; build 3D specs programmatically")
    symmetry = SymmetryOrder(data["symmetry_order"])
    step = fourier_order(symmetry)

    def parse_profile(blob, label) -> FourierProfile:
        harmonics = []
        for h in blob.get("harmonics", []):
            m = int(h["m"])
            if m % step:
                raise ValueError(
                    f"{label} harmonic m={m} incompatible with {symmetry} symmetry "
                    f"(frequencies must be multiples of {step})")
            harmonics.append((m, float(h.get("a", 0.0)), float(h.get("b", 0.0))))
        return FourierProfile(float(blob["base"]), tuple(harmonics))

    rho_out = parse_profile(data["rho_out"], "rho_out")
    rho_in = parse_profile(data["rho_in"], "rho_in") if data.get("rho_in") else None
    return DomainSpec(data["form"], 2, symmetry, rho_out, rho_in)


def grid_to_csv(grid: QuadratureGrid) -> str:
    """Node table (radius, coordinates, weight) for debugging."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["r"] + [f"x{i + 1}" for i in range(grid.spec.n)] + ["weight"])
    for idx in range(grid.radius.size):
        writer.writerow([repr(float(grid.radius[idx]))]
                        + [repr(float(grid.coords[a, idx])) for a in range(grid.spec.n)]
                        + [repr(float(grid.weight[idx]))])
    return buf.getvalue()
