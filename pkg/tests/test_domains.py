import json
import math

import numpy as np
import pytest

from spaceform_spectra import domains as dm
from spaceform_spectra import slsolver
from spaceform_spectra import spaceform as sf
from spaceform_spectra.domains import (
    DomainSpec,
    FourierProfile,
    QuadratureGrid,
    RadialTestFunction,
    SphereProfile,
    SymmetryError,
    SymmetryOrder,
    VolumeMismatchError,
)
from spaceform_spectra.slsolver import SLProblem, SolverConfig
from spaceform_spectra.spaceform import GeometryError

import oracles

ONE = RadialTestFunction.constant(1.0)
GAUSS = RadialTestFunction(lambda r: np.exp(-0.5 * r**2),
                           lambda r: -r * np.exp(-0.5 * r**2))


def relative_moment(spec, grid, g, powers):
    signed = dm.integrate_moment(spec, grid, g, powers)
    scale = dm.integrate_moment(spec, grid, g, powers, absolute=True)
    return abs(signed) / max(scale, 1e-300)


class TestSpecValidation:
    def test_accepts_symmetric_fourier(self):
        spec = DomainSpec("euclidean", 2, SymmetryOrder.ORDER4,
                          FourierProfile(1.2, ((4, 0.05, -0.02),)),
                          FourierProfile(0.5, ((8, 0.01, 0.0),)))
        assert spec.has_hole

    def test_rejects_wrong_symmetry(self):
        with pytest.raises(SymmetryError):
            DomainSpec("euclidean", 2, SymmetryOrder.ORDER4,
                       FourierProfile(1.2, ((3, 0.05, 0.0),)))

    def test_rejects_hemisphere_violation(self):
        with pytest.raises(GeometryError):
            DomainSpec("spherical", 2, SymmetryOrder.ORDER4, FourierProfile(1.6))

    def test_rejects_crossing_boundaries(self):
        with pytest.raises(ValueError):
            DomainSpec("euclidean", 2, SymmetryOrder.NONE,
                       FourierProfile(1.0), FourierProfile(1.1))

    def test_override_flag_skips_the_check(self):
        spec = DomainSpec("euclidean", 2, SymmetryOrder.ORDER4,
                          FourierProfile(1.2, ((1, 0.05, 0.0),)),
                          skip_validation=True)
        assert spec.symmetry_order is SymmetryOrder.ORDER4

    def test_sphere_profile_symmetries(self):
        DomainSpec("hyperbolic", 3, SymmetryOrder.ORDER4,
                   SphereProfile(1.1, (("quartic_axes", 0.05),)))
        DomainSpec("hyperbolic", 3, SymmetryOrder.ORDER2,
                   SphereProfile(1.1, (("axis2_1", 0.05), ("odd_prod", 0.03))))
        with pytest.raises(SymmetryError):
            DomainSpec("hyperbolic", 3, SymmetryOrder.ORDER4,
                       SphereProfile(1.1, (("axis2_1", 0.05),)))
        with pytest.raises(SymmetryError):
            DomainSpec("hyperbolic", 3, SymmetryOrder.CENTRAL,
                       SphereProfile(1.1, (("odd_prod", 0.05),)))


class TestQuadratureVolume:
    @pytest.mark.parametrize("form", ["euclidean", "spherical", "hyperbolic"])
    @pytest.mark.parametrize("n", [2, 3])
    def test_exact_annulus_matches_closed_form(self, form, n):
        r2 = 1.2 if form != "spherical" else 1.1
        spec = DomainSpec.exact_annulus(form, n, 0.4, r2)
        grid = QuadratureGrid.for_spec(spec)
        expected = sf.annulus_volume(form, n, 0.4, r2)
        assert dm.volume(spec, grid) == pytest.approx(expected, rel=1e-10)

    def test_unit_disk(self):
        spec = DomainSpec.exact_annulus("euclidean", 2, 0.0, 1.0)
        grid = QuadratureGrid.for_spec(spec)
        assert dm.volume(spec, grid) == pytest.approx(math.pi, rel=1e-12)

    def test_weights_positive(self):
        spec = dm.random_spec(np.random.default_rng(1), "hyperbolic", 3,
                              SymmetryOrder.ORDER4)
        grid = QuadratureGrid.for_spec(spec)
        assert np.all(grid.weight > 0)

    def test_self_convergence_under_order_doubling(self):
        spec = dm.random_spec(np.random.default_rng(2), "spherical", 2,
                              SymmetryOrder.ORDER4, amplitude=0.08)
        coarse = dm.volume(spec, QuadratureGrid.for_spec(spec, 32, 128))
        fine = dm.volume(spec, QuadratureGrid.for_spec(spec, 64, 256))
        assert abs(fine - coarse) / fine < 1e-9

    def test_error_drops_fast_when_doubling_low_orders(self):
        # Gauss rate on an analytic boundary: doubling the order from a
        # deliberately coarse grid gains three orders of magnitude or more
        spec = dm.random_spec(np.random.default_rng(4), "hyperbolic", 2,
                              SymmetryOrder.ORDER4, amplitude=0.08)
        reference = dm.volume(spec, QuadratureGrid.for_spec(spec, 64, 512))
        err_low = abs(dm.volume(spec, QuadratureGrid.for_spec(spec, 3, 16)) - reference)
        err_high = abs(dm.volume(spec, QuadratureGrid.for_spec(spec, 6, 32)) - reference)
        assert err_low >= 1e3 * err_high

    def test_grid_spec_mismatch_rejected(self):
        spec_a = DomainSpec.exact_annulus("euclidean", 2, 0.0, 1.0)
        spec_b = DomainSpec.exact_annulus("euclidean", 2, 0.0, 1.1)
        grid = QuadratureGrid.for_spec(spec_a)
        with pytest.raises(ValueError):
            dm.volume(spec_b, grid)


def class_specs(symmetry, count, seed):
    """Randomized specs of one symmetry class across forms and dimensions."""
    rng = np.random.default_rng(seed)
    specs = []
    forms = ["euclidean", "spherical", "hyperbolic"]
    for idx in range(count):
        n = 2 if symmetry is not SymmetryOrder.ORDER2 and idx % 2 == 0 else 3
        if symmetry is SymmetryOrder.ORDER2:
            n = 3  # the order-2 assertions require n >= 3
        specs.append(dm.random_spec(rng, forms[idx % 3], n, symmetry,
                                    amplitude=0.07, with_hole=idx % 2 == 0))
    return specs


class TestOrthogonality:
    def test_central_odd_moments_vanish(self):
        for spec in class_specs(SymmetryOrder.CENTRAL, 6, 101):
            grid = QuadratureGrid.for_spec(spec)
            n = spec.n
            for g in (ONE, GAUSS):
                for m in (0, 1):
                    powers = [0] * n
                    powers[0], powers[1] = 1, 2 * m
                    assert relative_moment(spec, grid, g, powers) <= 1e-10
                for m in (0, 1, 2):
                    powers = [0] * n
                    powers[-1] = 2 * m + 1
                    assert relative_moment(spec, grid, g, powers) <= 1e-10

    def test_order2_mixed_moments_vanish(self):
        for spec in class_specs(SymmetryOrder.ORDER2, 6, 202):
            grid = QuadratureGrid.for_spec(spec)
            for g in (ONE, GAUSS):
                for m in (0, 1, 2, 3):
                    assert relative_moment(spec, grid, g, (1, m, 0)) <= 1e-10
                    assert relative_moment(spec, grid, g, (0, 1, m)) <= 1e-10
                assert relative_moment(spec, grid, g, (0, 0, 3)) <= 1e-10

    def test_order4_cross_and_equal_moments(self):
        for spec in class_specs(SymmetryOrder.ORDER4, 6, 303):
            grid = QuadratureGrid.for_spec(spec)
            n = spec.n
            for i in range(n):
                for j in range(i + 1, n):
                    powers = [0] * n
                    powers[i] = powers[j] = 1
                    assert relative_moment(spec, grid, ONE, powers) <= 1e-10
            for power in (2, 4):
                vals = [dm.integrate_moment(spec, grid, GAUSS,
                                            [power if a == i else 0 for a in range(n)])
                        for i in range(n)]
                assert (max(vals) - min(vals)) / abs(vals[0]) <= 1e-10

    def test_order4_gradient_cross_terms_vanish(self):
        for spec in class_specs(SymmetryOrder.ORDER4, 4, 404):
            grid = QuadratureGrid.for_spec(spec)
            signed = dm.grad_pair_integral(spec, grid, GAUSS, 1, 2)
            scale = dm.grad_pair_integral(spec, grid, GAUSS, 1, 2, absolute=True)
            assert abs(signed) / scale <= 1e-10

    def test_negative_control_asymmetric_domain(self):
        spec = DomainSpec("euclidean", 2, SymmetryOrder.NONE,
                          FourierProfile(1.0, ((1, 0.05, 0.0),)))
        grid = QuadratureGrid.for_spec(spec)
        assert relative_moment(spec, grid, ONE, (1, 0)) >= 1e-3

    def test_negative_control_3d(self):
        spec = DomainSpec("hyperbolic", 3, SymmetryOrder.NONE,
                          SphereProfile(1.0, (("dipole_2", 0.05),)))
        grid = QuadratureGrid.for_spec(spec)
        assert relative_moment(spec, grid, ONE, (0, 1, 0)) >= 1e-3


def chart_coords_fn(n):
    """X_i(r, angles) through the chart map, for the FD oracle."""
    def x_i(i):
        def fn(r, angles):
            return sf.to_normal_coords(sf.GeodesicPoint(r, tuple(angles)))[i]
        return fn
    return [x_i(i) for i in range(n)]


class TestGradientIdentities:
    G = staticmethod(lambda r: math.exp(-r) * (1.0 + 0.3 * r * r))
    DG = staticmethod(lambda r: math.exp(-r) * (0.6 * r - 1.0 - 0.3 * r * r))

    @pytest.mark.parametrize("form", ["spherical", "euclidean", "hyperbolic"])
    @pytest.mark.parametrize("n", [2, 3])
    def test_cross_gradient_formula_vs_fd(self, form, n):
        rng = np.random.default_rng(99)
        xs = chart_coords_fn(n)
        for _ in range(25):
            r = rng.uniform(0.1, 1.4)
            angles = [rng.uniform(0.3, math.pi - 0.3) for _ in range(n - 2)]
            angles.append(rng.uniform(0.1, 2 * math.pi - 0.1))
            i, j = (0, 1) if n == 2 else tuple(rng.choice(n, 2, replace=False))
            i, j = int(min(i, j)), int(max(i, j))

            def f(rr, aa, idx=i):
                return self.G(rr) * xs[idx](rr, aa)

            def g(rr, aa, idx=j):
                return self.G(rr) * xs[idx](rr, aa)

            fd = oracles.metric_grad_inner_fd(form, f, g, r, angles)
            x = sf.to_normal_coords(sf.GeodesicPoint(r, tuple(angles)))
            gv, gd = self.G(r), self.DG(r)
            sm = sf.sin_m(form, r)
            closed = ((r * gd + gv) ** 2 / r**2 - gv**2 / sm**2) * x[i] * x[j]
            scale = abs(closed) + abs(fd) + 1e-3
            assert abs(fd - closed) / scale < 1e-6

    @pytest.mark.parametrize("form", ["spherical", "euclidean", "hyperbolic"])
    @pytest.mark.parametrize("n", [2, 3])
    def test_normalized_gradient_norm_vs_fd(self, form, n):
        rng = np.random.default_rng(7)
        xs = chart_coords_fn(n)
        for _ in range(25):
            r = rng.uniform(0.1, 1.4)
            angles = [rng.uniform(0.3, math.pi - 0.3) for _ in range(n - 2)]
            angles.append(rng.uniform(0.1, 2 * math.pi - 0.1))
            i = int(rng.integers(0, n))

            def f(rr, aa, idx=i):
                return self.G(rr) * xs[idx](rr, aa) / rr

            fd = oracles.metric_grad_inner_fd(form, f, f, r, angles)
            x = sf.to_normal_coords(sf.GeodesicPoint(r, tuple(angles)))
            gv, gd = self.G(r), self.DG(r)
            ratio2 = (x[i] / r) ** 2
            closed = gd**2 * ratio2 + gv**2 / sf.sin_m(form, r) ** 2 * (1 - ratio2)
            assert abs(fd - closed) / (abs(closed) + 1e-3) < 1e-6

    def test_euclidean_coordinate_functions(self):
        # G(r) = r: sum of |grad X_i|^2 over i equals the dimension
        for n in (2, 3):
            xs = chart_coords_fn(n)
            total = 0.0
            angles = [0.9] * (n - 2) + [1.3]
            for i in range(n):
                total += oracles.metric_grad_inner_fd(
                    "euclidean", lambda r, a, idx=i: xs[idx](r, a),
                    lambda r, a, idx=i: xs[idx](r, a), 0.8, angles)
            assert total == pytest.approx(n, rel=1e-9)


@pytest.fixture(scope="module")
def matched_pair():
    spec = DomainSpec.exact_annulus("spherical", 2, 0.35, 1.1)
    grid = QuadratureGrid.for_spec(spec)
    r1, r2 = dm.matched_annulus(spec, grid)
    pair = slsolver.solve(SLProblem("spherical", 2, 1, r1, r2),
                          SolverConfig(max_j=1))[0]
    return spec, grid, pair


class TestRayleighBound:
    @pytest.mark.parametrize("form", ["euclidean", "spherical", "hyperbolic"])
    def test_equality_on_exact_annuli(self, form):
        r2 = 1.2 if form != "spherical" else 1.1
        spec = DomainSpec.exact_annulus(form, 2, 0.4, r2)
        grid = QuadratureGrid.for_spec(spec)
        r1, r2m = dm.matched_annulus(spec, grid)
        for k in (1, 2, 3):
            pair = slsolver.solve(SLProblem(form, 2, k, r1, r2m),
                                  SolverConfig(max_j=1))[0]
            quotient = dm.rayleigh_gk(spec, grid, k, pair)
            assert quotient == pytest.approx(pair.eigenvalue, rel=1e-8)

    def test_strict_inequality_on_perturbation(self):
        spec = DomainSpec("euclidean", 2, SymmetryOrder.ORDER4,
                          FourierProfile(1.3, ((4, 0.05, 0.02),)),
                          FourierProfile(0.6, ((4, -0.02, 0.03),)))
        grid = QuadratureGrid.for_spec(spec)
        r1, r2 = dm.matched_annulus(spec, grid)
        pair = slsolver.solve(SLProblem("euclidean", 2, 1, r1, r2),
                              SolverConfig(max_j=1))[0]
        quotient = dm.rayleigh_gk(spec, grid, 1, pair)
        assert quotient < pair.eigenvalue

    def test_ball_like_domain(self):
        spec = DomainSpec("hyperbolic", 2, SymmetryOrder.ORDER4,
                          FourierProfile(1.0, ((4, 0.04, 0.0),)))
        grid = QuadratureGrid.for_spec(spec)
        r1, r2 = dm.matched_annulus(spec, grid)
        assert r1 == 0.0
        pair = slsolver.solve(SLProblem("hyperbolic", 2, 1, 0.0, r2),
                              SolverConfig(max_j=1))[0]
        quotient = dm.rayleigh_gk(spec, grid, 1, pair)
        assert quotient <= pair.eigenvalue * (1 + 1e-10)

    def test_volume_mismatch_rejected(self, matched_pair):
        spec, grid, _ = matched_pair
        bad = slsolver.solve(SLProblem("spherical", 2, 1, 0.35, 1.05),
                             SolverConfig(max_j=1, grid_points=256))[0]
        with pytest.raises(VolumeMismatchError):
            dm.rayleigh_gk(spec, grid, 1, bad)

    def test_inner_ball_must_fit_the_hole(self, matched_pair):
        spec, grid, _ = matched_pair
        target = dm.volume(spec, grid)
        r1_bad = 0.5  # pokes out of the hole (inf rho_in = 0.35)
        r2_bad = sf.match_outer_radius("spherical", 2, r1_bad, target)
        bad = slsolver.solve(SLProblem("spherical", 2, 1, r1_bad, r2_bad),
                             SolverConfig(max_j=1, grid_points=256))[0]
        with pytest.raises(VolumeMismatchError):
            dm.rayleigh_gk(spec, grid, 1, bad)

    def test_mode_mismatch_rejected(self, matched_pair):
        spec, grid, pair = matched_pair
        with pytest.raises(ValueError):
            dm.rayleigh_gk(spec, grid, 2, pair)


class TestSumGradientIdentity:
    def test_residual_at_machine_scale(self, matched_pair):
        spec, grid, pair = matched_pair
        report = dm.sum_gradient_identity_check(spec, grid, pair)
        assert report.passed
        assert report.max_relative_residual <= 1e-10

    def test_three_dimensional_domain(self):
        spec = DomainSpec.exact_annulus("hyperbolic", 3, 0.4, 1.2)
        grid = QuadratureGrid.for_spec(spec)
        pair = slsolver.solve(SLProblem("hyperbolic", 3, 1, 0.4, 1.2),
                              SolverConfig(max_j=1))[0]
        report = dm.sum_gradient_identity_check(spec, grid, pair)
        assert report.passed


class TestWireFormat:
    def test_round_trip(self):
        spec = DomainSpec("spherical", 2, SymmetryOrder.ORDER4,
                          FourierProfile(1.1, ((4, 0.03, -0.01),)),
                          FourierProfile(0.45, ((8, 0.005, 0.0),)))
        blob = json.dumps(dm.spec_to_dict(spec), sort_keys=True)
        back = dm.spec_from_dict(json.loads(blob))
        assert back == spec

    def test_rejects_incompatible_harmonics(self):
        data = {"form": "euclidean", "n": 2, "symmetry_order": "order4",
                "rho_out": {"base": 1.0, "harmonics": [{"m": 6, "a": 0.02, "b": 0.0}]},
                "rho_in": None}
        with pytest.raises(ValueError, match="incompatible"):
            dm.spec_from_dict(data)

    def test_rejects_non_planar(self):
        with pytest.raises(ValueError):
            dm.spec_from_dict({"n": 3, "form": "euclidean",
                               "symmetry_order": "order4",
                               "rho_out": {"base": 1.0}})

    def test_grid_csv_header(self):
        spec = DomainSpec.exact_annulus("euclidean", 2, 0.5, 1.0)
        grid = QuadratureGrid.for_spec(spec, 4, 8)
        lines = dm.grid_to_csv(grid).strip().split("\n")
        assert lines[0] == "r,x1,x2,weight"
        assert len(lines) == 1 + 4 * 8


class TestMatchedAnnulus:
    def test_exact_annulus_is_its_own_match(self):
        spec = DomainSpec.exact_annulus("euclidean", 2, 0.7, 1.6)
        grid = QuadratureGrid.for_spec(spec)
        r1, r2 = dm.matched_annulus(spec, grid)
        assert r1 == pytest.approx(0.7, abs=1e-10)
        assert r2 == pytest.approx(1.6, abs=1e-9)

    def test_extrema_refinement(self):
        spec = DomainSpec("euclidean", 2, SymmetryOrder.ORDER4,
                          FourierProfile(1.0, ((4, 0.05, 0.0),)))
        ext = dm.boundary_extrema(spec)
        assert ext["inf_out"] == pytest.approx(0.95, abs=1e-10)
        assert ext["sup_out"] == pytest.approx(1.05, abs=1e-10)

    def test_extrema_refinement_3d(self):
        spec = DomainSpec("euclidean", 3, SymmetryOrder.ORDER4,
                          SphereProfile(1.0, (("quartic_axes", 0.05),)))
        ext = dm.boundary_extrema(spec)
        # quartic term ranges over [-0.8/3, 0.4] times the coefficient
        assert ext["sup_out"] == pytest.approx(1.0 + 0.05 * 0.4, abs=1e-8)
        assert ext["inf_out"] == pytest.approx(1.0 - 0.05 * 0.8 / 3.0, abs=1e-8)
