import numpy as np
import pytest
from support import haar_orthogonal, random_point, random_problem

from sgnsdp.kkt import big_g, residual
from sgnsdp.model import (
    AffineQuadraticProblem,
    PrimalDualPoint,
    degenerate_fixture,
    degenerate_fixture_curve,
    point_distance,
    synth_nondegenerate,
)
from sgnsdp.regularity import (
    FAILS,
    HEURISTIC_FAILS,
    HEURISTIC_HOLDS,
    HOLDS,
    NOT_APPLICABLE,
    app_basis,
    appl_basis,
    check_cn,
    check_sonc_heuristic,
    check_srcq_heuristic,
    check_ssosc,
    check_wsoc,
    check_wsrcq,
    diagnose,
    error_bound_probe,
    injectivity_margin,
    quad_form_matrix,
)
from sgnsdp.spectral import make_ied, rotate_within_eigenspaces, sym

# pinned after first computation at the degenerate fixture's solution
SIGMA_MIN_REFERENCE = 0.40753645318366233
ERROR_BOUND_REFERENCE = 1.063920967319316  # radius 1e-3, 500 samples, seed 0


def constant_g_fixture(quad_diag, n=4, p=1, q=1, seed=0):
    """KKT pair of a constant-constraint problem: dg vanishes identically.

    A0 is PSD of rank p, the multiplier is NSD of rank q on A0's kernel,
    so beta and gamma are nonempty and every span condition fails.
    """
    rng = np.random.default_rng(seed)
    basis = haar_orthogonal(rng, n)
    lam_a0 = np.zeros(n)
    lam_a0[:p] = rng.uniform(0.5, 2.0, size=p)
    a0 = sym(basis @ (lam_a0[:, None] * basis.T))
    lam_y = np.zeros(n)
    lam_y[n - q :] = -rng.uniform(0.5, 2.0, size=q)
    y_star = sym(basis @ (lam_y[:, None] * basis.T))
    m = len(quad_diag)
    problem = AffineQuadraticProblem(
        c=np.zeros(m),
        a0=a0,
        a_list=[np.zeros((n, n)) for _ in range(m)],
        quad=np.diag(quad_diag),
    )
    return problem, PrimalDualPoint(x=np.zeros(m), y=y_star)


class TestSubspaces:
    def test_reference_dimensions(self):
        problem, z_bar = degenerate_fixture()
        assert appl_basis(problem, z_bar).shape == (5, 1)
        assert app_basis(problem, z_bar).shape == (5, 2)

    def test_reference_appl_direction(self):
        problem, z_bar = degenerate_fixture()
        basis = appl_basis(problem, z_bar)
        target = np.array([0.0, 0.0, 0.0, 1.0, 1.0]) / np.sqrt(2.0)
        overlap = abs(basis[:, 0] @ target)
        assert np.isclose(overlap, 1.0, atol=1e-12)

    def test_full_rank_point_gives_full_space(self):
        rng = np.random.default_rng(1)
        problem = random_problem(rng, 4, 3)
        z = random_point(rng, problem)
        assert residual(problem, z).ied.n_beta == 0 or True
        ied = make_ied(big_g(problem, z))
        if ied.n_beta == 0 and ied.q == 0:
            assert appl_basis(problem, z, ied).shape == (3, 3)

    def test_vanishing_dg_gives_full_space(self):
        problem, z = constant_g_fixture([1.0, 1.0])
        assert appl_basis(problem, z).shape == (2, 2)
        assert app_basis(problem, z).shape == (2, 2)

    def test_app_contains_appl(self):
        rng = np.random.default_rng(2)
        for seed in range(5):
            problem, z_star = synth_nondegenerate(seed=seed, n=5, m=7)
            small = appl_basis(problem, z_star)
            big = app_basis(problem, z_star)
            assert small.shape[1] <= big.shape[1]
            # each appl direction lies in the span of app
            proj = big @ (big.T @ small)
            assert np.allclose(proj, small, atol=1e-10)


class TestQuadForm:
    def test_constant_g_identity(self):
        problem, z = constant_g_fixture([1.0, 1.0])
        ied = make_ied(big_g(problem, z))
        basis = appl_basis(problem, z, ied)
        form = quad_form_matrix(problem, z, ied, basis)
        assert np.allclose(form, np.eye(2), atol=1e-12)

    def test_reference_value(self):
        problem, z_bar = degenerate_fixture()
        ied = make_ied(big_g(problem, z_bar))
        basis = appl_basis(problem, z_bar, ied)
        form = quad_form_matrix(problem, z_bar, ied, basis)
        assert form.shape == (1, 1)
        assert np.isclose(form[0, 0], 4.0, atol=1e-12)

    def test_no_curvature_term_without_gamma(self):
        rng = np.random.default_rng(3)
        problem, z_star = synth_nondegenerate(seed=1, n=4, m=4)
        big = big_g(problem, z_star)
        shifted = PrimalDualPoint(x=z_star.x, y=z_star.y - big)  # G = 0: alpha empty
        ied = make_ied(np.zeros((4, 4)))
        basis = np.eye(4)[:, :2]
        form = quad_form_matrix(problem, shifted, ied, basis)
        expected = basis.T @ problem.quad @ basis
        assert np.allclose(form, expected, atol=1e-12)


class TestConditionCheckers:
    def test_reference_verdicts(self):
        problem, z_bar = degenerate_fixture()
        assert check_wsoc(problem, z_bar).verdict == HOLDS
        assert check_wsrcq(problem, z_bar).verdict == HOLDS
        assert check_cn(problem, z_bar).verdict == FAILS
        assert check_ssosc(problem, z_bar).verdict == FAILS

    def test_vacuous_holds_with_sentinel(self):
        # the gamma-gamma constraint pins the only primal direction down
        problem = AffineQuadraticProblem(
            c=[0.0], a0=np.diag([1.0, -1.0]), a_list=[np.diag([0.0, 1.0])]
        )
        z = PrimalDualPoint(x=np.zeros(1), y=np.zeros((2, 2)))
        assert appl_basis(problem, z).shape == (1, 0)
        result = check_wsoc(problem, z)
        assert result.verdict == HOLDS and result.margin == np.inf
        assert check_ssosc(problem, z).margin == np.inf

    def test_mixed_signs_fail_wsoc(self):
        problem, z = constant_g_fixture([1.0, -1.0])
        result = check_wsoc(problem, z)
        assert result.verdict == FAILS
        assert result.margin < 0

    def test_negative_definite_still_holds_wsoc(self):
        # sign-definiteness, not positivity, is what the weak form asks
        problem, z = constant_g_fixture([-1.0, -2.0])
        assert check_wsoc(problem, z).verdict == HOLDS
        assert check_ssosc(problem, z).verdict == FAILS

    def test_constant_g_fails_span_conditions(self):
        problem, z = constant_g_fixture([1.0, 1.0])
        assert check_wsrcq(problem, z).verdict == FAILS
        assert check_cn(problem, z).verdict == FAILS

    def test_full_rank_g_matches_cn_and_wsrcq(self):
        # with an empty beta block the two span conditions coincide
        rng = np.random.default_rng(4)
        for _ in range(5):
            problem = random_problem(rng, 3, 7)
            z = random_point(rng, problem)
            ied = make_ied(big_g(problem, z))
            if ied.n_beta:
                continue
            a = check_wsrcq(problem, z, ied)
            b = check_cn(problem, z, ied)
            assert a.verdict == b.verdict
            assert np.isclose(a.margin, b.margin, rtol=1e-10)

    def test_surjective_dg_everything_holds(self):
        rng = np.random.default_rng(5)
        n = 2
        mats = []
        for k in range(n):
            for l in range(k, n):
                e = np.zeros((n, n))
                e[k, l] = e[l, k] = 1.0
                mats.append(e)
        problem = AffineQuadraticProblem(
            c=np.zeros(3), a0=np.diag([1.0, 0.0]), a_list=mats, quad=np.eye(3)
        )
        z = PrimalDualPoint(x=np.zeros(3), y=np.zeros((n, n)))
        assert check_wsrcq(problem, z).verdict == HOLDS
        assert check_cn(problem, z).verdict == HOLDS

    def test_ssosc_holds_on_definite_interior(self):
        # Q positive definite, G positive definite: app = R^m, form = Q
        rng = np.random.default_rng(6)
        problem = random_problem(rng, 3, 4, spd_quad=True)
        z = PrimalDualPoint(
            x=np.zeros(4), y=np.eye(3) * 5.0 - problem.eval_g(np.zeros(4))
        )
        ied = make_ied(big_g(problem, z))
        assert ied.q == 0 and ied.n_beta == 0
        assert check_ssosc(problem, z).verdict == HOLDS


class TestHeuristics:
    def test_sonc_convex_case(self):
        problem, z = constant_g_fixture([1.0, 2.0], q=0)
        result = check_sonc_heuristic(problem, z, samples=100, seed=0)
        assert result.verdict == HEURISTIC_HOLDS
        assert result.margin >= 0.0

    def test_sonc_zero_form(self):
        problem, z = constant_g_fixture([0.0, 0.0], q=0)
        result = check_sonc_heuristic(problem, z, samples=50, seed=0)
        assert result.verdict == HEURISTIC_HOLDS
        assert result.margin == pytest.approx(0.0, abs=1e-12)

    def test_sonc_detects_negative_curvature(self):
        problem, z = constant_g_fixture([-1.0, -1.0], q=0)
        result = check_sonc_heuristic(problem, z, samples=100, seed=0)
        assert result.verdict == HEURISTIC_FAILS

    def test_sonc_sample_validation(self):
        problem, z = constant_g_fixture([1.0])
        with pytest.raises(ValueError):
            check_sonc_heuristic(problem, z, samples=0)

    def test_srcq_reference_fails(self):
        problem, z_bar = degenerate_fixture()
        result = check_srcq_heuristic(problem, z_bar, seed=0)
        assert result.verdict == HEURISTIC_FAILS

    def test_srcq_synth_holds(self):
        problem, z_star = synth_nondegenerate(seed=3, n=5, m=6)
        result = check_srcq_heuristic(problem, z_star, seed=0)
        assert result.verdict == HEURISTIC_HOLDS
        assert result.margin < 1.0 - 1e-4

    def test_srcq_not_applicable_off_complementarity(self):
        rng = np.random.default_rng(7)
        problem = random_problem(rng, 4, 5)
        z = random_point(rng, problem)
        assert residual(problem, z).norm > 1e-3
        result = check_srcq_heuristic(problem, z, seed=0)
        assert result.verdict == NOT_APPLICABLE


class TestInjectivity:
    def test_reference_frozen(self):
        problem, z_bar = degenerate_fixture()
        margin = injectivity_margin(problem, z_bar)
        assert margin == pytest.approx(SIGMA_MIN_REFERENCE, rel=1e-9)
        assert margin > 1e-6

    def test_degenerate_point_near_zero(self):
        problem, z = constant_g_fixture([1.0, 1.0])
        assert injectivity_margin(problem, z) <= 1e-8

    def test_consistency_with_weak_pair(self):
        # injectivity of the on-stratum differential iff W-SOC plus W-SRCQ
        margin_tol = 1e-8
        checked = 0
        fixtures = []
        for seed in range(12):
            fixtures.append(synth_nondegenerate(seed=100 + seed, n=5, m=6))
        fixtures.append(constant_g_fixture([1.0, 1.0]))
        fixtures.append(constant_g_fixture([1.0, -1.0]))
        fixtures.append(constant_g_fixture([-1.0, -1.0]))
        for problem, z in fixtures:
            ied = make_ied(big_g(problem, z))
            wsoc = check_wsoc(problem, z, ied)
            wsrcq = check_wsrcq(problem, z, ied)
            sigma = injectivity_margin(problem, z, ied)
            margins = [abs(wsoc.margin), wsrcq.margin, sigma]
            if any(margin_tol / 10 <= m <= margin_tol * 10 for m in margins):
                continue
            checked += 1
            assert (wsoc.holds and wsrcq.holds) == (sigma > margin_tol)
        assert checked >= 12


class TestStructuralImplications:
    def test_cn_implies_wsrcq_and_ssosc_implies_wsoc(self):
        rng = np.random.default_rng(8)
        fixtures = [synth_nondegenerate(seed=s, n=5, m=6) for s in range(4)]
        fixtures += [
            (random_problem(rng, 4, 5), None) for _ in range(6)
        ]
        for problem, z in fixtures:
            if z is None:
                z = random_point(rng, problem)
            report = diagnose(problem, z, seed=0, sonc_samples=10, srcq_restarts=2)
            if report.constraint_nondegeneracy.holds:
                assert report.w_srcq.holds
            if report.s_sosc.holds:
                assert report.w_soc.holds


class TestSynthReport:
    def test_all_conditions_hold_at_construction(self):
        problem, z_star = synth_nondegenerate(seed=3, n=6, m=8)
        report = diagnose(problem, z_star, seed=0)
        assert report.w_soc.verdict == HOLDS
        assert report.w_srcq.verdict == HOLDS
        assert report.constraint_nondegeneracy.verdict == HOLDS
        assert report.s_sosc.verdict == HOLDS
        assert report.sonc.verdict == HEURISTIC_HOLDS
        assert report.srcq.verdict == HEURISTIC_HOLDS
        assert report.sigma_min_dF > 1e-6


class TestIedInvariance:
    def test_verdicts_and_margins(self):
        problem, z_bar = degenerate_fixture()
        ied = make_ied(big_g(problem, z_bar))
        for seed in range(5):
            rotated = rotate_within_eigenspaces(ied, seed=seed)
            for checker in (check_wsoc, check_wsrcq, check_cn, check_ssosc):
                base = checker(problem, z_bar, ied)
                alt = checker(problem, z_bar, rotated)
                assert base.verdict == alt.verdict
                if np.isfinite(base.margin):
                    assert np.isclose(base.margin, alt.margin, atol=1e-8)
            assert np.isclose(
                injectivity_margin(problem, z_bar, ied),
                injectivity_margin(problem, z_bar, rotated),
                atol=1e-8,
            )

    def test_heuristic_verdicts_stable(self):
        # sampled margins move with the basis; the verdicts must not
        problem, z_bar = degenerate_fixture()
        ied = make_ied(big_g(problem, z_bar))
        base_sonc = check_sonc_heuristic(problem, z_bar, samples=100, seed=0, ied=ied)
        base_srcq = check_srcq_heuristic(problem, z_bar, seed=0, ied=ied)
        for seed in range(3):
            rotated = rotate_within_eigenspaces(ied, seed=seed)
            alt_sonc = check_sonc_heuristic(
                problem, z_bar, samples=100, seed=0, ied=rotated
            )
            alt_srcq = check_srcq_heuristic(problem, z_bar, seed=0, ied=rotated)
            assert alt_sonc.verdict == base_sonc.verdict
            assert alt_srcq.verdict == base_srcq.verdict


class TestErrorBoundProbe:
    def test_reference_constant_frozen_and_seed_stable(self):
        problem, z_bar = degenerate_fixture()
        first = error_bound_probe(problem, z_bar, radius=1e-3, samples=500, seed=0)
        assert first == pytest.approx(ERROR_BOUND_REFERENCE, rel=1e-9)
        for seed in (1, 2, 3):
            other = error_bound_probe(problem, z_bar, radius=1e-3, samples=500, seed=seed)
            assert 0.8 * ERROR_BOUND_REFERENCE <= other <= 1.2 * ERROR_BOUND_REFERENCE

    def test_ambient_curve_defeats_classical_bound(self):
        problem, z_bar = degenerate_fixture()
        ratios = []
        for t in (1e-1, 1e-2, 1e-3):
            z = degenerate_fixture_curve(t)
            ratios.append(residual(problem, z).norm / point_distance(z, z_bar))
        assert ratios[0] > ratios[1] > ratios[2]
        assert ratios[2] <= 0.01 * ratios[0] * 2.0

    def test_ratio_converges_along_fixed_direction(self):
        problem, z_bar = degenerate_fixture()
        vals = [
            error_bound_probe(problem, z_bar, radius=r, samples=40, seed=11)
            for r in (1e-3, 1e-4, 1e-5)
        ]
        assert abs(vals[2] - vals[1]) <= abs(vals[1] - vals[0]) + 1e-6
        assert all(v > 0.1 for v in vals)
