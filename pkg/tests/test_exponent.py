import numpy as np
import pytest

from conftest import random_positive_joint
from maxcorr.dependence import hgr_profile, select_features
from maxcorr.ensemble import AttributeEnsembleSpec
from maxcorr.errors import AlphabetMismatchError, ValidationError
from maxcorr.exponent import (
    ExponentReport,
    analytic_pairwise_exponent,
    average_exponents,
    iprojection_exponent,
    mc_error_curve,
    exponent_bound,
    bound_constants,
)
from maxcorr.geometry import (
    FeatureSet,
    InformationMatrix,
    config_from_information_matrix,
    feature_vectors,
    normalize_features,
)
from maxcorr.model import JointPmf, Pmf, identity_channel, uniform_pmf

U2 = uniform_pmf(("z1", "z2"))
FS2 = FeatureSet(h=np.array([[1.0], [-1.0]]), base=U2)
P06 = Pmf(U2.labels, np.array([0.6, 0.4]))
P04 = Pmf(U2.labels, np.array([0.4, 0.6]))
# exact rate of the midpoint rule for (0.6,0.4) vs (0.4,0.6):
# both I-projections land on (0.5, 0.5), D = 0.5*log(25/24)
BINARY_RATE = 0.5 * np.log(25.0 / 24.0)


def demo_joint():
    rng = np.random.default_rng(314159)
    probs = rng.random((4, 4)) + 0.15
    return JointPmf(tuple("abcd"), tuple("wxyz"), probs / probs.sum())


class TestAnalyticPairwise:
    def test_equal_vectors_zero(self):
        psi = np.array([[0.5], [-0.5]])
        phi = np.array([0.3, -0.3])
        assert analytic_pairwise_exponent(psi, phi, phi, 0.1) == 0.0

    def test_unit_difference_spanned(self):
        # ||phi1 - phi2|| = 1 fully captured: (0.01/8) * 1 = 0.00125
        psi = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        phi1 = np.array([0.6, 0.0, 0.2])
        phi2 = np.array([0.6 - 0.6, 0.8, 0.2])
        d = phi1 - phi2  # (0.6, -0.8, 0) has norm 1, inside the span
        assert np.linalg.norm(d) == pytest.approx(1.0)
        assert analytic_pairwise_exponent(psi, phi1, phi2, 0.1) == pytest.approx(
            0.00125, abs=1e-15
        )

    def test_orthogonal_features_zero(self):
        psi = np.array([[0.0], [0.0], [1.0]])
        phi1 = np.array([0.6, 0.0, 0.0])
        phi2 = np.array([0.0, 0.6, 0.0])
        for eps in (0.01, 0.1, 0.3):
            assert analytic_pairwise_exponent(psi, phi1, phi2, eps) == 0.0

    def test_invariant_under_feature_remixing(self, rng):
        # depends only on span(psi): exact identity under orthogonal mixing
        psi, _ = np.linalg.qr(rng.normal(size=(5, 2)))
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        phi1, phi2 = rng.normal(size=5), rng.normal(size=5)
        a = analytic_pairwise_exponent(psi, phi1, phi2, 0.07)
        b = analytic_pairwise_exponent(psi @ q, phi1, phi2, 0.07)
        assert a == pytest.approx(b, rel=1e-12)


class TestIProjection:
    def test_identical_distributions(self):
        with pytest.warns(UserWarning, match="constant"):
            assert iprojection_exponent(P06, P06, FS2) == 0.0

    def test_binary_closed_form(self):
        val = iprojection_exponent(P06, P04, FS2)
        assert val == pytest.approx(BINARY_RATE, abs=1e-9)

    def test_boundary_point_is_midpoint(self):
        # independent 1-D oracle: scan Q(z1) on the boundary E_Q[c] = b
        # (the constraint pins Q(z1) = 0.5 here), evaluate both divergences
        q = np.array([0.5, 0.5])
        d1 = float(np.sum(q * np.log(q / P06.probs)))
        d2 = float(np.sum(q * np.log(q / P04.probs)))
        assert iprojection_exponent(P06, P04, FS2) == pytest.approx(
            min(d1, d2), abs=1e-12
        )

    def test_alphabet_mismatch(self):
        other = Pmf(("a", "b"), np.array([0.6, 0.4]))
        with pytest.raises(AlphabetMismatchError):
            iprojection_exponent(other, P04, FS2)

    def test_small_epsilon_matches_analytic(self, rng):
        # eps = 0.02 configurations: exact exponent within 5% of the
        # leading-order formula (measured margin across seeds is ~2%)
        base = uniform_pmf(tuple("abcd"))
        prior = uniform_pmf(("w0", "w1", "w2"))
        from maxcorr.ensemble import information_ensemble

        spec = AttributeEnsembleSpec(base=base, attribute_size=3, epsilon=0.02)
        phis = information_ensemble(spec).sample(10, seed=17)
        for phi in phis:
            fs = normalize_features(rng.normal(size=(4, 2)), base)
            psi = feature_vectors(fs)
            info = InformationMatrix(phi=phi, epsilon=0.02, base=base)
            cfg = config_from_information_matrix(base, prior, info, 0.02)
            p1 = Pmf(base.labels, cfg.conditionals[:, 0])
            p2 = Pmf(base.labels, cfg.conditionals[:, 1])
            ana = analytic_pairwise_exponent(psi, phi[:, 0], phi[:, 1], 0.02)
            ipe = iprojection_exponent(p1, p2, fs)
            assert ipe == pytest.approx(ana, rel=0.05)


class TestMcErrorCurve:
    def test_identical_distributions_zero_slope(self):
        with pytest.warns(UserWarning, match="constant"):
            curve = mc_error_curve(P06, P06, FS2, [100, 200], 1000, seed=1)
        assert curve.exponent == 0.0
        assert curve.p_hat == (0.5, 0.5)

    def test_binary_agreement_with_iprojection(self):
        curve = mc_error_curve(
            P06, P04, FS2, [100, 200, 300, 400, 600, 800], 60_000, seed=10
        )
        assert abs(curve.exponent - BINARY_RATE) <= 2.0 * curve.stderr

    def test_sign_flip_invariance(self):
        flipped = FeatureSet(h=-FS2.h, base=U2)
        c1 = mc_error_curve(P06, P04, FS2, [100, 200, 300, 400], 20_000, seed=3)
        c2 = mc_error_curve(P06, P04, flipped, [100, 200, 300, 400], 20_000, seed=3)
        assert c1.exponent == c2.exponent
        assert c1.p_hat == c2.p_hat

    def test_budget_exhaustion(self):
        far1 = Pmf(U2.labels, np.array([0.99, 0.01]))
        far2 = Pmf(U2.labels, np.array([0.01, 0.99]))
        with pytest.raises(ValidationError, match="budget"):
            mc_error_curve(far1, far2, FS2, [400, 800], 100, seed=4, max_trials=100)


class TestExponentBound:
    def test_noiseless_reduction(self):
        sig = np.array([0.6, 0.3, 0.1])
        bound, residual = exponent_bound(0.1, 2, sig, 0.5, 0.4, 0.0, 0.0, 0.0)
        assert residual == 0.0
        ssq = 0.36 + 0.09
        expect = [0.5 * 0.01 * 2, 0.4 * 0.01 * ssq, 0.5 * 0.01 * ssq, 0.4 * 0.01 * 2]
        assert np.allclose(bound, expect, rtol=1e-12)

    def test_monotone_in_k(self):
        sig = np.array([0.6, 0.3, 0.1])
        prev = None
        for k in (1, 2, 3):
            bound, _ = exponent_bound(0.1, k, sig, 0.5, 0.4, 0.0, 0.0, 0.0)
            if prev is not None:
                assert np.all(bound >= prev)
            prev = bound

    def test_residual_form(self):
        _, r = exponent_bound(0.1, 1, np.array([0.5]), 1, 1, 0.2, 0.05, 0.3, 2.0)
        assert r == pytest.approx(2.0 * 0.01 * max(0.2 + 0.05 + 0.01, 0.2 + 0.3 + 0.06))

    def test_ratio_prediction_is_constant_free(self):
        sig = np.array([0.6, 0.3, 0.1])
        for k in (1, 2, 3):
            bound, _ = exponent_bound(0.05, k, sig, 0.37, 0.91, 0, 0, 0)
            assert bound[2] / bound[0] == pytest.approx(
                float(np.sum(sig[:k] ** 2)) / k, rel=1e-12
            )


class TestAverageExponents:
    def test_constrained_proof_chain_ratio(self):
        # |W| = 2 and full feature rank: the single hypothesis pair makes
        # the projection bound exact, except that valid configurations
        # carry no variance along sqrt(base).  Closed-form oracle for the
        # projected-Gaussian ensemble: E_us / (C_U eps^2 k) = 2n/(n-1).
        joint = demo_joint()
        cx, cy = identity_channel(joint.x_labels), identity_channel(joint.y_labels)
        mu_u = AttributeEnsembleSpec(base=joint.marginal_x(), attribute_size=2, epsilon=0.05)
        mu_v = AttributeEnsembleSpec(base=joint.marginal_y(), attribute_size=2, epsilon=0.05)
        f, g = select_features(joint, 3)
        rep = average_exponents(mu_u, mu_v, joint, cx, cy, f, g, 800, 555)
        ratio = rep.e_u_s / (rep.c_u * 0.05**2 * 3)
        assert ratio == pytest.approx(8.0 / 3.0, abs=0.12)

    def test_cross_exponents_vanish_for_orthogonal_features(self):
        # rank-one dependence: every pushed cross-chain information vector
        # is parallel to the single singular direction, so features chosen
        # orthogonal to it are useless for cross inference
        u = np.array([1.0, -1.0, 1.0, -1.0]) / 2.0
        v = np.array([1.0, 1.0, -1.0, -1.0]) / 2.0
        probs = np.full((4, 4), 1.0 / 16.0) + 0.075 * np.outer(u, v)
        joint = JointPmf(tuple("abcd"), tuple("wxyz"), probs)
        q1 = np.array([1.0, -1.0, -1.0, 1.0]) / 2.0  # orthogonal to v and sqrt(P)
        q2 = np.array([1.0, -1.0, 1.0, -1.0]) / 2.0  # orthogonal to v and sqrt(P)
        f = FeatureSet(h=np.column_stack([q1, q2]) * 2.0, base=joint.marginal_x())
        gq1 = np.array([1.0, -1.0, -1.0, 1.0]) / 2.0  # orthogonal to u, sqrt(P)
        gq2 = np.array([1.0, 1.0, -1.0, -1.0]) / 2.0  # orthogonal to u, sqrt(P)
        g = FeatureSet(h=np.column_stack([gq1, gq2]) * 2.0, base=joint.marginal_y())
        cx, cy = identity_channel(joint.x_labels), identity_channel(joint.y_labels)
        mu_u = AttributeEnsembleSpec(base=joint.marginal_x(), attribute_size=3, epsilon=0.05)
        mu_v = AttributeEnsembleSpec(base=joint.marginal_y(), attribute_size=3, epsilon=0.05)
        rep = average_exponents(mu_u, mu_v, joint, cx, cy, f, g, 50, 99)
        assert rep.e_v_s <= 1e-22
        assert rep.e_u_t <= 1e-22
        assert rep.e_u_s > 1e-7
        assert rep.e_v_t > 1e-7

    def test_svd_features_beat_random(self):
        joint = demo_joint()
        cx, cy = identity_channel(joint.x_labels), identity_channel(joint.y_labels)
        mu_u = AttributeEnsembleSpec(base=joint.marginal_x(), attribute_size=3, epsilon=0.05)
        mu_v = AttributeEnsembleSpec(base=joint.marginal_y(), attribute_size=3, epsilon=0.05)
        f_svd, g_svd = select_features(joint, 2)
        wins = 0
        for seed in range(20):
            rep_svd = average_exponents(mu_u, mu_v, joint, cx, cy, f_svd, g_svd, 40, seed)
            raw = np.random.default_rng((seed, 7)).normal(size=(4, 2))
            f_rnd = normalize_features(raw, joint.marginal_x())
            rep_rnd = average_exponents(mu_u, mu_v, joint, cx, cy, f_rnd, g_svd, 40, seed)
            wins += rep_svd.e_v_s >= rep_rnd.e_v_s
        assert wins >= 18

    def test_bound_with_residual_holds(self):
        # SVD features at measured delta, eta = 0, full rank: all four
        # exponents within bound + residual budget + 3 sigma, and the
        # U-components meet the bound with equality at that slack
        from maxcorr.ensemble import information_ensemble
        from maxcorr.symmetry import delta_report

        joint = demo_joint()
        cx, cy = identity_channel(joint.x_labels), identity_channel(joint.y_labels)
        mu_u = AttributeEnsembleSpec(
            base=joint.marginal_x(), attribute_size=3, epsilon=0.05, rho=0.3
        )
        mu_v = AttributeEnsembleSpec(
            base=joint.marginal_y(), attribute_size=3, epsilon=0.05, rho=0.3
        )
        d_hat = delta_report(information_ensemble(mu_u), 40_000, seed=1).delta
        f, g = select_features(joint, 3)
        rep = average_exponents(
            mu_u, mu_v, joint, cx, cy, f, g, 400, 202, delta_hat=d_hat
        )
        for val, se, bnd in zip(rep.exponents, rep.stderrs, rep.bound):
            assert val <= bnd + rep.residual_budget + 3 * se
        assert abs(rep.e_u_s - rep.bound[0]) <= rep.residual_budget + 3 * rep.stderr_u_s
        assert abs(rep.e_v_t - rep.bound[3]) <= rep.residual_budget + 3 * rep.stderr_v_t

    def test_oracle_mode_close_to_analytic(self):
        joint = demo_joint()
        cx, cy = identity_channel(joint.x_labels), identity_channel(joint.y_labels)
        mu_u = AttributeEnsembleSpec(base=joint.marginal_x(), attribute_size=3, epsilon=0.02)
        mu_v = AttributeEnsembleSpec(base=joint.marginal_y(), attribute_size=3, epsilon=0.02)
        f, g = select_features(joint, 2)
        rep_a = average_exponents(mu_u, mu_v, joint, cx, cy, f, g, 40, 888)
        rep_o = average_exponents(mu_u, mu_v, joint, cx, cy, f, g, 40, 888, oracle=True)
        for a, o in zip(rep_a.exponents, rep_o.exponents):
            assert a == pytest.approx(o, rel=0.02)

    def test_epsilon_mismatch_rejected(self):
        joint = demo_joint()
        cx, cy = identity_channel(joint.x_labels), identity_channel(joint.y_labels)
        mu_u = AttributeEnsembleSpec(base=joint.marginal_x(), attribute_size=3, epsilon=0.05)
        mu_v = AttributeEnsembleSpec(base=joint.marginal_y(), attribute_size=3, epsilon=0.02)
        f, g = select_features(joint, 2)
        with pytest.raises(ValidationError, match="epsilon"):
            average_exponents(mu_u, mu_v, joint, cx, cy, f, g, 10, 1)


class TestBoundConstants:
    def test_sphere_bound(self):
        # every column norm <= 1 forces E||Phi||^2 <= |U|, so C_U <= 1/(4|X|)
        joint = demo_joint()
        cx, cy = identity_channel(joint.x_labels), identity_channel(joint.y_labels)
        mu_u = AttributeEnsembleSpec(base=joint.marginal_x(), attribute_size=3, epsilon=0.05)
        mu_v = AttributeEnsembleSpec(base=joint.marginal_y(), attribute_size=3, epsilon=0.05)
        est = bound_constants(mu_u, mu_v, joint, cx, cy, 200, 31)
        assert est.c_u <= 1.0 / 16.0
        assert est.c_v <= 1.0 / 16.0

    def test_rho_scaling_quarters_cu(self):
        joint = demo_joint()
        cx, cy = identity_channel(joint.x_labels), identity_channel(joint.y_labels)
        kw = dict(attribute_size=3, epsilon=0.05)
        est1 = bound_constants(
            AttributeEnsembleSpec(base=joint.marginal_x(), rho=1.0, **kw),
            AttributeEnsembleSpec(base=joint.marginal_y(), rho=1.0, **kw),
            joint, cx, cy, 300, 32,
        )
        est2 = bound_constants(
            AttributeEnsembleSpec(base=joint.marginal_x(), rho=0.5, **kw),
            AttributeEnsembleSpec(base=joint.marginal_y(), rho=0.5, **kw),
            joint, cx, cy, 300, 32,
        )
        assert est2.c_u == pytest.approx(est1.c_u / 4.0, rel=1e-9)
        assert est2.c_v == pytest.approx(est1.c_v / 4.0, rel=1e-9)

    def test_matches_independent_pipeline_oracle(self):
        # re-derive E||Phi||^2 with a standalone numpy replica of the
        # sampling pipeline (different seed), compare within 3 sigma bars
        joint = demo_joint()
        base = joint.marginal_x().probs
        rng = np.random.default_rng(424242)
        prior = np.full(3, 1.0 / 3.0)
        vals = []
        for _ in range(4000):
            g0 = rng.standard_normal((4, 3))
            root = np.sqrt(base)
            g0 -= np.outer(root, root @ g0)
            g0 -= np.outer(g0 @ prior, np.ones(3))
            g0 *= 1.0 / np.linalg.norm(g0, axis=0).max()
            vals.append((g0**2).sum())
        oracle = np.mean(vals) / (4 * 4 * 3)
        oracle_se = np.std(vals, ddof=1) / np.sqrt(len(vals)) / (4 * 4 * 3)
        cx, cy = identity_channel(joint.x_labels), identity_channel(joint.y_labels)
        mu_u = AttributeEnsembleSpec(base=joint.marginal_x(), attribute_size=3, epsilon=0.05)
        mu_v = AttributeEnsembleSpec(base=joint.marginal_y(), attribute_size=3, epsilon=0.05)
        est = bound_constants(mu_u, mu_v, joint, cx, cy, 4000, 33)
        assert abs(est.c_u - oracle) <= 3.0 * (est.stderr_u + oracle_se)


class TestExponentReport:
    def test_rejects_negative_exponent(self):
        with pytest.raises(ValidationError):
            ExponentReport(
                e_u_s=-0.1, e_v_s=0, e_u_t=0, e_v_t=0,
                stderr_u_s=0, stderr_v_s=0, stderr_u_t=0, stderr_v_t=0,
                bound=(0, 0, 0, 0), residual_budget=0, c_u=0, c_v=0,
            )
