import numpy as np
import pytest

from maxcorr.errors import (
    AlphabetMismatchError,
    FeasibilityError,
    ValidationError,
)
from maxcorr.model import (
    Channel,
    JointPmf,
    Pmf,
    apply_channels,
    dump_channel,
    dump_joint,
    identity_channel,
    iter_sample_pairs,
    joint_from_samples,
    load_channel,
    load_joint,
    make_channel,
    max_feasible_eta,
    product_joint,
    reverse_channel,
    uniform_pmf,
)

T_BINARY = np.array([[-1.0, 1.0], [1.0, -1.0]])


class TestPmf:
    def test_valid(self):
        p = Pmf(("a", "b"), np.array([0.3, 0.7]))
        assert p.size == 2
        assert p.index("b") == 1

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            Pmf(("a", "b"), np.array([-0.1, 1.1]))

    def test_rejects_bad_mass(self):
        with pytest.raises(ValidationError):
            Pmf(("a", "b"), np.array([0.3, 0.6]))

    def test_strictly_positive_flag(self):
        with pytest.raises(ValidationError, match="zero probability"):
            Pmf(("a", "b"), np.array([0.0, 1.0]), strictly_positive=True)

    def test_immutable(self):
        p = uniform_pmf(("a", "b"))
        with pytest.raises(ValueError):
            p.probs[0] = 0.9


class TestJointFromSamples:
    def test_counting(self):
        j = joint_from_samples(
            [("a", "0"), ("a", "0"), ("b", "1"), ("b", "1")], ("a", "b"), ("0", "1")
        )
        # probs[(y, x)]: {(0,a): 0.5, (1,b): 0.5}
        assert j.probs[0, 0] == 0.5
        assert j.probs[1, 1] == 0.5
        assert j.probs[0, 1] == 0.0 and j.probs[1, 0] == 0.0

    def test_point_mass(self):
        j = joint_from_samples([("a", "0")], ("a", "b"), ("0", "1"))
        assert j.probs[0, 0] == 1.0

    def test_unknown_label_reports_record(self):
        with pytest.raises(AlphabetMismatchError, match="record 2"):
            joint_from_samples(
                [("a", "0"), ("b", "1"), ("c", "0")], ("a", "b"), ("0", "1")
            )

    def test_empty_stream(self):
        with pytest.raises(ValidationError, match="empty"):
            joint_from_samples([], ("a",), ("0",))

    def test_sampling_recovers_known_joint(self, rng):
        truth = np.array([[0.10, 0.05, 0.15], [0.20, 0.10, 0.05], [0.05, 0.20, 0.10]])
        xs = ("x0", "x1", "x2")
        ys = ("y0", "y1", "y2")
        flat = truth.ravel()
        draws = rng.choice(flat.size, size=10_000, p=flat)
        pairs = [(xs[d % 3], ys[d // 3]) for d in draws]
        j = joint_from_samples(pairs, xs, ys)
        assert np.max(np.abs(j.probs - truth)) < 0.02


class TestChannel:
    def test_identity(self):
        c = make_channel(T_BINARY, 0.0)
        assert np.array_equal(c.P, np.eye(2))

    def test_binary_symmetric(self):
        c = make_channel(T_BINARY, 0.1)
        assert np.allclose(c.P, [[0.9, 0.1], [0.1, 0.9]], atol=1e-15)

    def test_feasibility_error_reports_max(self):
        with pytest.raises(FeasibilityError) as exc:
            make_channel(T_BINARY, 1.2)
        assert exc.value.max_feasible == pytest.approx(1.0, abs=1e-15)

    def test_max_feasible_eta_generic(self):
        # 0 <= 1 + eta*(-0.5) and 0 <= 0 + eta*0.25 etc.; binding entry is
        # the diagonal -0.5: eta <= 2.  Off-diagonal 0.5: eta <= 2 as well.
        t = np.array([[-0.5, 0.5], [0.5, -0.5]])
        assert max_feasible_eta(t) == pytest.approx(2.0)

    def test_decompose_round_trip(self, rng):
        from conftest import random_perturbation_t

        for _ in range(20):
            n = int(rng.integers(2, 6))
            t = random_perturbation_t(rng, n)
            eta = 0.5 * max_feasible_eta(t)
            assert eta > 0
            c = make_channel(t, eta)
            t2, eta2 = c.decompose()
            assert eta2 == eta
            assert np.max(np.abs(t2 - t)) < 1e-12
            assert np.max(np.abs(np.eye(n) + eta * t - c.P)) <= 1e-12

    def test_rejects_bad_column_sum(self):
        with pytest.raises(ValidationError, match="sums to"):
            Channel(("a", "b"), 0.1, np.array([[-1.0, 0.5], [1.0, -1.0]]))


class TestApplyChannels:
    def test_identity_channels(self, rng):
        from conftest import random_positive_joint

        j = JointPmf(("a", "b"), ("0", "1", "2"), random_positive_joint(rng, 2, 3))
        out = apply_channels(j, identity_channel(j.x_labels), identity_channel(j.y_labels))
        assert np.array_equal(out.probs, j.probs)

    def test_product_in_product_out(self):
        px = Pmf(("a", "b"), np.array([0.25, 0.75]))
        py = Pmf(("0", "1"), np.array([0.5, 0.5]))
        j = product_joint(px, py)
        cx = make_channel(T_BINARY, 0.2, px.labels)
        cy = make_channel(T_BINARY, 0.3, py.labels)
        out = apply_channels(j, cx, cy)
        expected = product_joint(cx.apply(px), cy.apply(py))
        assert np.max(np.abs(out.probs - expected.probs)) < 1e-15

    def test_hand_oracle_2x2(self):
        j = JointPmf(("a", "b"), ("0", "1"), np.array([[0.4, 0.1], [0.1, 0.4]]))
        cx = make_channel(T_BINARY, 0.1, j.x_labels)
        cy = make_channel(T_BINARY, 0.1, j.y_labels)
        out = apply_channels(j, cx, cy)
        # independent oracle: literal four-term summation
        expected = np.zeros((2, 2))
        for yh in range(2):
            for xh in range(2):
                for y in range(2):
                    for x in range(2):
                        expected[yh, xh] += (
                            cx.P[xh, x] * cy.P[yh, y] * j.probs[y, x]
                        )
        assert np.max(np.abs(out.probs - expected)) < 1e-15

    def test_mass_and_marginal_commutation(self, rng):
        from conftest import random_positive_joint

        from conftest import random_perturbation_t

        j = JointPmf(tuple("abcd"), tuple("wxyz"), random_positive_joint(rng, 4, 4))
        t = random_perturbation_t(rng, 4)
        cx = make_channel(t, 0.3 * max_feasible_eta(t), j.x_labels)
        out = apply_channels(j, cx, identity_channel(j.y_labels))
        assert abs(out.probs.sum() - 1.0) < 1e-12
        assert np.max(np.abs(out.marginal_x().probs - cx.P @ j.marginal_x().probs)) < 1e-12

    def test_alphabet_mismatch(self):
        j = JointPmf(("a", "b"), ("0", "1"), np.full((2, 2), 0.25))
        with pytest.raises(AlphabetMismatchError):
            apply_channels(j, identity_channel(("p", "q")), identity_channel(j.y_labels))


class TestReverseChannel:
    def test_identity(self):
        c = identity_channel(("a", "b"))
        rev = reverse_channel(c, Pmf(("a", "b"), np.array([0.3, 0.7])))
        assert np.allclose(rev, np.eye(2), atol=1e-15)

    def test_symmetric_uniform_fixed_point(self):
        c = make_channel(T_BINARY, 0.2)
        rev = reverse_channel(c, uniform_pmf(c.labels))
        assert np.max(np.abs(rev - c.P)) < 1e-14

    def test_bayes_hand_oracle(self):
        # eta=0.2 BSC, input (0.3, 0.7): P_out = (0.38, 0.62);
        # rev column xh: P(x|xh) = P(xh|x)P(x)/P(xh), computed by hand.
        c = make_channel(T_BINARY, 0.2)
        rev = reverse_channel(c, Pmf(c.labels, np.array([0.3, 0.7])))
        expected = np.array([[0.24 / 0.38, 0.06 / 0.62], [0.14 / 0.38, 0.56 / 0.62]])
        assert np.max(np.abs(rev - expected)) < 1e-15

    def test_detailed_balance(self, rng):
        from conftest import random_perturbation_t

        for _ in range(10):
            n = int(rng.integers(2, 6))
            t = random_perturbation_t(rng, n)
            c = make_channel(t, 0.4 * max_feasible_eta(t))
            from conftest import random_positive_pmf

            px = Pmf(c.labels, random_positive_pmf(rng, n))
            rev = reverse_channel(c, px)
            out = c.P @ px.probs
            lhs = out[:, None] * rev.T
            rhs = c.P * px.probs[None, :]
            assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_zero_output_symbol_named(self):
        # channel sends everything to symbol 'a': column 'b' of P is e_a
        t = np.array([[0.0, 1.0], [0.0, -1.0]])
        c = make_channel(t, 1.0, ("a", "b"))
        with pytest.raises(ValidationError, match="'b'"):
            reverse_channel(c, Pmf(("a", "b"), np.array([0.5, 0.5])))


class TestSerialization:
    def test_joint_round_trip(self, rng):
        from conftest import random_positive_joint

        j = JointPmf(("a", "b", "c"), ("u", "v"), random_positive_joint(rng, 3, 2))
        text = dump_joint(j, header=("seed: 1",))
        back = load_joint(text)
        assert back.x_labels == j.x_labels
        assert back.y_labels == j.y_labels
        assert np.array_equal(back.probs, j.probs)

    def test_channel_round_trip(self):
        c = make_channel(T_BINARY, 0.125, ("a", "b"))
        back = load_channel(dump_channel(c))
        assert back.labels == c.labels
        assert back.eta == c.eta
        assert np.array_equal(back.T, c.T)

    def test_dump_is_deterministic(self):
        c = make_channel(T_BINARY, 1 / 3, ("a", "b"))
        assert dump_channel(c) == dump_channel(c)

    def test_sample_pair_reader(self):
        lines = ["x,y", "a,0", "b,1", "", "a,1"]
        assert list(iter_sample_pairs(lines, header=True)) == [
            ("a", "0"),
            ("b", "1"),
            ("a", "1"),
        ]
        with pytest.raises(ValidationError, match="two columns"):
            list(iter_sample_pairs(["a,b,c"]))
