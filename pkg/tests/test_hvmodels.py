import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonloc import hvmodels, measurement, states
from nonloc.hvmodels import (
    BudgetExceededError,
    Context,
    DeterministicModel,
    FiniteSampleSpace,
    MissingBasisObservable,
    NotCommutingError,
    StochasticModel,
    ZeroProbabilityBranch,
    collapse_model,
    couple_lchv_d2,
    deterministic_to_stochastic,
    extend_commuting_povm,
    mix_models,
    model_from_json,
    model_to_json,
    product_local_model,
    stochastic_to_deterministic,
    trivial_causal_model,
    verify_model,
)
from nonloc.measurement import OperationFamily, Povm, pauli, smeared_povm

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

MZ = OperationFamily.ideal(pauli("z"), "mz")
MX = OperationFamily.ideal(pauli("x"), "mx")


def qubit_pair_ctx(max_len: int) -> Context:
    return Context((MZ, MX), (MZ, MX), max_len, max_len)


def z_only_ctx(max_len: int) -> Context:
    return Context((MZ,), (MZ,), max_len, max_len)


def diag_product(p1: float, p2: float) -> states.DensityMatrix:
    a = np.diag([p1, 1 - p1]).astype(complex)
    b = np.diag([p2, 1 - p2]).astype(complex)
    return states.make_density(np.kron(a, b), (2, 2))


class TestContext:
    def test_sequence_counts_two_obs_len_two(self):
        ctx = qubit_pair_ctx(2)
        assert sum(1 for _ in ctx.interleaved_sequences()) == 164
        assert sum(1 for _ in ctx.collected_sequences()) == 48

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            Context((MZ, OperationFamily.ideal(pauli("x"), "mz")), (MZ,), 1, 1)

    def test_empty_side_with_positive_bound_rejected(self):
        with pytest.raises(ValueError):
            Context((MZ,), (), 1, 1)

    def test_single_system_context_allowed(self):
        ctx = Context((MZ, MX), (), 2, 0)
        assert ctx.dims.d2 == 1
        assert sum(1 for _ in ctx.interleaved_sequences()) == 6

    def test_mismatched_dims_on_side_rejected(self):
        big = OperationFamily.ideal(
            measurement.Observable.from_matrix(np.diag([1.0, 0.0, -1.0]).astype(complex), "q")
        )
        with pytest.raises(ValueError):
            Context((MZ, big), (MZ,), 1, 1)

    def test_family_lookup(self):
        ctx = qubit_pair_ctx(1)
        assert ctx.family(1, "mx") is MX
        with pytest.raises(KeyError):
            ctx.family(2, "my")


class TestFiniteSampleSpace:
    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            FiniteSampleSpace(("a", "b"), np.array([0.5, 0.4]))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            FiniteSampleSpace(("a", "b"), np.array([1.5, -0.5]))


class TestTrivialCausalModel:
    def test_singlet_z_two_atoms(self):
        m = trivial_causal_model(states.singlet(), z_only_ctx(1))
        assert m.shape == "causal"
        assert len(m.space) == 2
        assert np.allclose(m.space.weights, [0.5, 0.5])
        # anticorrelation lives on the joint path; single-step responses on a
        # causal model are free to disagree across interleavings
        for atom in m.space.atoms:
            o1, o2 = m.responses[atom][((1, "mz"), (2, "mz"))]
            assert {o1, o2} == {"+1", "-1"}
            assert o1 == m.responses[atom][((1, "mz"),)][0]

    def test_singlet_verifies(self):
        m = trivial_causal_model(states.singlet(), qubit_pair_ctx(1))
        rep = verify_model(m, states.singlet())
        assert rep.passed, rep.summary()
        assert rep.max_deviation < 1e-10

    def test_werner_sequences_verify(self):
        rho = states.werner(2)
        m = trivial_causal_model(rho, qubit_pair_ctx(2))
        rep = verify_model(m, rho)
        assert rep.passed, rep.summary()

    def test_budget_enforced(self):
        with pytest.raises(BudgetExceededError):
            trivial_causal_model(states.singlet(), qubit_pair_ctx(2), atom_budget=3)

    def test_dims_must_match(self):
        with pytest.raises(ValueError):
            trivial_causal_model(states.werner(3), qubit_pair_ctx(1))


class TestProductAndMix:
    def test_product_model_verifies(self):
        rho1 = np.diag([0.7, 0.3]).astype(complex)
        rho2 = np.diag([0.6, 0.4]).astype(complex)
        m = product_local_model(rho1, rho2, qubit_pair_ctx(2))
        assert m.shape == "local_causal"
        rep = verify_model(m, diag_product(0.7, 0.6))
        assert rep.passed, rep.summary()

    def test_mixture_verifies_against_mixed_state(self):
        ctx = qubit_pair_ctx(1)
        m1 = product_local_model(
            np.diag([1.0, 0.0]).astype(complex), np.diag([1.0, 0.0]).astype(complex), ctx
        )
        m2 = product_local_model(
            np.diag([0.0, 1.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex), ctx
        )
        mixed = mix_models([m1, m2], [0.25, 0.75])
        rho = states.make_density(
            0.25 * np.diag([1, 0, 0, 0]).astype(complex)
            + 0.75 * np.diag([0, 0, 0, 1]).astype(complex),
            (2, 2),
        )
        rep = verify_model(mixed, rho)
        assert rep.passed, rep.summary()

    def test_mix_weight_validation(self):
        ctx = qubit_pair_ctx(1)
        m = product_local_model(
            np.eye(2, dtype=complex) / 2, np.eye(2, dtype=complex) / 2, ctx
        )
        with pytest.raises(ValueError):
            mix_models([m, m], [0.5, 0.6])
        with pytest.raises(ValueError):
            mix_models([m, m], [1.5, -0.5])
        with pytest.raises(ValueError):
            mix_models([], [])

    def test_mix_context_mismatch(self):
        m1 = product_local_model(
            np.eye(2, dtype=complex) / 2, np.eye(2, dtype=complex) / 2, qubit_pair_ctx(1)
        )
        m2 = product_local_model(
            np.eye(2, dtype=complex) / 2, np.eye(2, dtype=complex) / 2, z_only_ctx(1)
        )
        with pytest.raises(ValueError):
            mix_models([m1, m2], [0.5, 0.5])


class TestCollapseModel:
    def test_singlet_conditional_anticorrelation(self):
        m = trivial_causal_model(states.singlet(), z_only_ctx(1))
        post = collapse_model(m, ((1, "mz"), "+1"))
        assert post.context.max_len1 == 0
        table = post.distribution_interleaved(((2, "mz"),))
        assert table == {("-1",): pytest.approx(1.0)}

    def test_local_shape_collapse(self):
        m = product_local_model(
            np.diag([0.7, 0.3]).astype(complex),
            np.diag([0.6, 0.4]).astype(complex),
            z_only_ctx(1),
        )
        post = collapse_model(m, ((1, "mz"), "+1"))
        table = post.distribution_collected((), ("mz",))
        assert table[("+1",)] == pytest.approx(0.6, abs=1e-12)
        assert table[("-1",)] == pytest.approx(0.4, abs=1e-12)

    def test_zero_probability_branch(self):
        m = product_local_model(
            np.diag([1.0, 0.0]).astype(complex),
            np.diag([1.0, 0.0]).astype(complex),
            z_only_ctx(1),
        )
        with pytest.raises(ZeroProbabilityBranch):
            collapse_model(m, ((1, "mz"), "-1"))

    def test_unknown_family_rejected(self):
        m = trivial_causal_model(states.singlet(), z_only_ctx(1))
        with pytest.raises(KeyError):
            collapse_model(m, ((1, "my"), "+1"))

    def test_exhausted_bound_rejected(self):
        m = trivial_causal_model(states.singlet(), z_only_ctx(1))
        post = collapse_model(m, ((1, "mz"), "+1"))
        with pytest.raises(ValueError):
            collapse_model(post, ((1, "mz"), "-1"))


class TestCoupling:
    def test_product_state_coupled_to_length_two(self):
        ctx1 = qubit_pair_ctx(1)
        plus = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
        zero = np.diag([1.0, 0.0]).astype(complex)
        lhv1 = product_local_model(plus, zero, ctx1)
        ctx2 = qubit_pair_ctx(2)
        coupled = couple_lchv_d2(lhv1, ctx2)
        assert coupled.shape == "local_causal"
        rho = states.make_density(np.kron(plus, zero), (2, 2))
        rep = verify_model(coupled, rho)
        assert rep.passed, rep.summary()
        assert rep.max_deviation < 1e-10

    def test_requires_local_shape(self):
        m = trivial_causal_model(states.singlet(), qubit_pair_ctx(1))
        with pytest.raises(ValueError):
            couple_lchv_d2(m, qubit_pair_ctx(2))

    def test_requires_qubit_pair(self):
        d3 = OperationFamily.ideal(
            measurement.Observable.from_matrix(
                np.diag([1.0, 0.0, -1.0]).astype(complex), "q"
            )
        )
        ctx = Context((d3,), (d3,), 1, 1)
        m = product_local_model(
            np.eye(3, dtype=complex) / 3, np.eye(3, dtype=complex) / 3, ctx
        )
        with pytest.raises(ValueError):
            couple_lchv_d2(m, Context((d3,), (d3,), 2, 2))

    def test_requires_length_one_coverage(self):
        ctx0 = Context((MZ, MX), (MZ, MX), 1, 0)
        m = product_local_model(
            np.eye(2, dtype=complex) / 2, np.eye(2, dtype=complex) / 2, ctx0
        )
        with pytest.raises(ValueError):
            couple_lchv_d2(m, qubit_pair_ctx(2))

    def test_degenerate_first_step_rejected(self):
        ident = OperationFamily.ideal(
            measurement.Observable.from_matrix(np.eye(2, dtype=complex), "one")
        )
        ctx1 = Context((ident,), (ident,), 1, 1)
        m = product_local_model(
            np.eye(2, dtype=complex) / 2, np.eye(2, dtype=complex) / 2, ctx1
        )
        with pytest.raises(ValueError):
            couple_lchv_d2(m, Context((ident,), (ident,), 2, 2))


class TestFineTranslations:
    def test_deterministic_requires_local_shape(self):
        m = trivial_causal_model(states.singlet(), qubit_pair_ctx(1))
        with pytest.raises(ValueError):
            deterministic_to_stochastic(m)

    def test_round_trip_preserves_distributions(self):
        m = product_local_model(
            np.diag([0.7, 0.3]).astype(complex),
            np.diag([0.6, 0.4]).astype(complex),
            qubit_pair_ctx(2),
        )
        s = deterministic_to_stochastic(m)
        back = stochastic_to_deterministic(s)
        ctx = m.context
        for c1, c2 in ctx.collected_sequences():
            want = m.distribution_collected(c1, c2)
            mid = s.distribution_collected(c1, c2)
            got = back.distribution_collected(c1, c2)
            keys = set(want) | set(mid) | set(got)
            for k in keys:
                assert mid.get(k, 0.0) == pytest.approx(want.get(k, 0.0), abs=1e-12)
                assert got.get(k, 0.0) == pytest.approx(want.get(k, 0.0), abs=1e-12)

    def test_degenerate_kernels_are_point_masses(self):
        m = product_local_model(
            np.diag([0.7, 0.3]).astype(complex),
            np.diag([0.6, 0.4]).astype(complex),
            z_only_ctx(1),
        )
        s = deterministic_to_stochastic(m)
        for atom in s.space.atoms:
            for side in (1, 2):
                for dist in s.kernels[atom][side].values():
                    assert set(dist.values()) == {1.0}

    def test_nondegenerate_instantiation_matches_chain_rule(self):
        ctx = Context((MZ,), (), 2, 0)
        kernels = {
            "a": {
                1: {
                    (("mz",), ()): {"u": 0.3, "v": 0.7},
                    (("mz", "mz"), ("u",)): {"u": 0.2, "v": 0.8},
                    (("mz", "mz"), ("v",)): {"u": 0.5, "v": 0.5},
                },
                2: {},
            }
        }
        s = StochasticModel(FiniteSampleSpace(("a",), np.array([1.0])), ctx, kernels)
        det = stochastic_to_deterministic(s)
        assert len(det.space) == 4
        table = det.distribution_collected(("mz", "mz"), ())
        assert table[("u", "u")] == pytest.approx(0.06, abs=1e-14)
        assert table[("u", "v")] == pytest.approx(0.24, abs=1e-14)
        assert table[("v", "u")] == pytest.approx(0.35, abs=1e-14)
        assert table[("v", "v")] == pytest.approx(0.35, abs=1e-14)

    def test_instantiation_budget(self):
        m = product_local_model(
            np.eye(2, dtype=complex) / 2,
            np.eye(2, dtype=complex) / 2,
            qubit_pair_ctx(2),
        )
        s = deterministic_to_stochastic(m)
        with pytest.raises(BudgetExceededError):
            stochastic_to_deterministic(s, atom_budget=2)


class TestSideDistribution:
    def test_two_atom_chain_rule_product(self):
        ctx = Context((MZ,), (MX,), 1, 1)
        kernels = {
            "a": {
                1: {(("mz",), ()): {"u": 0.3, "v": 0.7}},
                2: {(("mx",), ()): {"x": 0.5, "y": 0.5}},
            },
            "b": {
                1: {(("mz",), ()): {"u": 1.0}},
                2: {(("mx",), ()): {"x": 0.2, "y": 0.8}},
            },
        }
        s = StochasticModel(
            FiniteSampleSpace(("a", "b"), np.array([0.5, 0.5])), ctx, kernels
        )
        table = s.distribution_collected(("mz",), ("mx",))
        assert table[("u", "x")] == pytest.approx(0.175, abs=1e-14)
        assert table[("u", "y")] == pytest.approx(0.475, abs=1e-14)
        assert table[("v", "x")] == pytest.approx(0.175, abs=1e-14)
        assert table[("v", "y")] == pytest.approx(0.175, abs=1e-14)
        assert sum(table.values()) == pytest.approx(1.0, abs=1e-14)


class TestExtendCommutingPovm:
    def basis_model(self):
        b1 = OperationFamily.ideal(pauli("z"), "bz1")
        b2 = OperationFamily.ideal(pauli("z"), "bz2")
        ctx = Context((b1,), (b2,), 1, 1)
        responses = {"a0": {1: {("bz1",): ("+1",)}, 2: {("bz2",): ("+1",)}}}
        space = FiniteSampleSpace(("a0",), np.array([1.0]))
        return DeterministicModel(space, "local_causal", ctx, responses)

    def test_joint_table_frozen(self):
        lhv1 = self.basis_model()
        t1 = np.array([[0.8, 0.3], [0.2, 0.7]])
        t2 = np.array([[0.6, 0.1], [0.4, 0.9]])
        ext = extend_commuting_povm(
            lhv1, smeared_povm(pauli("z"), t1), smeared_povm(pauli("z"), t2)
        )
        assert ext.space is lhv1.space
        table = ext.distribution_collected(("M1",), ("M2",))
        assert table[("+1", "+1")] == pytest.approx(0.48, abs=1e-12)
        assert table[("+1", "-1")] == pytest.approx(0.32, abs=1e-12)
        assert table[("-1", "+1")] == pytest.approx(0.12, abs=1e-12)
        assert table[("-1", "-1")] == pytest.approx(0.08, abs=1e-12)

    def test_extension_verifies_against_state(self):
        lhv1 = self.basis_model()
        t1 = np.array([[0.8, 0.3], [0.2, 0.7]])
        t2 = np.array([[0.6, 0.1], [0.4, 0.9]])
        ext = extend_commuting_povm(
            lhv1, smeared_povm(pauli("z"), t1), smeared_povm(pauli("z"), t2)
        )
        rho = diag_product(1.0, 1.0)
        rep = verify_model(ext, rho)
        assert rep.passed, rep.summary()

    def test_not_commuting_raises(self):
        lhv1 = self.basis_model()
        e1 = (np.eye(2, dtype=complex) + SX) / 4.0
        e2 = (np.eye(2, dtype=complex) + SZ) / 4.0
        bad = Povm(("a", "b", "c"), (e1, e2, np.eye(2, dtype=complex) - e1 - e2))
        good = smeared_povm(pauli("z"), np.array([[0.8, 0.3], [0.2, 0.7]]))
        with pytest.raises(NotCommutingError) as exc:
            extend_commuting_povm(lhv1, bad, good)
        assert exc.value.info.pair == ("a", "b")

    def test_missing_basis_raises(self):
        bx = OperationFamily.ideal(pauli("x"), "bx1")
        ctx = Context((bx,), (bx,), 1, 1)
        responses = {"a0": {1: {("bx1",): ("+1",)}, 2: {("bx1",): ("+1",)}}}
        m = DeterministicModel(
            FiniteSampleSpace(("a0",), np.array([1.0])), "local_causal", ctx, responses
        )
        zsm = smeared_povm(pauli("z"), np.array([[0.8, 0.3], [0.2, 0.7]]))
        with pytest.raises(MissingBasisObservable):
            extend_commuting_povm(m, zsm, zsm)


class TestVerifyReport:
    def test_structural_fields(self):
        m = trivial_causal_model(states.singlet(), z_only_ctx(1))
        rep = verify_model(m, states.singlet())
        assert rep.structural["shape"] == "causal"
        assert rep.structural["weight_sum_deviation"] < 1e-12
        assert rep.structural["per_side_responses"] is False
        assert "pass" in rep.summary()

    def test_detects_wrong_state(self):
        m = trivial_causal_model(states.singlet(), z_only_ctx(1))
        rep = verify_model(m, diag_product(1.0, 1.0))
        assert not rep.passed
        assert rep.max_deviation > 0.4

    def test_kernel_normalization_reported(self):
        m = product_local_model(
            np.diag([0.7, 0.3]).astype(complex),
            np.diag([0.6, 0.4]).astype(complex),
            z_only_ctx(1),
        )
        s = deterministic_to_stochastic(m)
        rep = verify_model(s, diag_product(0.7, 0.6))
        assert rep.passed
        assert rep.structural["kernel_normalization_deviation"] < 1e-12


class TestModelJson:
    def round_trip_check(self, m, rho):
        back = model_from_json(model_to_json(m))
        assert back.shape == m.shape
        assert back.space.atoms == m.space.atoms
        assert np.allclose(back.space.weights, m.space.weights)
        rep = verify_model(back, rho)
        assert rep.passed, rep.summary()

    def test_causal_round_trip(self):
        m = trivial_causal_model(states.singlet(), qubit_pair_ctx(1))
        self.round_trip_check(m, states.singlet())

    def test_local_round_trip(self):
        m = product_local_model(
            np.diag([0.7, 0.3]).astype(complex),
            np.diag([0.6, 0.4]).astype(complex),
            qubit_pair_ctx(2),
        )
        self.round_trip_check(m, diag_product(0.7, 0.6))

    def test_stochastic_round_trip(self):
        m = product_local_model(
            np.diag([0.7, 0.3]).astype(complex),
            np.diag([0.6, 0.4]).astype(complex),
            z_only_ctx(1),
        )
        s = deterministic_to_stochastic(m)
        self.round_trip_check(s, diag_product(0.7, 0.6))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**30))
def test_trivial_model_matches_random_states(seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    mat = g @ g.conj().T
    rho = states.make_density(mat / np.real(np.trace(mat)), (2, 2))
    m = trivial_causal_model(rho, qubit_pair_ctx(1))
    rep = verify_model(m, rho, tol=1e-8)
    assert rep.passed, rep.summary()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**30))
def test_model_distributions_normalized(seed):
    rng = np.random.default_rng(seed)
    c = float(rng.uniform(0.0, 0.5))
    m = trivial_causal_model(states.werner_gen(2, c), qubit_pair_ctx(1))
    for path in m.context.interleaved_sequences():
        assert sum(m.distribution_interleaved(path).values()) == pytest.approx(
            1.0, abs=1e-12
        )
