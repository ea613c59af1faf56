import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from nonloc import hvmodels, measurement, states
from nonloc.feasibility import (
    ChshSettings,
    LocalStrategy,
    LpNumericalFailure,
    _count_side_trees,
    _enumerate_side_trees,
    _realized_side_trees,
    bell_polytope_oracle,
    chsh_maximize,
    chsh_value,
    classify_evidence,
    correlation_table,
    enumerate_strategies,
    lchv_feasibility,
    result_to_json,
)
from nonloc.hvmodels import BudgetExceededError, Context
from nonloc.measurement import Observable, OperationFamily, pauli
from nonloc.states import ZeroProbabilityOutcome

RT2 = np.sqrt(2.0)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)

MZ = OperationFamily.ideal(pauli("z"), "mz")
MX = OperationFamily.ideal(pauli("x"), "mx")


def qubit_pair_ctx(max_len: int) -> Context:
    return Context((MZ, MX), (MZ, MX), max_len, max_len)


def chsh_angle_ctx(max_len: int = 1) -> Context:
    """Measurement menu at the optimal singlet angles."""
    b_plus = (SZ + SX) / RT2
    b_minus = (SZ - SX) / RT2
    return Context(
        (MZ, MX),
        (
            OperationFamily.ideal(Observable.from_matrix(b_plus, "b1")),
            OperationFamily.ideal(Observable.from_matrix(b_minus, "b2")),
        ),
        max_len,
        max_len,
    )


def diag_product(p1: float, p2: float) -> states.DensityMatrix:
    a = np.diag([p1, 1 - p1]).astype(complex)
    b = np.diag([p2, 1 - p2]).astype(complex)
    return states.make_density(np.kron(a, b), (2, 2))


class TestStrategyEnumeration:
    def test_single_family_depth_one(self):
        ctx = Context((MZ,), (MZ,), 1, 1)
        pairs = enumerate_strategies(ctx, 1)
        assert len(pairs) == 4

    def test_two_families_depth_one(self):
        pairs = enumerate_strategies(qubit_pair_ctx(1), 1)
        assert len(pairs) == 16

    def test_full_tree_count_depth_two(self):
        # 2 observables, 2 outcomes: 4 first-step nodes and 8 depth-2 nodes
        assert _count_side_trees((MZ, MX), 2) == 1024

    def test_depth_two_exceeds_budget(self):
        with pytest.raises(BudgetExceededError):
            enumerate_strategies(qubit_pair_ctx(2), 2)

    def test_single_family_depth_two(self):
        ctx = Context((MZ,), (MZ,), 2, 2)
        assert _count_side_trees((MZ,), 2) == 8
        assert len(enumerate_strategies(ctx, 2)) == 64

    def test_realized_trees_collapse_duplicates(self):
        # full trees assign outcomes on unreachable pasts; realized trees do not
        realized = _realized_side_trees((MZ, MX), 2, 10**6)
        assert len(realized) == 64
        full = list(_enumerate_side_trees((MZ,), 2))
        assert len(full) == 8
        distinct = {
            tuple(sorted(s.realized().items())) for s in full
        }
        assert len(distinct) == 4

    def test_realized_is_prefix_consistent(self):
        for tree, _ in zip(_enumerate_side_trees((MZ, MX), 2), range(20)):
            realized = tree.realized()
            for choices, outs in realized.items():
                assert len(choices) == len(outs)
                if len(choices) > 1:
                    assert realized[choices[:-1]] == outs[:-1]

    def test_local_strategy_dict_round_trip(self):
        tree = next(iter(_enumerate_side_trees((MZ,), 1)))
        assert isinstance(tree, LocalStrategy)
        assert tree.as_dict() == dict(tree.assignments)


class TestLchvFeasibility:
    def test_product_state_feasible(self):
        res = lchv_feasibility(diag_product(0.7, 0.6), qubit_pair_ctx(1), 1)
        assert res.status == "feasible"
        assert res.max_residual < 1e-9
        assert res.certificate
        assert res.report is not None and res.report.passed
        assert abs(sum(e["weight"] for e in res.certificate) - 1.0) < 1e-9

    def test_werner_inside_single_time_window(self):
        res = lchv_feasibility(states.werner_gen(2, 0.2), qubit_pair_ctx(1), 1)
        assert res.status == "feasible"
        assert res.model is not None
        assert res.model.shape == "local_causal"

    def test_singlet_infeasible_with_chsh_witness(self):
        res = lchv_feasibility(states.singlet(), chsh_angle_ctx(1), 1)
        assert res.status == "infeasible"
        assert res.witness is not None
        # dual separation reproduces the CHSH gap 2*sqrt(2) - 2
        assert res.witness["separation"] == pytest.approx(
            2.0 * RT2 - 2.0, abs=1e-6
        )
        assert res.witness["value_on_targets"] > res.witness["max_on_strategies"]

    def test_infeasibility_is_monotone_in_depth(self):
        res = lchv_feasibility(states.singlet(), chsh_angle_ctx(2), 2)
        assert res.status == "infeasible"

    def test_werner_depth_two_feasible(self):
        res = lchv_feasibility(states.werner_gen(2, 0.2), qubit_pair_ctx(2), 2)
        assert res.status == "feasible"
        assert res.report is not None and res.report.passed

    def test_depth_clamps_to_context_bounds(self):
        # k larger than the caps only probes what the context allows
        res = lchv_feasibility(diag_product(0.7, 0.6), qubit_pair_ctx(1), 3)
        assert res.status == "feasible"

    def test_budget_propagates(self):
        with pytest.raises(BudgetExceededError):
            lchv_feasibility(
                states.singlet(), qubit_pair_ctx(2), 2, strategy_budget=10
            )

    def test_result_json_keys(self):
        res = lchv_feasibility(states.singlet(), chsh_angle_ctx(1), 1)
        obj = result_to_json(res)
        assert obj["status"] == "infeasible"
        assert set(obj) >= {"status", "max_residual", "certificate", "witness"}
        assert set(obj["witness"]) >= {
            "functional", "value_on_targets", "max_on_strategies", "separation"
        }


class TestChsh:
    def spec_settings(self) -> ChshSettings:
        eye = np.eye(2, dtype=complex)
        return ChshSettings(
            SZ, SX, (SZ + SX) / RT2, (SZ - SX) / RT2, eye, eye
        )

    def test_singlet_at_standard_angles(self):
        # signed sum at these angles is -2*sqrt(2); magnitude is what the
        # optimizer reports after absorbing signs into the settings
        val = chsh_value(states.singlet(), self.spec_settings())
        assert val == pytest.approx(-2.0 * RT2, abs=1e-12)

    def test_settings_validation(self):
        eye = np.eye(2, dtype=complex)
        with pytest.raises(ValueError):
            ChshSettings(0.5 * SZ, SX, SZ, SX, eye, eye)
        skew = np.array([[0, 1], [0, 0]], dtype=complex)
        with pytest.raises(ValueError):
            ChshSettings(skew, SX, SZ, SX, eye, eye)

    def test_maximize_singlet_hits_tsirelson(self):
        value, settings = chsh_maximize(states.singlet())
        assert value == pytest.approx(2.0 * RT2, abs=1e-6)
        assert chsh_value(states.singlet(), settings) == pytest.approx(
            value, abs=1e-10
        )

    def test_maximize_flip_family_linear_in_weight(self):
        for c in (0.25, 0.35, 0.45):
            value, _ = chsh_maximize(states.werner_gen(2, c))
            assert value == pytest.approx(2.0 * RT2 * 2.0 * c, abs=1e-6)

    def test_product_states_stay_local(self):
        value, _ = chsh_maximize(diag_product(0.7, 0.6))
        assert value <= 2.0 + 1e-9

    def test_rank2_collapse_values(self):
        # post-selected flip states: violation first appears at d = 5
        for d, want in ((3, 6.0 / 5.0), (4, 8.0 / 6.0), (5, 10.0 / 7.0),
                        (6, 12.0 / 8.0)):
            t = np.zeros((d, d), dtype=complex)
            t[0, 0] = t[1, 1] = 1.0
            value, _ = chsh_maximize(states.werner(d), t, t)
            assert value == pytest.approx(RT2 * want, abs=1e-6)
        t5 = np.zeros((5, 5), dtype=complex)
        t5[0, 0] = t5[1, 1] = 1.0
        assert chsh_maximize(states.werner(5), t5, t5)[0] > 2.0 + 1e-3
        t4 = np.zeros((4, 4), dtype=complex)
        t4[0, 0] = t4[1, 1] = 1.0
        assert chsh_maximize(states.werner(4), t4, t4)[0] < 2.0

    def test_orthogonal_postselection_rejected(self):
        vec = np.zeros(9, dtype=complex)
        vec[8] = 1.0  # |2,2> lives outside the probed block
        rho = states.make_density(np.outer(vec, vec.conj()), (3, 3))
        t = np.zeros((3, 3), dtype=complex)
        t[0, 0] = t[1, 1] = 1.0
        with pytest.raises(ZeroProbabilityOutcome):
            chsh_maximize(rho, t, t)

    def test_rank_requirement(self):
        t = np.zeros((3, 3), dtype=complex)
        t[0, 0] = 1.0
        with pytest.raises(ValueError):
            chsh_maximize(states.werner(3), t, t)


class TestBellPolytopeOracle:
    def singlet_table(self) -> np.ndarray:
        return correlation_table(
            states.singlet(), (SZ, SX), ((SZ + SX) / RT2, (SZ - SX) / RT2)
        )

    def test_uniform_inside(self):
        assert bell_polytope_oracle(np.full((2, 2, 2, 2), 0.25)) == "inside"

    def test_deterministic_inside(self):
        t = np.zeros((2, 2, 2, 2))
        t[:, :, 0, 1] = 1.0
        assert bell_polytope_oracle(t) == "inside"

    def test_singlet_at_optimal_angles_outside(self):
        assert bell_polytope_oracle(self.singlet_table()) == "outside"

    def test_singlet_at_aligned_angles_inside(self):
        table = correlation_table(states.singlet(), (SZ, SX), (SZ, SX))
        assert bell_polytope_oracle(table) == "inside"

    def test_pr_box_outside(self):
        t = np.zeros((2, 2, 2, 2))
        for x in range(2):
            for y in range(2):
                for a in range(2):
                    for b in range(2):
                        if (a + b) % 2 == (x * y):
                            t[x, y, a, b] = 0.5
        assert bell_polytope_oracle(t) == "outside"

    def test_signalling_outside(self):
        t = np.zeros((2, 2, 2, 2))
        t[:, 0, 0, 0] = 1.0  # side-1 outcome tracks side-2 setting
        t[:, 1, 1, 0] = 1.0
        assert bell_polytope_oracle(t) == "outside"

    def test_invalid_tables_rejected(self):
        with pytest.raises(ValueError):
            bell_polytope_oracle(np.full((2, 2, 2, 2), 0.3))
        bad = np.full((2, 2, 2, 2), 0.25)
        bad[0, 0, 0, 0] = -0.25
        bad[0, 0, 1, 1] = 0.75
        with pytest.raises(ValueError):
            bell_polytope_oracle(bad)
        with pytest.raises(ValueError):
            bell_polytope_oracle(np.full((2, 2, 2), 0.25))

    def test_correlation_table_requires_two_outcomes(self):
        with pytest.raises(ValueError):
            correlation_table(
                states.werner(3),
                (np.diag([1.0, 0.0, -1.0]).astype(complex),) * 2,
                (np.diag([1.0, 0.0, -1.0]).astype(complex),) * 2,
            )

    def test_agrees_with_lp_on_flip_states(self):
        b1 = (SZ + SX) / RT2
        b2 = (SZ - SX) / RT2
        for c in (0.1, 0.3, 0.42):
            rho = states.werner_gen(2, c)
            table = correlation_table(rho, (SZ, SX), (b1, b2))
            oracle = bell_polytope_oracle(table)
            res = lchv_feasibility(rho, chsh_angle_ctx(1), 1)
            assert (oracle == "outside") == (res.status == "infeasible")


class TestLpCouplingPipeline:
    def test_single_time_model_couples_and_verifies(self):
        rho = states.werner_gen(2, 0.2)
        res = lchv_feasibility(rho, qubit_pair_ctx(1), 1)
        assert res.status == "feasible"
        coupled = hvmodels.couple_lchv_d2(res.model, qubit_pair_ctx(2))
        report = hvmodels.verify_model(coupled, rho, tol=1e-8)
        assert report.passed, report.summary()


class TestClassification:
    def test_separable_state(self):
        rec = classify_evidence(states.maximally_mixed(2, 2))
        assert rec.entangled is False
        assert rec.n_index == "infinity"
        assert rec.tag == "nonentangled"

    def test_singlet(self):
        rec = classify_evidence(states.singlet())
        assert rec.entangled is True
        assert rec.n_index == "1"
        assert rec.tag == "single_time_nonlocal"
        assert rec.witness["chsh"] == pytest.approx(2.0 * RT2, abs=1e-6)
        assert rec.witness["feasibility"]["status"] == "infeasible"

    def test_d2_entangled_single_time_local(self):
        rec = classify_evidence(states.werner_gen(2, 0.2))
        assert rec.entangled is True
        assert rec.n_index == "infinity"
        assert rec.tag == "d2_flip_family"

    def test_d2_gap_is_honest_unknown(self):
        # between the coupling window (c <= 1/4) and the first CHSH
        # violation (c > 1/(2*sqrt(2))) no probe here decides anything
        rec = classify_evidence(states.werner_gen(2, 0.35))
        assert rec.n_index == "unknown"
        assert rec.tag == ""

    def test_d5_hidden_nonlocality(self):
        rec = classify_evidence(states.werner(5))
        assert rec.entangled is True
        assert rec.n_index == "<=2"
        assert rec.tag == "hidden_nonlocality"
        assert rec.witness["chsh_after_collapse"] == pytest.approx(
            2.0 * RT2 * 5.0 / 7.0, abs=1e-6
        )
        assert any("exactly 2" in n for n in rec.notes)

    def test_d3_open_window(self):
        rec = classify_evidence(states.werner_gen(3, 0.05))
        assert rec.entangled is True
        assert rec.n_index == "open"
        assert rec.tag == "d_ge_3_flip_family"

    def test_to_json_marks_context_relativity(self):
        obj = classify_evidence(states.maximally_mixed(2, 2)).to_json()
        assert obj["context_relative"] is True
        assert obj["n_index"] == "infinity"


@hyp_settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 0.5))
def test_oracle_matches_flip_family_threshold(c):
    # at the optimal angles the table leaves the local set exactly where
    # the optimized CHSH value 4*sqrt(2)*c crosses 2
    rho = states.werner_gen(2, c)
    table = correlation_table(
        rho, (SZ, SX), ((SZ + SX) / RT2, (SZ - SX) / RT2)
    )
    want = "outside" if 4.0 * RT2 * c > 2.0 + 1e-9 else "inside"
    boundary = abs(4.0 * RT2 * c - 2.0) < 1e-7
    if not boundary:
        assert bell_polytope_oracle(table) == want


@hyp_settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**30))
def test_maximize_never_exceeds_quantum_bound(seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    m = g @ g.conj().T
    rho = states.make_density(m / np.real(np.trace(m)), (2, 2))
    value, settings = chsh_maximize(rho)
    assert value <= 2.0 * RT2 + 1e-6
    assert chsh_value(rho, settings) == pytest.approx(value, abs=1e-9)
