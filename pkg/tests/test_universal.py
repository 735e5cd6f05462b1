import numpy as np
import pytest

from conftest import ONE, ZERO, kron, oracle_lasso_tp, raw_fixture
from nqterm.errors import PreconditionError
from nqterm.model import LassoScheduler, Measurement, QuantumMDP, SuperOperator
from nqterm.numerics import ket, outer
from nqterm.universal import (
    UniversalStatus,
    averaged_map,
    check_universal_termination,
    invariant_space,
    loop_spectral_radius,
    synth_universal_scheduler,
    validate_universal,
)


def test_modified_qbf_has_bell_invariant_space(qbf_modified):
    inv = invariant_space(qbf_modified.model)
    bell = (kron(ZERO, ZERO) + kron(ONE, ONE)) / np.sqrt(2)
    assert inv.present and inv.verified and inv.space.dim == 1
    assert abs(np.vdot(inv.space.vectors[0], bell)) ** 2 == pytest.approx(1, abs=1e-12)
    assert np.allclose(inv.stationary_solution, outer(bell))
    assert inv.stationary_residual <= 1e-8


def test_modified_qbf_counterexample_never_terminates(qbf_modified):
    v = check_universal_termination(qbf_modified.model)
    assert v.status is UniversalStatus.NOT_UNIVERSAL
    kraus, mt, mf = raw_fixture("qbf_modified")
    for loop in (("alpha1",), ("alpha2",), ("alpha1", "alpha2", "alpha2")):
        assert oracle_lasso_tp(kraus, mt, mf, v.counterexample, (), loop, 60) < 1e-12
    with pytest.raises(PreconditionError):
        synth_universal_scheduler(qbf_modified.model)


def test_qbf_universal_scheduler(qbf):
    assert not invariant_space(qbf.model).present
    s = synth_universal_scheduler(qbf.model)
    assert s == LassoScheduler((), ("alpha1", "alpha2", "alpha1"))
    assert loop_spectral_radius(qbf.model, s.loop) == pytest.approx((2 + np.sqrt(3)) / 4)


def test_qbf_universal_convergence_is_slow_but_certain(qbf):
    s = synth_universal_scheduler(qbf.model)
    report = validate_universal(qbf.model, s)
    kraus, mt, mf = raw_fixture("qbf")
    tps = [oracle_lasso_tp(kraus, mt, mf, outer(ket(i, 4)), (), s.loop, 120) for i in range(4)]
    assert [row["tp"] for row in report["table"]] == pytest.approx(tps, abs=1e-12)
    assert min(tps) == pytest.approx(0.9508, abs=1e-4)
    assert report["steps_to_target"] == 189
    assert oracle_lasso_tp(kraus, mt, mf, outer(ket(3, 4)), (), s.loop, 189) >= 0.99


def test_nqw_universal(nqw):
    v = check_universal_termination(nqw.model)
    assert v.status is UniversalStatus.UNIVERSALLY_TERMINATING
    assert v.scheduler.loop == ("w1",)
    kraus, mt, mf = raw_fixture("nqw")
    for i in range(3):
        assert oracle_lasso_tp(kraus, mt, mf, outer(ket(i, 3)), (), ("w1",), 120) >= 0.99


def test_identity_dynamics_is_fully_invariant():
    m = QuantumMDP(2, ("a",), {"a": SuperOperator((np.eye(2),))}, Measurement(np.eye(2), np.zeros((2, 2))))
    inv = invariant_space(m)
    assert inv.present and inv.space.dim == 2


def test_single_action_universal_word():
    x = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=complex)
    m = QuantumMDP(3, ("s",), {"s": SuperOperator((x,))}, Measurement.from_false(outer(ket(0, 3))))
    s = synth_universal_scheduler(m)
    assert s.loop == ("s",) and validate_universal(m, s)["passed"]


def test_averaged_map_fixes_stationary_solution(qbf_modified):
    g = invariant_space(qbf_modified.model).stationary_solution
    assert np.allclose(averaged_map(qbf_modified.model, g), g)


def test_immediate_termination_needs_no_scheduler():
    m = QuantumMDP(2, ("a",), {"a": SuperOperator((np.eye(2),))}, Measurement.from_false(np.eye(2)))
    v = check_universal_termination(m)
    assert v.status is UniversalStatus.UNIVERSALLY_TERMINATING and v.scheduler is None


@pytest.mark.parametrize("name", ["qbf", "nqw"])
def test_tp_never_decreases_under_universal_loop(name, request):
    from nqterm.model import tp_trace

    m = request.getfixturevalue(name).model
    s = synth_universal_scheduler(m)
    for i in range(m.dim):
        trace = np.array(tp_trace(m, outer(ket(i, m.dim)), s.unroll(150)))
        assert np.all(np.diff(trace) >= -1e-12)
