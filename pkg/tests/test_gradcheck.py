import numpy as np
import pytest

from ccal import gradcheck
from ccal.errors import ContractError, DegenerateSpectrumError


@pytest.mark.parametrize("target", gradcheck.TARGETS)
def test_targets_pass(target):
    rep = gradcheck.grad_check(target, seed=0)
    assert rep.passed, rep.line()
    assert rep.max_rel_err < 1e-4


def test_zero_weight_mlp_vanishes():
    # every gradient is zero except the output bias, where the loss is exactly linear
    rep = gradcheck.grad_check("mlp", zero_weights=True)
    assert rep.passed and rep.max_rel_err < 1e-12


def test_rel_error():
    assert gradcheck.rel_error([np.zeros(3)], [np.zeros(3)]) == 0.0
    assert gradcheck.rel_error([np.array([1.0, 2.0])], [np.array([1.0, 2.5])]) == pytest.approx(0.2)


def test_numeric_gradient_restores_inputs():
    a = np.array([1.0, -2.0, 0.5])
    before = a.copy()
    (g,) = gradcheck.numeric_gradient(lambda: float(np.sum(a ** 3)), [a], 1e-5)
    np.testing.assert_allclose(g, 3 * before ** 2, rtol=1e-8)
    assert a.tobytes() == before.tobytes()


def test_limits():
    with pytest.raises(ContractError):
        gradcheck.grad_check("bogus")
    with pytest.raises(ContractError):
        gradcheck.grad_check("cca-layer", m=200, d=8)
    with pytest.raises(ContractError):
        gradcheck.grad_check("cca-layer", d=3, k=4)


def test_gives_up_after_retries(monkeypatch):
    def always_degenerate(*a, **kw):
        raise DegenerateSpectrumError(0, 1, 0.0)
    monkeypatch.setitem(gradcheck._CHECKS, "tno", always_degenerate)
    rep = gradcheck.grad_check("tno", retries=5)
    assert not rep.passed and rep.attempts == 6
    assert "gave up after 6 draws" in rep.message and "FAIL" in rep.line()


def test_redraw_uses_derived_seed(monkeypatch):
    seen = []
    real = gradcheck._CHECKS["tno"]

    def flaky(rng, *a):
        seen.append(rng.integers(1 << 30))
        if len(seen) < 3:
            raise DegenerateSpectrumError(0, 1, 0.0)
        return real(rng, *a)
    monkeypatch.setitem(gradcheck._CHECKS, "tno", flaky)
    rep = gradcheck.grad_check("tno", seed=4)
    assert rep.passed and rep.attempts == 3 and rep.seed == 4 + 2 * 100003
    assert len(set(seen)) == 3
