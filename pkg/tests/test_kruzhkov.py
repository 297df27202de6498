import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from hjres import kruzhkov


def test_hand_values():
    assert kruzhkov.forward(1.0, 1.0) == pytest.approx(1 - np.exp(-1))
    assert kruzhkov.inverse(0.5, 1.0) == pytest.approx(np.log(2))
    assert kruzhkov.amplification(2.0, 0.5) == pytest.approx(np.e)


@given(u=st.floats(-5, 20), lam=st.floats(0.01, 3))
def test_round_trip(u, lam):
    # the inverse amplifies rounding by exp(lam u)
    assume(abs(lam * u) <= 8)
    v = kruzhkov.forward(u, lam)
    assert kruzhkov.inverse(v, lam) == pytest.approx(u, rel=1e-9, abs=1e-9)


@given(u=st.floats(0, 10), lam=st.floats(0.01, 3))
def test_forward_bounded(u, lam):
    assert 0 <= kruzhkov.forward(u, lam) < 1 / lam


def test_domain_error():
    with pytest.raises(kruzhkov.KruzhkovDomainError):
        kruzhkov.inverse(np.array([0.1, 2.0]), 0.5)
    u = kruzhkov.inverse(np.array([0.1, 2.0]), 0.5, strict=False)
    assert np.isfinite(u).all()
    with pytest.raises(ValueError):
        kruzhkov.forward(1.0, 0.0)


def test_maps_damped_solution():
    # v = (1 - exp(-lam d)) / lam is the damped transform of the distance d
    x = np.linspace(0, 1, 11)
    d = np.minimum(x, 1 - x)
    np.testing.assert_allclose(kruzhkov.inverse(kruzhkov.forward(d, 0.1), 0.1), d, atol=1e-14)
