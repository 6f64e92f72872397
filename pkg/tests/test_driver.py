import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homcone.battery import battery, get_model
from homcone.cones import ConeSpec, Status, sample_cone
from homcone.driver import DriverPoint, G_star, argmin_bound_check, branch_sign, closed_form_unconstrained, eval_G
from homcone.errors import ConstraintViolation, IllPosedError
from homcone.families import PowerFamily, build_model
from homcone.model import RegimeParams

from conftest import callback_model, lq_model


def _drift_model(p=2.0, cone=None):
    """b(+-1, v) = v, sigma = 0, f(+-1, v) = v^2."""
    return callback_model(b=lambda t, v: float(v[0]), f=lambda t, v: float(v[0] ** 2), p=p, cone=cone)


# ---------------------------------------------------------------- eval_G

def test_eval_G_zero_point_is_running_cost(lq):
    pt = DriverPoint.at(0.0, 0.0)
    assert eval_G(lq, "plus", [0.0], pt) == lq.coeffs.f(1, 0.0, np.zeros(1))


def test_eval_G_plus_by_hand():
    assert eval_G(_drift_model(), "plus", [3.0], DriverPoint.at(0.0, 1.0)) == 15.0


def test_eval_G_minus_flips_drift_sign():
    assert eval_G(_drift_model(), "minus", [3.0], DriverPoint.at(0.0, 1.0)) == 3.0


def test_eval_G_volatility_terms():
    # p = 3, sigma = (2, v), Lam = (1, -1): f + 3 P |sigma|^2 + 3 Lam.sigma
    model = callback_model(sigma=lambda t, v: np.array([2.0, v[0]]), f=lambda t, v: 1.0, p=3.0, n=2)
    pt = DriverPoint(0.0, 0.5, np.array([1.0, -1.0]))
    assert eval_G(model, "plus", [1.0], pt) == pytest.approx(1.0 + 3.0 * 0.5 * 5.0 + 3.0 * 1.0)
    assert eval_G(model, "minus", [1.0], pt) == pytest.approx(1.0 + 3.0 * 0.5 * 5.0 - 3.0 * 1.0)


def test_eval_G_rejects_infeasible_control():
    with pytest.raises(ConstraintViolation):
        eval_G(_drift_model(cone=ConeSpec.orthant(1)), "plus", [-1.0], DriverPoint.at(0.0, 1.0))


def test_branch_sign_aliases():
    assert branch_sign("plus") == branch_sign(1) == 1
    assert branch_sign("minus") == branch_sign(-1) == -1
    with pytest.raises(ValueError):
        branch_sign("up")


def test_driver_point_rejects_nonfinite():
    with pytest.raises(ValueError):
        DriverPoint.at(0.0, float("nan"))


# ---------------------------------------------------------------- G_star

def test_G_star_control_free_dynamics_argmin_zero():
    model = callback_model(b=lambda t, v: 0.3, sigma=lambda t, v: np.array([0.2]),
                           f=lambda t, v: float(v @ v) + 1.0, m=2)
    for P, lam in [(0.0, 0.0), (2.0, 1.0), (-1.0, 5.0)]:
        pt = DriverPoint.at(0.0, P, np.array([lam]))
        res = G_star(model, "plus", pt)
        assert np.allclose(res.argmin, 0.0, atol=1e-6)
        assert res.value == pytest.approx(eval_G(model, "plus", np.zeros(2), pt), rel=1e-10, abs=1e-12)


def test_G_star_orthant_kkt_boundary():
    # unconstrained minimiser of v^2 + 2 P v is -P < 0, infeasible; the boundary is optimal
    model = _drift_model(cone=ConeSpec.orthant(1))
    res = G_star(model, "plus", DriverPoint.at(0.0, 1.5))
    assert res.status is Status.CONVERGED
    assert res.argmin[0] == pytest.approx(0.0, abs=1e-8)
    assert res.value == pytest.approx(0.0, abs=1e-12)


def test_G_star_divergent_raises_when_asked():
    # linear cost in v on the ray: -inf infimum
    model = callback_model(b=lambda t, v: float(v[0]), f=lambda t, v: 0.0, cone=ConeSpec.orthant(1))
    res = G_star(model, "plus", DriverPoint.at(0.0, -1.0))
    assert res.status is Status.DIVERGENT
    with pytest.raises(IllPosedError):
        G_star(model, "plus", DriverPoint.at(0.0, -1.0), raise_on_divergence=True)


@pytest.mark.parametrize("model", battery(), ids=lambda m: m.name)
def test_G_star_not_above_zero_control(model):
    rng = np.random.default_rng(11)
    for _ in range(5):
        pt = DriverPoint(float(rng.uniform(0, model.T)), float(rng.uniform(0, 5)), rng.normal(0, 2, model.n))
        for branch in ("plus", "minus"):
            res = G_star(model, branch, pt)
            assert res.value <= eval_G(model, branch, np.zeros(model.m), pt) + 1e-10


@settings(max_examples=40, deadline=None)
@given(P=st.floats(-5, 5), lam=st.floats(-5, 5), scale=st.floats(0.1, 10))
def test_G_star_one_homogeneous_without_running_cost(P, lam, scale):
    # f = 0 and a coercive volatility term: G* is positively 1-homogeneous in (P, Lam)
    model = callback_model(b=lambda t, v: float(v[0]), sigma=lambda t, v: np.array([0.5 + v[0]]), p=3.0)
    if P <= 0.05:
        P = 0.05 + abs(P)
    base = G_star(model, "plus", DriverPoint.at(0.0, P, np.array([lam])))
    scaled = G_star(model, "plus", DriverPoint.at(0.0, scale * P, np.array([scale * lam])))
    assert scaled.value == pytest.approx(scale * base.value, rel=1e-7, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(P=st.floats(-5, 5), lam=st.floats(-5, 5), seed=st.integers(0, 2 ** 32 - 1))
def test_odd_symmetric_branches_coincide(P, lam, seed):
    b = lambda t, v: 0.2 + float(v[0])  # noqa: E731
    s = lambda t, v: np.array([0.3 + 0.1 * v[0]])  # noqa: E731
    model = callback_model(b=(b, lambda t, v: -b(t, v)), sigma=(s, lambda t, v: -s(t, v)),
                           f=lambda t, v: float(v[0] ** 2))
    v = np.random.default_rng(seed).normal(0, 3, 1)
    pt = DriverPoint.at(0.0, P, np.array([lam]))
    assert eval_G(model, "plus", v, pt) == eval_G(model, "minus", v, pt)


# ---------------------------------------------------------------- closed form

def test_closed_form_zero_P():
    params = {"A": 0.4, "B": [1.0, 2.0], "C": [0.3], "Q": 0.7, "R": np.eye(2)}
    p = 3.0
    lam = np.array([1.5])
    value, v = closed_form_unconstrained(params, p, DriverPoint(0.0, 0.0, lam))
    # the volatility term carries a factor P and vanishes with it
    assert value == pytest.approx(0.7 ** p + p * 1.5 * 0.3, rel=1e-14)
    assert np.all(v == 0.0)
    model = lq_model(p=p, A=0.4, B=1.0, C=0.3, Q=0.7, R=1.0)
    assert value == pytest.approx(eval_G(model, "plus", [0.0], DriverPoint(0.0, 0.0, lam)), rel=1e-14)


def test_closed_form_scalar_quadratic():
    params = {"A": 0.0, "B": [1.0], "C": [0.0], "Q": 0.0, "R": [[1.0]]}
    value, v = closed_form_unconstrained(params, 2.0, DriverPoint.at(0.0, 1.0))
    assert value == -1.0
    assert v[0] == -1.0


def test_closed_form_matches_calculus_oracle():
    # inf_v (v^2 + 2 v) = -1 at v = -1, via the generic minimiser
    res = G_star(_drift_model(), "plus", DriverPoint.at(0.0, 1.0))
    assert res.value == pytest.approx(-1.0, abs=1e-10)
    assert res.argmin[0] == pytest.approx(-1.0, abs=1e-6)


def test_closed_form_is_riccati_driver():
    # p = 2: G* = -kappa P^2 + Q^2 + P |C|^2 + 2 A P + 2 Lam.C
    A, B, C, Q, R = 0.1, np.array([1.0, 0.5]), np.array([0.2]), 0.8, np.array([[1.0, 0.3], [0.0, 2.0]])
    kappa = float(B @ np.linalg.solve(R.T @ R, B))
    for P in (-2.0, 0.5, 3.0):
        pt = DriverPoint(0.0, P, np.array([0.7]))
        value, _ = closed_form_unconstrained({"A": A, "B": B, "C": C, "Q": Q, "R": R}, 2.0, pt)
        assert value == pytest.approx(-kappa * P * P + Q * Q + P * 0.04 + 2 * A * P + 2 * 0.7 * 0.2, rel=1e-13)


def test_closed_form_overflow_is_minus_infinity():
    # p / (p - 1) = 3 overflows for |P| = 1e200; the caller sees -inf, not an exception
    value, _ = closed_form_unconstrained({"A": 0, "B": [1.0], "C": [0.0], "Q": 1.0, "R": [[1.0]]}, 1.5,
                                         DriverPoint.at(0.0, 1e200))
    assert value == -np.inf


def test_closed_form_singular_R_raises():
    with pytest.raises(np.linalg.LinAlgError):
        closed_form_unconstrained({"A": 0, "B": [1.0, 1.0], "C": [0.0], "Q": 1.0, "R": [[1.0, 1.0]]}, 2.0,
                                  DriverPoint.at(0.0, 1.0))


@pytest.mark.parametrize("p", [1.5, 2.0, 2.5, 4.0])
def test_closed_form_agrees_with_numeric(p):
    model = lq_model(p=p, A=0.2, B=0.7, C=0.3, Q=0.9, R=1.3)
    for P in (-3.0, 0.2, 4.0):
        pt = DriverPoint.at(0.0, P, np.array([0.8]))
        cf = G_star(model, "plus", pt)
        num = G_star(model, "plus", pt, numeric=True)
        assert cf.closed_form and not num.closed_form
        assert num.value == pytest.approx(cf.value, rel=1e-8, abs=1e-10)
        assert np.allclose(num.argmin, cf.argmin, atol=1e-5 * (1 + np.abs(cf.argmin)))
        minus = G_star(model, "minus", pt)
        assert minus.value == cf.value and np.array_equal(minus.argmin, -cf.argmin)


def test_numeric_minimiser_resolves_large_argmin():
    # |v*| ~ 44 with |G*| ~ 480: the value-tie window is wide, the argmin must still be sharp
    fam = PowerFamily.symmetric(p=1.7180939575731404, T=1.0, m=2, n=2, A=0.9387860732307868,
                                B=[-0.15756046758904543, -1.5008607598846657],
                                C=[0.062403377282363594, 0.3999610464204339], Q=0.8717480420850043,
                                R=[[1.0470335967854574, -0.0562677131738148],
                                   [0.15689163129197703, 0.9877962825749333]], G=1.0)
    model = build_model(fam, ConeSpec.full(2), "I", RegimeParams(delta=4.0, L=4.0))
    pt = DriverPoint(0.0, -9.912549126535668, np.array([8.77809004903542, 5.088723414953611]))
    cf = G_star(model, "plus", pt)
    num = G_star(model, "plus", pt, numeric=True)
    assert np.linalg.norm(cf.argmin) > 40
    assert np.linalg.norm(num.argmin - cf.argmin) <= 1e-5


def test_closed_form_minimiser_attains_value():
    model = lq_model(p=3.0, A=0.2, B=0.7, C=0.3, Q=0.9, R=1.3)
    pt = DriverPoint.at(0.0, 2.0, np.array([0.4]))
    res = G_star(model, "plus", pt)
    assert eval_G(model, "plus", res.argmin, pt) == pytest.approx(res.value, rel=1e-12)


# ---------------------------------------------------------------- argmin bound diagnostic

def test_argmin_bound_zero_control(lq):
    rep = argmin_bound_check(lq, "plus", DriverPoint.at(0.0, 1.0), [0.0])
    c = lq.coeffs
    assert rep.c == pytest.approx(max(abs(c.b(1, 0.0, np.zeros(1))), np.linalg.norm(c.sigma(1, 0.0, np.zeros(1)))))


@pytest.mark.parametrize("name", ["lq-scalar", "power-p3", "singular"])
def test_argmin_bound_stays_bounded_over_lambda_sweep(name):
    model = get_model(name)
    cs = []
    for lam in (0.0, 1.0, 10.0, 100.0):
        pt = DriverPoint.at(0.5, 1.0, np.array([lam]))
        res = G_star(model, "plus", pt)
        cs.append(argmin_bound_check(model, "plus", pt, res.argmin).c)
    assert all(np.isfinite(cs))
    assert max(cs) <= 10.0 * (1.0 + cs[0])


def test_argmin_bound_reports_regime_quantity():
    model = get_model("singular")
    rep = argmin_bound_check(model, "plus", DriverPoint.at(0.0, 1.0, np.array([3.0])), [0.5])
    assert rep.quantity == "|sigma|"


def test_feasible_random_controls_never_beat_minimum():
    model = get_model("orthant-2d")
    pt = DriverPoint.at(0.3, 1.2, np.array([0.5]))
    res = G_star(model, "plus", pt)
    for v in sample_cone(model.cone, np.random.default_rng(0), 500, scale=3.0):
        assert eval_G(model, "plus", v, pt) >= res.value - 1e-10
