import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gfd.dge import (
    DgeSpec,
    _VALID,
    jacobian,
    jacobian_deriv,
    jacobian_values,
    kink_points,
    limit_jacobian,
    resolve_dge_id,
    weighted_invcdf_jacobian,
)
from gfd.exceptions import DegenerateSampleError, DomainError, KinkError, UnderflowError
from gfd.models import as_sample, get_model

from conftest import draw

THETA0 = {
    "location-normal": 0.3,
    "scale-exponential": 1.7,
    "gamma-shape": 2.0,
    "scaled-normal": 1.0,
    "bivnorm-rho": 0.5,
}


def _combos():
    out = []
    for cls, ids in _VALID.items():
        model_id = cls.model_id
        if model_id == "uniform-location":
            continue
        for base in ids:
            dge_ids = ["invcdf:one", "invcdf:inv"] if base == "invcdf" else [base]
            for d in dge_ids:
                q = 1.0 if model_id == "scaled-normal" else None
                try:
                    DgeSpec(get_model(model_id, q), d)
                except DomainError:
                    continue
                out.append((model_id, q, d))
    return out


COMBOS = _combos()


def test_aliases():
    assert resolve_dge_id("FS") == "simple"
    assert resolve_dge_id("F1") == "matched"
    assert resolve_dge_id("BJ") == "jeffreys"
    assert resolve_dge_id("suffstat") == "suffstat"


def test_invalid_dges_rejected():
    with pytest.raises(DomainError):
        DgeSpec(get_model("location-normal"), "matched")
    with pytest.raises(DomainError):
        DgeSpec(get_model("location-normal"), "invcdf:inv")
    with pytest.raises(DomainError):
        DgeSpec(get_model("gamma-shape"), "invcdf:nosuch")
    with pytest.raises(DomainError):
        DgeSpec(get_model("scale-exponential"), "simple", scale=-1.0)


# -- per-sample Jacobians ------------------------------------------------------


def test_jacobian_examples():
    sn = get_model("scaled-normal", 1.0)
    assert jacobian(DgeSpec(sn, "simple"), [2.0], 2.0) == pytest.approx(1.0)
    for sample in ([1.0], [0.2, 7.0, 3.3]):
        assert jacobian(DgeSpec(get_model("scale-exponential"), "suffstat"), sample, 2.0) == pytest.approx(0.5)
    assert jacobian(DgeSpec(get_model("bivnorm-rho"), "suffstat"), [[math.sqrt(2.0), 0.0]], 0.0) == pytest.approx(2.0)


def test_scale_exponential_simple_is_sum_over_observations():
    d = DgeSpec(get_model("scale-exponential"), "simple")
    x = [0.5, 1.5, 4.0]
    assert jacobian(d, x, 2.0) == pytest.approx(sum(x) / 2.0)


def test_degenerate_matched_scaled_normal():
    d = DgeSpec(get_model("scaled-normal", 1.0), "matched")
    with pytest.raises(DegenerateSampleError):
        jacobian(d, [-1.0, -2.0], 1.0)


def test_jacobian_deriv_examples():
    loc = DgeSpec(get_model("location-normal"), "simple")
    assert jacobian_deriv(loc, [0.1, 0.5], 1.3, 1) == 0.0
    se = DgeSpec(get_model("scale-exponential"), "suffstat")
    assert jacobian_deriv(se, [1.0, 2.0], 2.0, 1) == pytest.approx(-0.25)


def test_bivnorm_matched_derivative_vs_fd():
    m, s = draw("bivnorm-rho", 0.5, 30, 17)
    d = DgeSpec(m, "matched")
    t, h = 0.4, 1e-5
    for order in (1, 2):
        lower = (lambda r: jacobian(d, s, r)) if order == 1 else (lambda r: jacobian_deriv(d, s, r, 1))
        fd = (lower(t + h) - lower(t - h)) / (2 * h)
        assert fd == pytest.approx(jacobian_deriv(d, s, t, order), rel=1e-6)


@pytest.mark.parametrize("dge_id", ["simple", "invcdf:inv"])
def test_gamma_jacobian_derivs_vs_fd(dge_id):
    m, s = draw("gamma-shape", 2.0, 10, 3)
    d = DgeSpec(m, dge_id)
    t, h = 2.2, 1e-3
    for order in (1, 2):
        f = (lambda r: jacobian(d, s, r)) if order == 1 else (lambda r: jacobian_deriv(d, s, r, 1))
        fd = (8 * (f(t + h) - f(t - h)) - (f(t + 2 * h) - f(t - 2 * h))) / (12 * h)
        assert jacobian_deriv(d, s, t, order) == pytest.approx(fd, rel=1e-6)


def test_kink_detection():
    sn1 = DgeSpec(get_model("scaled-normal", 1.0), "simple")
    sn2 = DgeSpec(get_model("scaled-normal", 2.0), "simple")
    assert kink_points(sn2, [0.5, 2.0, 3.0]).points == ()
    assert kink_points(sn1, [3.0], (0.0, 10.0)).points == ()
    bv = DgeSpec(get_model("bivnorm-rho"), "simple")
    assert kink_points(bv, [[1.0, 0.5]], (-1.0, 1.0)).points == (0.5,)


def test_derivative_at_kink_raises():
    bv = DgeSpec(get_model("bivnorm-rho"), "simple")
    with pytest.raises(KinkError) as info:
        jacobian_deriv(bv, [[1.0, 0.5], [0.3, -0.2]], 0.5, 1)
    assert info.value.breakpoint == pytest.approx(0.5)


def test_piecewise_smoothness_between_kinks():
    m, s = draw("bivnorm-rho", 0.3, 6, 5)
    d = DgeSpec(m, "simple")
    k = (-1.0,) + kink_points(d, s).points + (1.0,)
    widths = np.diff(k)
    i = int(np.argmax(widths))
    a, b = k[i] + 0.1 * widths[i], k[i + 1] - 0.1 * widths[i]
    h = 1e-4 * (b - a)
    for t in np.linspace(a, b, 50):
        fd = (jacobian(d, s, t + h) - 2 * jacobian(d, s, t) + jacobian(d, s, t - h)) / h**2
        an = jacobian_deriv(d, s, t, 2)
        assert abs(fd - an) <= 1e-4 * max(1.0, abs(an))


@pytest.mark.parametrize("model_id,q,dge_id", COMBOS)
@given(seed=st.integers(0, 10**6), u=st.floats(0.05, 0.95))
def test_jacobian_positive(model_id, q, dge_id, seed, u):
    model, sample = draw(model_id, THETA0[model_id], 8, seed, q=q)
    d = DgeSpec(model, dge_id)
    if model_id == "bivnorm-rho":
        thetas = np.linspace(-0.95, 0.95, 25) * u
    elif model_id == "location-normal":
        thetas = np.linspace(-2.0, 2.0, 25) * u
    else:
        thetas = np.linspace(0.3, 4.0, 25) * (0.5 + u)
    try:
        vals = jacobian_values(d, sample, thetas)
    except DegenerateSampleError:
        return
    assert np.all(vals > 0)


def test_weighted_invcdf_examples():
    g = get_model("gamma-shape")
    x = [0.4, 1.2, 5.0]
    for t in (0.5, 2.0, 7.0):
        assert weighted_invcdf_jacobian(g, "inv", x, t) > 0
    loc = get_model("location-normal")
    assert weighted_invcdf_jacobian(loc, "one", [0.1, -2.0, 3.0, 0.7], 0.4) == pytest.approx(4.0, rel=1e-12)
    one = weighted_invcdf_jacobian(g, lambda v: np.ones_like(v), x, 2.0)
    two = weighted_invcdf_jacobian(g, lambda v: 2.0 * np.ones_like(v), x, 2.0)
    assert two == 2.0 * one


def test_weighted_invcdf_underflow():
    with pytest.raises(UnderflowError):
        weighted_invcdf_jacobian(get_model("location-normal"), "one", [60.0], 0.0)


# -- limit Jacobians --------------------------------------------------------------


def test_limit_examples():
    bv = DgeSpec(get_model("bivnorm-rho"), "suffstat")
    for r0 in (-0.75, 0.0, 0.5, 0.9):
        assert limit_jacobian(bv, r0, r0) == pytest.approx(2.0, abs=1e-14)
    assert limit_jacobian(bv, 0.5, 0.5, 1) / limit_jacobian(bv, 0.5, 0.5) == pytest.approx(2.0 / 3.0, rel=1e-12)
    loc = DgeSpec(get_model("location-normal"), "simple")
    assert limit_jacobian(loc, 0.0, 3.0) == 1.0
    assert limit_jacobian(loc, 0.0, 3.0, 1) == 0.0


@pytest.mark.parametrize("model_id,q,dge_id", COMBOS)
def test_limit_derivatives_match_fd(model_id, q, dge_id):
    d = DgeSpec(get_model(model_id, q), dge_id)
    t0 = THETA0[model_id]
    for t in (t0, t0 + 0.1):
        h = 1e-4 * max(1.0, abs(t))
        for order in (1, 2):
            f = lambda s: limit_jacobian(d, t0, s, order - 1)
            fd = (8 * (f(t + h) - f(t - h)) - (f(t + 2 * h) - f(t - 2 * h))) / (12 * h)
            an = limit_jacobian(d, t0, t, order)
            assert abs(fd - an) <= 1e-7 * max(1.0, abs(an))


@pytest.mark.parametrize("model_id,q,dge_id", [c for c in COMBOS if c[2] != "jeffreys"])
def test_jacobian_converges_to_limit(model_id, q, dge_id):
    model = get_model(model_id, q)
    d = DgeSpec(model, dge_id)
    t0 = THETA0[model_id]
    grid = t0 + np.array([-0.2, -0.1, 0.0, 0.1, 0.2]) * (1.0 if model_id == "bivnorm-rho" else max(1.0, t0))
    limit = np.array([limit_jacobian(d, t0, t) for t in grid])
    errs = []
    for n in (10**2, 10**3, 10**4):
        scale = n if d.is_sum else 1.0
        # sup over the grid, averaged over seeds so one unlucky draw cannot reorder the sizes
        # relative error: Jacobians are only defined up to a constant factor
        sup = [np.max(np.abs(jacobian(d, draw(model_id, t0, n, seed, q=q)[1], grid) / scale / limit - 1.0)) for seed in range(8)]
        errs.append(float(np.mean(sup)))
    if errs[0] > 1e-12:  # DGEs whose J_n is deterministic match their limit exactly
        assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.05


def test_jeffreys_limit_is_sqrt_fisher():
    for model_id, t in (("location-normal", 0.0), ("scale-exponential", 2.0), ("bivnorm-rho", 0.0)):
        d = DgeSpec(get_model(model_id), "jeffreys")
        expect = {"location-normal": 1.0, "scale-exponential": 0.5, "bivnorm-rho": 1.0}[model_id]
        assert limit_jacobian(d, t, t) == pytest.approx(expect)


def test_scaled_dge_scales_everything():
    m, s = draw("bivnorm-rho", 0.5, 20, 1)
    d = DgeSpec(m, "simple")
    d3 = d.scaled(3.0)
    assert jacobian(d3, s, 0.2) == pytest.approx(3.0 * jacobian(d, s, 0.2), rel=1e-15)
    assert limit_jacobian(d3, 0.5, 0.2, 1) == pytest.approx(3.0 * limit_jacobian(d, 0.5, 0.2, 1), rel=1e-15)
