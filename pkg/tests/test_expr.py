import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minsurf import expr as ex


def ev(text, z):
    return ex.evaluate(ex.parse(text), z)


@pytest.mark.parametrize(
    "text, z, expected",
    [
        ("z", 2 + 1j, 2 + 1j),
        ("1/z", 2, 0.5),
        ("exp(i*z)", 0, 1),
        ("z^2", 1 + 1j, 2j),
        ("(1/z - z)/2", 1, 0),
        ("exp(i*z)", math.pi, -1),
        ("2*z^-2", 2, 0.5),
        ("sin(z)^2 + cos(z)^2", 0.3 + 0.7j, 1),
        ("log(z)", 1j, 0.5j * math.pi),
        ("  3.5e-1 * ( z + 1 ) ", 1, 0.7),
    ],
)
def test_evaluate_examples(text, z, expected):
    assert abs(ev(text, z) - expected) < 1e-14


@pytest.mark.parametrize(
    "text, z, expected",
    [("z^3", 2, 12), ("exp(i*z)", 0, 1j), ("1/z", 1, -1), ("log(z)", 2, 0.5), ("sin(z)*cos(z)", 0, 1)],
)
def test_derivative_examples(text, z, expected):
    assert abs(ex.eval_derivative(ex.parse(text), z) - expected) < 1e-14


def test_scalar_returns_python_complex_and_arrays_broadcast():
    e = ex.parse("1")
    assert isinstance(ex.evaluate(e, 2.0), complex)
    out = ex.evaluate(e, np.zeros((3, 2)))
    assert out.shape == (3, 2) and np.all(out == 1)


def test_parse_errors_carry_offsets():
    with pytest.raises(ex.ParseError) as info:
        ex.parse("z + * 2")
    assert info.value.offset == 4
    with pytest.raises(ex.UnknownIdentifier):
        ex.parse("tan(z)")
    with pytest.raises(ex.UnknownIdentifier):
        ex.parse("w + 1")
    with pytest.raises(ex.ParseError):
        ex.parse("z^1.5")
    with pytest.raises(ex.ParseError):
        ex.parse("(z + 1")


def test_pole_hit():
    with pytest.raises(ex.PoleHit):
        ev("1/z", 0)
    with pytest.raises(ex.PoleHit):
        ev("z^-2", 0)
    with pytest.raises(ex.PoleHit):
        ev("log(z)", 0)
    vals = ex.evaluate(ex.parse("1/z"), np.array([0.0, 1.0]), strict=False)
    assert not np.isfinite(vals[0]) and vals[1] == 1


@pytest.mark.parametrize("text, order", [("z^3", 3), ("1/z", -1), ("z^2*exp(z)", 2), ("sin(z)", 1), ("1 - cos(z)", 2)])
def test_local_order_examples(text, order):
    assert ex.local_order(ex.parse(text), 0) == order


@pytest.mark.parametrize("k", [k for k in range(-5, 6) if k])
def test_local_order_monomials(k):
    assert ex.local_order(ex.parse(f"z^{k}"), ex.SpecialPoint(0j, "unknown")) == k


def test_local_order_slope_oracle():
    # least-squares slope of log|z^2 e^z| on radii 1e-2..1e-5 is 2 up to O(r)
    radii = np.logspace(-2, -5, 7)
    logf = [np.mean(np.log(np.abs((r * np.exp(1j * np.linspace(0, 6, 8))) ** 2 * np.exp(r)))) for r in radii]
    slope = np.polyfit(np.log(radii), logf, 1)[0]
    assert abs(slope - 2) < 1e-2
    assert ex.local_order(ex.parse("z^2*exp(z)"), 0) == round(slope)


def test_local_order_rejects_non_meromorphic():
    with pytest.raises(ex.NotMeromorphic):
        ex.local_order(ex.parse("exp(1/z)"), 0)


def test_special_point_kinds():
    with pytest.raises(ValueError):
        ex.SpecialPoint(0j, "saddle")


# --------------------------------------------------------------------------
# random expression trees


def random_tree(rng, depth):
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.6:
            return "z"
        return repr(round(float(rng.uniform(-2, 2)), 3))
    k = rng.integers(0, 8)
    a = random_tree(rng, depth - 1)
    if k < 4:
        b = random_tree(rng, depth - 1)
        return f"({a} {'+-*/'[k]} {b})"
    if k == 4:
        return f"({a})^{int(rng.integers(-3, 4))}"
    return f"{['exp', 'sin', 'cos'][k - 5]}({a})"


def test_derivative_matches_central_difference_on_random_trees():
    rng = np.random.default_rng(20240611)
    h = 1e-5
    checked = 0
    while checked < 1000:
        e = ex.parse(random_tree(rng, 5))
        z = complex(*rng.uniform(-1.2, 1.2, 2))
        try:
            f = ex.evaluate(e, z)
            d = ex.eval_derivative(e, z)
            fd = (ex.evaluate(e, z + h) - ex.evaluate(e, z - h)) / (2 * h)
            ring = ex.evaluate(e, z + 1e-2 * np.exp(2j * np.pi * np.arange(8) / 8))
        except ex.PoleHit:
            continue
        # away from special points: the function is tame on a small ring around z
        if not np.all(np.isfinite(ring)) or np.max(np.abs(ring)) > 1e3 or abs(f) > 1e3 or abs(d) > 1e4:
            continue
        assert abs(fd - d) <= 1e-6 * max(abs(d), 1.0), (format(e), z, d, fd)
        checked += 1


def test_format_parse_fixed_point_on_random_trees():
    rng = np.random.default_rng(7)
    zs = rng.uniform(-1, 1, 100) + 1j * rng.uniform(-1, 1, 100)
    for _ in range(200):
        e = ex.parse(random_tree(rng, 5))
        text = ex.format_expr(e)
        e2 = ex.parse(text)
        assert ex.format_expr(e2) == text
        a = ex.evaluate(e, zs, strict=False)
        b = ex.evaluate(e2, zs, strict=False)
        ok = np.isfinite(a)
        assert np.array_equal(ok, np.isfinite(b))
        assert np.allclose(a[ok], b[ok], rtol=1e-12, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
def test_algebraic_identities(a, b):
    env = {"a": a, "b": b}
    vars_ = ("a", "b")
    lhs = ex.evaluate(ex.parse("(a + b)^2", vars_), **env)
    rhs = ex.evaluate(ex.parse("a^2 + 2*a*b + b^2", vars_), **env)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))
    assert abs(ex.evaluate(ex.parse("exp(i*a)", vars_), **env) - cmath.exp(1j * a)) <= 1e-12 * max(1, abs(cmath.exp(1j * a)))
