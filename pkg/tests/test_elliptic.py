import functools
import math

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from atc import atrpoint, elliptic
from atc.elliptic import EmbeddedModel, period_lattice

PREC = 128

MODELS = {
    "lemniscatic": (0, 0, 0, -1, 0),          # y^2 = x^3 - x, two real components
    "11a3": (0, -1, 1, 0, 0),                 # y^2 + y = x^3 - x^2, connected
    "37a": (0, 0, 1, -1, 0),                  # y^2 + y = x^3 - x, two components
}


@functools.lru_cache(maxsize=None)
def model(name):
    E = EmbeddedModel.from_numbers(MODELS[name], PREC)
    return E, period_lattice(E)


@functools.lru_cache(maxsize=None)
def example():
    cd = atrpoint.curve_data(atrpoint.example_instance(), PREC)
    return cd.model_v1, cd.lattice_v1


def _curve(name):
    return example() if name == "example" else model(name)


def _cubic(E):
    b2, b4, b6 = E.b
    return lambda x: 4 * x ** 3 + b2 * x ** 2 + 2 * b4 * x + b6


# --- periods ----------------------------------------------------------------

def test_lemniscatic_real_period():
    E, L = model("lemniscatic")
    with mpmath.workprec(PREC):
        closed = mpmath.gamma(mpmath.mpf(1) / 4) ** 2 / (2 * mpmath.sqrt(2 * mpmath.pi))
        assert abs(L.omega_plus - closed) < mpmath.mpf(2) ** -110
        # square lattice: the second period is i times the first
        assert abs(L.omega_second - 1j * closed) < mpmath.mpf(2) ** -110
        assert not L.connected


@pytest.mark.parametrize("name", ["lemniscatic", "11a3", "37a"])
def test_real_period_against_quadrature(name):
    """Real period of dx/(2y + a1 x + a3) as an integral over the unbounded real branch."""
    E, L = model(name)
    f = _cubic(E)
    with mpmath.workprec(100):
        e = max(mpmath.re(r) for r in mpmath.polyroots([4, *E.b[:1], 2 * E.b[1], E.b[2]])
                if abs(mpmath.im(r)) < 1e-20)
        # x = e + u^2; f(e + v) / v = 4 v^2 + (12 e + b2) v + f'(e) since f(e) = 0
        b2, b4, _ = E.b
        c2, c1 = 12 * e + b2, 12 * e * e + 2 * b2 * e + 2 * b4
        q = 2 * mpmath.quad(lambda u: 2 / mpmath.sqrt(4 * u ** 4 + c2 * u * u + c1), [0, 1, mpmath.inf])
        assert abs(q - L.omega_plus) < 1e-25
        assert L.connected == (name == "11a3")


def test_imaginary_period_against_quadrature():
    E, L = model("37a")
    f = _cubic(E)
    with mpmath.workprec(100):
        r = sorted(mpmath.re(x) for x in mpmath.polyroots([4, E.b[0], 2 * E.b[1], E.b[2]]))
        assert f((r[1] + r[2]) / 2) < 0
        # x = r1 + (r2 - r1) sin^2 t: dx / sqrt(-f) collapses to dt / sqrt(x - r0)
        w = r[2] - r[1]
        q = 2 * mpmath.quad(lambda t: 1 / mpmath.sqrt(r[1] - r[0] + w * mpmath.sin(t) ** 2), [0, mpmath.pi / 2])
        assert abs(q - mpmath.im(L.omega_second)) < 1e-25


# --- eta and the elliptic log -------------------------------------------------

coords = st.floats(0.02, 0.98)


@pytest.mark.property
@settings(max_examples=1000)
@given(st.sampled_from(["lemniscatic", "11a3", "37a", "example"]), coords, coords)
def test_eta_log_round_trip(name, s, t):
    E, L = _curve(name)
    with mpmath.workprec(PREC):
        z = s * L.omega_plus + t * L.omega_second
        P = elliptic.weierstrass_map(z, L, E)
        assert E.defect(P) < 1e-30
        w = elliptic.elliptic_log(P, L, E)
        assert L.distance(w - z) < 1e-20


@pytest.mark.parametrize("name", ["lemniscatic", "11a3", "37a", "example"])
def test_half_real_period_is_two_torsion(name):
    E, L = _curve(name)
    a1, _, a3, _, _ = E.a
    with mpmath.workprec(PREC):
        x, y = elliptic.weierstrass_map(L.omega_plus / 2, L, E)
        assert abs(2 * y + a1 * x + a3) < 1e-30
        assert abs(mpmath.im(x)) < 1e-30


def test_lattice_points_map_to_identity():
    E, L = model("37a")
    with mpmath.workprec(PREC):
        assert elliptic.weierstrass_map(2 * L.omega_plus - L.omega_second, L, E) is None
    assert elliptic.elliptic_log(None, L, E) == 0


def test_log_rejects_points_off_the_curve():
    E, L = model("37a")
    with pytest.raises(elliptic.EllipticError):
        elliptic.elliptic_log((mpmath.mpf(1), mpmath.mpf(1)), L, E)


def test_known_rational_point_37a():
    """(0, 0) generates E(Q) for 37a; its log is real (on the identity component) or on the egg."""
    E, L = model("37a")
    with mpmath.workprec(PREC):
        z = elliptic.elliptic_log((mpmath.mpf(0), mpmath.mpf(0)), L, E)
        P2 = elliptic.weierstrass_map(2 * z, L, E)
        # 2 (0,0) = (1, 0) on 37a
        assert abs(P2[0] - 1) < 1e-30 and abs(P2[1]) < 1e-30


def test_scaled_lattice():
    _, L = model("11a3")
    with mpmath.workprec(PREC):
        S = L.scaled(mpmath.mpf(3))
        assert abs(S.omega_plus - 3 * L.omega_plus) < 1e-35
        assert abs(S.tau - L.tau) < 1e-35


# --- relation recognition ------------------------------------------------------

@pytest.mark.property
@settings(max_examples=1000)
@given(st.integers(1, 16), st.integers(-200, 200), st.integers(-5, 5), st.integers(-5, 5),
       coords, coords, st.sampled_from(["11a3", "37a", "example"]))
def test_synthetic_relation_recovery(m, n, a, b, s, t, name):
    if math.gcd(math.gcd(m, n), math.gcd(a, b)) != 1:
        return
    _, L = _curve(name)
    digits = 30
    with mpmath.workprec(PREC):
        # irrational offsets keep J_nt away from small torsion (hypothesis likes s = 1/2)
        Jnt = (s + mpmath.pi / 1000) * L.omega_plus + (t + mpmath.e / 1000) * L.omega_second
        J = (n * Jnt - a * L.omega_plus - b * L.omega_second) / m
        tol = 10.0 ** -(digits - 8)
        rel = elliptic.find_relation([J, Jnt], L, coeff_bound=16, torsion_order=14, tol=tol, lll=False)
    assert rel.found
    assert rel.coefficients[:2] == (m, n)
    assert rel.residual < tol


def test_relation_lll_cross_check():
    _, L = example()
    with mpmath.workprec(PREC):
        Jnt = mpmath.mpf("0.31") * L.omega_plus + mpmath.mpf("0.77") * L.omega_second
        J = (14 * Jnt + L.omega_plus) / 7
        rel = elliptic.find_relation([J, Jnt], L, 16, 14, tol=1e-25)
    assert rel.found and rel.lll_agrees


def test_no_relation_for_generic_values():
    _, L = model("37a")
    with mpmath.workprec(PREC):
        J = mpmath.mpc(mpmath.pi / 7, mpmath.e / 3)
        Jnt = mpmath.mpc(mpmath.sqrt(2) / 5, mpmath.euler)
        rel = elliptic.find_relation([J, Jnt], L, 16, 14, tol=1e-25, lll=False)
    assert not rel.found
