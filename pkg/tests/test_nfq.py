from fractions import Fraction

import mpmath
import pytest
import sympy
from hypothesis import given, strategies as st

from atc.nfq import (
    CoefElem, F0Elem, FElem, FUND_UNIT, IdealF0, count_ideals_zeta, enumerate_ideals,
    factor_rational_prime, format_f0, ideal, nebentypus_psi, parse_biquad, parse_f0,
    psi_via_kronecker, totally_positive_generator,
)

pytestmark = pytest.mark.property

small = st.integers(-60, 60)
rat = st.fractions(min_value=-50, max_value=50, max_denominator=12)
f0 = st.builds(F0Elem, rat, rat)
f0_int_nz = st.builds(F0Elem, small, small).filter(lambda x: not x.is_zero())
biq = st.builds(lambda *c: CoefElem(*c), rat, rat, rat, rat)


@given(f0, f0, f0)
def test_f0_ring_axioms(a, b, c):
    assert (a + b) * c == a * c + b * c
    assert (a * b) * c == a * (b * c)
    assert a * b == b * a


@given(f0, f0)
def test_f0_norm_multiplicative(a, b):
    assert (a * b).norm() == a.norm() * b.norm()
    assert (a * b).conjugate() == a.conjugate() * b.conjugate()


@given(f0.filter(lambda x: not x.is_zero()))
def test_f0_inverse(a):
    assert a * a.inverse() == F0Elem(1)


@given(f0)
def test_f0_string_round_trip(a):
    assert parse_f0(format_f0(a)) == a


@given(f0.filter(lambda x: not x.is_zero()))
def test_f0_signs_match_embeddings(a):
    for v in ("v1", "v2"):
        with mpmath.workprec(200):
            assert a.sign(v) == mpmath.sign(a.embed(v, 200))


@given(biq, biq, biq)
def test_coef_field_axioms(a, b, c):
    assert (a + b) * c == a * c + b * c
    assert (a * b) * c == a * (b * c)


@given(biq.filter(lambda x: not x.is_zero()))
def test_coef_inverse_and_conjugations(a):
    assert a * a.inverse() == CoefElem(1)
    assert a.conj().conj() == a
    assert a.sigma_tau().sigma_tau() == a


@given(st.builds(lambda *c: FElem(*c), rat, rat, rat, rat), st.builds(lambda *c: FElem(*c), rat, rat, rat, rat))
def test_felem_tau_is_automorphism(a, b):
    assert (a * b).tau() == a.tau() * b.tau()
    assert (a + b).tau() == a.tau() + b.tau()


def test_parse_biquad():
    x = parse_biquad(FElem, "sqrt2+sqrt5+sqrt10")
    assert x * x == parse_biquad(FElem, "17+2*sqrt10+4*sqrt5+10*sqrt2")


@given(f0_int_nz, st.integers(-6, 6))
def test_ideal_unit_invariance(g, k):
    assert ideal(g) == ideal(g * FUND_UNIT ** k)
    assert ideal(g).norm == abs(int(g.norm()))


@given(f0_int_nz)
def test_tp_generator_deterministic(g):
    I = ideal(g)
    t = totally_positive_generator(I)
    assert t.is_totally_positive()
    assert IdealF0(t) == I
    assert totally_positive_generator(ideal(g * FUND_UNIT ** 2)) == t


@given(st.sampled_from(list(sympy.primerange(3, 3000))))
def test_prime_splitting_law(p):
    rec = factor_rational_prime(p)
    expected = "split" if p % 8 in (1, 7) else "inert"
    assert rec.kind == expected
    prod = 1
    for P in rec.ideals:
        prod *= P.norm
    assert prod == p * p


def test_prime_two_ramifies():
    rec = factor_rational_prime(2)
    assert rec.kind == "ramified" and rec.ideals[0].norm == 2


@pytest.mark.parametrize("bound", [10, 100, 1000, 10000])
def test_ideal_count_against_zeta_count(bound):
    assert len(enumerate_ideals(bound)) == count_ideals_zeta(bound)


@given(st.sampled_from([P for p in sympy.primerange(3, 2000) if p != 5 for P in factor_rational_prime(p).ideals]))
def test_psi_root_test_matches_kronecker(P):
    assert nebentypus_psi(P) == psi_via_kronecker(P)


def test_psi_at_two_and_five():
    P2 = factor_rational_prime(2).ideals[0]
    # x^2 - x - 1 has no root in F2, so the prime above 2 is inert in F
    assert nebentypus_psi(P2) == -1
    assert nebentypus_psi(ideal(F0Elem(5))) == 0
