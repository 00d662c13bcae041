import bisect
import functools
import json
from fractions import Fraction

import mpmath
import pytest
import sympy
from hypothesis import assume, given, strategies as st

from atc.atrpoint import DATA_DIR
from atc.eigendata import (
    EigenDataError, base_change_prime, import_eigendata, lmfdb_to_fixture, load_fixture, pseudo_eigenvalue,
)
from atc.nfq import CoefElem, IdealF0, factor_rational_prime, nebentypus_psi

from conftest import eigen_table

FIXTURE = DATA_DIR / "eigen_40_k10.json"
BOUND = 10_000


def to_payload(fx: dict, nprimes: int) -> dict:
    """LMFDB-style record in the power basis of y^4 + 2y^2 + 4 (sqrt2 = y^3/2, sqrt-3 = y^2 + 1)."""
    aps = []
    for p in list(sympy.primerange(2, sympy.prime(nprimes) + 1)):
        c0, c1, c2, c3 = (Fraction(x) for x in fx["coeffs"][str(p)])
        aps.append([str(c0 + c2), str(-2 * c3), str(c2), str((c1 - c3) / 2)])
    return {
        "label": "40.2.d.a",
        "level": 40,
        "field_poly": [4, 0, 2, 0, 1],
        "hecke_ring_numerators": [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]],
        "hecke_ring_denominators": [1, 1, 1, 1],
        "ap": aps,
    }


@pytest.fixture(scope="module")
def table():
    return eigen_table(BOUND)


@pytest.fixture(scope="module")
def raw():
    return json.loads(FIXTURE.read_text())


@functools.lru_cache(maxsize=None)
def classical():
    return load_fixture(FIXTURE)


_CACHE: dict = {}


def _entries(table):
    key = ("entries", id(table))
    if key not in _CACHE:
        _CACHE[key] = sorted(table.factorizations.items(), key=lambda kv: kv[0])
    return _CACHE[key]


def _up_to(items, n):
    """Prefix of the norm-sorted entries with norm <= n."""
    return items[:bisect.bisect_right([I.norm for I, _ in items], n)]


# --- Hecke relations over the whole table ---------------------------------

@pytest.mark.property
def test_hecke_multiplicativity_exhaustive(table):
    """a_m = prod a_{P^e} for every ideal of norm <= 10^4."""
    for I, fac in table.factorizations.items():
        v = CoefElem(1)
        for P, e in fac:
            v = v * table.prime_values[P][e]
        assert table[I] == v


@pytest.mark.property
def test_hecke_prime_power_recursion_exhaustive(table):
    for P, vals in table.prime_values.items():
        psi = nebentypus_psi(P)
        for k in range(2, len(vals)):
            if P.norm ** k > BOUND:
                break
            assert vals[k] == vals[1] * vals[k - 1] - CoefElem(psi * P.norm) * vals[k - 2]


@pytest.mark.property
@given(st.data())
def test_hecke_coprime_products(table, data):
    items = _entries(table)
    (I, fi) = data.draw(st.sampled_from(items))
    (J, fj) = data.draw(st.sampled_from(_up_to(items, BOUND // I.norm)))
    assume(not ({P for P, _ in fi} & {P for P, _ in fj}))
    assert table[I * J] == table[I] * table[J]


@pytest.mark.property
@given(st.data())
def test_hecke_prime_relation(table, data):
    """a_P a_m = a_{Pm} + psi(P) N(P) a_{m/P} (the last term only when P | m)."""
    items = _entries(table)
    P = data.draw(st.sampled_from(_good_primes(table) + _bad_primes(table)))
    I, fac = data.draw(st.sampled_from(_up_to(items, BOUND // P.norm)))
    lhs = table[P] * table[I]
    rhs = table[P * I]
    e = dict(fac).get(P, 0)
    if e:
        J = IdealF0(I.gen / P.gen)
        rhs = rhs + CoefElem(nebentypus_psi(P) * P.norm) * table[J]
    assert lhs == rhs


# --- twist identity and Ramanujan ------------------------------------------

def _good_primes(table):
    key = ("good", id(table))
    if key not in _CACHE:
        _CACHE[key] = [P for P in sorted(table.prime_values) if P.norm % 5 and P.norm % 2]
    return _CACHE[key]


def _bad_primes(table):
    return [P for P in sorted(table.prime_values) if not (P.norm % 5 and P.norm % 2)]


@pytest.mark.property
def test_psi_twist_identity_on_good_primes(table):
    for P in _good_primes(table):
        a = table.prime_values[P][1]
        assert a == a.conj() * CoefElem(nebentypus_psi(P)), P


@pytest.mark.property
@given(st.data())
def test_ramanujan_all_embeddings(table, data):
    P = data.draw(st.sampled_from(_good_primes(table)))
    a = table.prime_values[P][1]
    with mpmath.workprec(80):
        for s1 in (1, -1):
            for s2 in (1, -1):
                assert abs(a.embed(s1, s2, 80)) <= 2 * mpmath.sqrt(P.norm) + mpmath.mpf(10) ** -15


@pytest.mark.property
@given(st.sampled_from(list(sympy.primerange(3, 3000))))
def test_classical_inner_twist(p):
    data = classical()
    if p == 5:
        return
    c = data.c(p)
    chi = int(sympy.jacobi_symbol(2, p))
    assert c.sigma_tau() == c * CoefElem(chi)


def test_split_prime_values_are_classical(raw):
    data = classical()
    for p in sympy.primerange(3, 500):
        rec = factor_rational_prime(p)
        if rec.kind == "split":
            for P in rec.ideals:
                assert base_change_prime(P, data) == data.c(p)


def test_pseudo_eigenvalue_pinned(table):
    assert pseudo_eigenvalue(table) == CoefElem(Fraction(-1, 5), 0, 0, Fraction(2, 5))


# --- validation and import ----------------------------------------------------

def test_corrupted_fixture_rejected(raw):
    bad = json.loads(json.dumps(raw))
    c = bad["coeffs"]["7"]
    bad["coeffs"]["7"] = [c[0], str(Fraction(c[1]) + 1), c[2], c[3]]
    with pytest.raises(EigenDataError, match="inner-twist|Ramanujan"):
        import_eigendata(json.dumps(bad))


def test_wrong_conjugate_rejected(raw):
    bad = json.loads(json.dumps(raw))
    # complex conjugation of the whole form: c_5^2 becomes -1 - 2 sqrt-6
    for p, c in bad["coeffs"].items():
        bad["coeffs"][p] = [c[0], c[1], str(-Fraction(c[2])), str(-Fraction(c[3]))]
    with pytest.raises(EigenDataError, match="conjugate"):
        import_eigendata(json.dumps(bad))


def test_parse_errors():
    with pytest.raises(EigenDataError, match="parse"):
        import_eigendata(b"{not json")
    with pytest.raises(EigenDataError):
        import_eigendata(json.dumps({"level": 40, "coeffs": {"2": ["x", "0", "0", "0"]}}))


def test_insufficient_coverage_reported(raw):
    small = json.loads(json.dumps(raw))
    small["coeffs"] = {p: c for p, c in raw["coeffs"].items() if int(p) < 1000}
    data = import_eigendata(json.dumps(small))
    from atc.eigendata import extend_table
    with pytest.raises(EigenDataError, match="insufficient"):
        extend_table(data, 5000)


def test_lmfdb_payload_round_trip(raw):
    n = 300
    fx = lmfdb_to_fixture(to_payload(raw, n))
    primes = [str(p) for p in sympy.primerange(2, sympy.prime(n) + 1)]
    assert fx["coeffs"] == {p: raw["coeffs"][p] for p in primes}
    assert fx["basis"] == raw["basis"]


def test_lmfdb_galois_conjugate_payload_is_reidentified(raw):
    """A payload written with another identification of sqrt2, sqrt-3 maps back to the pinned conjugate."""
    pay = to_payload(raw, 120)
    # y -> -y is the automorphism sqrt2 -> -sqrt2 fixing sqrt-3
    pay["ap"] = [[a, str(-Fraction(b)), c, str(-Fraction(d))] for a, b, c, d in pay["ap"]]
    fx = lmfdb_to_fixture(pay)
    assert fx["coeffs"] == {p: raw["coeffs"][p] for p in fx["coeffs"]}


def test_lmfdb_inconsistent_payload_rejected(raw):
    pay = to_payload(raw, 120)
    pay["ap"][3] = [str(Fraction(x) + 1) for x in pay["ap"][3]]
    with pytest.raises(EigenDataError):
        lmfdb_to_fixture(pay)


def test_lmfdb_basis_mismatch(raw):
    pay = to_payload(raw, 50)
    pay["field_poly"] = [1, 0, 1]
    with pytest.raises(EigenDataError, match="basis mismatch"):
        lmfdb_to_fixture(pay)
