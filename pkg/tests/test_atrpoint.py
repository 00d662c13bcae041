import copy
import json

import mpmath
import pytest
from hypothesis import assume, given, strategies as st

from atc import atrpoint, reduction
from atc.atrpoint import (
    DATA_DIR, EmbeddingData, Instance, InstanceError, QuadOverF0, TowerSpec, VerificationError,
    classify_over_f, classify_over_f0, classify_over_quadratic,
)
from atc.cli import tower_report
from atc.nfq import F0Elem, FElem, ideal, parse_biquad, parse_f0

from conftest import curve


@pytest.fixture(scope="module")
def raw():
    return json.loads((DATA_DIR / "instance_example.json").read_text())


# --- signatures ---------------------------------------------------------------

@pytest.mark.parametrize("gen,label", [("3", "TR"), ("-1", "CM"), ("sqrt2", "ATR"), ("1+sqrt2", "ATR"),
                                       ("-13-10*sqrt2", "ATR"), ("-1-sqrt2", "ATR")])
def test_quadratic_over_f0(gen, label):
    assert classify_over_f0(parse_f0(gen)).label == label


@pytest.mark.parametrize("gen", ["4", "3+2*sqrt2", "2"])
def test_squares_rejected(gen):
    # 2 = sqrt2^2 and 3 + 2 sqrt2 = (1 + sqrt2)^2
    with pytest.raises(InstanceError, match="square"):
        classify_over_f0(parse_f0(gen))


def test_square_in_f_rejected():
    with pytest.raises(InstanceError, match="square"):
        classify_over_f(parse_biquad(FElem, "5"))


def test_example_tower(instance):
    sig = instance.tower.signatures()
    assert sig["M/F"].label == "ATC" and sig["M/F"].real_places == ((1, 1),)
    assert sig["M'/F"].label == "ATC"
    assert sig["K/F0"].label == "ATR" and sig["K/F0"].complex_places == ("v1",)
    assert sig["L/K"].label == sig["L'/K"].label == "TI"
    assert instance.tower.closure_ratio() == F0Elem(1)
    assert instance.tower.norm_alpha() == instance.tower.K_disc


def test_tower_report_checks(instance):
    rep = tower_report(instance)
    assert all(rep["checks"].values()), rep["checks"]
    assert rep["functional_equation_sign"] == -1


def test_functional_equation_sign_parity():
    level = ideal(F0Elem(5))
    # 5 is inert in Q(sqrt2); -13 - 10 sqrt2 is a non-square mod 5
    assert atrpoint.functional_equation_sign(level, parse_f0("-13-10*sqrt2"), 1) == -1
    assert atrpoint.functional_equation_sign(level, parse_f0("-13-10*sqrt2"), 2) == 1


def test_closure_mismatch_detected(instance):
    t = instance.tower
    bad = TowerSpec(t.N0, t.alpha, (F0Elem(1), F0Elem(0), F0Elem(7)))
    with pytest.raises(VerificationError, match="square classes"):
        bad.closure_ratio()


coef = st.integers(-9, 9)


@pytest.mark.property
@given(coef, coef, coef, coef)
def test_degree_formula_over_f(a, b, c, d):
    g = FElem(a, b, c, d)
    assume(not g.is_zero())
    try:
        s = classify_over_f(g)
    except InstanceError:
        return
    assert s.r1 + 2 * s.r2 == 8
    assert len(s.real_places) + len(s.complex_places) == 4


@pytest.mark.property
@given(coef, coef, coef, coef)
def test_degree_formula_over_k(a, b, c, d):
    """[L:K] = 2 and [K:F0] = 2 so every classification accounts for 8 real dimensions."""
    K = QuadOverF0(parse_f0("-13-10*sqrt2"))
    x, y = F0Elem(a, b), F0Elem(c, d)
    assume(not y.is_zero())
    try:
        s = classify_over_quadratic(K, x, y)
    except InstanceError:
        return
    assert s.r1 + 2 * s.r2 == 8


# --- embedding ----------------------------------------------------------------

def test_embedding_checks(instance):
    instance.embedding.check()
    z1, bp = atrpoint.fixed_point(instance.embedding, 113)
    assert mpmath.im(z1) > 0
    assert bp.fixed_by(reduction.EX_GAMMA_PHI)


def test_embedding_rejects_non_root(instance):
    e = instance.embedding
    a, b, c, d = e.phi_omega
    bad = EmbeddingData((a + 1, b, c, d), e.K_poly, e.level)
    with pytest.raises(VerificationError, match="minimal polynomial"):
        bad.check()


def test_embedding_unit_override_and_search(instance):
    e, g = atrpoint.embedding_unit(instance.embedding, instance.e_K)
    assert tuple(g) == tuple(reduction.EX_GAMMA_PHI)
    assert atrpoint.k_norm(instance.embedding.K_poly, *e) == F0Elem(1)
    e2, g2 = atrpoint.embedding_unit(instance.embedding)
    assert reduction.projectively_equal(g2, g)
    assert atrpoint.start_matches_embedding(instance, g)


def test_embedding_unit_rejects_bad_override(instance):
    x, y = instance.e_K
    with pytest.raises(VerificationError, match="norm 1"):
        atrpoint.embedding_unit(instance.embedding, (x + 1, y))
    # the square of the generator has norm one but is not a generator
    _, t, n = instance.embedding.K_poly
    x2, y2 = x * x - n * y * y, 2 * x * y - t * y * y
    with pytest.raises(VerificationError, match="generator"):
        atrpoint.embedding_unit(instance.embedding, (x2, y2))


# --- curve and torsion point ------------------------------------------------------

def test_torsion_point_on_printed_model(instance):
    cd = curve(40)
    tp = instance.torsion
    pb = atrpoint.bits(40)
    with mpmath.workprec(pb):
        z = atrpoint.torsion_point_log(instance, cd, pb)
        assert mpmath.im(z) != 0
        # J_nt is not torsion: no small multiple is a lattice point
        assert all(cd.lattice_E.distance(k * z) > 1e-6 for k in range(1, 40))
    assert tp is not None and tp.x is not None


def test_curve_discriminant_nonzero(instance):
    assert not instance.curve.discriminant.is_zero()


def test_verify_script_matches_embedding(instance):
    _, bp = atrpoint.fixed_point(instance.embedding, 113)
    final = atrpoint.verify_script(instance, bp)
    assert len(final) == 2


# --- instance parsing ----------------------------------------------------------------

def test_missing_key(raw):
    o = copy.deepcopy(raw)
    del o["curve"]
    with pytest.raises(InstanceError, match="malformed"):
        Instance.from_json(o)


def test_non_monic_k_poly(raw):
    o = copy.deepcopy(raw)
    o["K_poly"] = ["2"] + o["K_poly"][1:]
    with pytest.raises(InstanceError, match="monic"):
        Instance.from_json(o)


def test_unreadable_instance(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{")
    with pytest.raises(InstanceError, match="cannot read"):
        Instance.load(p)
    with pytest.raises(InstanceError):
        Instance.load(tmp_path / "missing.json")
