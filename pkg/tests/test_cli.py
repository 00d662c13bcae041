import json
import shutil
import subprocess
import sys
from fractions import Fraction

import httpx
import pytest

from atc import cli, reduction
from atc.atrpoint import DATA_DIR

from test_eigendata import to_payload

EXAMPLE = DATA_DIR / "instance_example.json"


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def raw_fixture():
    return json.loads((DATA_DIR / "eigen_40_k10.json").read_text())


def _instance_copy(tmp_path, fixture=None, **changes):
    o = json.loads(EXAMPLE.read_text())
    if fixture is not None:
        (tmp_path / "eigen.json").write_text(json.dumps(fixture))
        o["eigendata"] = "eigen.json"
    o.update(changes)
    p = tmp_path / "instance.json"
    p.write_text(json.dumps(o))
    return p


# --- compute --------------------------------------------------------------------

def test_compute_smoke_reports_relation(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, err = run(["compute", "--instance", EXAMPLE, "--norm-bound", 20000, "--prec", 20, "--out", out], capsys)
    rep = json.loads(out.read_text())
    assert code == 0, err
    assert rep["status"] == "ok"
    assert rep["relation"][:3] == [7, 14, 1]
    assert rep["relation_residual"] < rep["recognition_tolerance"]
    assert rep["expected_false_hits"] < cli.AMBIGUITY_LIMIT


def test_compute_insufficient_precision_exit_4(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run(["compute", "--instance", EXAMPLE, "--norm-bound", 5000, "--prec", 15, "--out", out], capsys)
    rep = json.loads(out.read_text())
    assert code == 4
    assert rep["status"] == "precision-budget"
    assert rep["expected_false_hits"] > cli.AMBIGUITY_LIMIT


def test_compute_is_deterministic(tmp_path, capsys):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        code, _, _ = run(["compute", "--instance", EXAMPLE, "--norm-bound", 20000, "--prec", 20, "--threads", 1 + k,
                          "--out", out], capsys)
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_corrupted_eigendata_exit_3(tmp_path, raw_fixture, capsys):
    bad = json.loads(json.dumps(raw_fixture))
    c = bad["coeffs"]["7"]
    bad["coeffs"]["7"] = [c[0], str(Fraction(c[1]) + 1), c[2], c[3]]
    inst = _instance_copy(tmp_path, bad)
    code, _, err = run(["compute", "--instance", inst, "--norm-bound", 2000], capsys)
    assert code == 3
    assert "inner-twist" in err or "Ramanujan" in err


def test_bad_script_exit_2(tmp_path, capsys):
    o = reduction.builtin_example_script().to_json()
    o["steps"][1]["matrix"] = reduction.mat_to_json(reduction.W5)
    scr = tmp_path / "script.json"
    scr.write_text(json.dumps(o))
    code, _, err = run(["compute", "--instance", EXAMPLE, "--norm-bound", 2000, "--script", scr], capsys)
    assert code == 2
    assert "not in Gamma" in err


def test_malformed_instance_exit_3(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{")
    code, _, _ = run(["compute", "--instance", p], capsys)
    assert code == 3
    code, _, _ = run(["compute", "--instance", tmp_path / "missing.json"], capsys)
    assert code == 3


def test_wrong_tower_exit_2(tmp_path, capsys):
    inst = _instance_copy(tmp_path, alpha="3+sqrt2+sqrt5+sqrt10")
    code, _, err = run(["verify-tower", "--instance", inst], capsys)
    assert code == 2, err


# --- verify-tower ---------------------------------------------------------------

def test_verify_tower(capsys):
    code, out, _ = run(["verify-tower", "--instance", EXAMPLE], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["closure_ratio"] == "1"
    assert rep["functional_equation_sign"] == -1
    assert all(rep["checks"].values())


def test_console_entry_point():
    exe = shutil.which("atc")
    cmd = [exe] if exe else [sys.executable, "-m", "atc.cli"]
    proc = subprocess.run(cmd + ["verify-tower", "--instance", str(EXAMPLE)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["checks"]


# --- fetch-eigendata --------------------------------------------------------------

def _mock_lmfdb(raw_fixture, calls):
    record = to_payload(raw_fixture, 150)

    def handler(request: httpx.Request):
        calls.append(request)
        if request.url.path.endswith("/mf_newforms/"):
            q = request.url.params
            assert q["level"] == "40" and q["char_conductor"] == "40" and q["char_order"] == "2"
            return httpx.Response(200, json={"data": [{"label": "40.2.d.a"}]})
        if request.url.path.endswith("/mf_hecke_nf/"):
            assert request.url.params["label"] == "40.2.d.a"
            rec = {k: v for k, v in record.items() if k not in ("level", "label")}
            return httpx.Response(200, json={"data": [rec]})
        return httpx.Response(404)

    return httpx.Client(transport=httpx.MockTransport(handler))


def test_fetch_and_cache(tmp_path, raw_fixture):
    calls = []
    out = tmp_path / "eigen.json"
    cache = tmp_path / "cache"
    cli.fetch_eigendata(40, "kronecker:10", out, cache, client=_mock_lmfdb(raw_fixture, calls))
    assert len(calls) == 2
    fx = json.loads(out.read_text())
    assert fx["coeffs"] == {p: raw_fixture["coeffs"][p] for p in fx["coeffs"]}
    # second run is served from the cache without touching the network
    out2 = tmp_path / "eigen2.json"
    cli.fetch_eigendata(40, "kronecker:10", out2, cache, offline=True)
    assert out2.read_bytes() == out.read_bytes()
    assert len(calls) == 2


def test_fetch_offline_without_cache_exit_3(tmp_path, capsys):
    code, _, err = run(["fetch-eigendata", "--level", 40, "--char", "kronecker:10", "--out", tmp_path / "e.json",
                        "--cache-dir", tmp_path / "c", "--offline"], capsys)
    assert code == 3 and "offline" in err


def test_fetch_network_error_is_data_error(tmp_path):
    def handler(request):
        raise httpx.ConnectError("unreachable", request=request)

    client = httpx.Client(transport=httpx.MockTransport(handler))
    with pytest.raises(OSError, match="network"):
        cli.fetch_eigendata(40, "kronecker:10", tmp_path / "e.json", tmp_path / "c", client=client)


def test_fetch_ambiguous_orbit(tmp_path):
    def handler(request):
        return httpx.Response(200, json={"data": [{"label": "a"}, {"label": "b"}]})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    from atc.eigendata import EigenDataError
    with pytest.raises(EigenDataError, match="one newform"):
        cli.fetch_eigendata(40, "kronecker:10", tmp_path / "e.json", tmp_path / "c", client=client)


def test_unsupported_character():
    with pytest.raises(ValueError):
        cli._char_params("dirichlet:40.3")
