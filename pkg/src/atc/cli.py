"""Command line driver.

    atc compute --instance FILE [--prec D] [--norm-bound B] [--threads T]
    atc verify-tower --instance FILE
    atc fetch-eigendata --level 40 --char kronecker:10 --out FILE

Exit codes: 0 ok, 2 verification failure, 3 data error, 4 precision budget.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Optional

import mpmath

from . import __version__, atrpoint, elliptic, hmfexp, reduction
from .eigendata import EigenDataError, extend_table, lmfdb_to_fixture, load_fixture
from .nfq import format_f0, ideal

log = logging.getLogger("atc")

EXIT_OK, EXIT_VERIFY, EXIT_DATA, EXIT_BUDGET = 0, 2, 3, 4

# expected false hits of the relation search above which recognition is refused
AMBIGUITY_LIMIT = 1e-3


class StageError(Exception):
    def __init__(self, stage: str, code: int, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage, self.code = stage, code


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(x, digits: int) -> str:
    return mpmath.nstr(x, max(1, digits), min_fixed=-math.inf, max_fixed=math.inf)


def _c(z, digits: int, err: Optional[float] = None) -> dict:
    """Complex number as strings; with `err`, each part keeps only the digits the bound supports."""
    z = mpmath.mpc(z)
    out = {}
    for k, x in (("re", z.real), ("im", z.imag)):
        d = digits
        if err is not None and err > 0 and x != 0:
            d = min(d, int(math.floor(math.log10(float(abs(x)) / err))))
        out[k] = _fmt(x, d)
    return out


def _stage(name: str, code: int, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except StageError:
        raise
    except (atrpoint.InstanceError, EigenDataError, OSError) as e:
        raise StageError(name, EXIT_DATA, str(e)) from e
    except (atrpoint.VerificationError, reduction.ReductionError, elliptic.EllipticError) as e:
        raise StageError(name, EXIT_VERIFY, str(e)) from e
    except hmfexp.EvaluationRangeError as e:
        raise StageError(name, EXIT_BUDGET, str(e)) from e


# ---------------------------------------------------------------------------
# compute
# ---------------------------------------------------------------------------

def recognition_tolerance(err_J: float, err_Jnt: float, coeff_bound: int, torsion_order: int) -> float:
    """Worst case of |m dJ - n dJ_nt| over the searched box."""
    nb = 2 * coeff_bound * max(1, torsion_order)
    return coeff_bound * err_J + nb * err_Jnt


def expected_false_hits(tol: float, L: elliptic.PeriodLattice, coeff_bound: int, torsion_order: int) -> float:
    nb = 2 * coeff_bound * max(1, torsion_order)
    covol = float(abs(mpmath.im(mpmath.conj(L.omega_plus) * L.omega_second)))
    return coeff_bound * (2 * nb + 1) * math.pi * tol * tol / covol


def run_compute(inst: atrpoint.Instance, norm_bound: Optional[int] = None, prec: Optional[int] = None,
                threads: int = 1, backend: Optional[str] = None, script_path: Optional[str] = None,
                instance_path: Optional[Path] = None) -> dict:
    """Full pipeline; returns the report dict with a `status` field."""
    with mpmath.workprec(atrpoint.bits(max(prec or inst.prec, 15))):
        return _run_compute(inst, norm_bound, prec, threads, backend, script_path, instance_path)


def _run_compute(inst: atrpoint.Instance, norm_bound: Optional[int] = None, prec: Optional[int] = None,
                threads: int = 1, backend: Optional[str] = None, script_path: Optional[str] = None,
                instance_path: Optional[Path] = None) -> dict:
    timings = {}
    t0 = time.time()
    B = norm_bound or inst.norm_bound
    D = prec or inst.prec
    if D < 15:
        raise StageError("config", EXIT_DATA, "precision must be at least 15 digits")
    pb = atrpoint.bits(D)
    if script_path:
        inst.script = _stage("script", EXIT_DATA, lambda: reduction.Script.from_json(
            json.loads(Path(script_path).read_text())))

    # ingest and base change
    data = _stage("ingest", EXIT_DATA, load_fixture, inst.eigendata_path)
    eigen = _stage("base-change", EXIT_DATA, extend_table, data, B)
    timings["ingest"] = time.time() - t0

    # tower and embedding
    sig = _stage("tower", EXIT_VERIFY, inst.tower.signatures)
    _require(sig["M/F"].label == "ATC", "tower", "M is not ATC over F")
    _require(sig["K/F0"].label == "ATR", "tower", "K is not ATR over F0")
    _require("v1" in sig["K/F0"].complex_places, "tower", "K is not complex at v1")
    _stage("embedding", EXIT_VERIFY, inst.embedding.check)
    z1, bp = _stage("embedding", EXIT_VERIFY, atrpoint.fixed_point, inst.embedding, pb)
    e_K, gamma = _stage("embedding", EXIT_VERIFY, atrpoint.embedding_unit, inst.embedding, inst.e_K)
    mem = reduction.check_gamma_membership(gamma)
    _require(bool(mem), "embedding", f"gamma_phi not in Gamma: {mem.reasons}")
    _require(atrpoint.start_matches_embedding(inst, gamma), "reduction",
             "script does not start from int^{z1} int_y^{gamma_phi y}")

    # reduction (symbolic)
    final = _stage("reduction", EXIT_VERIFY, atrpoint.verify_script, inst, bp)
    timings["verify"] = time.time() - t0

    # periods and integration
    cd = _stage("periods", EXIT_VERIFY, atrpoint.curve_data, inst, pb)
    jr = _stage("integrate", EXIT_BUDGET, atrpoint.compute_J, inst, B, D, threads, backend, eigen, cd)
    timings["integrate"] = jr.seconds
    Jnt = _stage("torsion-point", EXIT_VERIFY, atrpoint.torsion_point_log, inst, cd, pb)
    err_Jnt = float(abs(Jnt)) * 2.0 ** (-pb + 40)

    # precision budget
    tol = recognition_tolerance(jr.error_bound, err_Jnt, inst.coeff_bound, inst.torsion_order)
    tol = max(tol, 10.0 ** (-D + 8))
    hits = expected_false_hits(tol, cd.lattice_E, inst.coeff_bound, inst.torsion_order)
    report = {
        "instance": inst.name,
        "norm_bound": B,
        "precision_digits": D,
        "z1": _c(z1, 20),
        "gamma_phi": reduction.mat_to_json(gamma),
        "e_K": [format_f0(x) for x in e_K],
        "final_sum": reduction.format_sum(final),
        "J": _c(jr.J, D, jr.error_bound),
        "J_error_bound": float(jr.error_bound),
        "tail_bound": float(jr.integral.tail_bound),
        "dropped_bound": float(jr.integral.dropped_bound),
        "J_nt": _c(Jnt, D - 2, err_Jnt),
        "omega_plus_1": mpmath.nstr(cd.lattice_E.omega_plus, D),
        "omega_second_1": _c(cd.lattice_E.omega_second, D),
        "omega_minus_2": _c(jr.omega_minus_2, D),
        "recognition_tolerance": tol,
        "expected_false_hits": hits,
        "versions": {"atc": __version__, "mpmath": mpmath.__version__, "backend": backend or hmfexp.BACKEND},
        "inputs": {"instance": _sha256(instance_path) if instance_path else None,
                   "eigendata": _sha256(inst.eigendata_path)},
    }
    if hits > AMBIGUITY_LIMIT:
        report["status"] = "precision-budget"
        report["message"] = (f"error bound {jr.error_bound:.3g} gives tolerance {tol:.3g}; "
                             f"{hits:.3g} chance hits expected in the relation search")
        report["_timings"] = timings
        return report

    # recognition
    rel = elliptic.find_relation([jr.J, Jnt], cd.lattice_E, inst.coeff_bound, inst.torsion_order, tol=tol)
    report["relation"] = list(rel.coefficients) if rel.found else None
    report["relation_residual"] = rel.residual
    report["relation_lll"] = list(rel.lll_coefficients) if rel.lll_coefficients else None
    P = atrpoint.compute_P(jr.J, cd, tol)
    report["P"] = None if P.identity else {"x": _c(P.x, D), "y": _c(P.y, D), "defect": P.defect}
    dbl, _, _ = elliptic.relation_residual(P.z, Jnt, cd.lattice_E, rel.coefficients[0] if rel.found else 7,
                                           2 * rel.coefficients[1] if rel.found else 28)
    report["doubled_relation_residual"] = float(dbl)
    status = "ok"
    msgs = []
    if not rel.found:
        status, msgs = "verification-failure", ["no relation under tolerance"]
    elif inst.expected_relation and tuple(rel.coefficients) != tuple(inst.expected_relation):
        status = "verification-failure"
        msgs.append(f"relation {rel.coefficients} differs from expected {inst.expected_relation}")
    elif float(dbl) > 2 * tol:
        status = "verification-failure"
        msgs.append("doubled relation fails")
    report["status"] = status
    if msgs:
        report["message"] = "; ".join(msgs)
    timings["total"] = time.time() - t0
    report["_timings"] = timings
    return report


def _require(cond: bool, stage: str, msg: str):
    if not cond:
        raise StageError(stage, EXIT_VERIFY, msg)


def cmd_compute(args) -> int:
    try:
        inst = _stage("config", EXIT_DATA, atrpoint.Instance.load, args.instance)
        rep = run_compute(inst, args.norm_bound, args.prec, args.threads, args.backend, args.script,
                          Path(args.instance))
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    timings = rep.pop("_timings", {})
    for k, v in timings.items():
        log.info("timing %s: %.2fs", k, v)
    if args.timings:
        rep["timings"] = timings
    _emit(rep, args.out)
    return {"ok": EXIT_OK, "verification-failure": EXIT_VERIFY, "precision-budget": EXIT_BUDGET}[rep["status"]]


def _emit(obj, out: Optional[str]):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# verify-tower
# ---------------------------------------------------------------------------

def tower_report(inst: atrpoint.Instance) -> dict:
    sig = inst.tower.signatures()
    ratio = inst.tower.closure_ratio()
    sqrt_ok = (inst.tower.norm_alpha() * ratio * ratio - inst.tower.K_disc).is_zero()
    K = sig["K/F0"]
    s = atrpoint.functional_equation_sign(ideal(inst.level), inst.tower.K_disc, K.r2)
    checks = {
        "M ATC over F": sig["M/F"].label == "ATC" and (1, 1) in sig["M/F"].real_places,
        "K ATR over F0, complex at v1": K.label == "ATR" and "v1" in K.complex_places,
        "L totally imaginary": sig["L/K"].label == "TI",
        "L' totally imaginary": sig["L'/K"].label == "TI",
        "K = F0(sqrt(alpha alpha^tau))": sqrt_ok,
        "functional equation sign -1": s == -1,
    }
    return {
        "signatures": {k: str(v) for k, v in sig.items()},
        "alpha_alpha_tau": format_f0(inst.tower.norm_alpha()),
        "K_discriminant": format_f0(inst.tower.K_disc),
        "closure_ratio": format_f0(ratio),
        "functional_equation_sign": s,
        "checks": checks,
    }


def cmd_verify_tower(args) -> int:
    try:
        inst = _stage("config", EXIT_DATA, atrpoint.Instance.load, args.instance)
        rep = _stage("tower", EXIT_VERIFY, tower_report, inst)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    _emit(rep, getattr(args, "out", None))
    return EXIT_OK if all(rep["checks"].values()) else EXIT_VERIFY


# ---------------------------------------------------------------------------
# fetch-eigendata
# ---------------------------------------------------------------------------

LMFDB_API = "https://www.lmfdb.org/api"


def _char_params(char: str) -> dict:
    kind, _, val = char.partition(":")
    if kind != "kronecker":
        raise ValueError(f"unsupported character label {char!r}")
    d = int(val)
    disc = d if d % 4 == 1 else 4 * d
    return {"char_order": 2, "char_conductor": abs(disc), "char_parity": 1 if d > 0 else -1}


def fetch_eigendata(level: int, char: str, out: Path, cache_dir: Path, offline: bool = False,
                    client=None, api: str = LMFDB_API) -> Path:
    """Download (or reuse from cache) an eigenvalue record and write a validated fixture."""
    cache_dir.mkdir(parents=True, exist_ok=True)
    cache = cache_dir / f"lmfdb_{level}_{char.replace(':', '_')}.json"
    if cache.exists():
        payload = json.loads(cache.read_text())
    else:
        if offline:
            raise OSError(f"offline and no cached payload at {cache}")
        import httpx
        own = client is None
        client = client or httpx.Client(timeout=60)
        try:
            params = {"level": level, "weight": 2, "_format": "json", **_char_params(char)}
            r = client.get(f"{api}/mf_newforms/", params=params)
            r.raise_for_status()
            forms = r.json().get("data", [])
            if len(forms) != 1:
                raise EigenDataError(f"expected one newform orbit, got {len(forms)}")
            label = forms[0]["label"]
            r = client.get(f"{api}/mf_hecke_nf/", params={"label": label, "_format": "json"})
            r.raise_for_status()
            recs = r.json().get("data", [])
            if not recs:
                raise EigenDataError(f"no eigenvalue record for {label}")
            payload = dict(recs[0], level=level, label=label)
        except httpx.HTTPError as e:
            raise OSError(f"network failure: {e}") from e
        finally:
            if own:
                client.close()
        cache.write_text(json.dumps(payload, sort_keys=True))
    fx = lmfdb_to_fixture(payload)
    out.write_text(json.dumps(fx, sort_keys=True, separators=(",", ":")) + "\n")
    return out


def cmd_fetch(args) -> int:
    try:
        fetch_eigendata(args.level, args.char, Path(args.out), Path(args.cache_dir), args.offline)
    except (OSError, EigenDataError, ValueError) as e:
        print(f"error: [fetch] {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="atc", description="ATC points from Hilbert modular forms",
                                parents=[common])
    sub = p.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("compute", help="run the full pipeline", parents=[common])
    c.add_argument("--instance", required=True)
    c.add_argument("--prec", type=int, help="working precision in decimal digits")
    c.add_argument("--norm-bound", type=int)
    c.add_argument("--threads", type=int, default=1)
    c.add_argument("--script", help="reduction script JSON overriding the instance")
    c.add_argument("--backend", choices=["mpfr", "python"])
    c.add_argument("--out")
    c.add_argument("--timings", action="store_true", help="include wall times (breaks byte-reproducibility)")
    c.set_defaults(fn=cmd_compute)

    t = sub.add_parser("verify-tower", help="place signatures of the field tower", parents=[common])
    t.add_argument("--instance", required=True)
    t.add_argument("--out")
    t.set_defaults(fn=cmd_verify_tower)

    f = sub.add_parser("fetch-eigendata", help="download and convert classical eigenvalues",
                       parents=[common])
    f.add_argument("--level", type=int, required=True)
    f.add_argument("--char", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--cache-dir", default=str(Path.home() / ".cache" / "atc"))
    f.add_argument("--offline", action="store_true")
    f.set_defaults(fn=cmd_fetch)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
