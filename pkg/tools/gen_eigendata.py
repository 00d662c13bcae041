"""Regenerate the shipped eigenvalue fixture with PARI/GP (via cypari2).

Usage: python tools/gen_eigendata.py BOUND OUT.json

The newform is the first eigenform of S_2(40, (10/.)) returned by
mfeigenbasis (the only one in the new space).  Its coefficient field is Q[y]/(y^4 + 2y^2 + 4) with
sqrt2 = y^3/2 and sqrt-3 = y^2 + 1; this identification gives
c_5^2 = -1 + 2 sqrt-6, the pinned conjugate.
"""

import json
import sys

import cypari2


def main(bound: int, out: str) -> None:
    pari = cypari2.Pari()
    pari.allocatemem(4 * 10**9)
    # character given as the discriminant 40, i.e. kronecker(40, .) = (10/.) off 2
    pari("mf=mfinit([40,2,40],0); F=mfeigenbasis(mf)[1]")
    pari(f"v=mfcoefs(F,{bound})")
    pari("g=y^4+2*y^2+4; s=Mod(y^3/2,g); t=Mod(y^2+1,g)")
    pari("M=matconcat([Vecrev(lift(1+0*s),4)~, Vecrev(lift(s),4)~, Vecrev(lift(t),4)~, Vecrev(lift(s*t),4)~])")
    pari("tocoords(c)=matsolve(M, Vecrev(lift(Mod(lift(c),g)),4)~)")
    coeffs = {}
    for p in pari(f"primes([1,{bound}])"):
        p = int(p)
        coeffs[str(p)] = [str(x) for x in pari(f"tocoords(v[{p + 1}])")]
    fx = {
        "level": 40,
        "nebentypus": "kronecker:10",
        "basis": ["1", "sqrt2", "sqrt-3", "sqrt-6"],
        "provenance": f"PARI/GP mfeigenbasis, S_2(40,(10/.)), primes <= {bound}",
        "coeffs": coeffs,
    }
    with open(out, "w") as fh:
        json.dump(fx, fh, separators=(",", ":"))


if __name__ == "__main__":
    main(int(sys.argv[1]), sys.argv[2])
