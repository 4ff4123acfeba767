"""Recover POVM effects from probabilities on the unit sphere alone.

For a random POVM, each effect is rebuilt by polarizing the map
``psi -> <psi|E psi>`` (evaluated only on unit vectors), and the result is
compared against the original.  A quartic form is included to show the
sesquilinearity check rejecting it.
"""

import argparse

import numpy as np

from povm_extend import linalg
from povm_extend.errors import NotSesquilinearError
from povm_extend.polarization import polarize, reconstruct_operator, verify_sesquilinear
from povm_extend.povm import random_povm


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--outcomes", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    P = random_povm(args.dim, args.outcomes, rng)
    total = np.zeros((args.dim, args.dim), dtype=complex)
    for atom, E in P.items():
        prob = lambda v, E=E: linalg.quadratic_form(E, linalg.require_normalized(v)).real  # noqa: E731
        s = polarize(prob, args.dim, unit_sphere=True)
        B = reconstruct_operator(s)
        laws = verify_sesquilinear(s, trials=500, check_norm_bound=True)
        total += B
        print(f"atom {atom}: max |B - E| = {np.max(np.abs(B - E)):.2e}, "
              f"laws {'ok' if laws.passed else 'violated'}, norm bound {laws.norm_bound:+.3f}")
    print(f"sum of reconstructed effects vs I: {np.max(np.abs(total - np.eye(args.dim))):.2e}")

    quartic = polarize(lambda v: np.vdot(v, v).real ** 2, args.dim)
    rep = verify_sesquilinear(quartic, trials=500)
    print(f"quartic form: additivity residual {rep.additivity:.2e}, passed={rep.passed}")
    try:
        reconstruct_operator(quartic)
    except NotSesquilinearError as exc:
        print(f"quartic form rejected by reconstruction: residual {exc.residual:.2e}")


if __name__ == "__main__":
    main()
