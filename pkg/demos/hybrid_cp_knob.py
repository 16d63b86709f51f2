"""Hybrid semi-Markov qubit: the decoherence matrix D decides complete positivity.

With mostly downhill jumps and Erlang-2 waiting times, coherences decay
too slowly without extra dephasing; a small D restores CP.
Run with ``python3 demos/hybrid_cp_knob.py``.
"""
import numpy as np

from odk import classical as cl
from odk import kernels as kn
from odk.errors import CPViolated
from odk.timegrid import TimeGrid


def main():
    Pi = np.array([[0.9, 0.9], [0.1, 0.1]])
    sm = cl.SemiMarkovSpec(Pi, cl.WaitingTime("erlang2", 1.0))
    grid = TimeGrid(6.0, 600)
    for dval in (0.0, 0.01, 0.02, 0.05, 0.1):
        D = np.array([[0.0, dval], [dval, 0.0]])
        res = kn.hybrid_solve(kn.HybridSpec(sm, D), grid, strict=False)
        cmin = res.trajectory.choi_min().min()
        where = "" if res.cp else f"  first violation t={res.first_violation:.3f}"
        print(f"D={dval:5.2f}  CP={res.cp!s:5s}  min Choi eig={cmin:+.2e}{where}")
    try:
        kn.hybrid_solve(kn.HybridSpec(sm, np.zeros((2, 2))), grid)
    except CPViolated as exc:
        print(f"strict mode raises: {exc}")


if __name__ == "__main__":
    main()
