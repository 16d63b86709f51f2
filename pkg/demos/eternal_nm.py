"""Eternally non-Markovian qubit: CP-divisibility fails while P-divisibility holds.

Run with ``python3 demos/eternal_nm.py``.
"""
import numpy as np

from odk import dynamics as dy
from odk import generators as gn
from odk.timegrid import TimeGrid


def main():
    gen = lambda t: gn.pauli_generator([1.0, 1.0, -np.tanh(t)])
    traj = dy.propagate(gen, TimeGrid(5.0, 2000))
    rep = dy.divisibility_report(traj)
    print("verdicts:")
    for k, v in sorted(rep.verdicts.items()):
        print(f"  {k:24s} {v}")
    print(f"N_RHP = {rep.N_RHP:.4f}   N_BLP lower bound = {rep.N_BLP:.2e}")
    for t in (0.5, 1.0, 2.0, 5.0):
        S = traj.at(t).super
        print(f"t={t:3.1f}  Bloch contraction diag = {np.round(np.real(np.diag(S))[[1, 2]], 5)}"
              f"  min Choi eig = {traj.choi_min()[traj.grid.index(t)]:.3e}")


if __name__ == "__main__":
    main()
