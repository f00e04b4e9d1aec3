"""Jump correction of a single qubit under bit-flip noise.

A qubit that should stay in |0> suffers bit flips at rate ``lam``. The
correction applies the recovery ``R`` (reset to |0>) as a Poisson process
at rate ``kappa``. The fidelity relaxes to ``1 - 1/(2 + r)`` with
``r = kappa / lam``, so faster correction buys higher fidelity but never
perfect protection.
"""

import numpy as np

from ctqec.analytic import markov_1q_alpha, markov_1q_equilibrium
from ctqec.codes import trivial_code
from ctqec.dynamics import JumpCorrection, bitflip_lindblad, strong_recovery
from ctqec.integrators import SimConfig, evolve_deterministic
from ctqec.qstate import ket, projector

lam = 1.0
print(f"{'r':>6} {'alpha(t=10)':>12} {'1 - 1/(2+r)':>12} {'max error':>10}")
for r in (0.0, 1.0, 8.0, 100.0):
    kappa = r * lam
    gens = [bitflip_lindblad(1, [lam]), JumpCorrection(strong_recovery(trivial_code()), kappa)]
    cfg = SimConfig(kappa=kappa, lam=lam, t_max=10.0, store_stride=100)
    rec = evolve_deterministic(gens, projector(ket("0")), cfg)
    alpha = rec.expect(projector(ket("0")))
    err = np.abs(alpha - markov_1q_alpha(rec.times, kappa, lam)).max()
    print(f"{r:6.1f} {alpha[-1]:12.6f} {markov_1q_equilibrium(kappa, lam):12.6f} {err:10.1e}")

print("\nWithout correction (r = 0) the qubit ends maximally mixed; at r = 100 it")
print("keeps 99% fidelity. The integrator tracks the closed form to ~1e-9.")
