"""Finite-strength realisations of continuous correction.

A weak measurement of strength ``eps`` followed by a conditional rotation
moves a qubit toward |0> by ``eps^2 (1 - alpha)`` per step. Repeating it
with ``eps^2 = kappa dt`` recovers the jump master equation. A weak X
measurement can itself be built from an ancilla coupled through
``exp(i eps/2 X (x) Y)``. For the bit-flip code, measuring all three
syndrome subspaces at once leaves unwanted cross terms; this demo prints
how fast they vanish as ``eps`` shrinks.
"""

import numpy as np

from ctqec.codes import bitflip_code
from ctqec.dynamics import (
    averaged_simultaneous_map,
    bitflip_channel,
    sequential_subspace_map,
    weak_jump_map,
    weak_x_measurement_via_ancilla,
    weak_z_measurement,
)
from ctqec.integrators import SimConfig, evolve_weak_steps
from ctqec.qstate import I2, X, ket, projector, psd_sqrt

p0 = projector(ket("0"))
alpha = 0.4
for eps in (0.3, 0.1):
    out = weak_jump_map(eps).apply(np.diag([alpha, 1 - alpha]).astype(complex))
    print(f"eps = {eps}: alpha {alpha} -> {out[0, 0].real:.6f}  (alpha + eps^2 (1-alpha) = {alpha + eps**2 * (1 - alpha):.6f})")

kappa, lam, dt = 8.0, 1.0, 0.00125
cfg = SimConfig(kappa=kappa, lam=lam, dt=dt, t_max=5.0)
rec = evolve_weak_steps(weak_jump_map(np.sqrt(kappa * dt)), p0, cfg, noise=bitflip_channel(lam, dt))
print(f"\nrepeated weak correction with bit flips: alpha(5) = {rec.final[0, 0].real:.5f}, jump model 0.9")

for eps in (0.2, 0.1):
    m_plus = weak_x_measurement_via_ancilla(eps).ops[0]
    gap = np.linalg.norm(m_plus - psd_sqrt((I2 + eps * X) / 2), 2)
    print(f"ancilla-built weak X measurement, eps = {eps}: distance to sqrt((I + eps X)/2) = {gap:.2e}")

code = bitflip_code()
prev = None
print("\nsimultaneous vs sequential syndrome maps:")
for eps in (0.2, 0.1, 0.05):
    res = np.linalg.norm(averaged_simultaneous_map(code, eps).superoperator()
                         - sequential_subspace_map(code, eps).superoperator(), 2)
    note = f"  ratio {prev / res:.1f}" if prev else ""
    print(f"  eps = {eps:4}: residual {res:.3e}{note}")
    prev = res

rec = evolve_weak_steps(weak_z_measurement(0.1), I2 / 2, SimConfig(dt=1.0, t_max=1e5, seed=3), x_stop=5.0)
print(f"\nweak Z random walk from I/2 stopped at x = {rec.x_path[-1]:+.1f} after {rec.stopped_at:.0f} steps;"
      f" populations {np.real(np.diag(rec.final)).round(6)}")
