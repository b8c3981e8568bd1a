"""Scaled ground states below and above the kinetic threshold."""

from dataclasses import replace

from threshold_nls import harness as H
from threshold_nls.ground_state import threshold_quantities

ctx = H.get_context(0.1, 1024, 40.0)
base = H.RunConfig(n=1024, r_max=40.0, t_end=20.0)
for lam in (0.5, 0.9, 1.1, 1.2):
    q = threshold_quantities(ctx.gs, lam * ctx.gs.Q)
    labels = []
    for dt in (1e-3, 5e-4):
        out, _ = H.classify_run(replace(base, init=H.ScaledInit(lam), dt=dt), ctx)
        labels.append(f"{out.label.value} at t={out.evidence['event_time']:.4f}")
    print(f"{lam:.1f} Q  kinetic {q.kinetic:.3f}  mass-energy {q.mass_energy:.3f}  ->  " + ", ".join(labels))
