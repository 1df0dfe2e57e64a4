"""Bursts of the forcing term precede lobe switching.

    python demos/forcing_and_switching.py
"""
import numpy as np

from havok import analysis, model as hm, systems

x = systems.measure(systems.simulate(systems.default_spec("lorenz")), "x")
model, _ = hm.fit(x, 100, 15)
f = hm.extract_forcing(model, x)

act = analysis.activity(f, analysis.LORENZ_THRESHOLD)
print(f"forcing active {100 * act.fraction:.1f}% of the time in {len(act.segments)} bursts")

ev = analysis.detect_transitions(x, debounce=0.5)
stats = analysis.lead_time_stats(ev, act, horizon=1.0)
print(f"{len(ev)} lobe switches, {100 * stats.hit_rate:.1f}% preceded by forcing "
      f"(mean lead {stats.mean_lead:.3f} time units)")

rep = analysis.tail_report(f)
print(f"excess kurtosis of v_15: {rep.excess_kurtosis:.1f}")
# share of samples beyond four standard deviations; a Gaussian gives 6.3e-5
z = np.abs(f.values - f.values.mean()) / f.values.std()
print(f"beyond 4 sigma: {np.mean(z > 4):.2e}")
