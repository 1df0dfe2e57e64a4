"""Split the Lorenz attractor into two almost-invariant sets with an Ulam
transfer operator, then compare against where the forcing is active.

    python demos/almost_invariant_sets.py
"""
from havok import analysis, model as hm, systems, transfer

traj = systems.simulate(systems.default_spec("lorenz"))
x = systems.measure(traj, "x")
model, _ = hm.fit(x, 100, 15)
act = analysis.activity(hm.extract_forcing(model, x), analysis.LORENZ_THRESHOLD)

grid = transfer.BoxGrid.around(traj.states, counts=20)
tm = transfer.ulam_matrix(traj, grid, T=0.1)
sets = transfer.almost_invariant_sets(transfer.reversibilize(tm), tm.pi)
print(f"{tm.n} occupied boxes, lambda_2 = {sets.lambda2:.5f} ({sets.iterations} iterations)")
print("lobe centres fall in sets", transfer.lobe_labels(tm, sets.labels).tolist())

# forcing samples are stamped at the end of each delay window
active = transfer.box_activity(tm, traj, act.mask, offset=model.q - 1)
rep = transfer.partition_overlap(tm, sets.labels, active)
print(f"boundary overlap with active boxes: {rep.score:.3f}")
print("set x activity box counts:\n", rep.contingency)
