"""The synthetic thermal plant: cruise vs hold, labels, and the RC oracle.

Cruise motions oscillate and stay cool; a held posture under load saturates
the winding toward its RC steady state and crosses the 40 degC threshold.
"""

from thermovae import PlantConfig, fit_normalizer, save_csv, simulate, windows

plant = PlantConfig(seed=7)

cruise = simulate(plant, duration=600.0, mode="cruise")
hold = simulate(plant, duration=600.0, mode="hold")

for name, traj in (("cruise", cruise), ("hold", hold)):
    temps = traj.temps()
    print(f"{name:>6}: {len(traj)} samples, label={traj.label}, "
          f"temp {temps.min():.1f}..{temps.max():.1f} degC")

# The first-order RC model has a closed-form steady state; the Euler
# integration converges to it (this is the desk-scale plant validation).
t_inf = float(plant.steady_state_temp(plant.hold_torque)[0])
print(f"hold steady state (closed form): {t_inf:.1f} degC")

# Fit the z-score normalizer on cool data only and slice windows: this is
# exactly what the training pipeline consumes.
norm = fit_normalizer([cruise])
wins = windows(cruise, norm, length=64, stride=16)
print(f"{len(wins)} windows of shape {wins[0].values.shape} from the cruise run")

save_csv(cruise, "demo_cruise.csv")
print("wrote demo_cruise.csv (t,q1,qd1,tau1,temp1)")
