"""
Battery life and solar feasibility
==================================

E = A * r * H per day; the load is sustainable in a month when E / 24 h
covers its draw. The bundled irradiation series is synthetic.
"""

from edgebin.power import JETSON_NANO, K210, SolarRig, battery_life_hours, emit_energy_curve, feasibility, \
    synthetic_series

print(f"Jetson standby on 92.5 Wh: {battery_life_hours(92.5, JETSON_NANO.standby_w):.1f} h")
print(f"K210 on 48 Wh: {battery_life_hours(48, K210.active_w):.1f} h")

rig = SolarRig.from_cm2(1600, 0.22, battery_wh=48)
series = synthetic_series()
print(emit_energy_curve(rig, series))
for profile in (K210, JETSON_NANO):
    rep = feasibility(rig, series, profile)
    w = rep.worst
    print(f"{profile.device}: worst {w.month} {w.sustainable_w:.2f} W vs {profile.active_w} W -> "
          f"{'feasible' if rep.feasible else 'infeasible'}")
