"""Tour of the 3D path primitives and segment switching.

Builds a helix, queries closest points on and off the path, and walks the
switching state through a two-segment queue.
"""

import numpy as np

from fwnmpc import paths

helix = paths.ArcSegment(c=np.array([0.0, 0.0, -120.0]), r_signed=35.0,
                         chi_p=0.0, gamma_p=np.radians(8.0))
print("=== ascending helix: 35 m radius, 8 deg incline, clockwise ===")
b = paths.terminal_point(helix)
print(f"terminal point: n={b[0]:.1f} e={b[1]:.1f} d={b[2]:.1f}")
print(f"pitch per turn: {2 * np.pi * 35 * np.tan(helix.gamma_p):.2f} m")

print("\nclosest points from a descending probe east of the helix:")
for depth in (-60.0, -80.0, -100.0):
    probe = np.array([10.0, 55.0, depth])
    cp = paths.closest_point_arc(helix, probe)
    print(f"  probe d={depth:7.1f} -> path point d={cp.p[2]:8.2f}"
          f"  (leg {cp.leg}, {np.degrees(cp.delta_chi):6.1f} deg before exit)")

line = paths.LineSegment(b=np.array([300.0, 0.0, -60.0]), chi_p=0.0, gamma_p=0.0)
print("\n=== switching walk-through: line then loiter ===")
queue = paths.PathQueue(segments=(line, paths.LoiterSegment(
    c=np.array([300.0, 45.0, -60.0]), r_signed=45.0)))
cfg = paths.SwitchConfig()
pos = np.array([280.0, 0.0, -60.0])
v_g = np.array([13.5, 0.0, 0.0])
for step in range(20):
    conds = paths.switching_conditions(queue.current_segment, pos, v_g, cfg)
    queue = paths.advance_switch_state(queue, conds, cfg, 0.1)
    pos = pos + v_g * 0.1
    if step % 4 == 3:
        print(f"  t={0.1 * (step + 1):3.1f} s  n={pos[0]:6.1f}  x_sw={queue.x_sw:5.2f}"
              f"  active segment {queue.current_index}"
              f"  travel={conds.travel}")
