"""Tour of the look-ahead guidance errors.

Shows the lateral error angle during an offset approach to a line and the
longitudinal setpoint shaping on a climb, plus the turn feed-forward bank.
"""

import numpy as np

from fwnmpc import guidance as gd
from fwnmpc import paths

cfg = gd.GuidanceConfig()
print(f"guidance config: T_b_lat={cfg.t_b_lat} s, T_b_lon={cfg.t_b_lon} s, "
      f"climb {cfg.d_dot_clmb} m/s, sink {cfg.d_dot_sink} m/s")

line = paths.LineSegment(b=np.array([1000.0, 0.0, -60.0]), chi_p=0.0, gamma_p=0.0)
print("\n=== lateral approach: flying north, offset east of a northbound line ===")
print(f"{'offset':>7} {'e_lat':>8} {'eta_lat':>9}")
for offset in (50.0, 20.0, 10.0, 5.0, 1.0, 0.0):
    pos = np.array([0.0, offset, -60.0])
    cp = paths.closest_point_line(line, pos)
    errs = gd.guidance_errors(pos, np.array([13.5, 0.0, 0.0]), line, cp, cfg)
    print(f"{offset:7.1f} {errs.e_lat:8.2f} {np.degrees(errs.eta_lat):8.2f}d")

print("\n=== longitudinal shaping: below a climbing path ===")
print(f"{'e_lon':>7} {'d_dot_sp':>9} {'eta_lon':>8}")
gamma_p = np.radians(8.0)
t_pd = -np.sin(gamma_p)
v_g = np.array([13.4, 0.0, -1.0])
for e_lon in (-30.0, -10.0, -3.0, -1.0, 0.0, 5.0):
    d_dot_sp, eta_lon = gd.longitudinal_setpoint(e_lon, v_g, t_pd, cfg)
    print(f"{e_lon:7.1f} {d_dot_sp:9.2f} {eta_lon:8.3f}")

print("\n=== feed-forward bank on a 35 m clockwise arc ===")
arc = paths.ArcSegment(c=np.zeros(3), r_signed=35.0, chi_p=0.0, gamma_p=0.0)
for e_prime in (0.0, 0.25, 0.5, 1.0):
    phi_ff = gd.roll_feedforward(arc, [13.5, 0.0], e_prime, 9.81)
    print(f"  normalized error {e_prime:4.2f} -> {np.degrees(phi_ff):5.1f} deg bank")
