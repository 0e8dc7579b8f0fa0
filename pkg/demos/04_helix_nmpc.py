"""Closed-loop NMPC on the steep-helix scenario.

Runs the ascending/summit/descending arc course and prints the run report;
writes the full telemetry CSV next to this script.
"""

from pathlib import Path

from fwnmpc import sim
from fwnmpc.scenarios import scenario_helix

scenario = scenario_helix()
print(f"running scenario {scenario.name!r}: {scenario.duration:.0f} s, "
      f"N={scenario.ocp.n_steps}, T_step={scenario.ocp.t_step} s ...")
log = sim.run(scenario)

out = Path(__file__).with_name("helix_run.csv")
sim.emit_csv(log, out)
print(f"telemetry written to {out}\n")
print(sim.emit_report(log, settle_time=30.0))
