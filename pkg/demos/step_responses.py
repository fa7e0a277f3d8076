"""
Closed-loop step responses
==========================

Runs both maneuvers under every strategy and prints the settling table.
Takes about half a minute.
"""

from magpitch.harness import Maneuver, ScenarioConfig, compare_strategies, format_report

STRATEGIES = ["OnOff", "MpcCam30", "MpcCam5", "MpcFusion1"]

for maneuver in Maneuver:
    report = compare_strategies(ScenarioConfig(maneuver=maneuver), STRATEGIES)
    print(format_report(report))
    print()

# The ratio column divides the on-off settling time by each row's. The 5 Hz
# camera usually never settles: differencing a 0.2 s hold gives a rate
# estimate that is too stale for the 0.125 s control period.
