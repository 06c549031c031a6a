"""
The bin's decision policy on a scripted trace
=============================================

A hand in view holds the bin; three confident frames of one recycling
class open that container; empty frames return to idle.
"""

import io

import numpy as np

from edgebin.binctl import (Classified, ControllerConfig, SortComplete, Tick, random_trace, run_scenario,
                            write_log)

cfg = ControllerConfig(stability_window=3, confidence_threshold=0.6, sort_timeout=5)
script = [
    Classified("empty", 0.97),
    Classified("plastic", 0.91),
    Classified("hand", 0.40),   # hand wins even at low confidence
    Classified("plastic", 0.88),
    Classified("plastic", 0.93),
    Classified("plastic", 0.90),  # third in a row: door opens
    SortComplete(),
    SortComplete(),             # nothing is sorting: logged, ignored
    Classified("glass", 0.95),
    Classified("glass", 0.95),
    Classified("glass", 0.95),
] + [Tick()] * 5                # no completion signal: alarm
result = run_scenario(script, cfg)
buf = io.StringIO()
write_log(buf, result.log)
print(buf.getvalue())
print("final state", result.final_state)

# a long random trace: count doors and check the hand window
trace = random_trace(np.random.default_rng(0), 10_000)
r = run_scenario(trace, cfg)
print(len(r.doors), "doors over", len(trace), "events")
