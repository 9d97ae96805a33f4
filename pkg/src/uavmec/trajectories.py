"""Reference flight paths: hovering and the fixed circular benchmark loop.

Both builders produce ``(M, 2N+2, 2)`` waypoint arrays matching the unit
structure in :mod:`uavmec.scenario`: ``q[0]`` is the launch anchor, unit ``t``
moves ``q[t] -> q[t+1]``, and ``q[2N+1]`` returns to the anchor.  The first
slot is kept stationary (its communication unit carries the bulk input
upload), so circular motion only starts at unit 3.
"""

from __future__ import annotations

import math

import numpy as np


def hover(scn) -> np.ndarray:
    n = scn.num_slots
    q = np.zeros((scn.num_uavs, 2 * n + 2, 2))
    for m in range(scn.num_uavs):
        q[m, :, :] = scn.uav_start_positions[m]
    return q


def circle(scn, radius: float = 5.0, unit_durations: np.ndarray | None = None,
           speed_margin: float = 0.8) -> np.ndarray:
    """Out-and-back sweep along a circle through each launch point.

    The circle passes through the start position with its center offset to
    the left.  The sweep runs counterclockwise for the first half of the
    moving units and retraces for the second half, so the path closes at the
    anchor exactly.  Outbound and return steps are paired (same magnitude),
    capped by ``speed_margin * v_max * duration`` of both paired units when
    durations are known; otherwise a half turn is spread evenly.
    """
    n = scn.num_slots
    units = 2 * n
    q = np.zeros((scn.num_uavs, units + 2, 2))
    moving = list(range(3, units + 1))
    steps = np.zeros(units + 1)
    half = len(moving) // 2
    for i in range(half):
        t_out, t_back = moving[i], moving[len(moving) - 1 - i]
        step = math.pi / half
        if unit_durations is not None:
            # chord = 2r sin(a/2) <= r*a, so an angular cap of v*dt/r is safe
            cap_out = speed_margin * scn.v_max * unit_durations[t_out] / radius
            cap_back = speed_margin * scn.v_max * unit_durations[t_back] / radius
            step = min(step, cap_out, cap_back)
        steps[t_out] = step
        steps[t_back] = -step
    for m in range(scn.num_uavs):
        start = scn.uav_start_positions[m]
        center = start - np.array([radius, 0.0])
        angle = 0.0
        q[m, 0] = q[m, 1] = q[m, 2] = q[m, 3] = start
        for t in range(3, units + 1):
            angle += steps[t]
            q[m, t + 1] = center + radius * np.array([math.cos(angle), math.sin(angle)])
        q[m, -1] = start
    return q
