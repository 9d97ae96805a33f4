"""Multi-UAV edge-computing planner: offloading, CPU allocation, trajectories."""

__version__ = "0.1.0"
