"""spiralmga: low-thrust multi-gravity-assist trajectory design.

Two-step pipeline: a fast multi-objective global search over launch date,
flyby sequence and leg times built on 3D generalized logarithmic spirals,
followed by high-fidelity single-objective refinement with Hermite-Simpson
collocation.
"""

__version__ = "0.1.0"
