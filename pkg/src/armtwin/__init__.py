"""Digital-twin tabletop arm: fallible perception, operator correction,
collision-checked planning, and a ground-truth execution gate."""

__version__ = "0.1.0"
