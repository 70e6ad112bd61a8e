"""Phase locking in the overdamped Josephson junction model.

Rotation numbers, phase-lock portraits, constrictions, Heun criteria and
isomonodromic flows for dphi/dt = -sin(phi) + B + A cos(omega t).
"""

__version__ = "0.1.0"
