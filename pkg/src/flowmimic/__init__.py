"""flowmimic: scene-flow prediction and flow-conditioned control on a
desk-scale kinematic tabletop simulator."""

__version__ = "0.1.0"
