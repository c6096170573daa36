"""Discretized Hardy and BMO spaces for Schrödinger operators ``-Δ + V``.

Modules: ``grid`` (boxes, fields, balls), ``potential`` (critical radius),
``semigroup`` (heat propagators and maximal functions), ``orlicz`` and
``norms`` (Luxemburg gauges and space norms), ``decomposition`` (covers,
partitions, atoms, product splits), ``families`` and ``sweeps`` (random test
families and ratio sweeps), ``cli`` (batch driver).
"""

from .grid import Ball, Field, Grid, make_grid
from .potential import (Potential, critical_radius, critical_radius_profile,
                        make_potential)
from .semigroup import make_propagator, maximal_ML
from .orlicz import luxemburg, xi, xi_inverse

__all__ = ["Ball", "Field", "Grid", "make_grid", "Potential", "critical_radius",
           "critical_radius_profile", "make_potential", "make_propagator",
           "maximal_ML", "luxemburg", "xi", "xi_inverse"]
__version__ = "0.1.0"
