"""Simulation toolkit for a hybrid topological quantum memory.

Modules: :mod:`core` (linear algebra, dynamics), :mod:`lattice` (spin-orbit
chain), :mod:`memory` (cavity-QND gate protocol), :mod:`transfer`
(optomechanical state transfer), :mod:`budget` (scalar error model) and
:mod:`cli`.
"""

__version__ = "0.1.0"
