"""Tube-based NMPC for a chain of two thrust-vectoring aerial vehicles.

Modules:

- ``dynamics``: Lagrangian model of the two-link chain, link stresses, energy
- ``uncertainty``: parameter deviation box and sampling
- ``sensitivity``: analytic Jacobians, variational equation, RK4 maps
- ``constraints``: separation/thrust constraints and tightening margins
- ``reference``: elliptic tip path and its joint-space image
- ``qp``: dense convex QP solvers (DAQP and an in-repo ADMM)
- ``rti``: multiple-shooting Gauss-Newton NMPC with real-time iterations
- ``simulation``: closed-loop runs with a deviated plant
- ``montecarlo``: paired campaigns and reports
- ``config`` / ``cli``: YAML configuration and the ``tubenmpc`` command
"""

__version__ = "0.1.0"
