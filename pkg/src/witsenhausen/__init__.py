"""Certified semidefinite upper bounds for Witsenhausen's orthogonality-avoiding sets on spheres.

Submodules:

* :mod:`special` -- normalized Jacobi polynomials, sphere constants, tail bounds
* :mod:`polysym` -- exact trivariate polynomials and the SOS identity
* :mod:`bqpcuts` -- Boolean-quadratic inequalities on the sphere
* :mod:`model` -- assembly of the dual program
* :mod:`ipm` -- interior-point solver and SDPA interchange
* :mod:`certify` -- rigorous verification of solver output
* :mod:`finitegraphs` -- finite-graph hierarchies used as oracles
* :mod:`cli` -- command-line front end
"""

__version__ = "0.1.0"
