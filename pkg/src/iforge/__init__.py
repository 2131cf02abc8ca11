"""Yang-Mills energy tools for SO(3) bundles over four-manifolds.

Subpackages cover the vector model of the structure algebra, differential
form arithmetic on Euclidean space and the half-cylinder, quadrature rules,
the standard instanton family, quadratic background connections, the
connected-sum gluing construction with its energy comparison, and a lattice
energy flow.
"""

__version__ = "0.1.0"
