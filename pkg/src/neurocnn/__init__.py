"""Geometry and optimization of polynomial convolutional networks.

A polynomial CNN alternates strided 1-D convolutions with an entrywise
power activation; its outputs are homogeneous polynomials in the inputs.
This package computes the map exactly, its differential, the exact
dimension/degree/gED invariants of the function space, the fiber
symmetries of the parametrization, and a stationary-point census of the
regression loss checked against the gED upper bound.
"""

from .conv import (Architecture, architecture_for_output, compose_filters,
                   convolve, filter_to_poly, input_width, toeplitz,
                   toeplitz_rank, validate_architecture)
from .poly import (HomoPoly, MonomialBasis, evaluate, monomial_basis,
                   poly_from_coords, poly_mul, poly_pow, sym_coords, veronese)
from .network import (WeightTuple, bigraded_network, factorization_matrix,
                      forward, layer_degrees, segre_veronese_embed, sym_stack,
                      symbolic_network, veronese_lift)
from .jacobian import (claimed_kernel_basis, jacobian, kernel_dim,
                       scaling_identity_check)
from .invariants import (InvariantReport, ged_depth2_grid, ged_neuromanifold,
                         ged_segre_veronese, invariant_report,
                         neuromanifold_degree, neuromanifold_dim)
from .fibers import (CanonicalWeights, admissible_shifts, apply_shift,
                     canonical_form, is_singular_parameter, same_function,
                     zero_profile)
from .regression import (ConvSubspace, Dataset, DesignSystem, conv_subspace,
                         design_system, generate_dataset, loss,
                         loss_as_distance, project_anchor, receptive_field)
from .census import (CensusReport, CriticalPoint, LossLandscape, census,
                     dedup, find_stationary, verify_criticality_on_manifold)

__version__ = "0.1.0"
