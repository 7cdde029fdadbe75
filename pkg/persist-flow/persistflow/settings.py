# -*- coding: utf-8 -*-

# Default numerical settings for persist-flow.
#
# Run configurations (see persistflow.config) may override most of these
# values; the ones without a configuration key are fixed for a release.

# Saturation floor used when a bounded capillary curve cannot be inverted
S_MIN = 1e-12

# Fraction of the cap where capped curves leave their power law
CAP_KNEE = 0.95

# Global pressure / Kirchhoff tables
TABLE_RESOLUTION = 2048
TABLE_TOL = 1e-8
# Gauss-Legendre points per table cell
TABLE_GAUSS_POINTS = 8
# how many times a table cell may be halved before giving up
TABLE_MAX_DEPTH = 30

# Test function tables M^eps, N^eps (geometric grid in p_g)
TEST_FUNCTION_RESOLUTION = 2048
# Diagnostic floor for eps, relative to the density cap
EPS_DIAG_RELATIVE = 1e-6

# Picard iteration
PICARD_TOL = 1e-8
PICARD_MAX = 200
RELAXATION = 1.0
# relaxation used after a diverging iterate
RELAXATION_FALLBACK = 0.5
# update norm growth which counts as divergence
DIVERGENCE_FACTOR = 10.0
# a step stalls when the update norm shrinks by less than this factor
# over STALL_WINDOW Picard iterations
STALL_WINDOW = 8
STALL_CONTRACTION = 0.999
MAX_DT_HALVINGS = 5

# Regularization defaults
DEFAULT_ETA = 1e-3
DEFAULT_EPS = 1e-6

# Linear solves
LINEAR_RTOL = 1e-10
CG_RTOL = 1e-12
QUADRATURE_ORDER = 2

# Spectral projection
MAX_MODES = 64

# Diagnostics
POSITIVITY_TOL = 1e-8
ENERGY_SLACK = 1e-6
MASS_DEFECT_FLOOR = 1e-8
UNIFORMITY_RATIO = 10.0

# Output
OUTPUT_ROOT = 'runs'
ENV_OUTPUT_ROOT = 'PERSISTFLOW_OUTPUT_ROOT'
SNAPSHOT_EVERY = 10

# CLI exit codes
EXIT_CONFIG_ERROR = 2
EXIT_SOLVER_ERROR = 3
EXIT_VERIFICATION_FAILED = 4
