"""Numerical tolerances shared by every module."""

NORMALIZATION_TOL = 1e-12
MARGINAL_TOL = 1e-10
CROSS_SOLVER_TOL = 1e-9
# plan entries at or below this mass are treated as roundoff and dropped
MASS_EPS = 1e-14
# relative threshold on reduced costs for the simplex entering rule
REDUCED_COST_TOL = 1e-12
# two matchings whose costs differ by less than this are considered tied
TIE_TOL = 1e-12

TOLERANCES = {
    "normalization": NORMALIZATION_TOL,
    "marginal": MARGINAL_TOL,
    "cross_solver": CROSS_SOLVER_TOL,
    "mass_eps": MASS_EPS,
    "reduced_cost": REDUCED_COST_TOL,
    "tie": TIE_TOL,
}
