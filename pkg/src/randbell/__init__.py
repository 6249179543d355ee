"""Probability of nonclassical correlations under random local measurements."""
from .analytic import chsh_rim_orbit_probability, chsh_rim_single_probability, triangle_area
from .inequalities import (
    classical_bound,
    evaluate_inequalities,
    mabk_coefficients,
    mabk_orbit,
    mabk_orbit_violated,
    quantum_max,
    walsh_hadamard,
    wwzb_violated,
)
from .lcd_lp import SolverError, build_lcd_lp, classicality_verdict, decide, lp_feasible
from .montecarlo import (
    RANDOM_PURE,
    Criterion,
    EstimateRecord,
    ExperimentConfig,
    entanglement_sweep,
    estimate,
    random_state_probability,
    run_trial,
)
from .quantum import (
    GHZ,
    CorrelationTensor,
    Direction,
    MeasurementFrame,
    SchmidtPair,
    Singlet,
    correlation_tensor,
    correlator_bruteforce,
)
from .sampling import RngStream, SamplingMode, sample_frame, sample_schmidt_angle

__version__ = "0.1.0"
