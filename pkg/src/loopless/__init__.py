"""Loopless variance-reduced optimization: L-SVRG, L-Katyusha, their loopy
originals, Lyapunov diagnostics, and a benchmark harness."""

from .data import (
    Dataset,
    ParseError,
    SparseRow,
    load_libsvm,
    normalize_rows,
    parse_libsvm,
    save_libsvm,
    synthesize_quadratic,
    write_libsvm,
)
from .diagnostics import (
    BoundSlack,
    LyapunovReport,
    ReferenceSolution,
    ReferenceSolveError,
    compute_phi,
    compute_psi,
    exact_expected_phi_next,
    exact_expected_psi_next,
    phi_contraction_rhs,
    psi_contraction_rhs,
    solve_reference,
    verify_lemma_bounds,
)
from .oracle import LogisticOracle, Oracle, RidgeOracle, make_oracle
from .optimizers import (
    ALGORITHMS,
    GradientDescent,
    LKatyusha,
    LSVRG,
    LoopyKatyusha,
    LoopySVRG,
    TraceRecord,
    gd_step,
    lkatyusha_theory_params,
    lsvrg_theory_params,
    run,
)
from .rng import SplitMix64

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "BoundSlack",
    "Dataset",
    "GradientDescent",
    "LKatyusha",
    "LSVRG",
    "LogisticOracle",
    "LoopyKatyusha",
    "LoopySVRG",
    "LyapunovReport",
    "Oracle",
    "ParseError",
    "ReferenceSolution",
    "ReferenceSolveError",
    "RidgeOracle",
    "SparseRow",
    "SplitMix64",
    "TraceRecord",
    "compute_phi",
    "compute_psi",
    "exact_expected_phi_next",
    "exact_expected_psi_next",
    "gd_step",
    "lkatyusha_theory_params",
    "load_libsvm",
    "lsvrg_theory_params",
    "make_oracle",
    "normalize_rows",
    "parse_libsvm",
    "phi_contraction_rhs",
    "psi_contraction_rhs",
    "run",
    "save_libsvm",
    "solve_reference",
    "synthesize_quadratic",
    "verify_lemma_bounds",
    "write_libsvm",
]
