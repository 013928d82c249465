"""Testing many polynomial constraints with randomized incomplete U-statistics.

The package estimates a vector of polynomial constraint values by an
incomplete U-statistic over a Bernoulli sample of index tuples, studentizes
the maximum coordinate, and calibrates it with Gaussian multiplier bootstrap
critical values.  The budget-limited tuple sample keeps the procedure valid
near singular parameter points where classical plug-in tests break down.
Includes the full goodness-of-fit machinery for Gaussian latent tree models
and a simulation harness for size, p-value and power studies.
"""

from .bootstrap import (
    BootstrapConfig,
    TestReport,
    bootstrap_draws,
    critical_value,
    draw_u_sharp,
    draw_w,
    p_value,
    run_test,
)
from .engine import CompiledKernel, available_engines, compile_kernel, resolve_engine
from .errors import (
    ConfigurationError,
    DegenerateConstraintError,
    InputError,
    NotPositiveDefiniteError,
    PolytestError,
)
from .kernels import (
    BaseEstimator,
    CovEntryBase,
    KernelCoordinate,
    KernelProgram,
    SymmetricKernel,
    build_kernel,
    build_unsymmetrized,
    eval_kernel,
    lift_order,
    symmetrize,
    vech_index,
    vech_pair,
)
from .poly import PolynomialSpec, format_constraint, parse_constraints
from .simulate import (
    ExperimentConfig,
    SimulationTable,
    empirical_power,
    empirical_size,
    pvalue_study,
)
from .trees import (
    ConstraintSet,
    Tree,
    TreeConstraint,
    TreeParams,
    caterpillar_tree,
    classify_quadruple,
    enumerate_constraints,
    local_alternative,
    random_tree,
    sample_mvn,
    setup_covariance,
    star_tree,
    tree_covariance,
)
from .ustat import (
    BudgetConfig,
    ProjectionEstimates,
    TupleSample,
    UStatResult,
    compute_u_prime,
    compute_ustat,
    empirical_variances,
    estimate_g,
    load_data_csv,
    sample_tuples,
    test_statistic,
)

__version__ = "0.1.0"
