"""quasiqc: regularized quasiprobabilities for multimode quantum correlations.

Compute width-filtered quasiprobability distributions and Wigner functions
from characteristic functions, estimate them directly from balanced-homodyne
quadrature records with statistical confidence, and certify nonclassical
correlations through Bochner-type positivity violations.
"""

__version__ = "0.1.0"

from ._accel import HAVE_COMPILED, IMPLEMENTATION
from .bochner import (
    BochnerMatrix,
    ViolationSearchResult,
    bochner_matrix,
    min_eigenvalue,
    schur_closure_check,
    search_violation,
)
from .errors import (
    FilterRangeError,
    ParameterError,
    QuadratureError,
    QuasiqcError,
    ResourceGuardError,
    SchemaError,
    TableInvariantError,
)
from .filters import (
    FilterTable,
    build_filter_table,
    eval_filter_radial,
    filter_value,
    filtered_b_max,
    kernel_value,
)
from .grids import NegativityReport, QPGrid, negativity_scan
from .quasiprob import (
    ModeTransform,
    marginal_pqc,
    pqc_grid,
    pqc_grid_cartesian,
    pqc_point_general,
    pqc_point_radial,
    transform_modes,
    wigner_grid,
    wigner_point,
)
from .sampling import (
    EstimateWithError,
    GaussianQuadratureStats,
    PatternTable,
    QuadratureDataset,
    build_pattern_table,
    compute_gaussian_stats,
    estimate_grid,
    estimate_pqc,
    gaussian_cf_variance,
    load_dataset,
    pattern_value_general,
    save_dataset,
)
from .states import (
    CharacteristicFunctionModel,
    PhaseRandomizedTMSV,
    char_fn_prtmsv,
    char_fn_prtmsv_series,
    coherent_cf,
    fock_wavefunction,
    fock_weight,
    quadrature_pdf,
    reduced_char_fn,
    sample_quadratures,
    thermal_cf,
    vacuum_cf,
)

__all__ = [name for name in dir() if not name.startswith("_")]
