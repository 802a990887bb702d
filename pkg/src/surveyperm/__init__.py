"""Cluster-adjusted (pseudo-)permutation tests for complex survey samples."""

__version__ = "0.1.0"

from .dataset import (  # noqa: E402
    CsvSchema,
    DatasetError,
    RowError,
    SchemaError,
    SurveyDataset,
    ValidationReport,
    center_weighted,
    load_csv,
    validate,
    write_csv,
)
from .decomposer import ClusterDecomposition, ConditionDiagnostics, decompose, diagnostics  # noqa: E402
from .designs import SRS, ClusterSample, StratifiedSRS, draw_sample, eta_quartile_strata  # noqa: E402
from .estimator import FittedLinearModel, SingularDesignError, fit_wls, residual_orthogonality  # noqa: E402
from .permtest import (  # noqa: E402
    PermutationPlan,
    PermutationTestResult,
    exact_test,
    iid_mean_diff_test,
    naive_permute,
    pseudo_permute,
    run_test,
    statistic_psi,
    survey_permutation_test,
)
from .simpop import PopulationConfig, SimulatedPopulation, generate_population  # noqa: E402
from .study import (  # noqa: E402
    StudyConfig,
    StudyResult,
    empirical_pvalues,
    export,
    load_config,
    rejection_rate,
    run_study,
)


def data_path(name: str):
    """Path of a file bundled under ``surveyperm/data`` (example CSVs and study configs)."""
    from importlib.resources import files

    return files(__name__) / "data" / name
