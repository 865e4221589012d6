"""Local average treatment regime effects from instrumental variable regimes."""

from .baselines import naive_contrast, noiv_contrast
from .identification import (
    BootstrapInterval,
    DegenerateDenominator,
    EmptyRegimeCell,
    EmptyRegimeCellWarning,
    EstimateReport,
    bootstrap_interval,
    complier_probability,
    complier_probability_product,
    compliance_type_probability,
    conditional_latre_by_stratum,
    expected_utility_by_type,
    latre_contrast,
    potential_treatment_moment,
)
from .model import (
    ComplianceType,
    ObservationPath,
    PanelDataset,
    Regime,
    UtilityFunctional,
    enumerate_compliance_types,
    evaluate_utility,
    validate_dataset,
)
from .propensity import (
    LogisticFit,
    PropensityModel,
    SeparationError,
    SingleClassError,
    fit_logistic,
    joint_prob,
    marginal_prob,
)
from .simgen import LatentRecord, SimConfig, generate, true_latre
from .weights import KappaDiagnostics, k_term, kappa_full, kappa_type

__version__ = "0.1.0"
