"""Simulation engine for control arms completed with generated virtual patients."""

from .dataset import (
    ColumnSpec,
    PatientRecord,
    Schema,
    TrainingSet,
    TrialDataset,
    derive_binary_outcome,
    draw_training_set,
    load_csv,
    load_schema,
    recode_categories,
    save_schema,
    select_n_first,
    write_csv,
)
from .errors import (
    ConfigError,
    DataFormatError,
    ExternalGeneratorError,
    SchemaError,
    VcatError,
)
from .estimators import (
    ArmSummary,
    DecisionLabel,
    EffectEstimate,
    averaged,
    classify,
    mse,
    one_shot,
    rct_effect,
    treated_summary,
)
from .experiments import (
    CategoricalCovariate,
    NFirstReport,
    SensitivityReport,
    SimSpec,
    correlation,
    run_n_first,
    run_sensitivity,
    simulate_trial,
)
from .fidelity import (
    QualityReport,
    contingency_similarity,
    discretize,
    general_score,
    ks_complement,
    pearson_similarity,
    tv_complement,
)
from .generators import GeneratorModel, SyntheticBatch, fit, load_batch_csv
from .impute import ImputationWarning, impute_chained
from .tuning import HyperGrid, TuningResult, grid_search_cv, multi_trainset_tune

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
