"""Cross-domain slag-flow stage classification from triaxial vibration recordings."""
from .dataset import (
    AXES,
    DatasetIndex,
    SensorRecording,
    StageLabel,
    SyntheticSpec,
    generate_synthetic,
    load_manifest,
    read_recording,
    validate_dataset,
    write_dataset,
)
from .experiments import (
    ExperimentConfig,
    FoldSpec,
    Loading,
    Preprocessing,
    ablation_suite,
    cross_domain_folds,
    hyperparameter_grid,
    run_experiment,
)
from .models import ModelKind, ModelSpec, build_cnn, build_cnn_lstm, build_model, predict_proba
from .training import TrainSettings, train_one_run

__version__ = "0.1.0"
