"""Python access to the rbfvae scenario generator."""

from ._rbfvae import (
    Error,
    HourlyPanel,
    Model,
    ProfileStore,
    ScenarioSet,
    Split,
    TrainConfig,
    WeeklyPanel,
    WeeklyView,
    __version__,
    aggregate_weekly,
    corr_compare,
    extract_profiles,
    generate,
    ingest_csv,
    kernel,
    ks_battery,
    ks_two_sample,
    load_model,
    mahalanobis_sq,
    select_profile,
    split,
    synth,
    train,
)

__all__ = [
    "Error",
    "HourlyPanel",
    "Model",
    "ProfileStore",
    "ScenarioSet",
    "Split",
    "TrainConfig",
    "WeeklyPanel",
    "WeeklyView",
    "__version__",
    "aggregate_weekly",
    "corr_compare",
    "extract_profiles",
    "generate",
    "ingest_csv",
    "kernel",
    "ks_battery",
    "ks_two_sample",
    "load_model",
    "mahalanobis_sq",
    "select_profile",
    "split",
    "synth",
    "train",
]
