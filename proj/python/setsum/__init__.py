"""Set-sum data augmentation for image regression."""

from ._core import (
    ArchitectureConfig,
    ConfigError,
    DivergenceError,
    FormatError,
    IoError,
    RegressorModel,
    ShapeError,
    SyntheticConfig,
    black_image,
    build_base_regressor,
    center_of_mass_crop,
    cmd_curve,
    cmd_eval,
    cmd_generate,
    cmd_train,
    count_combinations,
    generate_blob_image,
    icc,
    infer,
    load_model,
    mae,
    make_epoch_sets,
    mixup_pair,
    mse,
    random_geometric_augment,
    read_tensor,
    rescale_intensity,
    train,
    virtual_label,
    williams_test,
    write_tensor,
)

__all__ = [name for name in dir() if not name.startswith("_")]
