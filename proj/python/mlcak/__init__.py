"""Python bindings for the mlcak distillation library."""

from ._mlcak import (
    ConfigError,
    ContractError,
    IoError,
    MlcakError,
    Model,
    NumericalError,
    ParameterError,
    ParseError,
    ShapeError,
    auroc,
    bce_with_logits,
    cosine_lr,
    degrade,
    evaluate,
    export_attention,
    generate_synthetic,
    load_image,
    mlcak_summary,
    mse_loss,
    save_image,
    train_student,
    train_teacher,
    vanilla_kd_loss,
)

RESOLUTION_LEVELS = ("native", "112", "56", "28")
SCHEMES = ("none", "vanilla", "last_block", "one_to_one", "mlcak")

__all__ = [name for name in dir() if not name.startswith("_")]
