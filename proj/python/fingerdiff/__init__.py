from ._core import (  # noqa: F401
    FdConfigError,
    FdDataError,
    FdIoError,
    FdNumericError,
    Model,
    auc,
    evaluate,
    generate_synthetic_dataset,
    load_manifest,
    lr_at,
    read_clip,
    sample_start,
    supcon_grad_check,
    supcon_loss,
    train,
    __version__,
)
