from .io import ModelFormatError, load_model, model_from_dict, model_to_dict, save_model
from .model import (
    AutoencoderModel,
    backward,
    decoder_forward,
    decoder_macs,
    encoder_forward,
    estimate,
    export_measurement,
    forward,
    init_model,
    loss_and_grads,
    measurement_matrix,
    mse_loss,
    predict,
    stack,
    unstack,
)
from .optim import adam_init, adam_step
from .training import TrainConfig, TrainReport, evaluate_loss, split_dataset, train

__all__ = [
    "AutoencoderModel",
    "ModelFormatError",
    "TrainConfig",
    "TrainReport",
    "adam_init",
    "adam_step",
    "backward",
    "decoder_forward",
    "decoder_macs",
    "encoder_forward",
    "estimate",
    "evaluate_loss",
    "export_measurement",
    "forward",
    "init_model",
    "load_model",
    "loss_and_grads",
    "measurement_matrix",
    "model_from_dict",
    "model_to_dict",
    "mse_loss",
    "predict",
    "save_model",
    "split_dataset",
    "stack",
    "train",
    "unstack",
]
