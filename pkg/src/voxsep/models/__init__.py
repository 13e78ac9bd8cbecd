"""U-Net / Wave-U-Net builders, training and track separation."""

from .base import ModelGraph, load_model, masked_l1_loss, save_model
from .unet import UNet, UNetConfig, build_unet, expected_parameter_count
from .waveunet import (WaveUNet, WaveUNetConfig, build_waveunet, default_config, input_len_for,
                       search_config, shape_calc)

__all__ = [
    "ModelGraph", "load_model", "save_model", "masked_l1_loss",
    "UNet", "UNetConfig", "build_unet", "expected_parameter_count",
    "WaveUNet", "WaveUNetConfig", "build_waveunet", "default_config", "input_len_for",
    "search_config", "shape_calc",
]
