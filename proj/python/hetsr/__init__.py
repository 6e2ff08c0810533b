"""x4 super-resolution with heterogeneous-kernel convolutions."""

from ._hetsr import (
    ConfigError,
    ShapeError,
    analyze,
    config_keys,
    degrade_bicubic,
    format_config,
    gradient_cosine,
    het_conv_reduction,
    load_image,
    psnr,
    save_image,
    ssim,
    super_resolve,
    train,
    upscale_bicubic,
)

__all__ = [
    "ConfigError",
    "ShapeError",
    "analyze",
    "config_keys",
    "degrade_bicubic",
    "format_config",
    "gradient_cosine",
    "het_conv_reduction",
    "load_image",
    "psnr",
    "save_image",
    "ssim",
    "super_resolve",
    "train",
    "upscale_bicubic",
]
