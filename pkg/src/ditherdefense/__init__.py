"""Error-diffusion dithering as an adversarial input defense.

The package provides multi-level Floyd-Steinberg dithering and uniform
quantization (dither), image plumbing (imagecore), Gaussian blur and
transform pipelines (filters), a small hand-differentiated classifier
(tinymodel), PGD / MI-FGSM / SIA attacks with a quantization-aware informed
mode (attacks), and a synthetic-data evaluation harness (dataset, evaluate,
sweep) with a CLI (cli).
"""

__version__ = "0.1.0"

from .dither import (
    FLOYD_STEINBERG,
    DiffusionKernel,
    QuantSpec,
    fs_dither,
    fs_dither_gray,
    quantize_uniform,
)
from .filters import BlurSpec, TransformPipeline, gaussian_blur, gaussian_kernel, pipeline_from_config
from .imagecore import hflip, load_image, psnr, rotate, save_image, to_grayscale, vflip
from .tinymodel import (
    CrossEntropyLoss,
    MarginLoss,
    NegCosineLoss,
    TinyModel,
    forward,
    init_model,
    loss_and_input_gradient,
    train,
)
from .attacks import AttackConfig, AttackResult, SiaParams, SteConfig, mifgsm, pgd, run_attack, sia
from .dataset import CLASS_NAMES, DatasetParams, SyntheticDataset, generate_dataset
from .evaluate import evaluate_accuracy, evaluate_retrieval_map
from .sweep import ExperimentGrid, EvalReport, emit_report, informed_worst_case, parse_grid, run_grid

__all__ = [
    "__version__",
    "QuantSpec", "DiffusionKernel", "FLOYD_STEINBERG",
    "quantize_uniform", "fs_dither", "fs_dither_gray",
    "BlurSpec", "gaussian_kernel", "gaussian_blur",
    "TransformPipeline", "pipeline_from_config",
    "load_image", "save_image", "hflip", "vflip", "rotate", "to_grayscale", "psnr",
    "TinyModel", "init_model", "forward", "loss_and_input_gradient", "train",
    "CrossEntropyLoss", "NegCosineLoss", "MarginLoss",
    "AttackConfig", "SteConfig", "SiaParams", "AttackResult",
    "pgd", "mifgsm", "sia", "run_attack",
    "DatasetParams", "SyntheticDataset", "CLASS_NAMES", "generate_dataset",
    "evaluate_accuracy", "evaluate_retrieval_map",
    "ExperimentGrid", "EvalReport", "parse_grid", "run_grid",
    "emit_report", "informed_worst_case",
]
