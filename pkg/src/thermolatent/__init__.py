"""Structured latent imaging for active-thermography sequences.

Pipeline: load or synthesize a frame stack, flatten and standardize the
per-pixel temporal signals, fit a truncated PCA basis, train an
autoencoder whose latent space is steered onto the PCA axes, and score
the resulting latent images with contrast, SNR, and IoU metrics.
"""

from .ae import (
    AdamState,
    BatchGradients,
    Network,
    NetworkConfig,
    TrainConfig,
    TrainReport,
    adam_step,
    backward,
    decode,
    encode,
    init_network,
    latent_images,
    load_network,
    loss_kd,
    loss_rec,
    loss_total,
    mean_cosine,
    save_network,
    train,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateRegionError,
    MaskError,
    ModelFormatError,
    NonFiniteDataError,
    PgmFormatError,
    SpecimenError,
    ThermoLatentError,
    TrainingDivergenceError,
    TsfFormatError,
    TsfTruncatedError,
)
from .metrics import (
    DefectMetrics,
    MetricReport,
    RegionMask,
    contrast,
    iou,
    normalize_unit,
    read_mask,
    score_image,
    snr_db,
)
from .pca import (
    ComponentImage,
    PcaModel,
    component_image,
    fit_pca,
    jacobi_eigh,
    left_vectors,
    load_model,
    project_latents,
    save_model,
)
from .sequence import (
    PixelMatrix,
    StandardizationStats,
    ThermalSequence,
    load_sequence,
    raster_unflatten,
    reshape_raster,
    standardize,
    to_frames,
    write_sequence,
)
from .synth import (
    DefectSpec,
    GroundTruth,
    SpecimenSpec,
    generate,
    ground_truth_masks,
    slab_surface_temp,
    standard_specimen,
)

__version__ = "0.1.0"
