"""Black-box conditional GAN distillation: metrics, losses and the gandistill CLI."""

from ._core import (
    CheckpointError,
    ConfigError,
    DataError,
    InvalidArgument,
    IoError,
    NumericalError,
    adv_kd_g_loss,
    decay_lambda1,
    fid_correlation,
    frechet_distance,
    generate,
    high_frequency_energy,
    hinge_d_loss,
    inception_score,
    full_scale_param_count,
    pixel_kd_loss,
    render_synthetic_teacher,
    resolve_config,
    run_cli,
    sample_truncated_normal,
)

__all__ = [name for name in dir() if not name.startswith("_")]
