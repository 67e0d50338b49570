"""Channel-wise subband music source separation toolkit."""

from .cirm import CirmGradients, NetworkOutput, apply_cirm, cirm_gradients, identity_output
from .filterbank import (
    FilterBank,
    ReconReport,
    SubbandSignal,
    analysis,
    decimate,
    design_filterbank,
    measure_reconstruction,
    synthesis,
    zero_insert,
)
from .metrics import (
    energy_conservation_loss,
    evaluation_report,
    l1_loss,
    sdr_framewise_median,
    sdr_global,
)
from .pipeline import IdentityModel, desegment, instrumental_residual, segment, separate
from .resunet import (
    PRESETS,
    Model,
    ModelConfig,
    WeightStore,
    build,
    count_layers,
    init_random,
    load_weights,
    model_from_store,
    read_store,
    save_weights,
    write_store,
)
from .spectral import ComplexSpectrogram, MagPhase, from_magphase, istft, stft, to_magphase
from .wave_io import Waveform, read_wav, write_wav

__version__ = "0.1.0"

__all__ = [
    "Waveform",
    "read_wav",
    "write_wav",
    "FilterBank",
    "SubbandSignal",
    "ReconReport",
    "decimate",
    "zero_insert",
    "design_filterbank",
    "analysis",
    "synthesis",
    "measure_reconstruction",
    "ComplexSpectrogram",
    "MagPhase",
    "stft",
    "istft",
    "to_magphase",
    "from_magphase",
    "NetworkOutput",
    "CirmGradients",
    "apply_cirm",
    "cirm_gradients",
    "identity_output",
    "ModelConfig",
    "Model",
    "WeightStore",
    "PRESETS",
    "build",
    "count_layers",
    "init_random",
    "save_weights",
    "load_weights",
    "write_store",
    "read_store",
    "model_from_store",
    "segment",
    "desegment",
    "separate",
    "instrumental_residual",
    "IdentityModel",
    "l1_loss",
    "energy_conservation_loss",
    "sdr_global",
    "sdr_framewise_median",
    "evaluation_report",
]
