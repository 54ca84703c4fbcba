"""Joint element-position and beamforming optimizer for a dual-sided
movable-element surface serving a multiuser MISO downlink."""

from .ao import (SolveResult, allocate_time, run_es, run_fpe_baseline,
                 run_me_ris_baseline, run_ms, run_scheme, run_ts)
from .channel import (ChannelRealization, ElementPositions, assemble_cascade,
                      sample_realization)
from .config import (AlgorithmConfig, ConfigError, SystemConfig, load_config,
                     parse_config_text)
from .experiments import SweepSpec, run_convergence_trace, run_sweep
from .rates import BeamformingState, PassiveCoefficients, wsr

__all__ = [
    "AlgorithmConfig", "BeamformingState", "ChannelRealization",
    "ConfigError", "ElementPositions", "PassiveCoefficients", "SolveResult",
    "SweepSpec", "SystemConfig", "allocate_time", "assemble_cascade",
    "load_config", "parse_config_text", "run_convergence_trace", "run_es",
    "run_fpe_baseline", "run_me_ris_baseline", "run_ms", "run_scheme",
    "run_sweep", "run_ts", "sample_realization", "wsr",
]

__version__ = "0.1.0"
