"""Hybrid and analog-only multiuser beamforming for partially-connected mmWave massive MIMO."""

from .amm import AmmConfig, AngleRange, Codebook, beam_sweep, build_codebook, run_amm
from .array_channel import (ChannelRealization, PathComponent, SystemConfig, generate_channel,
                            generate_channels, steering_vector, subarray_steering)
from .baselines import run_fully_digital, run_tsh
from .beamformers import AnalogBeamformer, DigitalBeamformer, FullyDigitalBeamformer
from .exceptions import ConfigError, NumericalError, ParameterError
from .metrics import RateReport, beam_pattern, nulling_depth, sum_rate
from .pwmmse import run_pwmmse

__version__ = "0.1.0"
