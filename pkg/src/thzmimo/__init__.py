"""Wideband THz multi-user hybrid MIMO: channel synthesis, low-resolution ADC
front end, group-sparse Bayesian channel estimation and true-time-delay
combining."""

from .config import ConfigError, PulseShape, SystemConfig, desk_profile, paper_profile
from .channel import ChannelRealization, generate_channel
from .frontend import make_pilot_frame, quantization_params, simulate_received_pilots
from .estimation import (BeamspaceEstimate, bcrlb, extract_dominant_angles, gsomp_estimate, hbg_sr_estimate,
                         mmv_ls_estimate, nmse_metric, reconstruct_channel, sbl_per_subcarrier_estimate)
from .beamforming import (TTDBeamformer, build_ttd_hybrid_combiner, dirichlet_kernel, normalized_array_gain,
                          spectral_efficiency, ttd_delays)
from .experiments import ExperimentSpec, ResultTable, parse_config, run_experiment, write_results_csv

__version__ = "0.1.0"
