"""Heavy tracer particle coupled to a Bose gas: direct and reduced dynamics."""

from .analysis import (AnalysisError, AsymptoticLimits, DecayFit, analysis_report,
                       decay_exponent, extrapolate_limits, g_majorant,
                       traveling_wave_distance)
from .btf import BTFError, read_btf, write_btf
from .config import ConfigError, RunConfig, parse_config, serialize_config
from .integrator import (ParticleState, Stepper, SubsonicError, Trajectory, run_simulation,
                         step, wrap_horizon)
from .model import (ModelError, ModelParams, PotentialSpec, compute_eta, compute_vmax,
                    potential_fourier, sound_speed)
from .spectral import (FieldState, GaussianPacket, SpectralGrid, SteadyField,
                       SupersonicError, ZeroField, dispersion_omega, force_on_particle,
                       group_velocity, hamiltonian, propagate_field_step,
                       steady_state_field)

__version__ = "0.1.0"
