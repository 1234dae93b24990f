"""Data-driven tuning of input-constrained recurrent-network regulators.

Virtual-reference construction from open-loop records, echo-state and gated
recurrent regulators with certified output bounds, an anti-windup parallel
integrator, a nonlinear throttle-valve surrogate bench and the experiment
pipeline tying them together.
"""

__version__ = "0.1.0"

from .signals import (Bounds, IDENTITY_SCALING, ScalingPair, Signal,
                      bounds_to_scaling, descale, scale)
from .vrft import (ReferenceModel, VirtualDataset, build_training_set,
                   invert_reference, simulate_reference, virtual_error,
                   vrft_cost)
from .loop import (AntiWindupIntegrator, BoundSplit, LoopTrace,
                   SimulationAborted, simulate_closed_loop, split_bounds)
from .esn import (EsnParams, EsnRegulator, EsnState, ReservoirConfig,
                  check_delta_iss, collect_states, esn_output_bound, esn_step,
                  generate_reservoir, run_esn, train_readout)
from .lstm import (LstmParams, LstmRegulator, LstmState, LstmTrainingConfig,
                   SimplifiedLstmParams, SimplifiedLstmRegulator,
                   TrainingDiverged, bptt_gradient, lstm_output_bound,
                   lstm_step, run_lstm, run_simplified, simplified_lstm_step,
                   train_lstm)
from .plant import (EtbSurrogatePlant, MprsConfig, PlantParams,
                    acquire_dataset, acquire_mprs_dataset,
                    default_plant_params, generate_mprs)
from .analysis import (EquilibriumNotFound, StaticCurve, TrackingMetrics,
                       equilibrium_stability, fit_percent,
                       static_characteristic, tracking_metrics)
