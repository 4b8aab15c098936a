"""Neural-network surrogates for small numeric code regions."""
from .datagen import Dataset, NormSpec, gen_lj_dataset, gen_newton_dataset, read_dataset, split, write_dataset
from .kernels import (AtomBox, LJParams, NewtonConfig, NewtonResult, QuadraticEq, build_neighbor_lists,
                      lj_force_sweep, lj_pair_force, lj_potential, newton_solve)
from .mlp import (ActivationKind, GradientSet, MlpModel, Topology, TrainConfig, backward, forward,
                  init_model, l2_loss, load_model, save_model, sgd_momentum_step)

__version__ = "0.1.0"
