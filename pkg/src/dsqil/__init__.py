"""Imitation learning at desk scale.

Behavioral cloning, constant-reward soft-Q imitation, and its
discriminator-reward refinement, built on a hand-rolled float64 MLP stack
and two deterministic toy environments. See the README for the CLI and the
demos/ scripts for narrative walkthroughs of each piece.
"""

from .discriminator import ConstantDiscriminator, Discriminator, dsqil_rewards, encode_pairs
from .envs import GridWorld, PointMass, make_gridworld_expert, value_iteration
from .harness import (
    ExperimentConfig,
    emit_report,
    evaluate,
    generate_expert,
    load_policy,
    run_training,
)
from .imitation import (
    ImitationConfig,
    TrainState,
    bc_train_step,
    dsqil_train_step,
    make_train_state,
    rbc_gradient_oracle,
    run_episode,
    sqil_train_step,
)
from .nets import MlpParams, MlpSpec, adam_init, adam_step, init_params, polyak_update
from .replay import ReplayBuffer, Transition, load_dataset, save_dataset
from .sac import SacAgent, sac_train_step
from .soft_q import DiscreteAgent, bc_loss, boltzmann_policy, soft_bellman_error, soft_value

__version__ = "0.1.0"
