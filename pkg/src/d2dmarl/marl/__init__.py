from .buffer import Batch, BufferNotReady, ReplayBuffer, Transition
from .core import (
    AgentNets,
    MultiAgentTrainer,
    TrainerConfig,
    TrainingFault,
    TrainResult,
    actor_update,
    build_neighbor_index,
    critic_target,
    critic_update,
    execute,
    select_action,
    train,
    write_train_log,
)
from .prop1 import prop1_estimate
