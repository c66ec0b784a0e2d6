from .ensemble import (DivergenceError, EnsembleModel, EpochRecord, TrainConfig,
                       bootstrap_sample, load_model, save_model, train_ensemble, train_member)
from .network import (EVAL, TRAIN, NetworkConfig, ShapeMismatch, backward, forward,
                      init_network, mse_grad, mse_loss, predict)
from .optim import AdamState, PlateauScheduler, adamw_step, plateau_scheduler
