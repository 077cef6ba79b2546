"""Multi-domain text classification toolkit.

Trains a shared-private classifier across M domains with a joint
(class, domain) adversarial discriminator, entropy minimization, and
virtual adversarial training, on a small reverse-mode autodiff core.
"""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor, backward, grad_check
from .data import (DomainDataset, FoldSpec, SyntheticScenario, generate_synthetic,
                   kfold_split, load_domain, misalignment_scenario, save_domain)
from .losses import (JointLabel, LossWeights, build_joint_label, classification_loss,
                     entropy_loss, joint_adversarial_loss, kl_divergence)
from .model import (ModelConfig, SharedPrivateModel, forward_classifier,
                    forward_discriminator, init_model, load_checkpoint,
                    save_checkpoint)
from .training import (AdamState, DomainBatch, OptimizerState, StepMetrics,
                       TrainConfig, adam_update, evaluate, fit, pseudo_label,
                       train_step)
from .vat import VatConfig, vat_loss, vat_perturbation

__all__ = [
    "Tape", "Tensor", "backward", "grad_check",
    "DomainDataset", "FoldSpec", "SyntheticScenario", "generate_synthetic",
    "kfold_split", "load_domain", "misalignment_scenario", "save_domain",
    "JointLabel", "LossWeights", "build_joint_label", "classification_loss",
    "entropy_loss", "joint_adversarial_loss", "kl_divergence",
    "ModelConfig", "SharedPrivateModel", "forward_classifier",
    "forward_discriminator", "init_model", "load_checkpoint", "save_checkpoint",
    "AdamState", "DomainBatch", "OptimizerState", "StepMetrics", "TrainConfig",
    "adam_update", "evaluate", "fit", "pseudo_label", "train_step",
    "VatConfig", "vat_loss", "vat_perturbation",
]
