"""PCA and sparse-PCA front-ends for image classifiers, with exact robustness
certificates for linear heads and a suite of norm-bounded adversarial attacks.
"""

from .attacks import AttackConfig, AttackResult, fgsm, mim, pgd, robust_accuracy, square_attack
from .certificates import (CertificateRecord, ThreatModel, certified_accuracy_curve,
                           certified_radius_binary, certified_radius_multiclass,
                           dual_norms, operator_norm_diagnostics, sensitivity_bound)
from .datasets import CenteringInfo, LabeledDataset, center, load_cifar_binary, load_mnist
from .heads import (LinearHead, MlpHead, TrainConfig, fit_linear_head, forward,
                    input_gradient, lipschitz_upper_bound, train_mlp)
from .projection import ProjectionModel, fit_pca, fit_spca, project, sparsity_report

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
