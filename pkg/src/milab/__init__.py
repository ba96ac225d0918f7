"""Desk-scale laboratory for black-box membership-inference attacks and
gap-closing defenses (MMD set-regularization + mix-up, empirical DP-SGD)
on synthetic tabular data with a built-in MLP trainer."""

from .dataset import (Dataset, Instance, SplitPlan, MembershipBitmap,
                      BalancedEvalSet, generate_synthetic, split_three_way,
                      sample_training_set, build_balanced_eval_set)
from .model import (MlpModel, GradientSet, init_model, forward, softmax,
                    cross_entropy, backward, predict_label, predict_labels,
                    prob_vectors, save_checkpoint, load_checkpoint)
from .train import (TrainConfig, MmdConfig, mixup_batch, gaussian_kernel_matrix,
                    mmd_squared, mmd_regularized_loss, dp_sgd_step, train_model)
from .attacks import (AttackResult, AttackConfig, ShadowEnsemble, ATTACK_ORDER,
                      train_shadow_ensemble, baseline_attack, global_loss_attack,
                      global_probability_attack, global_topone_attack,
                      global_topthree_attack, class_vector_attack,
                      instance_vector_attack, kl_divergence, run_all_attacks)
from .metrics import (ModelAccuracy, BoundVerdict, accuracy, generalization_gap,
                      expected_baseline_advantage, highest_advantage, bound_check,
                      confidence_cdf_export)
from .runner import (ExperimentConfig, ExperimentReport, RunResult, ConfigError,
                     run_experiment, run_defense_comparison, run_validation_mi_check,
                     run_trainsize_sweep, desk_benchmark_config, configure_defense)

__version__ = "0.1.0"
