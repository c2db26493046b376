"""Transformation-triggered data poisoning toolkit.

Python bindings over the C++ core: spatial-transform triggers, poisoned
dataset construction, a small CNN trainer, attack evaluation and the
fine-tuning / pruning defenses.
"""

from batt._core import (
    ArchSpec,
    BattConfigError,
    BattRangeError,
    Dataset,
    DefenseCurve,
    FormatError,
    HyperParams,
    Image,
    LabeledSample,
    ParamDomain,
    PoisonConfig,
    Split,
    SynthSpec,
    TrainedModel,
    TrainingError,
    TransformKind,
    ValidationError,
    attack_success_rate,
    benign_accuracy,
    build_asr_test_set,
    build_poisoned_dataset,
    continue_training,
    fine_tune_defense,
    grad_check,
    load_cifar10_binary,
    load_checkpoint,
    load_idx,
    make_synthetic,
    predict,
    prune_defense,
    read_battds,
    resize,
    rotate,
    save_checkpoint,
    select_poison_indices,
    theta_sweep,
    train,
    translate_h,
    write_battds,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
