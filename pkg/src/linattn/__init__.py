"""Gram-induced kernels, NTKs, influence functions, and malleability metrics
for linearized attention, with adversarial perturbation tooling and a
reproducible experiment CLI."""

from .attacks import (
    AttackConfig,
    fgsm,
    make_gradient_provider,
    mim,
    network_input_gradient,
    pgd,
    run_attack,
)
from .attention import (
    LinearizedAttention,
    attention_kernel,
    attention_kernel_bruteforce,
    gram,
    linearized_attention,
    polynomial_kernel,
    qkv_attention_kernel,
    row_normalize,
    softmax_attention,
    taylor_error,
)
from .datasets import (
    IncoherenceReport,
    LabeledDataset,
    check_incoherence,
    generate_sphere_data,
    generate_spectrum_data,
    load_dataset,
    one_hot,
)
from .influence import (
    KernelRidge,
    StabilityReport,
    bias_decomposition,
    intrinsic_sensitivity,
    kernel_lipschitz,
    krr_fit,
    krr_predict,
    loo_influence,
    prediction_sensitivity_check,
    resolvent_bound_check,
    stability_check,
)
from .malleability import (
    HighInfluenceSet,
    MalleabilityReport,
    flip_rate,
    malleability_measure,
    run_intervention,
    select_high_influence,
    sensitivity_gap,
    spearman,
    topk_stability,
)
from .ntk import (
    NetworkParams,
    NTKDistanceCurve,
    empirical_ntk,
    infinite_relu_ntk,
    mc_ntk,
    ntk_distance,
    sequential_ntk,
)
from .spectral import (
    ConditioningReport,
    Spectrum,
    bernstein_deviation,
    condition_number,
    spectrum,
    verify_cubic_conditioning,
    verify_spectral_transfer,
    width_requirement,
)
from .train import (
    TrainConfig,
    TrainedModel,
    TwoLayerNet,
    adversarial_train,
    init_network,
    loss_landscape,
    ntk_distance_sweep,
    predict,
    train,
)

__version__ = "0.1.0"
