"""Kernelized attention, random Maclaurin feature attention and pre/post scaling batch norm."""
from .attention import (
    AttentionInput,
    DenomPolicy,
    OnDegenerate,
    count_flops,
    exact_kernelized_attention,
    rmfa,
    softmax_attention,
)
from .kernels import KernelId, coefficient, domain_radius, evaluate_closed_form, evaluate_series
from .linalg import RngStream, as_matrix, matmul, outer_accumulate, sample_rademacher
from .ppsbn import PostSbnParams, fit_post_params, ideal_restoration_params, post_sbn, pre_sbn, schoenbat
from .rmf import RmfFeatureMap, RmfParams, apply_feature_map, kernel_estimate, sample_feature_map

__all__ = [
    "AttentionInput",
    "DenomPolicy",
    "KernelId",
    "OnDegenerate",
    "PostSbnParams",
    "RmfFeatureMap",
    "RmfParams",
    "RngStream",
    "apply_feature_map",
    "as_matrix",
    "coefficient",
    "count_flops",
    "domain_radius",
    "evaluate_closed_form",
    "evaluate_series",
    "exact_kernelized_attention",
    "fit_post_params",
    "ideal_restoration_params",
    "kernel_estimate",
    "matmul",
    "outer_accumulate",
    "post_sbn",
    "pre_sbn",
    "rmfa",
    "sample_feature_map",
    "sample_rademacher",
    "schoenbat",
    "softmax_attention",
]
