from .blocks import (ALPHA, DELTA, CouplingPair, Flatten, LogitPreprocess, Permute, Split, Squeeze,
                     clamp_scale, coupling_forward, coupling_inverse, merge, split_merge, squeeze,
                     unsqueeze)
from .estimator import NormalizingFlow, exponential_lr, sample, train_flow
from .model import FlowModel, build_flow, flow_forward, flow_inverse, nll

__all__ = [
    "ALPHA", "DELTA", "CouplingPair", "Flatten", "FlowModel", "LogitPreprocess", "NormalizingFlow",
    "Permute", "Split", "Squeeze", "build_flow", "clamp_scale", "coupling_forward",
    "coupling_inverse", "exponential_lr", "flow_forward", "flow_inverse", "merge", "nll", "sample",
    "split_merge", "squeeze", "train_flow", "unsqueeze",
]
