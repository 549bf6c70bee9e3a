# Copyright 2026 The fopkit Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Kronecker-factored Fisher blocks, the FOP update and small training runs."""

from fopkit._core import (
    Error,
    FisherBlock,
    GradientPair,
    Model,
    beta_star,
    combined_gradient,
    cosine_lr,
    eta_star,
    eta_star_raw,
    fop_layer_step,
    gen_blobs,
    gen_spirals,
    kfac_layer_step,
    load_idx,
    orthogonal_component,
    projection_scalar,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Error",
    "FisherBlock",
    "GradientPair",
    "Model",
    "beta_star",
    "combined_gradient",
    "cosine_lr",
    "eta_star",
    "eta_star_raw",
    "fop_layer_step",
    "gen_blobs",
    "gen_spirals",
    "kfac_layer_step",
    "load_idx",
    "orthogonal_component",
    "projection_scalar",
    "train",
]
