# Copyright 2026 The PLEDI Authors
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

"""Python bindings for the pledi C++ core."""

from ._pledi import (  # noqa: F401
    DivergenceError,
    Model,
    cfg_combine,
    cosine_alpha_bar,
    dual_cfg_combine,
    generate_corpus,
    normalized_score,
    oracle_reward,
    validate_config,
    win_rate,
)

__all__ = [
    "DivergenceError",
    "Model",
    "cfg_combine",
    "cosine_alpha_bar",
    "dual_cfg_combine",
    "generate_corpus",
    "normalized_score",
    "oracle_reward",
    "validate_config",
    "win_rate",
]
