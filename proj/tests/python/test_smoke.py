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


import json

import numpy as np
import pytest

import pledi


def test_cosine_schedule_is_decreasing():
    ab = pledi.cosine_alpha_bar(100)
    assert len(ab) == 100
    assert all(a > b for a, b in zip(ab, ab[1:]))
    assert 0.0 < ab[-1] < ab[0] < 1.0


def test_guidance_probes():
    one = np.ones((1, 1))
    zero = np.zeros((1, 1))
    assert pledi.cfg_combine(2 * one, one, 0.6)[0, 0] == pytest.approx(2.6)
    assert pledi.dual_cfg_combine(one, zero, zero, 0.6, 0.0)[0, 0] == pytest.approx(1.6)
    assert pledi.dual_cfg_combine(2 * one, zero, one, 0.0, 0.6)[0, 0] == pytest.approx(
        pledi.cfg_combine(2 * one, one, 0.6)[0, 0])


def test_normalized_score_endpoints():
    assert pledi.normalized_score(7.5, 2.5, 7.5) == 100.0
    assert pledi.normalized_score(2.5, 2.5, 7.5) == 0.0
    assert pledi.normalized_score(5.0, 2.5, 7.5) == 50.0


def test_corpus_and_oracle():
    corpus = pledi.generate_corpus(6, 10, 2, 1)
    assert len(corpus) == 6
    states = np.asarray(corpus[0]["states"])
    actions = np.asarray(corpus[0]["actions"])
    assert states.shape == (10, 2)
    seg = np.hstack([states[:4], actions[:4]])
    expected = np.linalg.norm(actions[:4], axis=1).mean()
    assert pledi.oracle_reward(seg, "speed+") == pytest.approx(expected)
    assert pledi.oracle_reward(seg, "speed-") == pytest.approx(-expected)


def test_config_validation():
    filled = json.loads(pledi.validate_config("{}"))
    assert filled["diffusion"]["steps"] == 100
    with pytest.raises(ValueError, match="sead"):
        pledi.validate_config('{"sead": 1}')
