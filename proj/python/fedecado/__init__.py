# Copyright 2026 The fedecado-sim Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python front end for the flow-variable federated learning simulator."""

import json as _json

from ._fedecado import (ConfigError, FedError, gamma, quadratic_minimizer,
                        sample_active_set)
from . import _fedecado

__all__ = ["ConfigError", "FedError", "gamma", "partition", "quadratic_minimizer",
           "run", "sample_active_set", "verify"]


def _as_json(config):
    if isinstance(config, str):
        return config
    return _json.dumps(config)


def run(config):
    """Run an experiment from a config dict or JSON string and return a dict."""
    return _fedecado.run(_as_json(config))


def partition(config):
    """Return the client partition of a config."""
    return _fedecado.partition(_as_json(config))


def verify(seed=20260101):
    """Run the oracle suite; returns a list of (name, ok, detail)."""
    return _fedecado.verify(seed)
