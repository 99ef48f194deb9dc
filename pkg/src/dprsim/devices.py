"""Bundled device configurations, one per workload family."""

from __future__ import annotations

import json
from importlib import resources

from .fabric import ConfigError, Device, DeviceConfig, build_device

BUNDLED = ("bram", "dsp", "mixed")


def bundled_config(name: str) -> DeviceConfig:
    if name not in BUNDLED:
        raise ConfigError(f"no bundled device {name!r}; choose from {', '.join(BUNDLED)}")
    text = resources.files("dprsim").joinpath("configs", f"workload_{name}.json").read_text()
    return DeviceConfig.from_dict(json.loads(text))


def bundled_device(name: str) -> Device:
    return build_device(bundled_config(name))
