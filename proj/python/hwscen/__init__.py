"""Python access to the hwscen core: metrics, quantisation, clustering and the pipeline."""

import json
from pathlib import Path

from ._hwscen import (
    HwscenError,
    beta,
    cluster_entropy,
    detect_longitudinal,
    detection_from_counts,
    hierarchical,
    kmeans,
    quantize,
    v_egg,
)
from . import _hwscen

__all__ = [
    "HwscenError",
    "beta",
    "cluster_entropy",
    "default_config",
    "detect_longitudinal",
    "detection_from_counts",
    "gradcheck",
    "hierarchical",
    "kmeans",
    "quantize",
    "run_pipeline",
    "v_egg",
]


def default_config():
    return json.loads(_hwscen._default_config())


def run_pipeline(out_dir, config=None, overrides=()):
    """Runs every stage into out_dir and returns the parsed report.json."""
    text = "" if config is None else json.dumps(config)
    _hwscen._run_pipeline(str(out_dir), text, list(overrides))
    return json.loads((Path(out_dir) / "report.json").read_text())


def gradcheck(out_json, config=None):
    text = "" if config is None else json.dumps(config)
    _hwscen._run_gradcheck(str(out_json), text)
    return json.loads(Path(out_json).read_text())
