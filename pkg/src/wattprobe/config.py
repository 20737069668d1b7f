"""Config-file loading for the command-line pipeline.

A flat INI file with typed keys; unknown sections or keys are rejected so
typos fail loudly. Command-line flags override file values.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from wattprobe.features import PE_ESTIMATORS, FeatureConfig
from wattprobe.pipeline import DEFAULT_KERNELS, PipelineConfig
from wattprobe.trace import MarkerConfig


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_names(text):
    return tuple(part.strip() for part in text.split(",") if part.strip())


# section -> key -> parser
SCHEMA = {
    "general": {"dt": float, "seed": int, "rail": str},
    "markers": {
        "level_fraction": float,
        "min_duration": float,
        "reference": str,
        "quantile": float,
        "guard_seconds": float,
    },
    "features": {
        "pe_window": int,
        "pe_estimator": str,
        "word_length_max": int,
        "annihilation_epsilon": float,
        "repeats": int,
        "shape_k": int,
        "shape_window_seconds": float,
        "shape_overlap_seconds": float,
        "shape_skip_tasks": _parse_names,
        "subset": str,
    },
    "ensemble": {"two_sided": _parse_bool, "training_clean_count": int},
    "svm": {"kernels": _parse_names, "c": float, "tol": float},
}


def load_config(path) -> PipelineConfig:
    """Parse an INI config into a PipelineConfig, rejecting unknown keys."""
    parser = configparser.ConfigParser()
    text = Path(path).read_text()
    parser.read_string(text, source=str(path))

    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ValueError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ValueError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                values[(section, key)] = SCHEMA[section][key](raw)
            except ValueError as err:
                raise ValueError(f"{path}: bad value for {section}.{key}: {err}") from err

    def get(section, key, default):
        return values.get((section, key), default)

    pe_estimator = get("features", "pe_estimator", PE_ESTIMATORS[0])
    if pe_estimator not in PE_ESTIMATORS:
        raise ValueError(f"{path}: pe_estimator must be one of {PE_ESTIMATORS}")

    marker = MarkerConfig(
        level_fraction=get("markers", "level_fraction", 0.85),
        min_duration=get("markers", "min_duration", 2.0),
        reference=get("markers", "reference", "quantile"),
        quantile=get("markers", "quantile", 0.99),
    )
    features = FeatureConfig(
        pe_window=get("features", "pe_window", 6),
        pe_estimator=pe_estimator,
        word_length_max=get("features", "word_length_max", 3),
        annihilation_epsilon=get("features", "annihilation_epsilon", 0.05),
        repeats=get("features", "repeats", 100),
        shape_k=get("features", "shape_k", 4),
        shape_window_seconds=get("features", "shape_window_seconds", 3.0),
        shape_overlap_seconds=get("features", "shape_overlap_seconds", 1.5),
        shape_skip_tasks=get("features", "shape_skip_tasks", ("idle",)),
    )
    return PipelineConfig(
        dt=get("general", "dt", 0.01),
        rail=get("general", "rail", "+12V CPU"),
        marker=marker,
        guard_seconds=get("markers", "guard_seconds", 0.25),
        features=features,
        feature_subset=get("features", "subset", "all"),
        two_sided=get("ensemble", "two_sided", False),
        training_clean_count=get("ensemble", "training_clean_count", 10),
        svm_kernels=get("svm", "kernels", DEFAULT_KERNELS),
        svm_c=get("svm", "c", 1.0),
        svm_tol=get("svm", "tol", 1e-3),
        seed=get("general", "seed", 8),
    )
