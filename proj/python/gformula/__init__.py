"""Parametric g-formula estimation engine.

Thin wrapper over the C++ core: counterfactual risks and means under
time-varying treatment strategies from longitudinal data, with bootstrap
inference and competing-event handling.
"""

import json as _json

try:
    from ._gformula import (  # type: ignore
        GFormulaError,
        PanelData,
        aalen_johansen_risk,
        empirical_eof_mean,
        fit_binomial,
        normalize_formula,
        product_limit_risk,
        rcs_basis,
        run_config_string_to_json,
        run_to_json,
        validate_to_json,
        __version__,
    )
except ImportError:  # in-tree build: the extension sits next to the package
    from _gformula import (  # type: ignore
        GFormulaError,
        PanelData,
        aalen_johansen_risk,
        empirical_eof_mean,
        fit_binomial,
        normalize_formula,
        product_limit_risk,
        rcs_basis,
        run_config_string_to_json,
        run_to_json,
        validate_to_json,
        __version__,
    )

__all__ = [
    "GFormulaError",
    "PanelData",
    "aalen_johansen_risk",
    "empirical_eof_mean",
    "fit_binomial",
    "normalize_formula",
    "product_limit_risk",
    "rcs_basis",
    "run",
    "run_config",
    "validate",
    "__version__",
]


def run(config_path, output_dir=None, seed=None, workers=None):
    """Run an analysis from a config file; returns the result document as a dict."""
    return _json.loads(run_to_json(config_path, output_dir, seed, workers))


def run_config(config, output_dir=None, seed=None, workers=None):
    """Run an analysis from a config dict (or JSON string)."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _json.loads(run_config_string_to_json(config, output_dir, seed, workers))


def validate(config):
    """Validate a config dict (or JSON string); returns a list of findings."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _json.loads(validate_to_json(config))
