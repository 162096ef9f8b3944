"""Run configuration: key=value files, environment overrides and hashing.

Precedence (lowest first): built-in defaults, the config file, environment
variables named ``RECORDBREAK_<KEY>`` and explicit overrides from the
command line.
"""
import configparser
import hashlib
import os

from . import mcmc

ENV_PREFIX = "RECORDBREAK_"


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


def _seed(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned value")
    return value


# key -> (parser, default)
SCHEMA = {
    "variant": (lambda s: mcmc.get_variant(s).name, "M2"),
    "seed": (_seed, 20240601),
    "sweeps": (int, 20000),
    "burn_in_fraction": (float, 1.0 / 3.0),
    "thin_to": (int, 500),
    "n_chains": (int, 2),
    "target_accept": (float, 0.35),
    "adapt": (_bool, True),
    "standardize": (_bool, True),
    "archive_w": (_bool, True),
    "init_range": (float, 300.0),
    "beta_var": (float, 100.0),
    "diag_scale": (float, 5.0),
    "a21_var": (float, 100.0),
    "range_shape": (float, 2.0),
    "range_scale": (float, 300.0),
    "range_x_shape": (float, 2.0),
    "range_x_scale": (_optional_float, None),
    "sv_beta_var": (float, 100.0),
    "sv_sigma2_shape": (float, 0.1),
    "sv_sigma2_scale": (float, 0.1),
    "sv_decay": (float, 1.0 / 300.0),
    "pred_draws": (int, 100),
    "grid_resolution": (float, 25.0),
    "first_year": (int, 1961),
    "cv_folds": (int, 4),
    "cv_draws": (int, 200),
    "n_sites": (int, 8),
    "T": (int, 20),
    "n_days": (int, 30),
    "generator": (str, "model"),
    "tie_rate": (float, 0.0),
    "missing_rate": (float, 0.0),
    "extent_km": (float, 400.0),
    "eff_range": (float, 300.0),
}

SAMPLER_KEYS = ("sweeps", "burn_in_fraction", "thin_to", "n_chains", "seed", "target_accept",
                "adapt", "standardize", "archive_w", "init_range")
PRIOR_KEYS = ("beta_var", "diag_scale", "a21_var", "range_shape", "range_scale", "range_x_shape",
              "range_x_scale", "sv_beta_var", "sv_sigma2_shape", "sv_sigma2_scale", "sv_decay")


def _parse(key, raw, source):
    if key not in SCHEMA:
        raise ConfigError(f"unknown configuration key {key!r} ({source})")
    parser, _ = SCHEMA[key]
    try:
        return parser(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key} ({source}): {exc}") from None


def read_config_file(path):
    """Parse a key=value file (``#`` starts a comment line)."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",), delimiters=("=",))
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_string("[run]\n" + fh.read(), source=str(path))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    return dict(cp["run"])


def load_config(path=None, overrides=None, environ=None):
    """Resolved configuration as a plain dict."""
    environ = os.environ if environ is None else environ
    cfg = {key: default for key, (_, default) in SCHEMA.items()}
    if path is not None:
        for key, raw in read_config_file(path).items():
            cfg[key] = _parse(key, raw, str(path))
    for key in SCHEMA:
        env_key = ENV_PREFIX + key.upper()
        if env_key in environ:
            cfg[key] = _parse(key, environ[env_key], env_key)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = _parse(key, value, "command line")
    validate(cfg)
    return cfg


def validate(cfg):
    if cfg["sweeps"] < 1 or cfg["thin_to"] < 1 or cfg["n_chains"] < 1:
        raise ConfigError("sweeps, thin_to and n_chains must be positive")
    if not 0.0 <= cfg["burn_in_fraction"] < 1.0:
        raise ConfigError("burn_in_fraction must lie in [0, 1)")
    burn = int(round(cfg["sweeps"] * cfg["burn_in_fraction"]))
    if cfg["sweeps"] - burn < cfg["thin_to"]:
        raise ConfigError("post burn-in sweeps are fewer than thin_to")
    if not 0.0 < cfg["target_accept"] < 1.0:
        raise ConfigError("target_accept must lie in (0, 1)")
    for key in PRIOR_KEYS:
        if cfg[key] is not None and not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive")
    if cfg["pred_draws"] < 1 or cfg["cv_draws"] < 1 or cfg["cv_folds"] < 2:
        raise ConfigError("pred_draws and cv_draws must be positive and cv_folds >= 2")


def config_hash(cfg):
    """Short SHA-256 of the resolved configuration."""
    text = "\n".join(f"{k}={cfg[k]!r}" for k in sorted(cfg))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def sampler_config(cfg, threads=1):
    return mcmc.SamplerConfig(threads=threads, **{k: cfg[k] for k in SAMPLER_KEYS})


def prior_config(cfg):
    return mcmc.PriorConfig(**{k: cfg[k] for k in PRIOR_KEYS})
