import yaml
import os
from pathlib import Path
from dataclasses import dataclass, replace
from typing import Dict, Any, Optional

from dotenv import load_dotenv


# Environment variable -> (section, key, caster)
ENV_OVERRIDES = {
    'DLQKIT_TOL_RANK': ('tolerances', 'rank_rtol', float),
    'DLQKIT_TOL_CIRCLE': ('tolerances', 'circle', float),
    'DLQKIT_TOL_RESIDUAL': ('tolerances', 'residual', float),
    'DLQKIT_SEED': ('sampling', 'seed', int),
    'DLQKIT_LOG_DIR': ('output', 'log_dir', str),
}


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds and sampling knobs shared by every operation."""
    rank_rtol: float = 1e-10
    rank_eps_factor: Optional[float] = None
    ambiguity_band: float = 100.0
    circle: float = 1e-8
    residual: float = 1e-8
    zero_eig: float = 1e-9
    factorization: float = 1e-10
    popov_rank: float = 1e-9
    hermitian: float = 1e-10
    seed: int = 7
    popov_samples: int = 64
    unit_circle_grid: int = 256
    event_offset: float = 1e-6
    jump_delta_max: float = 1e-4
    verify_points: int = 7
    random_outside_points: int = 10
    dare_max_iter: int = 5000
    dare_tol: float = 1e-13
    refinement_steps: int = 2

    def with_overrides(self, **kwargs) -> 'Tolerances':
        """Copy with the non-None keyword values replaced."""
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


def load_yaml_config(file_path: str) -> Dict[str, Any]:
    """Load configuration from YAML file."""
    try:
        with open(file_path, 'r', encoding='utf-8') as file:
            return yaml.safe_load(file) or {}
    except FileNotFoundError:
        raise FileNotFoundError(f"Configuration file not found: {file_path}")
    except yaml.YAMLError as e:
        raise ValueError(f"Error parsing YAML file {file_path}: {e}")


def load_base_config() -> Dict[str, Any]:
    """Load base platform configuration."""
    config_path = Path(__file__).parent.parent / "config" / "base_config.yaml"
    return load_yaml_config(str(config_path))


def apply_env_overrides(config: Dict[str, Any], dotenv_path: Optional[str] = None) -> Dict[str, Any]:
    """Overlay DLQKIT_* environment variables (and a .env file) onto a config dict."""
    load_dotenv(dotenv_path=dotenv_path, override=False)

    merged = {section: dict(values or {}) for section, values in config.items()}
    for env_name, (section, key, caster) in ENV_OVERRIDES.items():
        raw = os.environ.get(env_name)
        if raw is None or raw == '':
            continue
        try:
            merged.setdefault(section, {})[key] = caster(raw)
        except ValueError:
            raise ValueError(f"Environment variable {env_name} has invalid value: {raw!r}")

    return merged


def get_merged_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """Base config, optionally overlaid by a user YAML file, then by the environment."""
    base_config = load_base_config()

    if config_path:
        user_config = load_yaml_config(config_path)
        for section, values in user_config.items():
            if isinstance(values, dict):
                base_config.setdefault(section, {}).update(values)
            else:
                base_config[section] = values

    return apply_env_overrides(base_config)


def get_tolerance_config(config: Dict[str, Any]) -> Dict[str, Any]:
    """Extract tolerance configuration."""
    return config.get('tolerances', {
        'rank_rtol': 1e-10,
        'rank_eps_factor': None,
        'ambiguity_band': 100.0,
        'circle': 1e-8,
        'residual': 1e-8,
        'zero_eig': 1e-9,
        'factorization': 1e-10,
        'popov_rank': 1e-9,
        'hermitian': 1e-10
    })


def get_sampling_config(config: Dict[str, Any]) -> Dict[str, Any]:
    """Extract sampling configuration."""
    return config.get('sampling', {
        'seed': 7,
        'popov_samples': 64,
        'unit_circle_grid': 256,
        'event_offset': 1e-6,
        'jump_delta_max': 1e-4,
        'verify_points': 7,
        'random_outside_points': 10
    })


def get_solver_config(config: Dict[str, Any]) -> Dict[str, Any]:
    """Extract solver configuration."""
    return config.get('solver', {
        'dare_max_iter': 5000,
        'dare_tol': 1e-13,
        'refinement_steps': 2
    })


def get_output_config(config: Dict[str, Any]) -> Dict[str, Any]:
    """Extract output configuration."""
    return config.get('output', {
        'log_dir': None,
        'csv_float_format': '%.12g',
        'json_indent': 2
    })


def build_tolerances(config: Dict[str, Any]) -> Tolerances:
    """Freeze the tolerance, sampling and solver sections into a Tolerances record."""
    values: Dict[str, Any] = {}
    values.update(get_tolerance_config(config))
    values.update(get_sampling_config(config))
    values.update(get_solver_config(config))

    known = Tolerances.__dataclass_fields__.keys()
    return Tolerances(**{k: v for k, v in values.items() if k in known})
