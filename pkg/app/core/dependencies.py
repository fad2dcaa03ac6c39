from configparser import ConfigParser, Error as ParserError
from typing import Any, Dict, Mapping, Optional, Tuple
import logging
import os

from pydantic import ValidationError

from app.core.exceptions import ConfigError
from app.models.coefficients import ModelCoefficients, TwoPhaseParams
from app.models.config import RunConfig
from app.models.grid import Grid
from app.models.transport import EntropyFunctional, EntropyKind
from app.services.eigen_service import eigen_service
from app.utils.file_utils import load_field_table, load_profile_table, resolve_path

logger = logging.getLogger(__name__)

TABULATED_FIELDS = ("growth", "division")


def read_sections(path: str) -> Dict[str, Dict[str, Any]]:
    """INI file as plain section dictionaries"""
    if not os.path.isfile(path):
        raise ConfigError(f"config file {path} not found")
    parser = ConfigParser()
    try:
        parser.read(path)
    except ParserError as e:
        raise ConfigError(f"cannot parse {path}: {e}")
    return {name: dict(parser.items(name)) for name in parser.sections()}


def _load_tables(sections: Dict[str, Dict[str, Any]], base_dir: str) -> None:
    for name in TABULATED_FIELDS:
        section = sections.get(name, {})
        if section.get("kind") == "tabulated":
            if "path" not in section:
                raise ConfigError(f"{name}.path: required for a tabulated {name}")
            section["path"] = resolve_path(section["path"], base_dir)
            section["ages"], section["contents"], section["values"] = load_field_table(section["path"])
    kernel = sections.get("kernel", {})
    if kernel.get("kind") == "tabulated":
        if "path" not in kernel:
            raise ConfigError("kernel.path: required for a tabulated kernel")
        kernel["path"] = resolve_path(kernel["path"], base_dir)
        kernel["fractions"], kernel["values"] = load_profile_table(kernel["path"], ("z", "value"))
    simulate = sections.get("simulate", {})
    if simulate.get("entropy_path"):
        simulate["entropy_path"] = resolve_path(simulate["entropy_path"], base_dir)


def describe_validation_error(error: ValidationError, sections: Mapping[str, Mapping[str, Any]]) -> str:
    """First error as 'section.key: message', dropping variant tags from the location"""
    first = error.errors()[0]
    loc = [str(part) for part in first["loc"]]
    if len(loc) > 1 and loc[1] == str(sections.get(loc[0], {}).get("kind")):
        loc.pop(1)
    return f"{'.'.join(loc)}: {first['msg']}"


def get_run_config(path: str, out: Optional[str] = None, threads: Optional[int] = None,
                   overrides: Optional[Mapping[Tuple[str, str], str]] = None) -> RunConfig:
    """Read, override and validate a run configuration"""
    sections = read_sections(path)
    for (section, key), value in (overrides or {}).items():
        sections.setdefault(section, {})[key] = value
    if out is not None:
        sections.setdefault("output", {})["directory"] = out
    if threads is not None:
        sections.setdefault("output", {})["threads"] = threads
    _load_tables(sections, os.path.dirname(os.path.abspath(path)))
    try:
        config = RunConfig.model_validate(sections)
    except ValidationError as e:
        detail = describe_validation_error(e, sections)
        logger.error(f"Invalid configuration {path}: {detail}")
        raise ConfigError(detail)
    logger.info(f"Loaded {path}: growth={config.growth.kind}, division={config.division.kind}, "
                f"kernel={config.kernel.kind}")
    return config


def get_model(config: RunConfig) -> ModelCoefficients:
    return config.model


def get_grid(config: RunConfig, model: Optional[ModelCoefficients] = None) -> Grid:
    """Grid of the run, resolving a_max = auto"""
    model = config.model if model is None else model
    section = config.grid
    a_max = section.a_max
    if a_max == "auto":
        a_max = eigen_service.resolve_age_horizon(model, section.n_x, section.n_a,
                                                  config.solver.epsilon_schedule)
    return Grid(x_max=model.x_max, a_max=float(a_max), n_x=section.n_x, n_a=section.n_a)


def get_two_phase_params(config: RunConfig) -> TwoPhaseParams:
    if config.twophase is None:
        raise ConfigError("twophase: section required for this command")
    try:
        return config.twophase.to_params()
    except ValidationError as e:
        raise ConfigError(f"twophase.{describe_validation_error(e, {})}")


def get_entropy(config: RunConfig) -> EntropyFunctional:
    section = config.simulate
    if section.entropy != EntropyKind.TABULATED:
        return EntropyFunctional(kind=section.entropy)
    u, values = load_profile_table(section.entropy_path, ("u", "value"))
    try:
        return EntropyFunctional(kind=EntropyKind.TABULATED, u=u, values=values)
    except ValidationError as e:
        raise ConfigError(f"simulate.entropy_path: {e.errors()[0]['msg']}")
