"""INI-style configuration files with sections ``[problem] [model] [settings] [experiment]``."""
import configparser
import dataclasses

from ..engine import RecoverySettings
from ..io import read_matrix_csv
from ..models import (AnalysisModel, BlockSparseModel, CombinedModel, KSparseModel, LowRankModel,
                      SynthesisModel)
from ..operators import (AnalysisOperator, FiniteDifference2D, SynthesisDictionary,
                         build_finite_difference, build_local_dct)

SECTIONS = ("problem", "model", "settings", "experiment")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def load_config(path):
    """Read a config file; returns ``{section: {key: str}}`` with all four sections present."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    return {s: dict(parser[s]) if parser.has_section(s) else {} for s in SECTIONS}


def parse_config_string(text):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return {s: dict(parser[s]) if parser.has_section(s) else {} for s in SECTIONS}


def dump_config(sections):
    parser = configparser.ConfigParser(interpolation=None)
    for name in SECTIONS:
        if sections.get(name):
            parser[name] = {k: str(v) for k, v in sections[name].items()}
    lines = []
    for name in parser.sections():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in parser[name].items())
        lines.append("")
    return "\n".join(lines)


def parse_pairs(pairs):
    """``["a=1", "b=x"]`` -> ``{"a": "1", "b": "x"}``."""
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


# -- typed getters ----------------------------------------------------------------


def get_int(section, key, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return int(section[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {section[key]!r}") from exc


def get_float(section, key, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(section[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number, got {section[key]!r}") from exc


def get_list(section, key, cast, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return list(default)
    try:
        return [cast(v) for v in section[key].replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse list {section[key]!r}") from exc


# -- settings -----------------------------------------------------------------------


def settings_from_section(section, base=None):
    base = base or RecoverySettings()
    values = {}
    for f in dataclasses.fields(RecoverySettings):
        if f.name in section:
            getter = get_int if f.type in (int, "int") else get_float
            values[f.name] = getter(section, f.name)
    unknown = set(section) - {f.name for f in dataclasses.fields(RecoverySettings)}
    if unknown:
        raise ConfigError(f"unknown settings {sorted(unknown)}")
    try:
        return dataclasses.replace(base, **values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def settings_to_section(settings):
    return {k: str(v) for k, v in dataclasses.asdict(settings).items()}


# -- dictionaries and analysis operators --------------------------------------------


def dictionary_from_section(section):
    kind = section.get("dictionary", "local-dct")
    if kind == "local-dct":
        return build_local_dct(get_int(section, "image_height"), get_int(section, "image_width"),
                               get_int(section, "window"), get_int(section, "overlap"),
                               get_int(section, "excluded"))
    if kind == "file":
        return SynthesisDictionary(read_matrix_csv(section["dictionary_file"]))
    raise ConfigError(f"unknown dictionary kind {kind!r}")


def analysis_from_section(section):
    kind = section.get("analysis", "finite-difference")
    if kind == "finite-difference":
        return build_finite_difference(get_int(section, "image_height"), get_int(section, "image_width"))
    if kind == "file":
        return AnalysisOperator(read_matrix_csv(section["analysis_file"]))
    raise ConfigError(f"unknown analysis operator kind {kind!r}")


def _dictionary_section(D):
    if getattr(D, "kind", None) != "local-dct":
        raise ConfigError("only local-dct dictionaries serialize to a config")
    h, w = D.image_shape
    return {"dictionary": "local-dct", "image_height": h, "image_width": w,
            "window": D.window, "overlap": D.overlap, "excluded": D.excluded}


def _analysis_section(Omega):
    if not isinstance(Omega, FiniteDifference2D):
        raise ConfigError("only finite-difference analysis operators serialize to a config")
    h, w = Omega.image_shape
    return {"analysis": "finite-difference", "image_height": h, "image_width": w}


# -- models ------------------------------------------------------------------------


def model_from_section(section):
    """Build a :class:`UnionModel` from ``key=value`` pairs; ``variant`` picks the family."""
    variant = section.get("variant")
    try:
        if variant == "ksparse":
            return KSparseModel(get_int(section, "n"), get_int(section, "k"))
        if variant == "blocksparse":
            return BlockSparseModel(get_int(section, "n"), get_int(section, "k"), get_int(section, "J"))
        if variant == "lowrank":
            return LowRankModel(get_int(section, "n1"), get_int(section, "n2"), get_int(section, "r"))
        if variant == "synthesis":
            return SynthesisModel(dictionary_from_section(section), get_int(section, "k"),
                                  section.get("selector", "threshold"))
        if variant == "analysis":
            return AnalysisModel(analysis_from_section(section), get_int(section, "ell"))
        if variant == "combined":
            return CombinedModel([SynthesisModel(dictionary_from_section(section), get_int(section, "k"),
                                                 section.get("selector", "threshold")),
                                  AnalysisModel(analysis_from_section(section), get_int(section, "ell"))])
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"model {variant!r}: {exc}") from exc
    raise ConfigError(f"unknown model variant {variant!r}")


def model_to_section(model):
    """Inverse of :func:`model_from_section` for the serializable variants."""
    if isinstance(model, KSparseModel):
        out = {"variant": "ksparse", "n": model.n, "k": model.k}
    elif isinstance(model, BlockSparseModel):
        out = {"variant": "blocksparse", "n": model.n, "k": model.k, "J": model.J}
    elif isinstance(model, LowRankModel):
        out = {"variant": "lowrank", "n1": model.n1, "n2": model.n2, "r": model.r}
    elif isinstance(model, SynthesisModel):
        out = {"variant": "synthesis", "k": model.k, "selector": model.selector, **_dictionary_section(model.D)}
    elif isinstance(model, AnalysisModel):
        out = {"variant": "analysis", "ell": model.ell, **_analysis_section(model.Omega)}
    elif isinstance(model, CombinedModel) and len(model.parts) == 2 \
            and isinstance(model.parts[0], SynthesisModel) and isinstance(model.parts[1], AnalysisModel):
        syn, ana = model.parts
        dsec, asec = _dictionary_section(syn.D), _analysis_section(ana.Omega)
        if (dsec["image_height"], dsec["image_width"]) != (asec["image_height"], asec["image_width"]):
            raise ConfigError("dictionary and analysis operator disagree on the image shape")
        out = {"variant": "combined", "k": syn.k, "selector": syn.selector, "ell": ana.ell, **dsec, **asec}
    else:
        raise ConfigError(f"cannot serialize {model!r}")
    return {k: str(v) for k, v in out.items()}
