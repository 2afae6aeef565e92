"""Compile declarative model-check specifications into chart specifications."""

__version__ = "0.1.0"

from vmcheck.errors import CompileError, DataError, ModelError, SpecError, VmcError  # noqa: E402
from vmcheck.tables import DrawsTable, ObservedTable, read_draws, read_observed, write_draws  # noqa: E402
from vmcheck.models import ModelBundle, bundle_from_json, bundle_to_json  # noqa: E402
from vmcheck.compiler import compile_spec, emit, parse_spec, validate_output  # noqa: E402
from vmcheck.presets import PRESET_IDS, preset  # noqa: E402

__all__ = [
    "__version__",
    "VmcError",
    "DataError",
    "ModelError",
    "SpecError",
    "CompileError",
    "ObservedTable",
    "DrawsTable",
    "read_observed",
    "read_draws",
    "write_draws",
    "ModelBundle",
    "bundle_to_json",
    "bundle_from_json",
    "parse_spec",
    "compile_spec",
    "emit",
    "validate_output",
    "PRESET_IDS",
    "preset",
]
