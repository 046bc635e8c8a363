"""Compile an ``images.yml`` fleet description into CI pipelines and docs."""

from .emit import ArtifactBundle, generate_build_config, generate_readme, write_artifacts
from .errors import (
    DirectiveError,
    FormatTypeError,
    InjectivityError,
    InterpolationError,
    KeeperError,
    SpecShapeError,
    SpecSyntaxError,
    SpecValidationError,
    TagError,
    TemplateSyntaxError,
)
from .expansion import CompiledPlan, ConcreteBuild, compile_spec, expand_matrix, resolve_build
from .interpolation import eval_template, interpolate, parse_template
from .model import KeeperSpec, parse_spec, validate_spec
from .propagation import eval_condition, eval_strategy, render_trigger
from .registry import compute_obsolete_tags, fetch_remote_tags
from .selection import make_input, parse_commit_directives, select_builds

__version__ = "0.1.0"
