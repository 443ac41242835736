"""
Validation of run configuration.
The plain-text ``--config`` file and the command-line flags go through these
serializers, which coerce types, apply bounds and build the frozen config
objects used by the services.
"""

from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from dotenv import dotenv_values
from rest_framework import serializers

from valuation.services.base import ConfigurationError
from valuation.services.models.data_models import (
    FeatureMapKind,
    IngestConfig,
    MetricDirection,
    MonitorConfig,
    SelectConfig,
    SolverConfig,
)


class CommaSeparatedListField(serializers.Field):
    """A list of names written as ``a,b,c``."""

    def to_internal_value(self, data: Any) -> Tuple[str, ...]:
        if isinstance(data, (list, tuple)):
            items = data
        elif isinstance(data, str):
            items = data.split(",")
        else:
            raise serializers.ValidationError("Expected a comma-separated list")
        return tuple(item.strip() for item in items if str(item).strip())

    def to_representation(self, value: Tuple[str, ...]) -> str:
        return ",".join(value)


class ConfigSerializer(serializers.Serializer):
    """Base serializer building a frozen config from validated data."""

    def to_config(self, base: Any = None) -> Any:
        raise NotImplementedError


class IngestConfigSerializer(ConfigSerializer):
    """Serializer for CSV typing overrides"""

    target = serializers.CharField(required=False, max_length=255)
    categorical = CommaSeparatedListField(required=False)
    continuous = CommaSeparatedListField(required=False)
    max_rows = serializers.IntegerField(required=False, min_value=1)

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        overlap = set(attrs.get("categorical", ())) & set(attrs.get("continuous", ()))
        if overlap:
            raise serializers.ValidationError(
                f"Columns declared both categorical and continuous: {sorted(overlap)}"
            )
        return attrs

    def to_config(self, base: Optional[IngestConfig] = None) -> IngestConfig:
        values = {**(base.__dict__ if base else {}), **self.validated_data}
        return IngestConfig(**values)


class SolverConfigSerializer(ConfigSerializer):
    """Serializer for estimator settings"""

    quadrature_points = serializers.IntegerField(required=False, min_value=64)
    max_iters = serializers.IntegerField(required=False, min_value=1)
    grad_tol = serializers.FloatField(required=False, min_value=0.0)
    min_entropy = serializers.FloatField(required=False, max_value=0.0)
    max_blocks = serializers.IntegerField(required=False, min_value=1)
    min_block_rows = serializers.IntegerField(required=False, min_value=2)
    method = serializers.ChoiceField(required=False, choices=["mind", "gaussian"])
    feature_map = serializers.ChoiceField(
        required=False, choices=[kind.value for kind in FeatureMapKind]
    )
    seed = serializers.IntegerField(required=False, min_value=0)

    def validate_grad_tol(self, value: float) -> float:
        if value <= 0:
            raise serializers.ValidationError("grad_tol must be positive")
        return value

    def validate_min_entropy(self, value: float) -> float:
        if value >= 0:
            raise serializers.ValidationError("min_entropy must be negative")
        return value

    def to_config(self, base: Optional[SolverConfig] = None) -> SolverConfig:
        base = base or SolverConfig.from_settings()
        values = dict(self.validated_data)
        if "feature_map" in values:
            values["feature_map"] = FeatureMapKind(values["feature_map"])
        return base.with_overrides(**values)


class SelectConfigSerializer(ConfigSerializer):
    """Serializer for greedy selection stopping rules"""

    capacity = serializers.IntegerField(required=False, min_value=1)
    fraction = serializers.FloatField(required=False)

    def validate_fraction(self, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise serializers.ValidationError("fraction must lie in (0, 1]")
        return value

    def to_config(self, base: Optional[SelectConfig] = None) -> SelectConfig:
        values = {**(base.__dict__ if base else {}), **self.validated_data}
        return SelectConfig(**values)


class MonitorConfigSerializer(ConfigSerializer):
    """Serializer for the early-termination rule"""

    best = serializers.FloatField()
    direction = serializers.ChoiceField(
        choices=[direction.value for direction in MetricDirection],
        default=MetricDirection.HIGHER_IS_BETTER.value,
    )
    threshold = serializers.FloatField(default=0.0, min_value=0.0)
    patience = serializers.IntegerField(default=1, min_value=1)

    def to_config(self, base: Any = None) -> MonitorConfig:
        data = self.validated_data
        return MonitorConfig(
            best_value=data["best"],
            metric_direction=MetricDirection(data["direction"]),
            threshold=data["threshold"],
            patience=data["patience"],
        )


# Keys accepted in a --config file, by section
CONFIG_SECTIONS = {
    "ingest": IngestConfigSerializer,
    "solver": SolverConfigSerializer,
    "select": SelectConfigSerializer,
}


def read_key_value_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Read a ``key=value`` configuration file.

    Blank values are dropped.

    Args:
        path: File path

    Returns:
        Dict[str, str]: Raw values by key

    Raises:
        ConfigurationError: If the file does not exist
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Config file not found: {path}", source="config")
    return {
        key.strip(): value.strip()
        for key, value in dotenv_values(path).items()
        if value is not None and value.strip()
    }


def validate(serializer_class: type, data: Dict[str, Any], base: Any = None) -> Any:
    """
    Run a config serializer and build its config object.

    Raises:
        ConfigurationError: With the serializer errors when data is invalid
    """
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise ConfigurationError(
            f"Invalid configuration: {dict(serializer.errors)}", source="config"
        )
    return serializer.to_config(base)


def split_sections(values: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    """
    Split flat config keys into their sections.

    Raises:
        ConfigurationError: On keys no section accepts
    """
    sections: Dict[str, Dict[str, Any]] = {name: {} for name in CONFIG_SECTIONS}
    unknown = []
    for key, value in values.items():
        for name, serializer_class in CONFIG_SECTIONS.items():
            if key in serializer_class().fields:
                sections[name][key] = value
                break
        else:
            unknown.append(key)
    if unknown:
        raise ConfigurationError(f"Unknown config keys: {sorted(unknown)}", source="config")
    return sections
