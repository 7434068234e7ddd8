"""JSON run manifests rendered and parsed with :mod:`xsdata`."""
import json
import math
from dataclasses import dataclass
from dataclasses import field
from typing import Callable
from typing import ClassVar
from typing import List
from typing import Optional

from xsdata.exceptions import ParserError
from xsdata.formats.dataclass.context import XmlContext
from xsdata.formats.dataclass.parsers import JsonParser
from xsdata.formats.dataclass.serializers import JsonSerializer
from xsdata.formats.dataclass.serializers.config import SerializerConfig

DEFAULT_CONTEXT: XmlContext = XmlContext()

SCHEMA_VERSION = 1

__all__ = [
    "Artifact",
    "Diagnostic",
    "RunManifest",
    "ManifestWriter",
    "ManifestReader",
    "ManifestDecodeError",
    "SCHEMA_VERSION",
]


class ManifestDecodeError(ValueError):
    pass


@dataclass
class Artifact:
    name: str
    path: str
    sha256: str


@dataclass
class Diagnostic:
    """
    A named number of a run. ``value`` is ``None`` when the computed value
    is not finite; ``passed`` is only set for checks with a threshold.
    """

    name: str
    value: Optional[float] = None
    threshold: Optional[float] = None
    passed: Optional[bool] = None

    @classmethod
    def of(cls, name: str, value: float, threshold: Optional[float] = None) -> "Diagnostic":
        value = float(value)
        finite = math.isfinite(value)
        passed = None if threshold is None else bool(finite and value <= threshold)
        return cls(name=name, value=value if finite else None, threshold=threshold, passed=passed)


@dataclass
class RunManifest:
    command: str
    schema_version: int = SCHEMA_VERSION
    package_version: str = ""
    numpy_version: str = ""
    scipy_version: str = ""
    seed: Optional[int] = None
    threads: int = 1
    config: str = ""
    status: str = "ok"
    exit_code: int = 0
    error: Optional[str] = None
    wall_time: float = 0.0
    artifacts: List[Artifact] = field(default_factory=list)
    diagnostics: List[Diagnostic] = field(default_factory=list)

    @property
    def failed_checks(self) -> List[Diagnostic]:
        return [d for d in self.diagnostics if d.passed is False]


class ManifestWriter:
    serializer_factory: ClassVar[Callable[[], JsonSerializer]] = lambda: JsonSerializer(
        context=DEFAULT_CONTEXT, config=SerializerConfig(indent="  ")
    )
    serializer: ClassVar[Optional[JsonSerializer]] = None

    @classmethod
    def get_serializer(cls) -> JsonSerializer:
        """
        The serializer is created on first use and shared afterwards.

        :return: the JSON serializer of this class
        """
        if cls.serializer is None:
            cls.serializer = cls.serializer_factory()
        return cls.serializer

    @classmethod
    def render(cls, manifest: RunManifest) -> bytes:
        return (cls.get_serializer().render(manifest) + "\n").encode("utf-8")


class ManifestReader:
    parser_factory: ClassVar[Callable[[], JsonParser]] = lambda: JsonParser(context=DEFAULT_CONTEXT)
    parser: ClassVar[Optional[JsonParser]] = None

    @classmethod
    def get_parser(cls) -> JsonParser:
        if cls.parser is None:
            cls.parser = cls.parser_factory()
        return cls.parser

    @classmethod
    def decode(cls, data: bytes) -> RunManifest:
        """
        Parse a manifest written by :class:`ManifestWriter`.

        :param data: the raw file content
        :raises ManifestDecodeError: if the content is not a run manifest
        """
        try:
            manifest: RunManifest = cls.get_parser().from_bytes(data, clazz=RunManifest)
        except (ParserError, json.JSONDecodeError, UnicodeDecodeError) as e:
            raise ManifestDecodeError(str(e)) from e
        if manifest.schema_version != SCHEMA_VERSION:
            raise ManifestDecodeError(f"unsupported manifest schema version {manifest.schema_version}")
        return manifest
