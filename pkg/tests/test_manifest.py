#  type: ignore
import math
import unittest

from bbm_absorb.manifest import Artifact
from bbm_absorb.manifest import Diagnostic
from bbm_absorb.manifest import ManifestDecodeError
from bbm_absorb.manifest import ManifestReader
from bbm_absorb.manifest import ManifestWriter
from bbm_absorb.manifest import RunManifest


class TestDiagnostic(unittest.TestCase):
    def test_of(self) -> None:
        self.assertEqual(Diagnostic.of("mean", 1.5), Diagnostic(name="mean", value=1.5))
        self.assertTrue(Diagnostic.of("gap", 1e-9, 1e-8).passed)
        self.assertFalse(Diagnostic.of("gap", 1e-7, 1e-8).passed)
        failed = Diagnostic.of("gap", math.nan, 1e-8)
        self.assertIsNone(failed.value)
        self.assertFalse(failed.passed)


class TestManifest(unittest.TestCase):
    def setUp(self) -> None:
        self.manifest = RunManifest(
            command="dist",
            package_version="0.3.0",
            seed=12,
            config='{"command": "dist"}',
            wall_time=0.25,
            artifacts=[Artifact(name="distribution.csv", path="out/distribution.csv", sha256="ab" * 32)],
            diagnostics=[Diagnostic.of("mass_defect", 2e-7, 1e-6), Diagnostic.of("mean", math.inf)],
        )

    def test_round_trip(self) -> None:
        data = ManifestWriter.render(self.manifest)
        self.assertTrue(data.endswith(b"}\n"))
        self.assertEqual(ManifestReader.decode(data), self.manifest)

    def test_shared_serializer(self) -> None:
        self.assertIs(ManifestWriter.get_serializer(), ManifestWriter.get_serializer())
        self.assertIs(ManifestReader.get_parser(), ManifestReader.get_parser())

    def test_failed_checks(self) -> None:
        self.assertEqual(self.manifest.failed_checks, [])
        self.manifest.diagnostics.append(Diagnostic.of("cross_F", 1.0, 1e-8))
        self.assertEqual([d.name for d in self.manifest.failed_checks], ["cross_F"])

    def test_decode_errors(self) -> None:
        with self.assertRaises(ManifestDecodeError):
            ManifestReader.decode(b"not json")
        future = ManifestWriter.render(self.manifest).replace(b'"schema_version": 1', b'"schema_version": 2')
        with self.assertRaisesRegex(ManifestDecodeError, "schema version 2"):
            ManifestReader.decode(future)
