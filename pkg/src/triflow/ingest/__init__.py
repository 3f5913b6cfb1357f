"""Readers and writers for network descriptions."""

from triflow.ingest.dss import parse_dss_subset
from triflow.ingest.native import ParseDiagnostic, ParseError, parse_native, write_native

__all__ = ["ParseDiagnostic", "ParseError", "parse_native", "write_native", "parse_dss_subset"]
