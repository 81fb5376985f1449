"""Leakage verification of masked gate-level netlists."""

from ._core import (
    Error,
    Fixture,
    HigherOrderReport,
    Model,
    Report,
    ReportEntry,
    SimulationError,
    Verdict,
    check_exprs,
    check_ni,
    check_sni,
    fixture_from_strings,
    gen_counterexamples,
    gen_dom_and,
    gen_isw_and,
    gen_random_circuit,
    load_fixture,
    verify,
    verify_higher_order,
)

__all__ = [
    "Error",
    "Fixture",
    "HigherOrderReport",
    "Model",
    "Report",
    "ReportEntry",
    "SimulationError",
    "Verdict",
    "check_exprs",
    "check_ni",
    "check_sni",
    "fixture_from_strings",
    "gen_counterexamples",
    "gen_dom_and",
    "gen_isw_and",
    "gen_random_circuit",
    "load_fixture",
    "verify",
    "verify_higher_order",
]
