import numpy as np
import pytest

from parity_audit.dataset import (
    CATEGORICAL,
    NUMERIC,
    Column,
    Dataset,
    ProtectedFeature,
    Schema,
    SynthConfig,
    synth_gen,
)


def age_schema() -> Schema:
    return Schema(
        (Column("age", NUMERIC), Column("sex", CATEGORICAL), Column("bmi", NUMERIC), Column("y", CATEGORICAL)),
        target="y",
        protected=(ProtectedFeature("age"), ProtectedFeature("sex")),
    )


def make_age_dataset(ages, labels, sexes=None, bmi=None) -> Dataset:
    n = len(ages)
    sexes = sexes if sexes is not None else ["F" if i % 2 else "M" for i in range(n)]
    bmi = bmi if bmi is not None else np.linspace(20, 35, n)
    return Dataset(age_schema(), {"age": ages, "sex": np.array(sexes, dtype=object), "bmi": bmi}, labels)


@pytest.fixture
def small_synth() -> Dataset:
    return synth_gen(
        SynthConfig(n=600, proportions={"A": 0.6, "B": 0.4}, base_rates={"A": 0.6, "B": 0.3}, leakage=0.7, seed=3)
    )


# One line per acceptance criterion, echoed again at the end of the run.
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        reporter = request.config.pluginmanager.get_plugin("terminalreporter")
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
