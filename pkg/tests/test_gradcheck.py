"""
Test Suite for the finite-difference gradient suite
"""

import pytest

from src.services.gradcheck_suite import (
    CASES,
    GRADCHECK_TOLERANCE,
    GradcheckResult,
    gradcheck_table,
    run_case,
    run_gradcheck_suite,
)
from src.utils.errors import ConfigurationError


class TestGradcheckCases:
    """Test tape gradients against central differences, one operation at a time"""

    @pytest.mark.parametrize("name", sorted(CASES))
    def test_case_within_tolerance(self, name):
        """Test that the analytic gradient matches finite differences"""
        result = run_case(name)
        assert result.error < GRADCHECK_TOLERANCE, f"{name}: {result.error:.3e}"
        assert result.passed

    def test_gated_block_covers_full_input(self):
        """Test that the gated block case differentiates every element of a 2×4×3×3 input"""
        assert run_case("gated_block").elements == 2 * 4 * 3 * 3

    def test_other_seed(self):
        """Test that the cases also pass on a different random draw"""
        assert run_case("cosine_similarity", seed=7).passed

    def test_unknown_case(self):
        """Test that an unknown case name is rejected"""
        with pytest.raises(ConfigurationError):
            run_case("attention")


class TestGradcheckSuite:
    """Test the suite runner and its report"""

    def test_subset(self):
        """Test running a named subset in order"""
        results = run_gradcheck_suite(["relu", "linear"])
        assert [r.name for r in results] == ["relu", "linear"]

    @pytest.mark.slow
    def test_full_suite(self):
        """Test that every registered case runs and passes"""
        results = run_gradcheck_suite()
        assert len(results) == len(CASES)
        assert all(r.passed for r in results)

    def test_table_marks_failures(self):
        """Test that failing rows are flagged in the report"""
        table = gradcheck_table([GradcheckResult("ok_case", 1e-9, 4, 0.01), GradcheckResult("bad_case", 0.5, 4, 0.01)])
        lines = table.splitlines()
        assert "max rel error" in lines[0]
        assert lines[-2].rstrip().endswith("ok")
        assert lines[-1].rstrip().endswith("FAIL")
