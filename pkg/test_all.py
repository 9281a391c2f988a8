import unittest
from test.tests.test_geometry import TestGeometry
from test.tests.test_directional import TestVmf, TestClutter
from test.tests.test_assignment import TestAssignment
from test.tests.test_models import TestModels
from test.tests.test_slr_filters import TestGaussianTools, TestIplf, TestTrajectoryGaussian
from test.tests.test_tpmbm import TestFilterConfig, TestRecursion, TestConsistency, TestTracker
from test.tests.test_calibration import TestCalibration
from test.tests.test_metrics import TestGospa, TestRmsGospa
from test.tests.test_sim import TestScenario, TestGenerate
from test.tests.test_files_cli import TestFrameFiles, TestCommands, TestRunConfig
from test.tests.test_benchmark import TestRunStateManager, TestBenchmarkStore, TestSignTests, TestMonteCarlo

# Run from the repository root: python test_all.py
if __name__ == "__main__":
    unittest.main()
