from .metrics import nrmse, phase_lag
from .report import EvalReport, reports_to_csv
from .scenario import (
    CalibrationSettings,
    PipelineError,
    Scenario,
    Setup,
    noise_bench,
    run_scenario,
    run_sweep,
)
