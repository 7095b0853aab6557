from .analysis_service import AnalysisService
from .control_service import ControlService
from .export_service import ExportService
from .scenario_service import builtin_scenarios, run_scenario, sweep

__all__ = ['AnalysisService', 'ControlService', 'ExportService', 'builtin_scenarios', 'run_scenario', 'sweep']
