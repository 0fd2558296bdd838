"""
Output manager for controlling debug vs report output.

In debug mode:
- Diagnostics from the numerical routines go to stdout

Otherwise:
- Diagnostics go to a log file when a log directory is configured, else nowhere
- Only the final report goes to stdout
"""

import sys
from pathlib import Path
from datetime import datetime
from typing import Optional, TextIO, Dict, Any, List

import numpy as np


class OutputManager:
    """Routes diagnostics and reports between stdout and an optional log file."""

    def __init__(self, debug_mode: bool = False, log_dir: Optional[Path] = None):
        """
        Initialize the output manager.

        Args:
            debug_mode: If True, diagnostics are printed to stdout.
            log_dir: Directory for the run log; no file is written when None.
        """
        self.debug_mode = debug_mode
        self.log_dir = Path(log_dir) if log_dir else None
        self.log_file: Optional[TextIO] = None
        self.log_file_path: Optional[Path] = None
        self.original_stdout = sys.stdout

    def _ensure_log(self) -> Optional[TextIO]:
        if self.log_file is None and self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            self.log_file_path = self.log_dir / f"dlqkit_{timestamp}.log"
            self.log_file = open(self.log_file_path, 'w', encoding='utf-8')

            self.log_file.write("dlqkit run log\n")
            self.log_file.write(f"Started: {datetime.now().isoformat()}\n")
            self.log_file.write("=" * 80 + "\n\n")
            self.log_file.flush()
        return self.log_file

    def debug_print(self, message: str, end: str = "\n"):
        """
        Print a diagnostic message.

        In debug mode: prints to stdout
        Otherwise: writes to the log file if one is configured
        """
        if self.debug_mode:
            print(message, end=end)
            return

        log = self._ensure_log()
        if log:
            log.write(message + end)
            log.flush()

    def final_print(self, message: str, end: str = "\n"):
        """Print the final report - always goes to stdout."""
        out = sys.stdout if sys.stdout is not None else self.original_stdout
        out.write(message + end)
        out.flush()

        if not self.debug_mode and self.log_file:
            self.log_file.write("\n" + "=" * 80 + "\n")
            self.log_file.write("REPORT:\n")
            self.log_file.write("=" * 80 + "\n")
            self.log_file.write(message + end)
            self.log_file.flush()

    def print_section(self, title: str, char: str = "="):
        """Print a section separator."""
        separator = char * 80
        self.debug_print(f"\n{separator}")
        self.debug_print(title)
        self.debug_print(separator)

    def close(self):
        """Close the log file if open."""
        if self.log_file:
            self.log_file.write("\n" + "=" * 80 + "\n")
            self.log_file.write(f"Completed: {datetime.now().isoformat()}\n")
            self.log_file.close()
            self.log_file = None


# Global output manager instance
_output_manager: Optional[OutputManager] = None


def initialize_output_manager(debug_mode: bool = False, log_dir: Optional[Path] = None) -> OutputManager:
    """Initialize the global output manager."""
    global _output_manager
    if _output_manager is not None:
        _output_manager.close()
    _output_manager = OutputManager(debug_mode=debug_mode, log_dir=log_dir)
    return _output_manager


def get_output_manager() -> OutputManager:
    """Get the global output manager instance (quiet default)."""
    global _output_manager
    if _output_manager is None:
        _output_manager = OutputManager(debug_mode=False, log_dir=None)
    return _output_manager


def debug_print(message: str, end: str = "\n"):
    """Convenience function for diagnostic printing."""
    get_output_manager().debug_print(message, end)


def final_print(message: str, end: str = "\n"):
    """Convenience function for report printing."""
    get_output_manager().final_print(message, end)


def format_value(value: Any) -> str:
    """Render scalars, arrays and containers for text reports."""
    if isinstance(value, np.ndarray):
        return np.array2string(value, precision=10, suppress_small=True, max_line_width=100)
    if isinstance(value, (complex, np.complexfloating)):
        if abs(value.imag) <= 1e-14 * max(1.0, abs(value)):
            return f"{value.real:.12g}"
        return f"{value.real:.12g}{value.imag:+.12g}j"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    if isinstance(value, (list, tuple)) and value and not isinstance(value[0], dict):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    return str(value)


def format_report(result: Dict[str, Any], title: str = "REPORT", include_header: bool = True) -> str:
    """
    Format a nested result dictionary as a text report.

    Args:
        result: Mapping of section name -> value or mapping
        title: Report title
        include_header: Whether to include a header

    Returns:
        Formatted report string
    """
    parts: List[str] = []

    if include_header:
        parts.append("=" * 80)
        parts.append(title)
        parts.append("=" * 80)
        parts.append("")

    for key, value in result.items():
        if isinstance(value, dict):
            parts.append(f"## {key}")
            for sub_key, sub_value in value.items():
                rendered = format_value(sub_value)
                if "\n" in rendered:
                    parts.append(f"  {sub_key}:")
                    parts.extend("    " + line for line in rendered.splitlines())
                else:
                    parts.append(f"  {sub_key}: {rendered}")
            parts.append("")
        else:
            rendered = format_value(value)
            if "\n" in rendered:
                parts.append(f"{key}:")
                parts.extend("  " + line for line in rendered.splitlines())
            else:
                parts.append(f"{key}: {rendered}")

    if include_header:
        parts.append("")
        parts.append("=" * 80)

    return "\n".join(parts)
