"""
Export Tools - Writers for experiment artifacts
JSON for configs, checkpoints and reports; CSV for traces, logs and tables.
Output never contains wall-clock values, so reruns produce identical files.
"""

import json
import logging
import math
import os
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


def _plain(value: Any) -> Any:
    """Plain JSON values; NaN and infinities become null"""
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if hasattr(value, 'to_dict'):
        return _plain(value.to_dict())
    return value


class ExportTools:
    """Tools for exporting run artifacts"""

    @staticmethod
    def _ensure_parent(output_path: str):
        parent = os.path.dirname(os.path.abspath(output_path))
        os.makedirs(parent, exist_ok=True)

    @staticmethod
    def export_to_json(data: Any, output_path: str, indent: Optional[int] = 2):
        """Export data to JSON with sorted keys; numpy values become plain numbers, NaN becomes null"""
        ExportTools._ensure_parent(output_path)
        with open(output_path, 'w', encoding='utf-8') as f:
            json.dump(_plain(data), f, indent=indent, sort_keys=True, allow_nan=False, ensure_ascii=False)
            f.write('\n')
        logger.info("Exported to JSON: %s", output_path)

    @staticmethod
    def load_json(path: str) -> Any:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)

    @staticmethod
    def export_to_csv(data, output_path: str):
        """Export a DataFrame or a list of dictionaries to CSV"""
        frame = data if isinstance(data, pd.DataFrame) else pd.DataFrame(list(data))
        if frame.empty and not len(frame.columns):
            logger.warning("No data to export to %s", output_path)
        ExportTools._ensure_parent(output_path)
        frame.to_csv(output_path, index=False)
        logger.info("Exported to CSV: %s", output_path)

    @staticmethod
    def export_trace(trace: pd.DataFrame, output_path: str):
        """Per-slot episode trace (prices, delivered rates, reward components)"""
        ExportTools.export_to_csv(trace, output_path)

    @staticmethod
    def export_report(report, output_dir: str, episodes: Optional[pd.DataFrame] = None) -> Dict[str, str]:
        """
        Write report.json and, when given, report_episodes.csv
        Returns: mapping of artifact name to path
        """
        paths = {'report': os.path.join(output_dir, 'report.json')}
        ExportTools.export_to_json(report.to_dict(), paths['report'])
        if episodes is not None:
            paths['episodes'] = os.path.join(output_dir, 'report_episodes.csv')
            ExportTools.export_to_csv(episodes, paths['episodes'])
        return paths

    @staticmethod
    def export_comparison(table: pd.DataFrame, output_dir: str) -> Dict[str, str]:
        """Write compare.csv and compare.json (records orientation)"""
        paths = {
            'csv': os.path.join(output_dir, 'compare.csv'),
            'json': os.path.join(output_dir, 'compare.json'),
        }
        ExportTools.export_to_csv(table, paths['csv'])
        records: List[Dict] = table.to_dict(orient='records')
        ExportTools.export_to_json(records, paths['json'])
        return paths

    @staticmethod
    def export_summary_text(rows: List[Dict], output_path: str, title: str = "SAFECHARGE SUMMARY"):
        """Plain-text table of the comparison rows"""
        ExportTools._ensure_parent(output_path)
        with open(output_path, 'w', encoding='utf-8') as f:
            f.write("=" * 60 + "\n")
            f.write(title + "\n")
            f.write("=" * 60 + "\n\n")
            for row in rows:
                for key, value in row.items():
                    f.write(f"  {key}: {value}\n")
                f.write("-" * 40 + "\n")
        logger.info("Exported summary: %s", output_path)
