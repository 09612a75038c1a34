import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

logger = logging.getLogger(__name__)


def flatten_dict(d: Dict, parent_key: str = '', sep: str = '_') -> Dict:
    """
    Flatten a nested dictionary by concatenating nested keys with separator.

    Args:
        d: Dictionary to flatten
        parent_key: Key from parent level
        sep: Separator to use between nested keys
    Returns:
        Flattened dictionary
    """
    items = []
    for k, v in d.items():
        new_key = f"{parent_key}{sep}{k}" if parent_key else str(k)
        if isinstance(v, dict):
            items.extend(flatten_dict(v, new_key, sep=sep).items())
        elif isinstance(v, (list, tuple)):
            # Lists stay in one cell
            items.append((new_key, json.dumps(list(v))))
        else:
            items.append((new_key, v))
    return dict(items)


def to_json_text(document: Any) -> str:
    """Serialize a document deterministically (sorted keys, fixed indentation)."""
    return json.dumps(document, indent=2, sort_keys=True, allow_nan=False) + '\n'


def write_json(path: Union[str, Path], document: Any) -> Path:
    """Write a JSON document; parent directories are created on demand."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json_text(document), encoding='utf-8')
    logger.info(f"Wrote {path}")
    return path


def read_json(path: Union[str, Path]) -> Any:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def rows_to_frame(rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None) -> pd.DataFrame:
    """Flatten row dicts into a DataFrame, optionally forcing a column order."""
    frame = pd.DataFrame([flatten_dict(r) for r in rows])
    if columns is not None:
        for col in columns:
            if col not in frame.columns:
                frame[col] = None
        frame = frame[columns]
    return frame


def write_csv(path: Union[str, Path], rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None) -> Path:
    """Write flattened rows as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = rows_to_frame(rows, columns)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path
