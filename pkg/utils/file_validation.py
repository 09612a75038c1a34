import json
from pathlib import Path
from typing import Any, Optional, Tuple, Union

from config.settings import Settings


class FileValidation:
    """Checks applied to every input document before it is consumed."""

    @staticmethod
    def validate_input_file(path: Union[str, Path, None], label: str = 'input') -> Tuple[bool, Optional[str]]:
        """
        Validate an input file path.

        Args:
            path: Path to the file
            label: Human-readable name of the file used in messages

        Returns:
            Tuple[bool, Optional[str]]: (is_valid, error_message)
        """
        try:
            if not path:
                return False, f"No {label} file given"

            file_path = Path(path)
            if not file_path.exists():
                return False, f"{label} file not found: {file_path}"
            if not file_path.is_file():
                return False, f"{label} path is not a regular file: {file_path}"

            size = file_path.stat().st_size
            if size > Settings.MAX_INPUT_SIZE:
                return False, f"{label} file exceeds maximum size of {Settings.MAX_INPUT_SIZE // (1024*1024)}MB: {file_path}"
            if size == 0:
                return False, f"{label} file is empty: {file_path}"

            return True, None

        except Exception as e:
            return False, f"Error validating {label} file {path}: {str(e)}"

    @staticmethod
    def load_json_file(path: Union[str, Path, None], label: str = 'input') -> Tuple[bool, Optional[Any], Optional[str]]:
        """
        Validate and parse a JSON input file.

        Returns:
            Tuple[bool, Optional[Any], Optional[str]]: (success, document, error_message)
        """
        is_valid, error = FileValidation.validate_input_file(path, label)
        if not is_valid:
            return False, None, error
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return True, json.load(f), None
        except json.JSONDecodeError as e:
            return False, None, f"{label} file {path} is not valid JSON: {str(e)}"
