import json
import os
import shutil
import tempfile
from typing import Any

import numpy as np

from src.core.exceptions import FileOperationError


def _plain(value: Any) -> Any:
    """JSON fallback for numpy scalars and arrays"""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


class FileManager:
    """Directories, JSON documents and little-endian float32 blobs"""

    def create_directory(self, path: str) -> str:
        """Create directory and all parent directories if they don't exist"""
        try:
            os.makedirs(path, exist_ok=True)
        except OSError as e:
            raise FileOperationError(f"Failed to create directory {path}: {str(e)}")
        if not os.path.isdir(path):
            raise FileOperationError(f"Failed to create directory: {path} (path exists but is not a directory)")
        return path

    def write_text_atomic(self, path: str, text: str) -> None:
        """Write through a temp file in the same directory, then rename over the target"""
        directory = os.path.dirname(path) or "."
        self.create_directory(directory)
        fd, temp_path = tempfile.mkstemp(prefix=".tmp_", dir=directory)
        try:
            with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as f:
                f.write(text)
            os.replace(temp_path, path)
        except OSError as e:
            if os.path.exists(temp_path):
                os.remove(temp_path)
            raise FileOperationError(f"Failed to write {path}: {str(e)}")

    def write_json(self, path: str, document: Any) -> None:
        self.write_text_atomic(path, json.dumps(document, indent=2, sort_keys=True, default=_plain) + "\n")

    def read_json(self, path: str) -> Any:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return json.load(f)
        except FileNotFoundError:
            raise FileOperationError(f"File not found: {path}")
        except (OSError, ValueError) as e:
            raise FileOperationError(f"Failed to read JSON {path}: {str(e)}")

    def write_blob(self, path: str, values: np.ndarray) -> None:
        """Store an array as raw little-endian float32"""
        data = np.ascontiguousarray(values, dtype='<f4').tobytes()
        directory = os.path.dirname(path) or "."
        self.create_directory(directory)
        fd, temp_path = tempfile.mkstemp(prefix=".tmp_", dir=directory)
        try:
            with os.fdopen(fd, 'wb') as f:
                f.write(data)
            os.replace(temp_path, path)
        except OSError as e:
            if os.path.exists(temp_path):
                os.remove(temp_path)
            raise FileOperationError(f"Failed to write {path}: {str(e)}")

    def read_blob(self, path: str, count: int) -> np.ndarray:
        """Read exactly count little-endian float32 values"""
        try:
            with open(path, 'rb') as f:
                data = f.read()
        except OSError as e:
            raise FileOperationError(f"Failed to read {path}: {str(e)}")
        if len(data) != count * 4:
            raise FileOperationError(f"Blob {path} holds {len(data)} bytes, expected {count * 4}")
        return np.frombuffer(data, dtype='<f4').astype(np.float32)

    def remove_directory(self, path: str) -> bool:
        """Remove a directory and all its contents"""
        if not os.path.exists(path):
            return True
        if not os.path.isdir(path):
            raise FileOperationError(f"Not a directory: {path}")
        try:
            shutil.rmtree(path)
        except OSError as e:
            raise FileOperationError(f"Failed to remove directory: {str(e)}")
        return True

    def replace_directory(self, source: str, destination: str) -> None:
        """Move a fully written directory into place, dropping what was there"""
        if os.path.exists(destination):
            self.remove_directory(destination)
        try:
            os.replace(source, destination)
        except OSError as e:
            raise FileOperationError(f"Failed to move {source} to {destination}: {str(e)}")
