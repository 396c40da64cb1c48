from typing import Optional


class SkillMoveError(Exception):
    """Base exception for the move prediction toolkit"""
    pass

class FenError(SkillMoveError):
    """Error for malformed FEN text"""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field

class IllegalMoveError(SkillMoveError):
    """Error for moves that are not legal in a position"""

    def __init__(self, move: str, reason: str):
        super().__init__(f"illegal move {move}: {reason}")
        self.move = move
        self.reason = reason

class MoveIndexError(SkillMoveError):
    """Error for indices outside the move vocabulary"""
    pass

class EncodingError(SkillMoveError):
    """Error for positions that violate the encoder contract"""
    pass

class PgnError(SkillMoveError):
    """Error for unusable PGN input"""
    pass

class ShardError(SkillMoveError):
    """Error for shard files that cannot be read"""
    pass

class ModelError(SkillMoveError):
    """Error for model configuration or input problems"""
    pass

class BucketRangeError(ModelError):
    """Error for skill buckets outside the embedding table"""
    pass

class NonFiniteError(ModelError):
    """Error for NaN or infinite values, named by parameter path"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{message} ({path})" if path else message)
        self.path = path

class CheckpointError(SkillMoveError):
    """Error for checkpoint save/load failures"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{message}: {path}" if path else message)
        self.path = path

class TrainingError(SkillMoveError):
    """Error for aborted training runs"""
    pass

class EngineError(SkillMoveError):
    """Error for failures of the external UCI engine"""
    pass

class EngineTimeoutError(EngineError):
    """Error for engine searches that did not finish in time"""
    pass

class EngineProtocolError(EngineError):
    """Error for UCI protocol violations"""
    pass

class EngineCacheMissError(EngineError):
    """Error for replay-mode lookups missing from the cache"""
    pass

class ConceptError(SkillMoveError):
    """Error for concepts that cannot be computed"""
    pass

class ProbeError(SkillMoveError):
    """Error for probe fits on degenerate data"""
    pass

class ConfigError(SkillMoveError):
    """Error for invalid run configuration"""
    pass

class FileOperationError(SkillMoveError):
    """Error for file operations"""
    pass
