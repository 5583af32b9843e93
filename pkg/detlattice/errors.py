from __future__ import annotations


class DetLatticeError(Exception):
    pass


class ConfigError(DetLatticeError, ValueError):
    pass


class VolumeFormatError(DetLatticeError, ValueError):
    pass


class DegenerateGeometryError(DetLatticeError, ValueError):
    pass


class CellExtractionError(DetLatticeError):
    pass


class StageError(DetLatticeError):
    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
