from __future__ import annotations

from typing import Optional


class RotnumError(Exception):
    """
    rotnum 전체의 루트 예외.
    - CLI는 이 계열을 잡아서 exit 1 + stderr 메시지로 바꾼다.
    """


class DomainError(RotnumError, ValueError):
    """base point가 상태공간 밖(예: 회전 좌표가 [0,1) 밖)일 때."""


class ParameterRangeError(RotnumError, ValueError):
    """파라미터 a가 구간 J 밖일 때."""


class EvaluationError(RotnumError, ArithmeticError):
    """
    관측량/도함수 값이 유한하지 않을 때.
    - index: 문제가 된 궤도 인덱스(알 수 있으면)
    """

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class PrecisionError(RotnumError, OverflowError):
    """lift 좌표가 2**52를 넘어서 double 정밀도가 깨질 때."""


class InvalidMatrixError(RotnumError, ValueError):
    """SL(2,R)이 아닌 행렬(|det - 1| > 1e-9)."""


class PreconditionError(RotnumError, ValueError):
    """정리/보조정리의 가정이 깨졌을 때(메시지에 가정을 그대로 인용)."""


class ConfigurationError(RotnumError, ValueError):
    """카탈로그에 없는 이름, 기준 에너지 누락 등 설정 문제."""


class UsageError(ConfigurationError):
    """
    CLI 플래그 문제.
    - token: 문제가 된 입력 토큰(있으면)
    """

    def __init__(self, message: str, token: Optional[str] = None):
        super().__init__(message)
        self.token = token
