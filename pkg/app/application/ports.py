from __future__ import annotations

from dataclasses import dataclass
from typing import Any, List, Optional, Protocol, Sequence, Tuple


# ===== 공통 타입 =====

@dataclass(frozen=True)
class TableRow:
    """
    표 파일 한 줄: h(a, x) 값.
    - a: 파라미터
    - x: 원 좌표 [0,1)
    - h: g̃_a(x) − x
    """
    a: float
    x: float
    h: float


# ===== Ports (인터페이스) =====

class ResultCachePort(Protocol):
    """
    회전수 곡선 같은 계산 결과를 digest 키로 저장하는 캐시 Port.
    값은 JSON 문자열; 직렬화 규칙은 유스케이스가 책임, 저장소 선택은 어댑터가 책임.
    """
    def get(self, key: str) -> Optional[str]:
        ...

    def set(self, key: str, payload: str) -> None:
        ...


class ArtifactSinkPort(Protocol):
    """
    CSV/JSON/텍스트 산출물을 쓰는 Port.
    같은 입력이면 바이트 단위로 같은 파일을 만들어야 한다.
    """
    def write_csv(self, path: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        ...

    def write_json(self, path: str, doc: Any) -> None:
        ...

    def write_text(self, path: str, text: str) -> None:
        ...


class ArtifactSourcePort(Protocol):
    """써둔 산출물을 다시 읽는 Port (round-trip 확인용)."""
    def read_csv(self, path: str) -> Tuple[List[str], List[List[str]]]:
        ...

    def read_json(self, path: str) -> Any:
        ...


class TableSourcePort(Protocol):
    """
    표로 주어진 lift(a x h 줄들)를 어디서 읽는지는 어댑터 책임.
    유스케이스는 TableRow 리스트만 받는다.
    """
    def list_rows(self) -> List[TableRow]:
        ...
