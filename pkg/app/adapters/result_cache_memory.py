from __future__ import annotations

from threading import RLock
from typing import Dict, Optional

from app.application.ports import ResultCachePort


class InMemoryResultCache(ResultCachePort):
    """
    프로세스 메모리에 계산 결과(JSON 문자열)를 저장하는 어댑터.
    스윕 워커 스레드들이 같이 쓰므로 락으로 감싼다.
    """

    def __init__(self):
        self._lock = RLock()
        self._items: Dict[str, str] = {}

    def get(self, key: str) -> Optional[str]:
        with self._lock:
            return self._items.get(key)

    def set(self, key: str, payload: str) -> None:
        with self._lock:
            self._items[key] = payload

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)
