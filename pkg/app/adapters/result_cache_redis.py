from __future__ import annotations

from typing import Any, Optional

from app.config import settings
from app.application.ports import ResultCachePort


class RedisResultCache(ResultCachePort):
    """
    Redis를 ResultCachePort로 감싼 어댑터.

    키 설계(prefix=rotnum):
      - rotnum:curve:{digest}   (STRING) -> 회전수 곡선 JSON
    """

    def __init__(self, client: Any = None):
        cfg = settings.cache
        self.key_prefix = cfg.key_prefix

        if client is None:
            import redis  # type: ignore

            client = redis.Redis(
                host=cfg.host,
                port=cfg.port,
                db=cfg.db,
                password=cfg.password,
                decode_responses=True,
            )
            # 조립 단계에서 실패를 알 수 있게 바로 한 번 찔러본다
            client.ping()
        self.client = client

    # ---------- key helpers ----------
    def _k(self, suffix: str) -> str:
        return f"{self.key_prefix}:{suffix}"

    def _curve_key(self, digest: str) -> str:
        return self._k(f"curve:{digest}")

    # ---------- port implementations ----------
    def get(self, key: str) -> Optional[str]:
        v = self.client.get(self._curve_key(key))
        if v is None:
            return None
        return v.decode("utf-8") if isinstance(v, bytes) else v

    def set(self, key: str, payload: str) -> None:
        self.client.set(self._curve_key(key), payload)
