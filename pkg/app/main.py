from __future__ import annotations

import logging
import sys
from typing import Optional, Sequence

from app.config import settings

from app.adapters.artifact_file import FileArtifactSink
from app.adapters.result_cache_memory import InMemoryResultCache
from app.adapters.result_cache_redis import RedisResultCache
from app.adapters.table_source_file import FileTableSource

from app.application.ports import ResultCachePort

from app.entrypoints.cli import rotnum
from app.entrypoints.cli.rotnum import CliDeps

logger = logging.getLogger("app")


def configure_logging(level: Optional[int] = None) -> None:
    # stdout은 산출물 자리라 로그는 stderr로
    logging.basicConfig(
        level=settings.run.log_level if level is None else level,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        stream=sys.stderr,
    )


def build_cache() -> Optional[ResultCachePort]:
    backend = settings.cache.backend
    if backend == "off":
        return None
    if backend == "redis":
        try:
            return RedisResultCache()
        except Exception as e:
            logger.warning("[warn] RedisResultCache init failed: %s (falling back to memory)", e)
            return InMemoryResultCache()
    if backend != "memory":
        logger.warning("[warn] unknown ROTNUM_CACHE=%r, using memory", backend)
    return InMemoryResultCache()


def build_deps() -> CliDeps:
    """
    Composition Root (조립 전용)
    - 구현체(adapters) 생성
    - entrypoints(cli)에 의존성 주입
    """
    return CliDeps(
        sink=FileArtifactSink(),
        cache=build_cache(),
        table_source=lambda path: FileTableSource(path=path),
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    return rotnum.main(argv, build_deps())


if __name__ == "__main__":
    sys.exit(main())
