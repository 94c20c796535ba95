from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional


def _env_bool(name: str, default: bool) -> bool:
    v = os.getenv(name)
    if v is None:
        return default
    return v.strip().lower() in ("1", "true", "yes", "y", "on")


def _env_int(name: str, default: int) -> int:
    v = os.getenv(name)
    if v is None or not v.strip():
        return default
    return int(v)


def _env_log_level(name: str, default: int) -> int:
    v = os.getenv(name)
    if v is None:
        return default
    level = logging.getLevelName(v.strip().upper())
    # getLevelName은 모르는 이름이면 "Level X" 문자열을 돌려준다
    return level if isinstance(level, int) else default


@dataclass(frozen=True)
class NumericsSettings:
    # 도함수 수치 sup을 잡을 격자 크기(lipschitz_bound / param_bound 기본값)
    sup_grid: int
    # param_bound에서 ω 표본을 뽑을 때 쓰는 시드 / 표본 수
    sample_seed: int
    omega_samples: int
    # 바닥계 궤도를 몇 스텝 단위로 끊어서 만들지
    block: int


@dataclass(frozen=True)
class RunSettings:
    threads: int
    log_level: int


@dataclass(frozen=True)
class CacheSettings:
    # off | memory | redis
    backend: str

    host: str
    port: int
    db: int
    password: Optional[str]
    key_prefix: str


@dataclass(frozen=True)
class AppSettings:
    numerics: NumericsSettings
    run: RunSettings
    cache: CacheSettings


@lru_cache(maxsize=1)
def get_settings() -> AppSettings:
    # ---- numerics ----
    numerics = NumericsSettings(
        sup_grid=_env_int("ROTNUM_SUP_GRID", 128),
        sample_seed=_env_int("ROTNUM_SAMPLE_SEED", 20240501),
        omega_samples=_env_int("ROTNUM_OMEGA_SAMPLES", 16),
        block=_env_int("ROTNUM_BLOCK", 4096),
    )

    # ---- run ----
    run = RunSettings(
        threads=_env_int("ROTNUM_THREADS", os.cpu_count() or 1),
        log_level=_env_log_level("ROTNUM_LOG", logging.WARNING),
    )

    # ---- cache (redis는 선택) ----
    backend = os.getenv("ROTNUM_CACHE", "memory").strip().lower()
    if _env_bool("ROTNUM_NO_CACHE", False):
        backend = "off"

    cache = CacheSettings(
        backend=backend,
        host=os.getenv("REDIS_HOST", "localhost"),
        port=_env_int("REDIS_PORT", 6379),
        db=_env_int("REDIS_DB", 0),
        password=os.getenv("REDIS_PASSWORD"),
        key_prefix=os.getenv("REDIS_KEY_PREFIX", "rotnum"),
    )

    return AppSettings(numerics=numerics, run=run, cache=cache)


# 편하게 쓰려고 모듈 전역으로 하나 만들어둠
settings = get_settings()
