from __future__ import annotations

from functools import lru_cache

import numpy as np

from app.domain.errors import ConfigurationError

MASK64 = (1 << 64) - 1

# 한 블록에서 뽑는 uniform 개수
BLOCK = 1024


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigurationError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ConfigurationError(f"seed must fit in 64 bits, got {seed}")
    return seed


def _zigzag(block: int) -> int:
    # 음수 블록(양방향 인덱스)을 겹치지 않는 자연수로 보냄
    return 2 * block if block >= 0 else -2 * block - 1


@lru_cache(maxsize=512)
def _block_uniforms(seed: int, block: int) -> np.ndarray:
    key = (_zigzag(block) << 64) | seed
    out = np.random.Generator(np.random.Philox(key=key)).random(BLOCK)
    out.setflags(write=False)
    return out


def uniforms(seed: int, indices: np.ndarray) -> np.ndarray:
    """
    (seed, index) -> [0,1) uniform, 카운터 기반.

    - 같은 (seed, index)는 언제 어디서 불러도 비트 단위로 같은 값
    - index는 음수도 허용(양방향 iid 수열)
    - 블록 키 = (block, seed) 이라 shift가 O(1)이고 블록끼리 독립적으로 병렬 생성 가능
    """
    idx = np.asarray(indices, dtype=np.int64)
    flat = idx.ravel()
    blocks = np.floor_divide(flat, BLOCK)
    offsets = flat - blocks * BLOCK

    out = np.empty(flat.shape, dtype=np.float64)
    for b in np.unique(blocks):
        sel = blocks == b
        out[sel] = _block_uniforms(seed, int(b))[offsets[sel]]
    return out.reshape(idx.shape)


def derive_seed(seed: int, task: int) -> int:
    """(seed, task id) -> 독립 64bit 시드. 태스크끼리 RNG 상태를 공유하지 않게 한다."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(int(task),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generator(seed: int, task: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, task)))
