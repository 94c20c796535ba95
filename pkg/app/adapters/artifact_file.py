from __future__ import annotations

import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, List, Sequence, Tuple

import numpy as np

from app.application.ports import ArtifactSinkPort, ArtifactSourcePort

logger = logging.getLogger(__name__)

# 이 경로면 파일 대신 표준 출력
STDOUT = "-"


def render_cell(v: Any) -> str:
    """CSV 한 칸. float는 최단 왕복(repr) 표기라 다시 읽으면 비트 단위로 같다."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def to_plain(doc: Any) -> Any:
    """numpy 값/튜플을 JSON 기본 타입으로."""
    if isinstance(doc, dict):
        return {str(k): to_plain(v) for k, v in doc.items()}
    if isinstance(doc, (list, tuple)):
        return [to_plain(v) for v in doc]
    if isinstance(doc, np.ndarray):
        return [to_plain(v) for v in doc.tolist()]
    if isinstance(doc, (bool, np.bool_)):
        return bool(doc)
    if isinstance(doc, np.integer):
        return int(doc)
    if isinstance(doc, (float, np.floating)):
        f = float(doc)
        # JSON에는 inf/nan이 없어서 문자열로 남긴다
        return f if math.isfinite(f) else repr(f)
    return doc


def render_json(doc: Any) -> str:
    return json.dumps(to_plain(doc), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def render_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([str(h) for h in header])
    for row in rows:
        w.writerow([render_cell(v) for v in row])
    return buf.getvalue()


class FileArtifactSink(ArtifactSinkPort, ArtifactSourcePort):
    """
    산출물을 로컬 파일(또는 "-"이면 stdout)에 쓰고 다시 읽는 어댑터.

    - UTF-8, 줄바꿈 "\\n" 고정
    - JSON은 key 정렬 + indent 2 → 같은 문서면 같은 바이트
    """

    def __init__(self, encoding: str = "utf-8"):
        self.encoding = encoding

    def _emit(self, path: str, text: str) -> None:
        if path == STDOUT:
            sys.stdout.write(text)
            sys.stdout.flush()
            return
        p = Path(path)
        if p.parent and not p.parent.exists():
            p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding=self.encoding, newline="") as f:
            f.write(text)
        logger.info("[artifact] wrote %s (%d bytes)", p, len(text.encode(self.encoding)))

    # ---------- sink ----------
    def write_csv(self, path: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        self._emit(path, render_csv(header, rows))

    def write_json(self, path: str, doc: Any) -> None:
        self._emit(path, render_json(doc))

    def write_text(self, path: str, text: str) -> None:
        self._emit(path, text if text.endswith("\n") else text + "\n")

    # ---------- source ----------
    def read_csv(self, path: str) -> Tuple[List[str], List[List[str]]]:
        with open(path, "r", encoding=self.encoding, newline="") as f:
            rows = list(csv.reader(f))
        if not rows:
            return [], []
        return rows[0], rows[1:]

    def read_json(self, path: str) -> Any:
        with open(path, "r", encoding=self.encoding) as f:
            return json.load(f)
