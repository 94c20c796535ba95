from __future__ import annotations

from pathlib import Path
from typing import List

from app.application.ports import TableRow, TableSourcePort
from app.domain.errors import ConfigurationError


class FileTableSource(TableSourcePort):
    """
    lift 표를 텍스트 파일에서 읽어오는 어댑터.

    - 한 줄에 "a x h" (공백 구분)
    - 빈 줄 무시
    - 주석(# ...) 무시 (줄 끝 주석 포함)
    - 상대 경로는 현재 디렉터리, 없으면 프로젝트 루트 기준
    """

    def __init__(self, path: str, encoding: str = "utf-8"):
        p = Path(path)

        if not p.is_absolute() and not p.exists():
            project_root = Path(__file__).resolve().parents[2]
            p = (project_root / p).resolve()

        self.path = p
        self.encoding = encoding

    def list_rows(self) -> List[TableRow]:
        if not self.path.exists():
            raise ConfigurationError(f"table file not found: {self.path}")

        lines = self.path.read_text(encoding=self.encoding).splitlines()

        out: List[TableRow] = []
        for lineno, line in enumerate(lines, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue

            parts = s.split()
            if len(parts) != 3:
                raise ConfigurationError(
                    f"{self.path}:{lineno}: expected 'a x h', got {line.strip()!r}"
                )
            try:
                a, x, h = (float(v) for v in parts)
            except ValueError:
                raise ConfigurationError(
                    f"{self.path}:{lineno}: malformed number in {line.strip()!r}"
                ) from None

            out.append(TableRow(a=a, x=x, h=h))

        if not out:
            raise ConfigurationError(f"table file has no rows: {self.path}")
        return out
