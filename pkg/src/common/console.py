"""
Stage Reporting
===============

Progress lines for the CLI, the prediction pipeline and the scene synthesiser.
Every line is tagged with the stage that produced it and kept on the reporter,
so a run's log can travel with its metadata. Printing is optional; library
computation never reports.
"""

import sys
from dataclasses import dataclass, field
from typing import List, Optional, TextIO

_ANSI = {
    'header': '\033[1m\033[96m',
    'success': '\033[92m',
    'error': '\033[91m',
    'warning': '\033[93m',
    'info': '\033[94m',
}
_END = '\033[0m'
_MARKS = {'success': '✓', 'error': '✗', 'warning': '⚠', 'info': 'ℹ'}
HEADER_WIDTH = 70


@dataclass(frozen=True)
class StageEvent:
    kind: str
    stage: Optional[str]
    text: str

    def plain(self) -> str:
        tag = f"[{self.stage}] " if self.stage else ""
        return f"{tag}{self.text}"


@dataclass
class StageReporter:
    """
    Collects StageEvents and optionally echoes them to a terminal.

    `colour=None` colours only when the stream is a tty.
    """
    echo: bool = True
    colour: Optional[bool] = None
    stream: Optional[TextIO] = None
    events: List[StageEvent] = field(default_factory=list)

    @classmethod
    def silent(cls) -> "StageReporter":
        return cls(echo=False)

    def _out(self) -> TextIO:
        return self.stream if self.stream is not None else sys.stdout

    def _paint(self, kind: str, text: str) -> str:
        use_colour = self.colour if self.colour is not None else self._out().isatty()
        return f"{_ANSI[kind]}{text}{_END}" if use_colour else text

    def _emit(self, kind: str, text: str, stage: Optional[str]):
        event = StageEvent(kind, stage, text)
        self.events.append(event)
        if self.echo:
            print(self._paint(kind, f"{_MARKS[kind]} {event.plain()}"), file=self._out())

    def header(self, title: str):
        if not self.echo:
            return
        rule = self._paint('header', "=" * HEADER_WIDTH)
        out = self._out()
        print(f"\n{rule}", file=out)
        print(self._paint('header', title.center(HEADER_WIDTH)), file=out)
        print(f"{rule}\n", file=out)

    def stage(self, stage: str, text: str):
        self._emit('info', text, stage)

    def info(self, text: str, stage: Optional[str] = None):
        self._emit('info', text, stage)

    def success(self, text: str, stage: Optional[str] = None):
        self._emit('success', text, stage)

    def warning(self, text: str, stage: Optional[str] = None):
        self._emit('warning', text, stage)

    def error(self, text: str, stage: Optional[str] = None):
        self._emit('error', text, stage)

    def log(self) -> List[str]:
        """Uncoloured event lines, oldest first."""
        return [event.plain() for event in self.events]
