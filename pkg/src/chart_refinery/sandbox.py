"""Execute plotting scripts in an isolated interpreter subprocess.

Each render gets a fresh temporary working directory, a scrubbed
environment, a hard wall-clock timeout, and an instrumented script that
forces a non-interactive backend and saves the current figure to a known
filename. All failure modes come back as RenderResult statuses; the only
exception raised is SandboxMisconfigured for an unusable interpreter or
working root.

Isolation is process-level (temp dir + env allowlist + in-process socket
guard when networking is disallowed). That is deliberate desk-scale
isolation: native extensions could bypass the socket guard, and callers who
need stronger guarantees should point interpreter_path at a containerized
shim.
"""

from __future__ import annotations

import logging
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidImage, SandboxMisconfigured
from .models import ChartImage, ChartSpec, RenderResult, RenderStatus

logger = logging.getLogger(__name__)

OUTPUT_BASENAME = "__output__"
STDERR_EXCERPT_BYTES = 4096
DEFAULT_POOL_SIZE = 4

_ENV_PASSTHROUGH = ("PATH", "LANG", "LC_ALL", "SYSTEMROOT", "LD_LIBRARY_PATH")

_PREAMBLE = """\
import matplotlib
matplotlib.use("Agg")
"""

_NETWORK_GUARD = """\
import socket as __cr_socket
def __cr_no_network(*args, **kwargs):
    raise OSError("network access is disabled in the render sandbox")
__cr_socket.socket.connect = __cr_no_network
__cr_socket.create_connection = __cr_no_network
"""

_POSTAMBLE_PNG = f"""\
import matplotlib.pyplot as __cr_plt
__cr_plt.gcf().savefig("{OUTPUT_BASENAME}.png", dpi={{dpi}})
"""

_POSTAMBLE_SVG = f"""\
__cr_plt.gcf().savefig("{OUTPUT_BASENAME}.svg")
"""


@dataclass
class SandboxConfig:
    interpreter_path: str = sys.executable
    timeout_s: float = 20.0
    max_output_bytes: int = 20 * 1024 * 1024
    workdir_root: str = field(default_factory=tempfile.gettempdir)
    allow_network: bool = False
    capture_format: str = "png"  # or "svg" (saves both; the PNG stays the raster capture)
    dpi: int = 150

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.capture_format not in ("png", "svg"):
            raise ValueError("capture_format must be 'png' or 'svg'")


class RenderPool:
    """Bounds the number of concurrently running render subprocesses."""

    def __init__(self, size: int = DEFAULT_POOL_SIZE):
        self._sem = threading.BoundedSemaphore(size)

    def __enter__(self):
        self._sem.acquire()
        return self

    def __exit__(self, *exc):
        self._sem.release()
        return False


_default_pool = RenderPool()


def instrument_script(
    source: str,
    capture_format: str = "png",
    dpi: int = 150,
    allow_network: bool = False,
) -> str:
    """Wrap source with the backend-forcing preamble and figure-saving postamble."""
    parts = [_PREAMBLE]
    if not allow_network:
        parts.append(_NETWORK_GUARD)
    parts.append(source)
    if not source.endswith("\n"):
        parts.append("\n")
    parts.append(_POSTAMBLE_PNG.format(dpi=dpi))
    if capture_format == "svg":
        parts.append(_POSTAMBLE_SVG)
    return "".join(parts)


def _scrubbed_env(workdir: Path) -> dict[str, str]:
    env = {key: os.environ[key] for key in _ENV_PASSTHROUGH if key in os.environ}
    env.update(
        HOME=str(workdir),
        TMPDIR=str(workdir),
        MPLCONFIGDIR=str(workdir),
        MPLBACKEND="Agg",
        PYTHONNOUSERSITE="1",
    )
    return env


def _check_config(cfg: SandboxConfig) -> None:
    interpreter = Path(cfg.interpreter_path)
    if not interpreter.is_file() or not os.access(interpreter, os.X_OK):
        raise SandboxMisconfigured(f"interpreter {cfg.interpreter_path!r} is not an executable file")
    root = Path(cfg.workdir_root)
    if not root.is_dir() or not os.access(root, os.W_OK):
        raise SandboxMisconfigured(f"workdir_root {cfg.workdir_root!r} is not a writable directory")


def render(spec: ChartSpec, cfg: SandboxConfig, pool: RenderPool | None = None) -> RenderResult:
    """Execute the spec and capture the rendered image.

    Never raises for script behavior; see RenderResult.status.
    """
    if not spec.source:
        raise ValueError("spec source must be non-empty")
    _check_config(cfg)
    with (pool or _default_pool):
        return _render_once(spec, cfg)


def _render_once(spec: ChartSpec, cfg: SandboxConfig) -> RenderResult:
    workdir = Path(tempfile.mkdtemp(prefix="render-", dir=cfg.workdir_root))
    start = time.monotonic()
    try:
        script_path = workdir / "script.py"
        script_path.write_text(
            instrument_script(
                spec.source,
                capture_format=cfg.capture_format,
                dpi=cfg.dpi,
                allow_network=cfg.allow_network,
            ),
            encoding="utf-8",
        )
        stdout_path = workdir / "stdout.log"
        stderr_path = workdir / "stderr.log"
        with open(stdout_path, "wb") as out_fh, open(stderr_path, "wb") as err_fh:
            proc = subprocess.Popen(
                [cfg.interpreter_path, str(script_path)],
                cwd=workdir,
                env=_scrubbed_env(workdir),
                stdout=out_fh,
                stderr=err_fh,
                start_new_session=True,
            )
            try:
                proc.wait(timeout=cfg.timeout_s)
            except subprocess.TimeoutExpired:
                _kill_tree(proc)
                return RenderResult(
                    status=RenderStatus.TIMEOUT,
                    stderr_excerpt=f"killed after {cfg.timeout_s}s timeout",
                    duration_ms=_ms_since(start),
                )
        stderr_excerpt = _read_excerpt(stderr_path)
        if proc.returncode != 0:
            return RenderResult(
                status=RenderStatus.CODE_ERROR,
                stderr_excerpt=stderr_excerpt or f"exit code {proc.returncode}",
                duration_ms=_ms_since(start),
            )
        return _collect_output(workdir, cfg, stderr_excerpt, start)
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def _collect_output(workdir: Path, cfg: SandboxConfig, stderr_excerpt: str, start: float) -> RenderResult:
    png_path = workdir / f"{OUTPUT_BASENAME}.png"
    if not png_path.is_file() or png_path.stat().st_size == 0:
        return RenderResult(
            status=RenderStatus.OUTPUT_MISSING,
            stderr_excerpt=stderr_excerpt or "exit code 0 but no output image was produced",
            duration_ms=_ms_since(start),
        )
    if png_path.stat().st_size > cfg.max_output_bytes:
        return RenderResult(
            status=RenderStatus.OUTPUT_MISSING,
            stderr_excerpt=f"output image exceeds max_output_bytes ({cfg.max_output_bytes})",
            duration_ms=_ms_since(start),
        )
    try:
        image = ChartImage.from_bytes(png_path.read_bytes(), size_cap=cfg.max_output_bytes)
    except InvalidImage as exc:
        return RenderResult(
            status=RenderStatus.OUTPUT_MISSING,
            stderr_excerpt=f"output image unreadable: {exc}",
            duration_ms=_ms_since(start),
        )
    vector_svg = None
    if cfg.capture_format == "svg":
        svg_path = workdir / f"{OUTPUT_BASENAME}.svg"
        if svg_path.is_file() and 0 < svg_path.stat().st_size <= cfg.max_output_bytes:
            vector_svg = svg_path.read_bytes()
    return RenderResult(
        status=RenderStatus.SUCCESS,
        image=image,
        stderr_excerpt=stderr_excerpt,
        duration_ms=_ms_since(start),
        vector_svg=vector_svg,
    )


def _kill_tree(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError, OSError):
        proc.kill()
    proc.wait()


def _read_excerpt(path: Path) -> str:
    try:
        with open(path, "rb") as fh:
            return fh.read(STDERR_EXCERPT_BYTES).decode("utf-8", errors="replace")
    except OSError:
        return ""


def _ms_since(start: float) -> int:
    return int((time.monotonic() - start) * 1000)
