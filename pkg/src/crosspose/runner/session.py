"""Newline-delimited JSON protocol for out-of-process models.

The child writes a handshake line first::

    {"protocol": 1, "num_joints": J, "video_mode": bool, "num_frames": F}

optionally with ``"trained_on_normalized_data": bool``. The harness then
sends requests ``{"id": int, "keypoints": [F][J][2]}`` and the child answers
each with ``{"id": int, "joints": [J][3]}`` in any order.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from collections import deque

import numpy as np

from ..errors import ChildExitError, HandshakeError, ProtocolFrameError, SessionTimeoutError, ShapeError

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_S = 30.0
_EOF = object()


class ExternalSession:
    """One child process speaking the wire protocol.

    Use as a context manager. Not safe for concurrent use by several
    threads; run one session per worker instead.
    """

    def __init__(
        self,
        command,
        num_joints,
        video_mode=False,
        num_frames=1,
        trained_on_normalized_data=None,
        timeout=DEFAULT_TIMEOUT_S,
        env=None,
        cwd=None,
    ):
        self.command = list(command)
        self.num_joints = int(num_joints)
        self.video_mode = bool(video_mode)
        self.num_frames = int(num_frames)
        self.trained_on_normalized_data = trained_on_normalized_data
        self.timeout = float(timeout)
        self.env = env
        self.cwd = cwd
        self.handshake = None
        self._proc = None
        self._lines = queue.Queue()
        self._stderr = deque(maxlen=20)
        self._next_id = 0

    # lifecycle

    def start(self):
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
                env=self.env,
                cwd=self.cwd,
            )
        except OSError as exc:
            raise ChildExitError(f"cannot start model process {self.command}: {exc}") from exc
        threading.Thread(target=self._pump_stdout, daemon=True).start()
        threading.Thread(target=self._pump_stderr, daemon=True).start()
        line = self._next_line(None, what="handshake")
        try:
            hs = json.loads(line)
        except ValueError:
            raise HandshakeError(f"handshake is not JSON: {line[:200]!r}") from None
        self._check_handshake(hs)
        self.handshake = hs
        return self

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()

    def close(self):
        p = self._proc
        if p is None:
            return
        try:
            if p.stdin and not p.stdin.closed:
                p.stdin.close()
        except OSError:
            pass
        try:
            p.wait(timeout=5)
        except subprocess.TimeoutExpired:
            p.kill()
            p.wait()
        self._proc = None

    # protocol

    def _check_handshake(self, hs):
        if not isinstance(hs, dict):
            raise HandshakeError("handshake must be a JSON object")
        if hs.get("protocol") != PROTOCOL_VERSION:
            raise HandshakeError(f"child speaks protocol {hs.get('protocol')!r}, harness speaks {PROTOCOL_VERSION}")
        checks = [("num_joints", self.num_joints), ("video_mode", self.video_mode), ("num_frames", self.num_frames)]
        if self.trained_on_normalized_data is not None and "trained_on_normalized_data" in hs:
            checks.append(("trained_on_normalized_data", bool(self.trained_on_normalized_data)))
        for key, want in checks:
            if key not in hs:
                raise HandshakeError(f"handshake lacks {key!r}")
            if hs[key] != want or type(hs[key]) is not type(want):
                raise HandshakeError(f"child declares {key}={hs[key]!r}, run expects {want!r}")

    def _pump_stdout(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def _pump_stderr(self):
        for line in self._proc.stderr:
            self._stderr.append(line.rstrip())

    def _next_line(self, request_id, what="response"):
        try:
            item = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise SessionTimeoutError(f"no {what} within {self.timeout:g} s", request_id) from None
        if item is _EOF:
            code = self._proc.wait()
            tail = "; ".join(self._stderr)
            raise ChildExitError(f"model process exited with status {code} while awaiting {what}" + (f": {tail}" if tail else ""), request_id)
        return item

    def _encode(self, rid, window):
        w = np.asarray(window, dtype=np.float64)
        if w.shape != (self.num_frames, self.num_joints, 2):
            raise ShapeError(f"window shape {w.shape} != ({self.num_frames}, {self.num_joints}, 2)")
        return json.dumps({"id": rid, "keypoints": w.tolist()}, allow_nan=False) + "\n"

    def _decode(self, line, pending):
        oldest = min(pending) if pending else None
        try:
            msg = json.loads(line)
        except ValueError:
            raise ProtocolFrameError(f"malformed frame {line[:200]!r}", oldest) from None
        if not isinstance(msg, dict) or not isinstance(msg.get("id"), int) or isinstance(msg.get("id"), bool):
            raise ProtocolFrameError(f"frame lacks an integer id: {line[:200]!r}", oldest)
        rid = msg["id"]
        if rid not in pending:
            raise ProtocolFrameError("response for an unknown or already answered request", rid)
        try:
            joints = np.array(msg["joints"], dtype=np.float64)
        except (KeyError, TypeError, ValueError):
            raise ProtocolFrameError("response lacks a numeric 'joints' array", rid) from None
        if joints.shape != (self.num_joints, 3):
            raise ProtocolFrameError(f"joints shape {joints.shape} != ({self.num_joints}, 3)", rid)
        if not np.all(np.isfinite(joints)):
            raise ProtocolFrameError("non-finite joint coordinates", rid)
        return rid, joints

    def infer_many(self, windows) -> np.ndarray:
        """Pipeline all windows and return ``[N, J, 3]`` in request order."""
        if self._proc is None:
            raise ChildExitError("session not started")
        windows = list(windows)
        base = self._next_id
        self._next_id += len(windows)
        payload = [self._encode(base + i, w) for i, w in enumerate(windows)]
        out = np.empty((len(windows), self.num_joints, 3))
        pending = set(range(base, base + len(windows)))
        write_error = []

        def writer():
            try:
                for line in payload:
                    self._proc.stdin.write(line)
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError, ValueError) as exc:
                write_error.append(exc)

        t = threading.Thread(target=writer, daemon=True)
        t.start()
        while pending:
            line = self._next_line(min(pending))
            rid, joints = self._decode(line, pending)
            out[rid - base] = joints
            pending.discard(rid)
        t.join()
        return out

    def infer(self, window) -> np.ndarray:
        return self.infer_many([window])[0]


def external_session(command, config, timeout=DEFAULT_TIMEOUT_S) -> ExternalSession:
    """Start a session whose declarations must match ``config`` (an EvalConfig)."""
    return ExternalSession(
        command,
        num_joints=config.num_joints,
        video_mode=config.video_mode,
        num_frames=config.num_frames,
        trained_on_normalized_data=config.trained_on_normalized_data,
        timeout=timeout,
    ).start()


def temporal_windows(keypoints, num_frames) -> np.ndarray:
    """Centered windows with edge replication: ``[F, J, 2]`` -> ``[F, num_frames, J, 2]``.

    For even ``num_frames`` the center frame sits at index ``num_frames // 2``.
    """
    kp = np.asarray(keypoints)
    F = len(kp)
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    offs = np.arange(num_frames) - num_frames // 2
    idx = np.clip(np.arange(F)[:, None] + offs[None, :], 0, max(F - 1, 0))
    return kp[idx]

