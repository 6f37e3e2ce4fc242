"""Reference child process for the wire protocol (testing and examples).

Run ``python -m crosspose.runner.echo_model --help``. Modes:

* ``zeros``: every joint at the origin.
* ``planar``: joint j of the center frame becomes ``(u_j - u_0, v_j - v_0, 0)``.
* ``shuffle``: like ``planar`` but replies in reversed blocks, so responses
  arrive out of order.
"""

import argparse
import json
import os
import select
import sys


def _reply(req, mode, num_joints):
    if mode == "zeros":
        joints = [[0.0, 0.0, 0.0] for _ in range(num_joints)]
    else:
        frames = req["keypoints"]
        c = frames[len(frames) // 2]
        joints = [[u - c[0][0], v - c[0][1], 0.0] for u, v in c]
    return {"id": req["id"], "joints": joints}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=("zeros", "planar", "shuffle"), default="zeros")
    ap.add_argument("--num-joints", type=int, default=16)
    ap.add_argument("--num-frames", type=int, default=1)
    ap.add_argument("--video", action="store_true")
    ap.add_argument("--normalized", choices=("true", "false"), default=None, help="declare trained_on_normalized_data")
    ap.add_argument("--declare-joints", type=int, default=None, help="lie about num_joints in the handshake")
    ap.add_argument("--block", type=int, default=7, help="reply block size for shuffle mode")
    ap.add_argument("--garbage-after", type=int, default=None, help="emit a malformed frame after N replies")
    ap.add_argument("--exit-after", type=int, default=None, help="exit after N replies")
    ap.add_argument("--silent", action="store_true", help="never answer requests")
    args = ap.parse_args(argv)

    out = sys.stdout
    hs = {
        "protocol": 1,
        "num_joints": args.declare_joints or args.num_joints,
        "video_mode": args.video,
        "num_frames": args.num_frames,
    }
    if args.normalized is not None:
        hs["trained_on_normalized_data"] = args.normalized == "true"
    out.write(json.dumps(hs) + "\n")
    out.flush()

    sent = 0
    held = []

    def emit(msgs):
        nonlocal sent
        for m in msgs:
            if args.garbage_after is not None and sent >= args.garbage_after:
                out.write("{not json\n")
                out.flush()
                return False
            if args.exit_after is not None and sent >= args.exit_after:
                out.flush()
                sys.exit(3)
            out.write(json.dumps(m) + "\n")
            sent += 1
        out.flush()
        return True

    for line in _lines(sys.stdin.fileno(), lambda: held and emit(reversed(held)) and held.clear()):
        if not line.strip():
            continue
        req = json.loads(line)
        if args.silent:
            continue
        msg = _reply(req, "planar" if args.mode == "shuffle" else args.mode, args.num_joints)
        if args.mode == "shuffle":
            held.append(msg)
            if len(held) >= args.block:
                if not emit(reversed(held)):
                    break
                held = []
        elif not emit([msg]):
            break
    if held:
        emit(reversed(held))
    out.flush()


def _lines(fd, on_idle):
    """Yield input lines; call ``on_idle`` whenever no more input is waiting."""
    buf = b""
    while True:
        if not select.select([fd], [], [], 0)[0]:
            on_idle()
        chunk = os.read(fd, 1 << 16)
        if not chunk:
            break
        buf += chunk
        *lines, buf = buf.split(b"\n")
        for ln in lines:
            yield ln.decode()
    if buf:
        yield buf.decode()

if __name__ == "__main__":
    main()
