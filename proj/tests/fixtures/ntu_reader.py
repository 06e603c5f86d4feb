"""Line reader for NTU .skeleton files, independent of the C++ parser.

Prints one line per frame: 75 coordinates of the first body, or "-" when the
frame has no body.
"""
import sys


def read(path):
    with open(path) as f:
        lines = [l.strip() for l in f if l.strip()]
    pos = 0
    frames = int(lines[pos]); pos += 1
    out = []
    for _ in range(frames):
        bodies = int(lines[pos]); pos += 1
        first = None
        for b in range(bodies):
            pos += 1  # body info
            joints = int(lines[pos]); pos += 1
            coords = []
            for _ in range(joints):
                coords.extend(lines[pos].split()[:3]); pos += 1
            if b == 0:
                first = coords
        out.append(" ".join(first) if first else "-")
    return out


if __name__ == "__main__":
    print("\n".join(read(sys.argv[1])))
