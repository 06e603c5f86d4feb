"""Writes the NTU .skeleton fixtures used by the parser tests."""
import random

BODY_INFO = "72057594037931101 0 1 1 1 1 0 0.02 0.09 2"


def joint_line(x, y, z):
    return f"{x} {y} {z} 277.6 191.8 1036.5 519.4 0.24 -0.03 0.96 -0.06 2"


def write(path, frames):
    lines = [str(len(frames))]
    for bodies in frames:
        lines.append(str(len(bodies)))
        for joints in bodies:
            lines.append(BODY_INFO)
            lines.append(str(len(joints)))
            lines.extend(joint_line(*p) for p in joints)
    with open(path, "w") as f:
        f.write("\r\n".join(lines) + "\r\n")


rng = random.Random(2024)


def rand_body(n=25):
    return [tuple(round(rng.uniform(-1.5, 4.0), 7) for _ in range(3)) for _ in range(n)]


zero = [(0, 0, 0)] * 25
write("ntu_zero.skeleton", [[zero], [zero]])

first = rand_body()
first[0] = (0.1, 0.2, 0.3)
write("ntu_values.skeleton", [[first], [rand_body()], [rand_body()]])

write("ntu_two_bodies.skeleton", [[rand_body(), rand_body()], [rand_body(), rand_body()]])
write("ntu_missing_body.skeleton", [[rand_body()], [], [rand_body()]])
write("ntu_20_joints.skeleton", [[rand_body(20)]])
