#!/usr/bin/env python3
"""Builds the tdcr extension module and exercises it end to end.

Run from anywhere inside the repository:

    python3 python/smoke_test.py

The script compiles the bindings with cargo, loads the resulting shared
library from the target directory, and checks a handful of known values
so a broken build fails loudly.
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent

failures = []


def check(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"{status}  {name}{suffix}")
    if not ok:
        failures.append(name)


def build_and_import():
    subprocess.run(
        [
            "cargo",
            "build",
            "--release",
            "-p",
            "tdcr-python",
            "--features",
            "extension-module",
        ],
        cwd=REPO,
        check=True,
    )
    lib = REPO / "target" / "release" / "libtdcr.so"
    stage = Path(tempfile.mkdtemp(prefix="tdcr_py_"))
    shutil.copy(lib, stage / "tdcr.so")
    sys.path.insert(0, str(stage))
    import tdcr

    return tdcr


def main():
    tdcr = build_and_import()

    # Clarke transform: projecting reconstructed joint values is the identity.
    clarke = tdcr.ClarkeTransform(5)
    q_re, q_im = 0.003, -0.007
    joints = clarke.manifold_to_joints(q_re, q_im)
    back = clarke.joints_to_manifold(joints)
    check(
        "clarke round trip",
        abs(back[0] - q_re) < 1e-14 and abs(back[1] - q_im) < 1e-14,
        f"({back[0]:.3e}, {back[1]:.3e})",
    )
    check(
        "tendon angles evenly spaced",
        all(
            abs(clarke.tendon_angle(j) - 2.0 * math.pi * j / 5.0) < 1e-15
            for j in range(5)
        ),
    )

    # Torque mapping round trip and zero-mean forces.
    forces = clarke.torque_to_forces(0.4, -0.2)
    tau = clarke.forces_to_torque(forces)
    check(
        "torque round trip",
        abs(tau[0] - 0.4) < 1e-14 and abs(tau[1] + 0.2) < 1e-14,
    )
    check("minimum-norm forces are zero-mean", abs(sum(forces)) < 1e-15)

    # Straight-configuration mass matrix of the reference robot.
    robot = tdcr.Robot(segments=1, tendons=5)
    mass = robot.mass_matrix([0.0, 0.0])
    check(
        "straight mass matrix value",
        abs(mass[0][0] - 0.4598) < 1e-4 and abs(mass[0][1]) < 1e-12,
        f"M[0][0] = {mass[0][0]:.6f} kg",
    )

    stiff = robot.stiffness_matrix()
    check(
        "manifold stiffness value",
        abs(stiff[0][0] - 0.2905) < 1e-4,
        f"K[0][0] = {stiff[0][0]:.6f} N/m",
    )

    # Straight + at rest: gravity gradient vanishes by symmetry.
    grav = robot.gravity_vector([0.0, 0.0])
    check("gravity vanishes at straight", max(abs(g) for g in grav) < 1e-12)

    # Tip of a straight segment sits one length up the z-axis.
    tip = robot.tip_position([0.0, 0.0])
    check(
        "straight tip position",
        abs(tip[0]) < 1e-12 and abs(tip[1]) < 1e-12 and abs(tip[2] - 0.2) < 1e-12,
    )

    # First discrete PID tick: kp e + ki e dt, derivative zero on first step.
    pid = tdcr.Controller(kp=1500.0, ki=1500.0, kd=1.0, control_rate=1000.0)
    tau = pid.step([0.001, 0.0], [0.0, 0.0])
    check(
        "pid first tick",
        abs(tau[0] - 1.5015) < 1e-12 and abs(tau[1]) < 1e-15,
        f"tau = {tau[0]:.6f} N",
    )

    # Shifting preserves the commanded torque while making forces >= 0.
    raw = clarke.torque_to_forces(0.5, 0.1)
    shifted = tdcr.saturate_forces(raw, "shift")
    tau_shift = clarke.forces_to_torque(shifted)
    check(
        "shift keeps torque and non-negativity",
        min(shifted) >= 0.0
        and abs(tau_shift[0] - 0.5) < 1e-12
        and abs(tau_shift[1] - 0.1) < 1e-12,
    )

    # Short closed-loop run tracks a slow chirp.
    traj = tdcr.Trajectory.chirp([0.008, 0.0], [0.5, 0.0])
    result = tdcr.simulate_tracking(robot, pid, traj, duration=4.0)
    rmse = result.rmse()
    check(
        "tracking rmse below 20% of amplitude",
        rmse[0] < 0.2 * 0.008,
        f"rmse = {rmse[0]:.3e} m over {result.rows} samples",
    )
    t = result.time
    check(
        "log sampled at the control rate",
        len(t) == 4001 and abs(t[1] - t[0] - 1e-3) < 1e-12,
    )
    forces = result.forces()
    check(
        "applied forces stay non-negative",
        min(min(row) for row in forces) >= 0.0,
    )

    # Library invariant suite.
    checks = tdcr.run_checks()
    for name, passed, detail in checks:
        check(f"invariant: {name}", passed, detail)

    if failures:
        print(f"\n{len(failures)} smoke-test failure(s)")
        return 1
    print(f"\nall {len(checks) + 12} smoke-test checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
