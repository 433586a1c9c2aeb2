#!/usr/bin/env python3
"""Grid search for the label cost and smoothness weight on synthetic scenes.

Runs efm_cli gen / efm1 (or efm2) / eval for every (T, beta, lambda) point and
seed, then prints mean TPR, mean GQ and mean iterations per point. The best
point maximizes TPR among those whose mean GQ stays within --gq-limit.
"""

import argparse
import itertools
import json
import statistics
import subprocess
import tempfile
from pathlib import Path


def run(cli, *args):
    subprocess.run([cli, *map(str, args)], check=True, stdout=subprocess.DEVNULL)


def evaluate(cli, work, seed, args, T, beta, lam):
    scene = work / f"scene{seed}"
    if not scene.exists():
        run(cli, "gen", "--planes", args.planes, "--features", args.features, "--noise", args.noise,
            "--occlusion", args.occlusion, "--textured", args.textured, "--stress", args.stress,
            "--seed", seed, "--out-dir", scene)
    left, right, gt = scene / "left.txt", scene / "right.txt", scene / "gt.txt"
    result, report, ev = work / "result.txt", work / "report.json", work / "eval.json"
    method = ["efm2", "--lambda", lam] if args.method == "efm2" else [args.method]
    run(cli, *method, "--left", left, "--right", right, "--T", T, "--beta", beta, "--seed", seed,
        "--out", result, "--json", report)
    run(cli, "eval", "--left", left, "--right", right, "--gt", gt, "--result", result, "--json", ev)
    rep, e = json.loads(report.read_text()), json.loads(ev.read_text())
    gqs = [g["gq"] for g in e["gq"] if g["gq"] is not None]
    return e["roc"]["TPR"], max(gqs) if gqs else float("inf"), rep["iterations"]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--cli", default="build/tools/efm_cli")
    p.add_argument("--method", choices=["ef", "efm1", "efm2"], default="efm1")
    p.add_argument("--T", type=float, nargs="+", default=[2.0])
    p.add_argument("--beta", type=float, nargs="+", default=[5, 10, 20, 30, 50])
    p.add_argument("--lambda", dest="lam", type=float, nargs="+", default=[0.0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--planes", type=int, default=3)
    p.add_argument("--features", type=int, default=150)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--occlusion", type=float, default=0.1)
    p.add_argument("--textured", type=float, default=0.3)
    p.add_argument("--stress", type=int, default=1)
    p.add_argument("--gq-limit", type=float, default=1.10)
    args = p.parse_args()

    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        for T, beta, lam in itertools.product(args.T, args.beta, args.lam):
            runs = [evaluate(args.cli, work, s, args, T, beta, lam) for s in range(1, args.seeds + 1)]
            tpr, gq, it = (statistics.fmean(x) for x in zip(*runs))
            rows.append((T, beta, lam, tpr, gq, it))
            print(f"T={T:<5g} beta={beta:<6g} lambda={lam:<5g} TPR={tpr:.4f} worst-GQ={gq:.4f} iterations={it:.1f}",
                  flush=True)

    ok = [r for r in rows if r[4] <= args.gq_limit]
    if ok:
        T, beta, lam, tpr, gq, _ = max(ok, key=lambda r: (r[3], -r[4]))
        print(f"best: T={T:g} beta={beta:g} lambda={lam:g} (TPR {tpr:.4f}, worst GQ {gq:.4f})")
    else:
        print("no point meets the GQ limit")


if __name__ == "__main__":
    main()
