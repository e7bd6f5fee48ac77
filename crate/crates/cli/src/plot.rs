//! Plotting script stub written next to the CSV outputs.

pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plots whichever sysintel CSV outputs exist in this directory."""
import csv
import os
import sys

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))


def rows(name):
    path = os.path.join(here, name)
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        return list(csv.DictReader(fh))


def num(v):
    return float(v) if v not in ("", None) else float("nan")


bound = rows("bound.csv")
if bound:
    plt.figure()
    plt.plot([num(r["rho"]) for r in bound], [num(r["intelligence"]) for r in bound], "o-")
    plt.xlabel("rho")
    plt.ylabel("I(rho)")
    plt.savefig(os.path.join(here, "bound.png"))

single = rows("single_app.csv")
if single:
    fig, ax = plt.subplots()
    eps = [num(r["epsilon"]) for r in single]
    ax.plot(eps, [num(r["intelligence"]) for r in single], "o-", label="I(rho)")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("I(rho)")
    ax2 = ax.twinx()
    ax2.plot(eps, [num(r["entropy_rate"]) for r in single], "s--", color="gray")
    ax2.set_ylabel("entropy rate (bits)")
    fig.savefig(os.path.join(here, "single_app.png"))

summary = rows("summary.csv")
if summary:
    plt.figure()
    for policy in sorted({r["policy"] for r in summary}):
        sel = [r for r in summary if r["policy"] == policy]
        for f in sorted({r["f"] for r in sel}):
            pts = [r for r in sel if r["f"] == f]
            label = policy if not f else f"{policy} f={f}"
            plt.errorbar([num(r["V"]) for r in pts], [num(r["r_av_mean"]) for r in pts],
                         yerr=[num(r["r_av_se"]) for r in pts], marker="o", label=label)
    plt.xscale("log")
    plt.xlabel("V")
    plt.ylabel("average reward")
    plt.legend()
    plt.savefig(os.path.join(here, "summary.png"))

traces = os.path.join(here, "traces")
if os.path.isdir(traces):
    plt.figure()
    for name in sorted(os.listdir(traces))[:8]:
        with open(os.path.join(traces, name)) as fh:
            data = list(csv.DictReader(fh))
        plt.plot([num(r["eff_queue"]) for r in data], label=name[:-4])
    plt.xlabel("slot")
    plt.ylabel("effective queue")
    plt.legend(fontsize="small")
    plt.savefig(os.path.join(here, "traces.png"))

if len(sys.argv) > 1 and sys.argv[1] == "--show":
    plt.show()
"#;
