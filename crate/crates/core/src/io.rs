//! Output formatting shared by the CSV and JSON writers.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// A real with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Matplotlib script that reads `wealth.csv` and `adjoint.csv` from its own
/// directory and saves `figure.png` next to them.
pub fn plot_script(title: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
SAMPLE_PATHS = 5


def read(name):
    with open(os.path.join(HERE, name), newline="") as fh:
        return list(csv.DictReader(fh))


wealth = defaultdict(lambda: ([], [], []))
for row in read("wealth.csv"):
    n, x, v = wealth[int(row["path_id"])]
    n.append(int(row["n"]))
    x.append(float(row["X"]))
    v.append(float(row["v"]))

adjoint = read("adjoint.csv")
steps = sorted({{n for ns, _, _ in wealth.values() for n in ns}})
mean_x = [sum(p[1][i] for p in wealth.values()) / len(wealth) for i in range(len(steps))]
mean_v = [sum(p[2][i] for p in wealth.values()) / len(wealth) for i in range(len(steps))]

fig, axes = plt.subplots(1, 3, figsize=(15, 4))
for pid in sorted(wealth)[:SAMPLE_PATHS]:
    n, x, v = wealth[pid]
    axes[0].plot(n, x, lw=0.8, alpha=0.6)
    axes[1].plot(n, v, lw=0.8, alpha=0.6)
axes[0].plot(steps, mean_x, "k", lw=2, label="mean")
axes[1].plot(steps, mean_v, "k", lw=2, label="mean")
axes[0].set_title("wealth X*")
axes[1].set_title("control v*")
axes[2].plot([int(r["n"]) for r in adjoint], [float(r["p"]) for r in adjoint], label="p")
axes[2].set_yscale("symlog", linthresh=1e-12)
axes[2].set_title("adjoint p")
for ax in axes:
    ax.set_xlabel("n")
    ax.legend()
fig.suptitle("{title}")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "figure.png"), dpi=150)
"#
    )
}
