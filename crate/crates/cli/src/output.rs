//! CSV, metadata and plotting-script writers.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use rmp_core::io::write_text;
use serde_json::Value;

use crate::CliError;

/// In-memory CSV with a fixed header.
#[derive(Debug, Clone)]
pub struct Csv {
    width: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            width: header.len(),
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, cells: &[&dyn Display]) {
        assert_eq!(cells.len(), self.width, "CSV row width");
        let line: Vec<String> = cells.iter().map(|c| escape(&c.to_string())).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

fn escape(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

/// Empty cell for missing values.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

pub fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    write_text(&path, text).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(path)
}

/// Pretty JSON with a trailing newline; key order as constructed.
pub fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    write(dir, name, &text)
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const PLOT_EXPERIMENT1: &str = r#"import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("experiment1.csv")))
ok = [r for r in rows if r["status"] == "ok"]
delta = [float(r["delta"]) for r in ok]
plt.plot(delta, [float(r["j_robust"]) for r in ok], "o-", label="robust max-product")
plt.plot(delta, [float(r["j_nominal_worstcase"]) for r in ok], "s-", label="max-product")
plt.xlabel("Delta")
plt.ylabel("Engineer's objective")
plt.legend()
plt.savefig("experiment1.png", dpi=150)
"#;

pub const PLOT_EXPERIMENT2: &str = r#"import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("experiment2.csv")))
samples = list(csv.DictReader(open("experiment2_samples.csv")))
alpha = [float(r["alpha"]) for r in rows]
plt.plot(alpha, [float(r["payoff_robust"]) for r in rows], "-", label="robust max-product")
plt.plot(alpha, [float(r["payoff_nominal"]) for r in rows], "-", label="max-product")
for name, marker in (("robust", "o"), ("nominal", "x")):
    pts = [s for s in samples if s["strategy"] == name]
    plt.scatter([float(s["alpha"]) for s in pts], [float(s["payoff"]) for s in pts], marker=marker, s=8)
plt.xlabel("alpha")
plt.ylabel("Engineer's payoff")
plt.legend()
plt.savefig("experiment2.png", dpi=150)
"#;

pub const PLOT_CONVERGENCE: &str = r#"import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("convergence.csv")))
it = [int(r["iteration"]) for r in rows]
fig, (top, bottom) = plt.subplots(2, 1, sharex=True)
top.plot(it, [float(r["J"]) for r in rows], label="J")
top.plot(it, [-float(r["C"]) for r in rows], "--", label="-C")
top.set_ylabel("Engineer's objective")
top.legend()
bottom.semilogy(it, [max(float(r["residual"]), 1e-18) for r in rows])
bottom.set_xlabel("iteration")
bottom.set_ylabel("mean marginal inconsistency")
fig.savefig("convergence.png", dpi=150)
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(&[&1.5, &"x,y"]);
        c.row(&[&opt(None), &opt(Some(0.25))]);
        assert_eq!(c.as_str(), "a,b\n1.5,\"x,y\"\n,0.25\n");
    }
}
