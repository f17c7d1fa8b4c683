//! File formats, CSV rendering, and run manifests.
//!
//! Three JSON input formats:
//!
//! - **kernel**: `{"label": …, "n_states": k, "rows": [[…], …]}` —
//!   validated on load (row sums, nonnegativity, shape), with the offending
//!   row named in the error.
//! - **function**: `{"label": …, "values": [v_0, …, v_{k−1}]}` — one value
//!   per state.
//! - **experiment**: the serialized [`ExperimentSpec`]; omitted fields take
//!   the documented defaults.
//!
//! CSV output uses `{}` formatting for floats (shortest round-trip form) so
//! identical runs produce byte-identical files.
//!
//! Every CLI run emits a [`Manifest`] recording the tool version, the
//! subcommand and argv, resolved parameters, embedded copies of the parsed
//! inputs, seeds, and output paths: enough to reproduce the run without the
//! original files. With `--out FILE` the manifest lands in
//! `FILE.manifest.json`; otherwise it is printed as a trailing
//! `manifest: {…}` line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::lab::{ExperimentSpec, MomentReport, RateFit, RemainderRow, RosenthalCheck};
use crate::markov::TransitionKernel;
use crate::weights::{ObmWeights, WeightTable};

/// Errors from file handling.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    /// The file could not be read.
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    /// The file could not be parsed or validated.
    #[error("cannot parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    /// The file could not be written.
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// A per-state function: `{"label", "values"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionFile {
    /// Human-readable name carried into reports.
    pub label: String,
    /// One value per state.
    pub values: Vec<f64>,
}

/// Read and deserialize a JSON file, naming the file in every error.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Load a validated transition kernel.
pub fn load_kernel(path: &Path) -> Result<TransitionKernel, IoError> {
    read_json(path)
}

/// Load a per-state function file.
pub fn load_function(path: &Path) -> Result<FunctionFile, IoError> {
    read_json(path)
}

/// Load an experiment spec.
pub fn load_spec(path: &Path) -> Result<ExperimentSpec, IoError> {
    read_json(path)
}

/// Write text to a file.
pub fn write_text(path: &Path, contents: &str) -> Result<(), IoError> {
    std::fs::write(path, contents).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Render a moment report as CSV
/// (`n,b_n,p,R,moment,moment_se_lo,moment_se_hi,theory_rate,base_seed`).
pub fn moment_report_csv(report: &MomentReport) -> String {
    let mut out = String::from("n,b_n,p,R,moment,moment_se_lo,moment_se_hi,theory_rate,base_seed\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.n,
            row.b_n,
            row.p,
            row.replications,
            row.moment,
            row.moment_se_lo,
            row.moment_se_hi,
            row.theory_rate,
            row.base_seed
        );
    }
    out
}

/// Render rate fits as CSV (`axis,slope,ci_lo,ci_hi`).
pub fn rate_fits_csv(fits: &[RateFit]) -> String {
    let mut out = String::from("axis,slope,ci_lo,ci_hi\n");
    for fit in fits {
        let _ = writeln!(out, "{},{},{},{}", fit.axis, fit.slope, fit.ci_lo, fit.ci_hi);
    }
    out
}

/// Render the nonzero weight band as CSV (`l,j,w,d10,d01,d11`), row-major
/// over `1 ≤ j ≤ ℓ ≤ n` restricted to the band.
pub fn weight_band_csv(weights: &ObmWeights) -> String {
    let n = weights.n() as i64;
    let band = weights.bandwidth() as i64;
    let mut out = String::from("l,j,w,d10,d01,d11\n");
    for l in 1..=n {
        for j in 1.max(l - band + 1)..=l {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                l,
                j,
                weights.w(l, j),
                weights.d10(l, j),
                weights.d01(l, j),
                weights.d11(l, j)
            );
        }
    }
    out
}

/// Render remainder-tracking rows as CSV.
pub fn remainder_rows_csv(rows: &[RemainderRow]) -> String {
    let mut out = String::from(
        "n,b_n,p,R,moment_mart,bound_mart,ratio_mart,moment_rem,bound_rem,ratio_rem,moment_rbar,bound_total,ratio_rbar\n",
    );
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.n,
            row.b_n,
            row.p,
            row.replications,
            row.moment_mart,
            row.bound_mart,
            row.ratio_mart,
            row.moment_rem,
            row.bound_rem,
            row.ratio_rem,
            row.moment_rbar,
            row.bound_total,
            row.ratio_rbar
        );
    }
    out
}

/// Render labeled weighted-sum inequality cells as CSV.
pub fn rosenthal_cells_csv(cells: &[(String, RosenthalCheck)]) -> String {
    let mut out = String::from("label,p,n,t_mix,lhs,rhs,ratio,pass\n");
    for (label, c) in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            label, c.p, c.n, c.t_mix, c.lhs, c.rhs, c.ratio, c.pass
        );
    }
    out
}

/// A reproducibility record emitted by every CLI run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    /// Tool name.
    pub tool: String,
    /// Crate version.
    pub version: String,
    /// Subcommand run.
    pub subcommand: String,
    /// Full argv.
    pub argv: Vec<String>,
    /// Resolved parameters (after defaults).
    pub params: BTreeMap<String, serde_json::Value>,
    /// Parsed contents of every input file, keyed by role.
    pub inputs: BTreeMap<String, serde_json::Value>,
    /// Seeds in play.
    pub seeds: Vec<u64>,
    /// Files written by the run.
    pub outputs: Vec<String>,
}

impl Manifest {
    /// Start a manifest for a subcommand with the process argv.
    pub fn new(subcommand: &str, argv: Vec<String>) -> Self {
        Self {
            tool: "obmlab".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            argv,
            params: BTreeMap::new(),
            inputs: BTreeMap::new(),
            seeds: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Record a resolved parameter.
    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.params.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serializable param"),
        );
        self
    }

    /// Embed a parsed input file.
    pub fn input(&mut self, role: &str, value: impl Serialize) -> &mut Self {
        self.inputs.insert(
            role.to_string(),
            serde_json::to_value(value).expect("serializable input"),
        );
        self
    }

    /// Record a seed.
    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seeds.push(seed);
        self
    }

    /// Record an output path.
    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// The sibling manifest path for an output file.
    pub fn sibling_path(out: &Path) -> PathBuf {
        let mut name = out.as_os_str().to_os_string();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    /// Emit the manifest: written next to `out` when given, otherwise
    /// returned as a single `manifest: {…}` line for stdout.
    pub fn emit(&self, out: Option<&Path>) -> Result<Option<String>, IoError> {
        let json = serde_json::to_string(self).expect("serializable manifest");
        match out {
            Some(out_path) => {
                let manifest_path = Self::sibling_path(out_path);
                write_text(&manifest_path, &format!("{json}\n"))?;
                Ok(None)
            }
            None => Ok(Some(format!("manifest: {json}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::MomentRow;
    use crate::weights::BatchGeometry;

    fn tmp_dir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "obmlab-io-test-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn kernel_files_round_trip_and_reject_bad_rows() {
        let dir = tmp_dir();
        let good = dir.join("good.json");
        std::fs::write(
            &good,
            r#"{"label":"k","n_states":2,"rows":[[0.7,0.3],[0.1,0.9]]}"#,
        )
        .unwrap();
        let k = load_kernel(&good).unwrap();
        assert_eq!(k.n_states(), 2);

        let bad = dir.join("bad.json");
        std::fs::write(
            &bad,
            r#"{"label":"k","n_states":2,"rows":[[0.7,0.2],[0.1,0.9]]}"#,
        )
        .unwrap();
        let err = load_kernel(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.json"), "{msg}");
        assert!(msg.contains("row 0"), "{msg}");

        let missing = dir.join("nope.json");
        assert!(matches!(
            load_kernel(&missing),
            Err(IoError::Read { .. })
        ));
    }

    #[test]
    fn function_files_parse() {
        let dir = tmp_dir();
        let path = dir.join("f.json");
        std::fs::write(&path, r#"{"label":"indicator","values":[1.0,0.0]}"#).unwrap();
        let f = load_function(&path).unwrap();
        assert_eq!(f.label, "indicator");
        assert_eq!(f.values, vec![1.0, 0.0]);
    }

    #[test]
    fn moment_csv_has_the_documented_header() {
        let report = MomentReport {
            kernel_label: "k".into(),
            f_label: "f".into(),
            sigma2_inf: 1.0,
            t_mix: 3,
            base_seed: 9,
            replications: 2,
            rows: vec![MomentRow {
                n: 64,
                b_n: 8,
                p: 2,
                replications: 2,
                moment: 0.25,
                moment_se_lo: 0.2,
                moment_se_hi: 0.3,
                theory_rate: 1.5,
                base_seed: 9,
                unstable: false,
            }],
        };
        let csv = moment_report_csv(&report);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n,b_n,p,R,moment,moment_se_lo,moment_se_hi,theory_rate,base_seed"
        );
        assert_eq!(lines.next().unwrap(), "64,8,2,2,0.25,0.2,0.3,1.5,9");
        assert!(lines.next().is_none());
    }

    #[test]
    fn rate_csv_matches_columns() {
        let fits = vec![RateFit {
            axis: "n:p=2".into(),
            slope: -0.25,
            ci_lo: -0.3,
            ci_hi: -0.2,
            points: 7,
        }];
        assert_eq!(
            rate_fits_csv(&fits),
            "axis,slope,ci_lo,ci_hi\nn:p=2,-0.25,-0.3,-0.2\n"
        );
    }

    #[test]
    fn band_csv_covers_exactly_the_band() {
        let w = ObmWeights::new(BatchGeometry::new(5, 2).unwrap());
        let csv = weight_band_csv(&w);
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        // n = 5, b = 2: 5 diagonal + 4 subdiagonal entries.
        assert_eq!(rows.len(), 9);
        assert!(rows[0].starts_with("1,1,0.125,"));
        for row in rows {
            let cols: Vec<&str> = row.split(',').collect();
            assert_eq!(cols.len(), 6);
            let l: i64 = cols[0].parse().unwrap();
            let j: i64 = cols[1].parse().unwrap();
            assert!(l - j < 2);
        }
    }

    #[test]
    fn manifest_emits_sibling_or_stdout_line() {
        let dir = tmp_dir();
        let out = dir.join("report.csv");
        let mut m = Manifest::new("sweep", vec!["obmlab".into(), "sweep".into()]);
        m.param("replications", 500)
            .input("kernel", serde_json::json!({"label": "k"}))
            .seed(42)
            .output(&out);
        assert!(m.emit(Some(&out)).unwrap().is_none());
        let manifest_path = dir.join("report.csv.manifest.json");
        let text = std::fs::read_to_string(&manifest_path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["tool"], "obmlab");
        assert_eq!(v["subcommand"], "sweep");
        assert_eq!(v["params"]["replications"], 500);
        assert_eq!(v["inputs"]["kernel"]["label"], "k");
        assert_eq!(v["seeds"][0], 42);

        let line = m.emit(None).unwrap().unwrap();
        assert!(line.starts_with("manifest: {"), "{line}");
    }
}
