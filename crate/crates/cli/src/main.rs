//! `graph-sturm`: spectrum, localization certificates and oracles for the
//! two-segment Sturm–Liouville problem.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graph_sturm::bounds::ConstantSet;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "graph-sturm",
    version,
    about = "Eigenvalue localization for a Sturm-Liouville operator on two coupled segments"
)]
pub struct Cli {
    /// Problem description (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Constants::Corrected)]
    pub constants: Constants,
    /// Recorded in every report.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Run on the calling thread only.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Constants {
    Corrected,
    Paper,
}

impl From<Constants> for ConstantSet {
    fn from(c: Constants) -> Self {
        match c {
            Constants::Corrected => ConstantSet::Corrected,
            Constants::Paper => ConstantSet::Paper,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Series,
    Shooting,
    Both,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Unperturbed spectrum from the secular equation.
    Spectrum {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Smallness condition and localization radii.
    Bounds {
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Characteristic function on a real grid (CSV).
    Detgrid(DetgridArgs),
    /// Perturbed real roots inside their radii.
    Localize {
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Also compare against the finite-difference oracle.
        #[arg(long)]
        verify: bool,
        #[arg(long, default_value_t = 4000)]
        m: usize,
    },
    /// Finite-difference oracle deviation table.
    Verify {
        #[arg(long, default_value_t = 4000)]
        m: usize,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Zero counts on the square contour with index `l`.
    Contour {
        #[arg(long)]
        l: usize,
    },
    /// Full pipeline: spectrum, bounds, localize, verify and contours.
    Report {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 4000)]
        m: usize,
        /// Contours `1..=contours`.
        #[arg(long, default_value_t = 5)]
        contours: usize,
    },
}

#[derive(Args, Debug)]
pub struct DetgridArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub lmin: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub lmax: f64,
    #[arg(long)]
    pub step: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Series)]
    pub method: MethodArg,
    #[arg(long, default_value_t = graph_sturm::determinant::DEFAULT_RK_STEPS)]
    pub rk_steps: usize,
    /// Write `(segment, x, t, |N|)` at `λ = lmin` to this CSV file.
    #[arg(long, value_name = "FILE")]
    pub dump_kernels: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("graph-sturm: {e:#}");
            commands::exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use std::path::Path;

    use graph_sturm::Error;
    use serde_json::Value;
    use tempfile::TempDir;

    fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        path
    }

    fn constant_config(dir: &TempDir, a: f64, b: f64, p: f64, c: f64) -> PathBuf {
        let body = format!(
            r#"{{"a": {a}, "b": {b}, "p": {p}, "q1": {{"kind": "constant", "value": {c}}}, "q2": {{"kind": "constant", "value": {c}}}}}"#
        );
        write_config(dir, "problem.json", &body)
    }

    fn invoke(config: &Path, out: &Path, rest: &[&str]) -> u8 {
        let mut args = vec![
            "graph-sturm".to_string(),
            "--config".into(),
            config.display().to_string(),
            "--out".into(),
            out.display().to_string(),
        ];
        args.extend(rest.iter().map(|s| s.to_string()));
        run(args)
    }

    fn read_json(path: &Path) -> Value {
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn spectrum_of_symmetric_unit_graph() {
        let dir = TempDir::new().unwrap();
        let cfg = constant_config(&dir, 1.0, 1.0, 1.0, 0.0);
        let out = dir.path().join("spectrum.json");
        assert_eq!(invoke(&cfg, &out, &["spectrum", "--count", "6"]), EXIT_OK);
        let v = read_json(&out);
        assert_eq!(v["schema"], "graph-sturm/1");
        assert_eq!(v["closed_form"], true);
        let roots = v["roots"].as_array().unwrap();
        assert_eq!(roots.len(), 7);
        for (n, r) in roots.iter().enumerate().skip(1) {
            assert!((r["lambda"].as_f64().unwrap() - std::f64::consts::PI * n as f64 / 2.0).abs() < 1e-10);
        }
        assert_eq!(roots[0]["multiplicity"], 2);
    }

    #[test]
    fn bounds_for_large_potential_are_advisory() {
        let dir = TempDir::new().unwrap();
        let cfg = constant_config(&dir, 1.0, 2.0, 0.5, 1e-2);
        let out = dir.path().join("bounds.json");
        assert_eq!(invoke(&cfg, &out, &["bounds", "--count", "3"]), EXIT_OK);
        let v = read_json(&out);
        assert_eq!(v["smallness"]["holds"], false);
        assert_eq!(v["certificate"], "unavailable");
        assert_eq!(v["radii"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn bounds_for_degenerate_shape_carry_a_note() {
        let dir = TempDir::new().unwrap();
        let cfg = constant_config(&dir, 1.0, 1.0, 1.0, 1e-4);
        let out = dir.path().join("bounds.json");
        assert_eq!(invoke(&cfg, &out, &["bounds"]), EXIT_OK);
        let v = read_json(&out);
        assert_eq!(v["certificate"], "unavailable");
        assert!(v["note"].as_str().unwrap().contains("degenerate"));
    }

    #[test]
    fn localize_with_verification() {
        let dir = TempDir::new().unwrap();
        let cfg = constant_config(&dir, 1.0, 2.0, 0.5, 1e-4);
        let out = dir.path().join("localize.json");
        assert_eq!(invoke(&cfg, &out, &["localize", "--count", "3", "--verify", "--m", "1000"]), EXIT_OK);
        let v = read_json(&out);
        assert_eq!(v["advisory"], false);
        let roots = v["roots"].as_array().unwrap();
        assert_eq!(roots.iter().map(|r| r["s"].as_u64().unwrap()).collect::<Vec<_>>(), vec![1, 2, 3]);
        for r in roots {
            assert_eq!(r["unique"], true);
            assert!(r["oracle_dev"].as_f64().unwrap() < 1e-6);
        }
        assert!((roots[0]["lambda_q"].as_f64().unwrap() - 0.886_133_550_492_583).abs() < 1e-10);
        assert_eq!(v["verify"]["extrapolated"]["all_pass"], true);
    }

    #[test]
    fn verify_emits_deviation_table() {
        let dir = TempDir::new().unwrap();
        let cfg = constant_config(&dir, 1.0, 2.0, 0.5, 1e-4);
        let out = dir.path().join("verify.json");
        assert_eq!(invoke(&cfg, &out, &["verify", "--m", "800", "--count", "2"]), EXIT_OK);
        let v = read_json(&out);
        assert_eq!(v["command"], "verify");
        assert_eq!(v["extrapolated"]["rows"].as_array().unwrap().len(), 2);
        assert_eq!(invoke(&cfg, &out, &["verify", "--m", "801"]), EXIT_USAGE);
    }

    #[test]
    fn detgrid_writes_csv_and_kernel_dump() {
        let dir = TempDir::new().unwrap();
        let cfg = constant_config(&dir, 1.0, 2.0, 0.5, 1e-2);
        let out = dir.path().join("grid.csv");
        let dump = dir.path().join("kernels.csv");
        let code = invoke(
            &cfg,
            &out,
            &[
                "detgrid",
                "--lmin",
                "0.5",
                "--lmax",
                "2.5",
                "--step",
                "0.5",
                "--method",
                "both",
                "--rk-steps",
                "512",
                "--dump-kernels",
                dump.to_str().unwrap(),
            ],
        );
        assert_eq!(code, EXIT_OK);
        let text = fs::read_to_string(&out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "lambda,method,re_delta,im_delta,abs_phi,bound");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 10);
        for row in &rows {
            let f: Vec<&str> = row.split(',').collect();
            let phi: f64 = f[4].parse().unwrap();
            let bound: f64 = f[5].parse().unwrap();
            assert!(phi <= bound);
        }
        let dumped = fs::read_to_string(&dump).unwrap();
        assert!(dumped.starts_with("segment,x,t,abs_n"));
        assert!(dumped.lines().count() > 1000);
    }

    #[test]
    fn contour_counts_and_rejection() {
        let dir = TempDir::new().unwrap();
        let cfg = constant_config(&dir, 1.0, 2.0, 0.5, 1e-4);
        let out = dir.path().join("contour.json");
        assert_eq!(invoke(&cfg, &out, &["contour", "--l", "1"]), EXIT_OK);
        let v = read_json(&out);
        assert_eq!(v["winding0"], 4);
        assert_eq!(v["windingq"], 4);
        // γ_3 passes through λ = π, a zero of Δ(0, ·).
        assert_eq!(invoke(&cfg, &out, &["contour", "--l", "3"]), EXIT_NUMERICAL);
    }

    #[test]
    fn usage_errors() {
        let dir = TempDir::new().unwrap();
        let out = dir.path().join("x.json");
        assert_eq!(run(["graph-sturm", "spectrum"]), EXIT_USAGE);
        assert_eq!(run(["graph-sturm", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["graph-sturm", "--help"]), EXIT_OK);
        let bad = write_config(&dir, "bad.json", "{\"a\": 1, \"b\": 2,\n \"p\": \"x\"}");
        assert_eq!(invoke(&bad, &out, &["spectrum"]), EXIT_USAGE);
        let missing = dir.path().join("absent.json");
        assert_eq!(invoke(&missing, &out, &["spectrum"]), EXIT_USAGE);
        let zero_p = constant_config(&dir, 1.0, 2.0, 0.0, 0.0);
        assert_eq!(invoke(&zero_p, &out, &["spectrum"]), EXIT_USAGE);
        let cfg = constant_config(&dir, 1.0, 2.0, 0.5, 0.0);
        assert_eq!(invoke(&cfg, &out, &["spectrum", "--tol", "-1"]), EXIT_USAGE);
        assert_eq!(invoke(&cfg, &out, &["detgrid", "--lmin", "2", "--lmax", "1", "--step", "0.1"]), EXIT_USAGE);
        assert_eq!(invoke(&cfg, &out, &["bounds", "--constants", "loose"]), EXIT_USAGE);
    }

    #[test]
    fn exit_code_contract() {
        let violation = anyhow::Error::from(Error::CertificateViolation { s: 1, detail: "x".into() });
        assert_eq!(commands::exit_code(&violation), EXIT_VIOLATION);
        let numeric = anyhow::Error::from(Error::Solver("x".into()));
        assert_eq!(commands::exit_code(&numeric), EXIT_NUMERICAL);
        let usage = anyhow::Error::from(commands::UsageError("x".into()));
        assert_eq!(commands::exit_code(&usage), EXIT_USAGE);
    }

    #[test]
    fn outputs_are_deterministic_and_honour_constant_set() {
        let dir = TempDir::new().unwrap();
        let cfg = constant_config(&dir, 1.0, 2.0, 0.5, 1e-4);
        let first = dir.path().join("a.json");
        let second = dir.path().join("b.json");
        assert_eq!(invoke(&cfg, &first, &["bounds", "--seed", "7"]), EXIT_OK);
        assert_eq!(invoke(&cfg, &second, &["--sequential", "bounds", "--seed", "7"]), EXIT_OK);
        assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
        let v = read_json(&first);
        assert_eq!(v["seed"], 7);
        let paper = dir.path().join("p.json");
        assert_eq!(invoke(&cfg, &paper, &["bounds", "--constants", "paper"]), EXIT_OK);
        let p = read_json(&paper);
        let rho_c = v["radii"][0]["rho"].as_f64().unwrap();
        let rho_p = p["radii"][0]["rho"].as_f64().unwrap();
        assert!((rho_c - 2.0 * rho_p).abs() < 1e-15);
        assert_eq!(p["smallness"]["constants"], "paper");
    }

    #[test]
    fn report_runs_the_full_pipeline() {
        let dir = TempDir::new().unwrap();
        let cfg = constant_config(&dir, 1.0, 2.0, 0.5, 1e-4);
        let out = dir.path().join("report.json");
        assert_eq!(invoke(&cfg, &out, &["report", "--count", "2", "--m", "800", "--contours", "3"]), EXIT_OK);
        let v = read_json(&out);
        assert_eq!(v["spectrum"].as_array().unwrap().len(), 3);
        assert_eq!(v["bounds"]["certificate"], "valid");
        let contours = v["contours"].as_array().unwrap();
        assert_eq!(contours[0]["count"]["winding0"], 4);
        assert_eq!(contours[2]["suggested"], 4);
        for o in v["fd_order"].as_array().unwrap() {
            assert!((o.as_f64().unwrap() - 2.0).abs() < 0.2);
        }
    }
}
