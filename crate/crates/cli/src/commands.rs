use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use graph_sturm::bounds::{
    localization_radius, qprime_lower_check, rouche_count, smallness_condition, ConstantSet, ContourCount, ContourOptions,
    LocalizationRadius, QPrimeCheck, SmallnessReport,
};
use graph_sturm::determinant::{shooting_delta_q_extrapolated, Evaluator};
use graph_sturm::localize::{localize, LocalizationReport, LocalizeOptions};
use graph_sturm::oracle::{compare_spectra, convergence_order, nested_eigenvalues, richardson, split_cells, DeviationTable};
use graph_sturm::problem::{Segment, SegmentGraphProblem};
use graph_sturm::transform::{build_kernel_series, KernelSettings, DEFAULT_KERNEL_GRID, DEFAULT_SERIES_TOL};
use graph_sturm::unperturbed::{unperturbed_spectrum, SpectrumEntry, SpectrumTable};
use graph_sturm::{Error, Execution};
use num_complex::Complex64;
use serde::Serialize;

use crate::{Cli, Command, DetgridArgs, MethodArg, EXIT_NUMERICAL, EXIT_USAGE, EXIT_VIOLATION};

pub const SCHEMA: &str = "graph-sturm/1";
/// Root tolerance for the unperturbed table that downstream commands build.
const TABLE_TOL: f64 = 1e-13;

/// Malformed command line or configuration file.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::CertificateViolation { .. }) => EXIT_VIOLATION,
        Some(Error::InvalidProblem(_) | Error::InvalidArgument(_) | Error::Json(_) | Error::UnknownIndex(_)) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

struct RunContext {
    problem: SegmentGraphProblem,
    constants: ConstantSet,
    seed: u64,
    exec: Execution,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'static str,
    command: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

fn load_problem(path: Option<&Path>) -> Result<SegmentGraphProblem> {
    let path = path.ok_or_else(|| usage("--config FILE is required"))?;
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    SegmentGraphProblem::from_json_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(usage(format!("--{name} must be positive, got {x}")))
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(cli: &Cli, ctx: &RunContext, command: &str, body: T) -> Result<()> {
    let env = Envelope { schema: SCHEMA, command, seed: ctx.seed, body };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    emit(cli.out.as_deref(), &text)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let ctx = RunContext {
        problem: load_problem(cli.config.as_deref())?,
        constants: cli.constants.into(),
        seed: cli.seed,
        exec: if cli.sequential { Execution::Sequential } else { Execution::Parallel },
    };
    match &cli.command {
        Command::Spectrum { count, tol } => {
            positive("tol", *tol)?;
            emit_json(cli, &ctx, "spectrum", spectrum(&ctx, *count, *tol)?)
        }
        Command::Bounds { count } => emit_json(cli, &ctx, "bounds", bounds(&ctx, *count)?),
        Command::Detgrid(args) => detgrid(cli, &ctx, args),
        Command::Localize { count, verify, m } => {
            let table = table(&ctx, *count)?;
            let mut rep = localize_report(&ctx, &table, *count)?;
            let oracle = if *verify { Some(verify_roots(&ctx, &mut rep, *m, *count, 1e-6)?) } else { None };
            emit_json(cli, &ctx, "localize", LocalizeOut { report: rep, verify: oracle })
        }
        Command::Verify { m, count, tol } => {
            positive("tol", *tol)?;
            let table = table(&ctx, *count)?;
            let mut rep = localize_report(&ctx, &table, *count)?;
            emit_json(cli, &ctx, "verify", verify_roots(&ctx, &mut rep, *m, *count, *tol)?)
        }
        Command::Contour { l } => {
            let ev = Evaluator::new(&ctx.problem, KernelSettings::default())?;
            let opts = ContourOptions { exec: ctx.exec, ..ContourOptions::default() };
            emit_json(cli, &ctx, "contour", rouche_count(&ev, *l, &opts)?)
        }
        Command::Report { count, m, contours } => emit_json(cli, &ctx, "report", report(&ctx, *count, *m, *contours)?),
    }
}

#[derive(Serialize)]
struct SpectrumOut {
    closed_form: bool,
    w1_below_pi: bool,
    root_tol: f64,
    roots: Vec<SpectrumEntry>,
}

fn spectrum(ctx: &RunContext, count: usize, tol: f64) -> Result<SpectrumOut> {
    if count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let t = unperturbed_spectrum(&ctx.problem, count, tol.min(1e-6))?;
    Ok(SpectrumOut { closed_form: t.closed_form, w1_below_pi: t.w1_below_pi, root_tol: t.root_tol, roots: t.entries })
}

/// One more root than requested so the last index has a neighbour.
fn table(ctx: &RunContext, count: usize) -> Result<SpectrumTable> {
    if count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    Ok(unperturbed_spectrum(&ctx.problem, count + 1, TABLE_TOL)?)
}

#[derive(Serialize)]
struct BoundsOut {
    smallness: SmallnessReport,
    certificate: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    radii: Vec<LocalizationRadius>,
    qprime: Vec<QPrimeCheck>,
}

fn bounds(ctx: &RunContext, count: usize) -> Result<BoundsOut> {
    let t = table(ctx, count)?;
    let smallness = smallness_condition(&ctx.problem, ctx.constants)?;
    let mut radii = Vec::new();
    let mut note = None;
    for s in 1..=count {
        match localization_radius(&ctx.problem, &t, s, ctx.constants) {
            Ok(r) => radii.push(r),
            Err(Error::CertificateUnavailable(msg)) => {
                note = Some(msg);
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let qprime = (1..=count).map(|s| qprime_lower_check(&ctx.problem, &t, s)).collect::<graph_sturm::Result<Vec<_>>>()?;
    let valid = smallness.holds && !radii.is_empty() && radii.iter().all(|r| r.valid);
    Ok(BoundsOut { smallness, certificate: if valid { "valid" } else { "unavailable" }, note, radii, qprime })
}

fn localize_report(ctx: &RunContext, table: &SpectrumTable, count: usize) -> Result<LocalizationReport> {
    let opts = LocalizeOptions { exec: ctx.exec, ..LocalizeOptions::default() };
    Ok(localize(&ctx.problem, table, count, ctx.constants, &opts)?)
}

#[derive(Serialize)]
struct LocalizeOut {
    #[serde(flatten)]
    report: LocalizationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    verify: Option<VerifyOut>,
}

#[derive(Serialize)]
struct VerifyOut {
    m: usize,
    cells: (usize, usize),
    /// Richardson combination of the `m/2` and `m` meshes.
    extrapolated: DeviationTable,
    raw: DeviationTable,
}

fn verify_roots(ctx: &RunContext, rep: &mut LocalizationReport, m: usize, count: usize, tol: f64) -> Result<VerifyOut> {
    if m < 100 || !m.is_multiple_of(2) {
        return Err(usage(format!("--m must be an even number of cells of at least 100, got {m}")));
    }
    let levels = nested_eigenvalues(&ctx.problem, m / 2, 2, count + 1, ctx.exec)?;
    let roots: Vec<(usize, f64)> = rep.roots.iter().filter_map(|r| r.lambda_q.map(|l| (r.s, l))).collect();
    let extrapolated = compare_spectra(&roots, &richardson(&levels[0], &levels[1]), tol)?;
    let raw = compare_spectra(&roots, &levels[1], tol)?;
    for row in &extrapolated.rows {
        if let Some(r) = rep.roots.iter_mut().find(|r| r.s == row.s) {
            r.oracle_dev = Some(row.deviation);
        }
    }
    let (m1, m2) = split_cells(&ctx.problem, m / 2);
    Ok(VerifyOut { m, cells: (2 * m1, 2 * m2), extrapolated, raw })
}

#[derive(Serialize)]
struct ContourEntry {
    l: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<ContourCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rejected: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    suggested: Option<usize>,
}

#[derive(Serialize)]
struct ReportOut {
    spectrum: Vec<SpectrumEntry>,
    bounds: BoundsOut,
    localize: LocalizeOut,
    /// Observed convergence order of the oracle on three nested meshes ending at `m`.
    fd_order: Vec<f64>,
    contours: Vec<ContourEntry>,
}

fn report(ctx: &RunContext, count: usize, m: usize, contours: usize) -> Result<ReportOut> {
    if !m.is_multiple_of(4) {
        return Err(usage(format!("--m must be divisible by 4 for the convergence study, got {m}")));
    }
    let t = table(ctx, count)?;
    let bounds = bounds(ctx, count)?;
    let mut rep = localize_report(ctx, &t, count)?;
    let verify = verify_roots(ctx, &mut rep, m, count, 1e-6)?;
    let levels = nested_eigenvalues(&ctx.problem, m / 4, 3, count + 1, ctx.exec)?;
    let fd_order = convergence_order(&levels[0], &levels[1], &levels[2]).into_iter().skip(1).collect();
    let ev = Evaluator::new(&ctx.problem, KernelSettings::default())?;
    let opts = ContourOptions { exec: ctx.exec, ..ContourOptions::default() };
    let mut entries = Vec::new();
    for l in 1..=contours {
        entries.push(match rouche_count(&ev, l, &opts) {
            Ok(c) => ContourEntry { l, count: Some(c), rejected: None, suggested: None },
            Err(e @ Error::ContourThroughZero { suggested, .. }) => {
                ContourEntry { l, count: None, rejected: Some(e.to_string()), suggested }
            }
            Err(e) => return Err(e.into()),
        });
    }
    Ok(ReportOut {
        spectrum: t.entries.into_iter().take(count + 1).collect(),
        bounds,
        localize: LocalizeOut { report: rep, verify: Some(verify) },
        fd_order,
        contours: entries,
    })
}

fn detgrid(cli: &Cli, ctx: &RunContext, args: &DetgridArgs) -> Result<()> {
    positive("step", args.step)?;
    if !(args.lmin.is_finite() && args.lmax.is_finite() && args.lmin <= args.lmax) {
        return Err(usage(format!("need finite --lmin <= --lmax, got {} and {}", args.lmin, args.lmax)));
    }
    let n = ((args.lmax - args.lmin) / args.step + 1e-9).floor() as usize;
    let grid: Vec<Complex64> = (0..=n).map(|j| Complex64::new(args.lmin + j as f64 * args.step, 0.0)).collect();
    let ev = Evaluator::new(&ctx.problem, KernelSettings::default())?;
    let mut rows: Vec<(f64, &str, Complex64, f64, f64)> = Vec::new();
    if matches!(args.method, MethodArg::Series | MethodArg::Both) {
        for e in ev.eval_many(&grid, ctx.exec)? {
            rows.push((e.lambda.re, "series", e.delta_q, e.phi.norm(), e.phi_bound));
        }
    }
    if matches!(args.method, MethodArg::Shooting | MethodArg::Both) {
        let vals = ctx.exec.try_map(&grid, |&l| shooting_delta_q_extrapolated(&ctx.problem, l, args.rk_steps))?;
        for (l, d) in grid.iter().zip(vals) {
            rows.push((l.re, "shooting", d, (d - ev.delta0(*l)).norm(), ev.phi_bound(*l)));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lambda", "method", "re_delta", "im_delta", "abs_phi", "bound"])?;
    for (l, method, d, phi, bound) in rows {
        w.write_record([
            format!("{l}"),
            method.to_string(),
            format!("{:e}", d.re),
            format!("{:e}", d.im),
            format!("{phi:e}"),
            format!("{bound:e}"),
        ])?;
    }
    let body = String::from_utf8(w.into_inner()?)?;
    emit(cli.out.as_deref(), &body)?;
    if let Some(path) = &args.dump_kernels {
        dump_kernels(ctx, path, Complex64::new(args.lmin, 0.0))?;
    }
    Ok(())
}

fn dump_kernels(ctx: &RunContext, path: &Path, lambda: Complex64) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["segment", "x", "t", "abs_n"])?;
    for seg in [Segment::Left, Segment::Right] {
        let k = build_kernel_series(&ctx.problem, seg, lambda, DEFAULT_KERNEL_GRID, DEFAULT_SERIES_TOL)?;
        let name = match seg {
            Segment::Left => "left",
            Segment::Right => "right",
        };
        for (x, t, v) in k.entries() {
            w.write_record([name.to_string(), format!("{x}"), format!("{t}"), format!("{:e}", v.norm())])?;
        }
    }
    w.flush()?;
    Ok(())
}
