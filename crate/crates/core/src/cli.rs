//! Command-line driver: argument parsing, config merging and output.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bdmodel::{CantorProfile, StructuredBD};
use crate::blowup::blowup_sequence;
use crate::cellsolver::integrand::{integrand_from_id, surface_from_id, MuellerH};
use crate::cellsolver::{Integrand, SolverOptions};
use crate::density::{self, DensityEstimate, JumpForm};
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::homog::{fhom_dirichlet, fhom_periodic, HomogSpec};
use crate::represent::{assemble, assemble_homogeneous, Densities};
use crate::rigid::korn_ratio;
use crate::tensor::{odot, Mat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "bdrelax", version, about = "Relaxed densities of linear-growth functionals on BD fields")]
#[command(args_override_self = true)]
struct Cli {
    /// JSON object of flag values; flags given on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Write `<command>.csv` / `<command>.json` here instead of stdout.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Bulk density from the Dirichlet cell formula along an ε-schedule.
    Density(DensityArgs),
    /// Discrete symmetric quasiconvex envelope along a mesh schedule.
    Sq(SqArgs),
    /// Jump density on the rotated unit cell.
    Jump(JumpArgs),
    /// Secant slopes of the recession function.
    Recession(RecessionArgs),
    /// Homogenized density by the Dirichlet and periodic cell formulas.
    Homogenize(HomogArgs),
    /// Blow-up sequence with profile fits.
    Blowup(BlowupArgs),
    /// Bulk, jump and Cantor parts of the relaxed functional.
    Represent(RepresentArgs),
    /// Müller's counterexample: h, its discrete envelope and the witness.
    Mueller(MuellerArgs),
    /// Korn scaling ratios on shrinking windows.
    Korn(KornArgs),
    /// Run the acceptance suite.
    Selftest,
}

#[derive(Args, Debug, Serialize)]
struct SolverArgs {
    #[arg(long, default_value_t = 1)]
    multistarts: usize,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
}

#[derive(Args, Debug, Serialize)]
struct DensityArgs {
    #[arg(long, default_value = "abs-sym")]
    integrand: String,
    #[arg(long = "A", default_value = "1,0;0,1")]
    a: String,
    #[arg(long, default_value = "0,0")]
    x0: String,
    #[arg(long, default_value = "0,0")]
    v: String,
    #[arg(long, default_value = "1,1/2,1/4")]
    eps_schedule: String,
    #[arg(long, default_value_t = 16)]
    mesh: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug, Serialize)]
struct SqArgs {
    #[arg(long, default_value = "abs-sym")]
    integrand: String,
    #[arg(long = "A", default_value = "1,0;0,1")]
    a: String,
    #[arg(long, default_value = "8,16,32")]
    mesh: String,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug, Serialize)]
struct JumpArgs {
    /// Bulk id, or `penalty-sbd(<surface id>)` for the SBD form.
    #[arg(long, default_value = "abs-sym")]
    integrand: String,
    /// Bulk density of the SBD form.
    #[arg(long, default_value = "abs-sym")]
    bulk: String,
    /// Use the recession density at a single scale.
    #[arg(long)]
    bis: bool,
    #[arg(long, default_value = "0,0")]
    x0: String,
    #[arg(long, default_value = "0,0")]
    vminus: String,
    #[arg(long, default_value = "0,1")]
    vplus: String,
    #[arg(long, default_value = "1,0")]
    nu: String,
    #[arg(long, default_value = "1,1/2,1/4")]
    eps_schedule: String,
    #[arg(long, default_value_t = 32)]
    mesh: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug, Serialize)]
struct RecessionArgs {
    #[arg(long, default_value = "sqrt1plus-sym")]
    integrand: String,
    #[arg(long = "A", default_value = "1,0;0,1")]
    a: String,
    #[arg(long, default_value = "0,0")]
    x0: String,
    #[arg(long, default_value = "0,0")]
    v: String,
    #[arg(long, default_value = "1e2,1e3,1e4")]
    t_schedule: String,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Formula {
    Dirichlet,
    Periodic,
    Both,
}

#[derive(Args, Debug, Serialize)]
struct HomogArgs {
    #[arg(long, default_value = "laminate-a(cos)")]
    integrand: String,
    #[arg(long = "A", default_value = "1,0;0,0")]
    a: String,
    #[arg(long = "T-schedule", default_value = "1,2,4")]
    t_schedule: String,
    /// Mesh cells per period.
    #[arg(long, default_value_t = 16)]
    mesh: usize,
    #[arg(long, value_enum, default_value_t = Formula::Both)]
    formula: Formula,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug, Serialize)]
struct BlowupArgs {
    /// Field spec as JSON, or `@path`; defaults to a Cantor staircase.
    #[arg(long)]
    bd_spec: Option<String>,
    #[arg(long, default_value = "1/4,1/2")]
    point: String,
    #[arg(long, default_value = "1/3,1/9,1/27,1/81,1/243")]
    eps_schedule: String,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 64)]
    grid: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DensitySource {
    Analytic,
    Table,
}

#[derive(Args, Debug, Serialize)]
struct RepresentArgs {
    /// Field spec as JSON, or `@path`.
    #[arg(long)]
    bd_spec: String,
    #[arg(long = "box", default_value = "-0.5,-0.5;0.5,0.5")]
    bbox: String,
    #[arg(long, default_value = "abs-sym")]
    integrand: String,
    #[arg(long, value_enum, default_value_t = DensitySource::Analytic)]
    density_source: DensitySource,
    /// Cell mesh for tabulated jump densities.
    #[arg(long, default_value_t = 32)]
    mesh: usize,
    #[arg(long, default_value_t = 8)]
    quad: usize,
}

#[derive(Args, Debug, Serialize)]
struct MuellerArgs {
    /// `Id`, `A0`, `J` or a row-major matrix.
    #[arg(long, default_value = "A0")]
    matrix: String,
    #[arg(long, default_value = "8,16,32")]
    mesh: String,
    #[arg(long, default_value_t = 8)]
    multistarts: usize,
}

#[derive(Args, Debug, Serialize)]
struct KornArgs {
    /// Field spec as JSON, or `@path`; defaults to a Cantor staircase.
    #[arg(long)]
    bd_spec: Option<String>,
    #[arg(long = "box", default_value = "0,0;1,1")]
    bbox: String,
    #[arg(long, default_value = "0,0")]
    point: String,
    #[arg(long, default_value = "1,1/3,1/9")]
    eps_schedule: String,
}

/// Tabular output plus a JSON summary.
struct Output {
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
    summary: Value,
    ok: bool,
}

enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

impl Output {
    fn csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(x) => num(*x),
                    Cell::Int(i) => i.to_string(),
                    Cell::Text(t) => t.clone(),
                })
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

fn estimate_output(key: &'static str, e: &DensityEstimate, extra: Value) -> Output {
    let mut summary = json!({
        "extrapolated": e.extrapolated,
        "spread": e.spread,
        "converged": e.converged,
        "monotone": e.monotone,
    });
    merge(&mut summary, extra);
    Output {
        header: vec![key, "value"],
        rows: e.samples.iter().map(|s| vec![key_cell(key, s.0), Cell::Num(s.1)]).collect(),
        summary,
        ok: true,
    }
}

fn key_cell(key: &str, k: f64) -> Cell {
    match key {
        "mesh" | "T" => Cell::Int(k as i64),
        _ => Cell::Num(k),
    }
}

fn merge(into: &mut Value, extra: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, extra) {
        a.extend(b);
    }
}

fn parse_scalar(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let (n, d): (f64, f64) = (
                n.trim().parse().map_err(|_| bad_number(s))?,
                d.trim().parse().map_err(|_| bad_number(s))?,
            );
            n / d
        }
        None => s.parse().map_err(|_| bad_number(s))?,
    };
    if !v.is_finite() {
        return Err(bad_number(s));
    }
    Ok(v)
}

fn bad_number(s: &str) -> Error {
    Error::Validation(format!("cannot parse number {s:?}"))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_scalar).collect()
}

fn parse_usizes(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Validation(format!("cannot parse integer {t:?}"))))
        .collect()
}

fn parse_vec2(s: &str) -> Result<Vec<f64>> {
    let v = parse_list(s)?;
    if v.len() != 2 {
        return Err(Error::WrongDimension { expected: 2, got: v.len() });
    }
    Ok(v)
}

/// Row-major matrix with `;` between rows.
fn parse_matrix(s: &str) -> Result<Mat> {
    let rows: Vec<Vec<f64>> = s.split(';').map(parse_list).collect::<Result<_>>()?;
    if rows.len() != 2 || rows.iter().any(|r| r.len() != 2) {
        return Err(Error::Validation(format!("expected a 2x2 matrix, got {s:?}")));
    }
    Ok(Mat::new2(rows[0][0], rows[0][1], rows[1][0], rows[1][1]))
}

fn parse_box(s: &str) -> Result<Aabb> {
    let rows: Vec<Vec<f64>> = s.split(';').map(parse_list).collect::<Result<_>>()?;
    if rows.len() != 2 {
        return Err(Error::Validation("box is given as lo;hi".into()));
    }
    Aabb::new(rows[0].clone(), rows[1].clone())
}

fn load_spec(s: &str) -> Result<StructuredBD> {
    let text = match s.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read {path}: {e}")))?,
        None => s.to_string(),
    };
    StructuredBD::from_json(&text)
}

fn default_staircase() -> Result<StructuredBD> {
    let stair = CantorProfile { depth: 8, total_mass: 1.0, support: (0.0, 1.0) };
    StructuredBD::staircase(vec![1.0, 0.0], vec![0.0, 1.0], &stair)
}

fn solver_options(s: &SolverArgs, seed: u64) -> SolverOptions {
    SolverOptions {
        multistarts: s.multistarts.max(1),
        max_iters: s.max_iters,
        seed,
        ..Default::default()
    }
}

fn matrix_json(m: &Mat) -> Value {
    json!([[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]])
}

fn execute(cmd: &Command, seed: u64) -> Result<Output> {
    match cmd {
        Command::Density(a) => {
            let f0 = integrand_from_id(&a.integrand)?;
            let e = density::bulk_density(
                f0,
                &parse_vec2(&a.x0)?,
                &parse_vec2(&a.v)?,
                &parse_matrix(&a.a)?,
                &parse_list(&a.eps_schedule)?,
                a.mesh,
                &solver_options(&a.solver, seed),
            )?;
            Ok(estimate_output("eps", &e, json!({})))
        }
        Command::Sq(a) => {
            let f0 = integrand_from_id(&a.integrand)?;
            let e = density::sq_envelope(
                f0,
                &parse_matrix(&a.a)?,
                &parse_usizes(&a.mesh)?,
                &solver_options(&a.solver, seed),
            )?;
            Ok(estimate_output("mesh", &e, json!({})))
        }
        Command::Jump(a) => {
            let form = if let Some(g) = a
                .integrand
                .trim()
                .strip_prefix("penalty-sbd(")
                .and_then(|s| s.strip_suffix(')'))
            {
                JumpForm::Sbd(integrand_from_id(&a.bulk)?, surface_from_id(g)?)
            } else if a.bis {
                JumpForm::Bis(integrand_from_id(&a.integrand)?)
            } else {
                JumpForm::Ld(integrand_from_id(&a.integrand)?)
            };
            let e = density::jump_density(
                &form,
                &parse_vec2(&a.x0)?,
                &parse_vec2(&a.vminus)?,
                &parse_vec2(&a.vplus)?,
                &parse_vec2(&a.nu)?,
                &parse_list(&a.eps_schedule)?,
                a.mesh,
                &solver_options(&a.solver, seed),
            )?;
            Ok(estimate_output("eps", &e, json!({})))
        }
        Command::Recession(a) => {
            let f0 = integrand_from_id(&a.integrand)?;
            let f = |x: &[f64], v: &[f64], m: &Mat| f0.eval(x, v, m);
            let e = density::recession(
                &f,
                &parse_vec2(&a.x0)?,
                &parse_vec2(&a.v)?,
                &parse_matrix(&a.a)?,
                &parse_list(&a.t_schedule)?,
            )?;
            Ok(estimate_output("t", &e, json!({})))
        }
        Command::Homogenize(a) => homogenize(a, seed),
        Command::Blowup(a) => {
            let u = match &a.bd_spec {
                Some(s) => load_spec(s)?,
                None => default_staircase()?,
            };
            let steps = blowup_sequence(&u, &parse_vec2(&a.point)?, &parse_list(&a.eps_schedule)?, a.rho, a.grid)?;
            let flagged = steps.iter().filter(|s| s.flagged).count();
            Ok(Output {
                header: vec!["eps", "emass", "residual", "beta"],
                rows: steps
                    .iter()
                    .map(|s| vec![Cell::Num(s.eps), Cell::Num(s.emass), Cell::Num(s.residual), Cell::Num(s.beta)])
                    .collect(),
                summary: json!({ "steps": steps.len(), "flagged": flagged }),
                ok: true,
            })
        }
        Command::Represent(a) => represent(a, seed),
        Command::Mueller(a) => mueller(a, seed),
        Command::Korn(a) => {
            let u = match &a.bd_spec {
                Some(s) => load_spec(s)?,
                None => default_staircase()?,
            };
            let rows = korn_ratio(&u, &parse_box(&a.bbox)?, &parse_vec2(&a.point)?, &parse_list(&a.eps_schedule)?)?;
            let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
            let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok(Output {
                header: vec!["eps", "l1_residual", "ev_mass", "ratio"],
                rows: rows
                    .iter()
                    .map(|r| vec![Cell::Num(r.eps), Cell::Num(r.l1_residual), Cell::Num(r.ev_mass), Cell::Num(r.ratio)])
                    .collect(),
                summary: json!({ "max_over_min": max / min }),
                ok: true,
            })
        }
        Command::Selftest => {
            let results = crate::acceptance::run_all(seed);
            for r in &results {
                log::info!("{r}");
            }
            let ok = results.iter().all(|r| r.passed);
            Ok(Output {
                header: vec!["id", "name", "passed", "detail"],
                rows: results
                    .iter()
                    .map(|r| {
                        vec![
                            Cell::Int(r.id as i64),
                            Cell::Text(r.name.to_string()),
                            Cell::Text(r.passed.to_string()),
                            Cell::Text(format!("\"{}\"", r.detail.replace('"', "\"\""))),
                        ]
                    })
                    .collect(),
                summary: json!({
                    "passed": results.iter().filter(|r| r.passed).count(),
                    "total": results.len(),
                }),
                ok,
            })
        }
    }
}

fn homogenize(a: &HomogArgs, seed: u64) -> Result<Output> {
    let f0 = integrand_from_id(&a.integrand)?;
    let spec = HomogSpec {
        solver: solver_options(&a.solver, seed),
        ..HomogSpec::new(f0, parse_matrix(&a.a)?, parse_usizes(&a.t_schedule)?, a.mesh)
    };
    spec.validate()?;
    let periodic = match a.formula {
        Formula::Dirichlet => None,
        _ => Some(fhom_periodic(&spec)?),
    };
    let dirichlet = match a.formula {
        Formula::Periodic => None,
        _ => Some(fhom_dirichlet(&spec)?),
    };
    let mut summary = json!({ "periodic": periodic });
    let mut rows = Vec::new();
    if let Some(d) = &dirichlet {
        rows = d.samples.iter().map(|s| vec![key_cell("T", s.0), Cell::Num(s.1)]).collect();
        merge(
            &mut summary,
            json!({
                "extrapolated": d.extrapolated,
                "spread": d.spread,
                "converged": d.converged,
                "monotone": d.monotone,
            }),
        );
        if let Some(p) = periodic {
            merge(&mut summary, json!({ "relative_gap": (p - d.extrapolated).abs() / p }));
        }
    }
    Ok(Output { header: vec!["T", "value"], rows, summary, ok: true })
}

fn mueller(a: &MuellerArgs, seed: u64) -> Result<Output> {
    let m = match a.matrix.trim() {
        "A0" => density::a0(),
        "Id" => Mat::identity(2),
        "J" => density::rotation_j(),
        s => parse_matrix(s)?,
    };
    let opts = SolverOptions { multistarts: a.multistarts.max(1), seed, ..Default::default() };
    let h: Arc<dyn Integrand> = Arc::new(MuellerH);
    let e = density::sq_envelope(h, &m, &parse_usizes(&a.mesh)?, &opts)?;
    let witness = density::convex_envelope_witness_a0();
    let summary = json!({
        "matrix": matrix_json(&m),
        "h": density::mueller_h(&m)?,
        "qh": e.samples.iter().map(|s| json!({ "mesh": s.0 as usize, "value": s.1 })).collect::<Vec<_>>(),
        "monotone": e.monotone,
        "witness": witness,
    });
    Ok(Output {
        header: vec!["mesh", "value"],
        rows: e.samples.iter().map(|s| vec![key_cell("mesh", s.0), Cell::Num(s.1)]).collect(),
        summary,
        ok: true,
    })
}

type JumpKey = (Vec<f64>, Vec<f64>, Vec<f64>);

fn represent(a: &RepresentArgs, seed: u64) -> Result<Output> {
    let u = load_spec(&a.bd_spec)?;
    let b = parse_box(&a.bbox)?;
    let f0 = integrand_from_id(&a.integrand)?;
    let fl = f0.flags();
    let rep = match a.density_source {
        DensitySource::Analytic if fl.one_homogeneous => assemble_homogeneous(&u, &b, f0.as_ref(), a.quad)?,
        DensitySource::Analytic => {
            if !(fl.convex && fl.v_independent) {
                return Err(Error::Validation(format!(
                    "{} needs a convex, v-independent density for analytic densities",
                    f0.name()
                )));
            }
            let rec = f0
                .recession()
                .ok_or_else(|| Error::Unsupported(format!("{} has no closed-form recession", f0.name())))?;
            let f = |x: &[f64], v: &[f64], e: &Mat| f0.eval(x, v, e);
            let g = |x: &[f64], m: &[f64], p: &[f64], nu: &[f64]| {
                let dv: Vec<f64> = p.iter().zip(m).map(|(a, b)| a - b).collect();
                rec.eval(x, m, &odot(&dv, nu))
            };
            let finf = |x: &[f64], v: &[f64], polar: &Mat| rec.eval(x, v, polar);
            assemble(&u, &b, &Densities { f: &f, g: &g, finf: &finf }, a.quad)?
        }
        DensitySource::Table => {
            let rec = f0
                .recession()
                .ok_or_else(|| Error::Unsupported(format!("{} has no closed-form recession", f0.name())))?;
            let opts = SolverOptions { seed, ..Default::default() };
            let cache: Mutex<Vec<(JumpKey, f64)>> = Mutex::new(Vec::new());
            let failure: Mutex<Option<Error>> = Mutex::new(None);
            let form = JumpForm::Bis(f0.clone());
            let f = |x: &[f64], v: &[f64], e: &Mat| f0.eval(x, v, e);
            let g = |x: &[f64], m: &[f64], p: &[f64], nu: &[f64]| {
                let key: JumpKey = (x.to_vec(), m.to_vec(), p.to_vec());
                let key = if fl.x_independent && fl.v_independent {
                    (vec![], vec![], p.iter().zip(m).map(|(a, b)| a - b).chain(nu.iter().cloned()).collect())
                } else {
                    key
                };
                if let Some(v) = cache.lock().unwrap().iter().find(|c| c.0 == key).map(|c| c.1) {
                    return v;
                }
                match density::jump_density(&form, x, m, p, nu, &[1.0], a.mesh, &opts) {
                    Ok(e) => {
                        cache.lock().unwrap().push((key, e.extrapolated));
                        e.extrapolated
                    }
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        f64::NAN
                    }
                }
            };
            let finf = |x: &[f64], v: &[f64], polar: &Mat| rec.eval(x, v, polar);
            let r = assemble(&u, &b, &Densities { f: &f, g: &g, finf: &finf }, a.quad);
            if let Some(e) = failure.into_inner().unwrap() {
                return Err(e);
            }
            r?
        }
    };
    Ok(Output {
        header: vec!["part", "value"],
        rows: vec![
            vec![Cell::Text("bulk".into()), Cell::Num(rep.bulk)],
            vec![Cell::Text("jump".into()), Cell::Num(rep.jump)],
            vec![Cell::Text("cantor".into()), Cell::Num(rep.cantor)],
            vec![Cell::Text("total".into()), Cell::Num(rep.total)],
        ],
        summary: json!({ "representation": rep }),
        ok: true,
    })
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Density(_) => "density",
        Command::Sq(_) => "sq",
        Command::Jump(_) => "jump",
        Command::Recession(_) => "recession",
        Command::Homogenize(_) => "homogenize",
        Command::Blowup(_) => "blowup",
        Command::Represent(_) => "represent",
        Command::Mueller(_) => "mueller",
        Command::Korn(_) => "korn",
        Command::Selftest => "selftest",
    }
}

/// Flags encoded by a config object: scalars as values, arrays joined by `,`
/// and arrays of arrays by `;`.
fn config_tokens(path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("config is not JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(Error::Validation("config must be a JSON object".into()));
    };
    fn flat(v: &Value) -> Result<String> {
        Ok(match v {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            Value::Array(items) => {
                let sep = if items.iter().any(|i| i.is_array()) { ";" } else { "," };
                items.iter().map(flat).collect::<Result<Vec<_>>>()?.join(sep)
            }
            Value::Object(_) => serde_json::to_string(v).unwrap_or_default(),
            _ => return Err(Error::Validation(format!("unsupported config value {v}"))),
        })
    }
    let mut out = Vec::new();
    for (k, v) in map {
        if k == "config" {
            return Err(Error::Validation("config files cannot nest".into()));
        }
        match v {
            Value::Bool(true) => out.push(format!("--{k}").into()),
            Value::Bool(false) | Value::Null => {}
            v => {
                out.push(format!("--{k}").into());
                out.push(flat(&v)?.into());
            }
        }
    }
    Ok(out)
}

fn parse(argv: &[OsString]) -> std::result::Result<Cli, clap::Error> {
    Cli::try_parse_from(argv)
}

fn init_logging() -> Result<()> {
    let level = std::env::var("BDRELAX_LOG").unwrap_or_else(|_| "error".into());
    if !matches!(level.as_str(), "error" | "info" | "debug") {
        return Err(Error::Validation(format!("BDRELAX_LOG must be error, info or debug, got {level:?}")));
    }
    let _ = env_logger::Builder::new()
        .parse_filters(&level)
        .target(env_logger::Target::Stderr)
        .try_init();
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    if e.is_solver_failure() {
        EXIT_SOLVER
    } else {
        EXIT_VALIDATION
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if let Err(e) = init_logging() {
        eprintln!("{e}");
        return EXIT_VALIDATION;
    }
    let mut cli = match parse(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    if let Some(path) = cli.config.clone() {
        let tokens = match config_tokens(&path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("{e}");
                return EXIT_VALIDATION;
            }
        };
        let name = command_name(&cli.command);
        let at = argv.iter().position(|a| a.to_str() == Some(name)).unwrap_or(argv.len());
        let mut merged = argv[..=at.min(argv.len() - 1)].to_vec();
        merged.extend(tokens);
        merged.extend_from_slice(&argv[at + 1..]);
        cli = match parse(&merged) {
            Ok(c) => c,
            Err(e) => {
                let _ = e.print();
                return EXIT_VALIDATION;
            }
        };
    }
    match run_cli(&cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_SOLVER,
        Err(e) => {
            eprintln!("{e}");
            exit_code(&e)
        }
    }
}

fn config_hash(cli: &Cli) -> String {
    let resolved = json!({ "seed": cli.seed, "command": cli.command });
    let digest = Sha256::digest(serde_json::to_vec(&resolved).unwrap_or_default());
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn run_cli(cli: &Cli) -> Result<bool> {
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::Validation(format!("cannot create {}: {e}", dir.display())))?;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Validation("--jobs must be positive".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let name = command_name(&cli.command);
    log::info!("running {name} with seed {}", cli.seed);
    let out = pool.install(|| execute(&cli.command, cli.seed))?;

    let mut summary = json!({
        "command": name,
        "config-hash": config_hash(cli),
        "seed": cli.seed,
        "version": env!("CARGO_PKG_VERSION"),
    });
    merge(&mut summary, out.summary.clone());
    let json_text = serde_json::to_string_pretty(&summary).unwrap_or_default() + "\n";
    let csv_text = out.csv();
    let want_csv = cli.format != Format::Json;
    let want_json = cli.format != Format::Csv;
    match &cli.out {
        Some(dir) => {
            let write = |file: String, text: &str| {
                let path = dir.join(file);
                std::fs::write(&path, text)
                    .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display())))
            };
            if want_csv {
                write(format!("{name}.csv"), &csv_text)?;
            }
            if want_json {
                write(format!("{name}.json"), &json_text)?;
            }
        }
        None => {
            if want_csv {
                print!("{csv_text}");
            }
            if want_json {
                print!("{json_text}");
            }
        }
    }
    Ok(out.ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_numbers_and_matrices() {
        assert_eq!(parse_list("1, 1/3 ,2e-1").unwrap(), vec![1.0, 1.0 / 3.0, 0.2]);
        assert!(parse_list("1,x").is_err());
        let m = parse_matrix("1,2;3,4").unwrap();
        assert_eq!((m[(0, 1)], m[(1, 0)]), (2.0, 3.0));
        assert!(parse_matrix("1,2,3").is_err());
    }

    #[test]
    fn csv_uses_seventeen_digits() {
        assert_eq!(num(std::f64::consts::SQRT_2), "1.4142135623730951e0");
        let o = Output {
            header: vec!["k", "value"],
            rows: vec![vec![Cell::Int(8), Cell::Num(0.5)]],
            summary: json!({}),
            ok: true,
        };
        assert_eq!(o.csv(), "k,value\n8,5.0000000000000000e-1\n");
    }
}
