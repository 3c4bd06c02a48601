//! Task execution and result files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Format, RunConfig, Task};
use super::output::{nums, opt_nums, write_json, MatrixOut, Num};
use crate::error::{Error, Result};
use crate::flow::{build_flow, kms_report, KmsReport, ModularFlow, PointFailure, EXP_METHOD};
use crate::kernels::{
    self, c_minus_half, entropy_from_deltas, lndelta_region_via_g_complex, lndelta_region_via_g_with, mn_kernels_with,
    restrict_correlators, KernelOptions, RegionKernels, RestrictedCorrelators,
};
use crate::lattice::{build_harmonic_chain, vacuum_state, GaussianState};
use crate::linalg::{self, block2, rel_diff};
use crate::symplectic::{
    lndelta_arccot_split, region_generator_full_space, region_generator_quadrature, standardness_check, Region,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCHEMA: i32 = 1;
pub const EXIT_RESIDUAL: i32 = 2;
pub const EXIT_CONSTRUCTION: i32 = 3;
pub const EXIT_IO: i32 = 4;

const KERNEL_SYMMETRY_TOL: f64 = 1e-8;
const C_SQUARE_TOL: f64 = 1e-9;
const FLOW_STRUCTURE_TOL: f64 = 1e-8;

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Schema { .. } => EXIT_SCHEMA,
        Error::Io(_) | Error::FileNotFound(_) => EXIT_IO,
        Error::GeneratorMismatch { .. } => EXIT_RESIDUAL,
        _ => EXIT_CONSTRUCTION,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualRecord {
    pub task: &'static str,
    pub name: String,
    pub value: Num,
    pub tolerance: Num,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelsOut {
    pub n_sites: usize,
    pub region: Vec<usize>,
    pub x_r: MatrixOut,
    pub p_r: MatrixOut,
    pub c_spectrum: Vec<Num>,
    pub c_minus_half: Vec<Num>,
    pub m: MatrixOut,
    pub n: MatrixOut,
    pub l_block: MatrixOut,
    pub entropy: Num,
    pub clipped: Vec<kernels::ClippedMode>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowSample {
    pub t: Num,
    pub k: MatrixOut,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowOut {
    pub region: Vec<usize>,
    pub l: MatrixOut,
    pub l_check: MatrixOut,
    pub generator_mismatch: Num,
    pub g_inverse_g_transpose_spectrum: Vec<Num>,
    pub exp_method: &'static str,
    pub samples: Vec<FlowSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KmsOut {
    pub region: Vec<usize>,
    pub t_values: Vec<Num>,
    pub kms_residuals: Vec<Option<Num>>,
    pub group_partners: Vec<Num>,
    pub group_residuals: Vec<Option<Num>>,
    pub symplectic_residuals: Vec<Option<Num>>,
    pub max_residual: Num,
    pub generator_mismatch: Num,
    pub exp_method: String,
    pub warnings: Vec<String>,
    pub failures: Vec<PointFailure>,
}

impl KmsOut {
    fn new(region: &Region, r: &KmsReport) -> Self {
        KmsOut {
            region: region.sites().to_vec(),
            t_values: nums(&r.t_values),
            kms_residuals: opt_nums(&r.kms_residuals),
            group_partners: nums(&r.group_partners),
            group_residuals: opt_nums(&r.group_residuals),
            symplectic_residuals: opt_nums(&r.symplectic_residuals),
            max_residual: Num(r.max_residual),
            generator_mismatch: Num(r.generator_mismatch),
            exp_method: r.exp_method.clone(),
            warnings: r.warnings.clone(),
            failures: r.failures.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub length: usize,
    pub start: usize,
    pub entropy: Option<Num>,
    pub c_min: Option<Num>,
    pub c_max: Option<Num>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorOut {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
    pub task: Option<Task>,
}

#[derive(Debug, Clone, Default)]
pub struct ResultBundle {
    pub kernels: Option<KernelsOut>,
    pub flow: Option<FlowOut>,
    pub kms: Option<KmsOut>,
    pub scan: Option<Vec<ScanRow>>,
    pub residuals: Vec<ResidualRecord>,
    pub warnings: Vec<String>,
    pub error: Option<ErrorOut>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub bundle: ResultBundle,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct ResidualsFile<'a> {
    all_pass: bool,
    residuals: &'a [ResidualRecord],
    warnings: &'a [String],
}

#[derive(Serialize)]
struct Metadata<'a> {
    package: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    exit_code: i32,
    elapsed_seconds: f64,
    finished_unix_seconds: u64,
    files: Vec<String>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    state: GaussianState,
    region: Region,
    opts: KernelOptions,
    rc: Option<RestrictedCorrelators>,
    kernels: Option<RegionKernels>,
    flow: Option<ModularFlow>,
}

impl Ctx<'_> {
    fn rc(&mut self) -> Result<&RestrictedCorrelators> {
        if self.rc.is_none() {
            self.rc = Some(restrict_correlators(&self.state, &self.region)?);
        }
        Ok(self.rc.as_ref().unwrap())
    }

    fn kernels(&mut self) -> Result<&RegionKernels> {
        if self.kernels.is_none() {
            let opts = self.opts;
            let k = mn_kernels_with(self.rc()?, &opts)?;
            self.kernels = Some(k);
        }
        Ok(self.kernels.as_ref().unwrap())
    }

    fn flow(&mut self) -> Result<&ModularFlow> {
        if self.flow.is_none() {
            self.kernels()?;
            let f = build_flow(self.kernels.as_ref().unwrap(), self.rc.as_ref().unwrap())?;
            self.flow = Some(f);
        }
        Ok(self.flow.as_ref().unwrap())
    }
}

fn record(b: &mut ResultBundle, task: &'static str, name: impl Into<String>, value: f64, tol: f64) {
    b.residuals.push(ResidualRecord {
        task,
        name: name.into(),
        value: Num(value),
        tolerance: Num(tol),
        pass: value.is_finite() && value <= tol,
    });
}

fn kernels_task(ctx: &mut Ctx, b: &mut ResultBundle) -> Result<()> {
    let n_sites = ctx.state.n_sites;
    let region = ctx.region.clone();
    let rc = ctx.rc()?.clone();
    let k = ctx.kernels()?.clone();
    let xp = &rc.x_r * &rc.p_r;
    record(b, "kernels", "c_squared_vs_xp", rel_diff(&(&k.c * &k.c), &xp), C_SQUARE_TOL);
    record(b, "kernels", "m_asymmetry", linalg::asymmetry(&k.m) / k.m.norm(), KERNEL_SYMMETRY_TOL);
    record(b, "kernels", "n_asymmetry", linalg::asymmetry(&k.n) / k.n.norm(), KERNEL_SYMMETRY_TOL);
    let z = nalgebra::DMatrix::zeros(rc.dim(), rc.dim());
    let gl = block2(&rc.x_r, &z, &z, &rc.p_r) * &k.l_block;
    record(b, "kernels", "gram_l_symmetric_part", linalg::symmetrize(&gl).norm() / gl.norm(), KERNEL_SYMMETRY_TOL);
    record(b, "kernels", "positivity_margin", (0.25 - rc.xp_min).max(0.0), 1e-10);
    if !k.clipped.is_empty() {
        b.warnings.push(format!("{} mode(s) clipped to c = 1/2 + clip", k.clipped.len()));
    }
    b.kernels = Some(KernelsOut {
        n_sites,
        region: region.sites().to_vec(),
        x_r: MatrixOut::sites(&rc.x_r, &region),
        p_r: MatrixOut::sites(&rc.p_r, &region),
        c_spectrum: nums(&k.c_spectrum),
        c_minus_half: nums(&k.c_minus_half),
        m: MatrixOut::sites(&k.m, &region),
        n: MatrixOut::sites(&k.n, &region),
        l_block: MatrixOut::phase(&k.l_block, &region),
        entropy: Num(kernels::entanglement_entropy(&k)),
        clipped: k.clipped.clone(),
    });
    Ok(())
}

fn crosscheck_task(ctx: &mut Ctx, b: &mut ResultBundle) -> Result<()> {
    let tol = ctx.cfg.tolerances.route_tol;
    let sing_tol = ctx.opts.sing_tol;
    let quad_tol = ctx.cfg.tolerances.quad_tol;
    let region = ctx.region.clone();
    let l = ctx.kernels()?.l_block.clone();
    let rc = ctx.rc()?.clone();
    let full = region_generator_full_space(&ctx.state, &region, sing_tol)?;
    record(b, "crosscheck", "full_space_vs_mn", rel_diff(&full, &l), tol);
    let quad = region_generator_quadrature(&ctx.state, &region, quad_tol)?;
    record(b, "crosscheck", "quadrature_vs_mn", rel_diff(&quad.value, &l), tol);
    record(b, "crosscheck", "quadrature_vs_full_space", rel_diff(&quad.value, &full), tol);
    record(b, "crosscheck", "quadrature_error_bound", quad.error, quad_tol);
    let via_g = lndelta_region_via_g_with(&rc, sing_tol)?;
    record(b, "crosscheck", "two_point_vs_mn", rel_diff(&via_g, &l), tol);
    let cplx = lndelta_region_via_g_complex(&rc)?;
    record(b, "crosscheck", "two_point_complex_vs_mn", rel_diff(&cplx.l_block, &l), tol);
    record(b, "crosscheck", "two_point_complex_max_imag", cplx.max_imag / l.norm(), 1e-10);
    if standardness_check(&ctx.state, &region).is_standard {
        let split = lndelta_arccot_split(&ctx.state, &region)?;
        let block = linalg::principal(&split, &region.phase_indices());
        record(b, "crosscheck", "arccot_split_vs_mn", rel_diff(&block, &l), tol);
    } else {
        b.warnings.push("region is not standard in the full space; arccot split skipped".into());
    }
    Ok(())
}

fn flow_task(ctx: &mut Ctx, b: &mut ResultBundle) -> Result<()> {
    let grid = ctx.cfg.t_grid();
    let route_tol = ctx.cfg.tolerances.route_tol;
    let region = ctx.region.clone();
    let f = ctx.flow()?.clone();
    record(b, "flow", "generator_mismatch", f.generator_mismatch, route_tol);
    let mut samples = Vec::with_capacity(grid.len());
    for &t in &grid {
        let k = crate::flow::flow_at_real(&f, t)?;
        samples.push(FlowSample { t: Num(t), k: MatrixOut::phase(&k, &region) });
        record(b, "flow", format!("symplectic_t={t}"), crate::flow::symplectic_invariance_residual(&f, t)?, FLOW_STRUCTURE_TOL);
    }
    b.flow = Some(FlowOut {
        region: region.sites().to_vec(),
        l: MatrixOut::phase(&f.l, &region),
        l_check: MatrixOut::phase(&f.l_check, &region),
        generator_mismatch: Num(f.generator_mismatch),
        g_inverse_g_transpose_spectrum: nums(&f.z_spectrum),
        exp_method: EXP_METHOD,
        samples,
    });
    Ok(())
}

fn kms_task(ctx: &mut Ctx, b: &mut ResultBundle) -> Result<()> {
    let grid = ctx.cfg.t_grid();
    let kms_tol = ctx.cfg.tolerances.kms_tol;
    let region = ctx.region.clone();
    ctx.flow()?;
    let rep = kms_report(ctx.flow.as_ref().unwrap(), &grid, ctx.kernels.as_ref().unwrap());
    for (i, &t) in rep.t_values.iter().enumerate() {
        record(b, "kms", format!("kms_t={t}"), rep.kms_residuals[i].unwrap_or(f64::NAN), kms_tol);
        record(b, "kms", format!("group_t={t}"), rep.group_residuals[i].unwrap_or(f64::NAN), FLOW_STRUCTURE_TOL);
    }
    b.warnings.extend(rep.warnings.iter().cloned());
    b.kms = Some(KmsOut::new(&region, &rep));
    Ok(())
}

/// Entropies of intervals centered in the chain, one row per length.
pub fn entropy_scan(state: &GaussianState, lengths: &[usize]) -> Vec<ScanRow> {
    let n = state.n_sites;
    lengths
        .par_iter()
        .map(|&length| {
            let start = (n - length.min(n)) / 2;
            let row = |entropy, c_min, c_max, error| ScanRow { length, start, entropy, c_min, c_max, error };
            let res = Region::interval(start, length, n).and_then(|r| {
                if !r.is_proper() {
                    return Err(Error::NotStandard("interval covers the whole lattice".into()));
                }
                c_minus_half(&restrict_correlators(state, &r)?)
            });
            match res {
                Ok(d) => {
                    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    row(Some(Num(entropy_from_deltas(&d))), Some(Num(0.5 + lo)), Some(Num(0.5 + hi)), None)
                }
                Err(e) => row(None, None, None, Some(e.kind().to_string())),
            }
        })
        .collect()
}

fn write_scan_csv(dir: &Path, rows: &[ScanRow]) -> Result<PathBuf> {
    let path = dir.join("entropy_scan.csv");
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    w.write_record(["length", "start", "entropy", "c_min", "c_max", "error"]).map_err(io)?;
    let f = |x: &Option<Num>| x.map(|v| super::output::fmt_num(v.0)).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.length.to_string(),
            r.start.to_string(),
            f(&r.entropy),
            f(&r.c_min),
            f(&r.c_max),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(path)
}

fn execute(cfg: &RunConfig, tasks: &[Task], b: &mut ResultBundle) -> std::result::Result<(), (Option<Task>, Error)> {
    let m = &cfg.model;
    let model = build_harmonic_chain(m.n_sites, m.mass, m.coupling, m.boundary).map_err(|e| (None, e))?;
    let state = vacuum_state(&model).map_err(|e| (None, e))?;
    let region = cfg.resolve_region().map_err(|e| (None, e))?;
    let needs_region = tasks.iter().any(|t| *t != Task::EntropyScan);
    if needs_region && !region.is_proper() {
        let why = if region.is_empty() { "region is empty" } else { "region covers the whole lattice" };
        return Err((None, Error::NotStandard(why.into())));
    }
    let opts = KernelOptions { sing_tol: cfg.tolerances.sing_tol, clip: cfg.tolerances.clip };
    let mut ctx = Ctx { cfg, state, region, opts, rc: None, kernels: None, flow: None };
    for &task in tasks {
        let r = match task {
            Task::Kernels => kernels_task(&mut ctx, b),
            Task::Crosscheck => crosscheck_task(&mut ctx, b),
            Task::Flow => flow_task(&mut ctx, b),
            Task::Kms => kms_task(&mut ctx, b),
            Task::EntropyScan => {
                let lengths = cfg.scan.as_ref().map(|s| s.lengths.clone()).unwrap_or_default();
                b.scan = Some(entropy_scan(&ctx.state, &lengths));
                Ok(())
            }
        };
        r.map_err(|e| (Some(task), e))?;
    }
    Ok(())
}

fn write_outputs(cfg: &RunConfig, dir: &Path, b: &ResultBundle, files: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(k) = &b.kernels {
        files.push(write_json(dir, "kernels.json", k)?);
    }
    if let Some(f) = &b.flow {
        files.push(write_json(dir, "flow.json", f)?);
    }
    if let Some(k) = &b.kms {
        files.push(write_json(dir, "kms.json", k)?);
    }
    if let Some(rows) = &b.scan {
        if cfg.output.formats.contains(&Format::Json) {
            files.push(write_json(dir, "entropy_scan.json", rows)?);
        }
        if cfg.output.formats.contains(&Format::Csv) {
            files.push(write_scan_csv(dir, rows)?);
        }
    }
    if b.error.is_none() || !b.residuals.is_empty() {
        let all_pass = b.residuals.iter().all(|r| r.pass);
        files.push(write_json(dir, "residuals.json", &ResidualsFile { all_pass, residuals: &b.residuals, warnings: &b.warnings })?);
    }
    if let Some(e) = &b.error {
        files.push(write_json(dir, "error.json", e)?);
    }
    Ok(())
}

/// Runs `tasks` (the config's task list unless overridden) and writes result
/// files into the configured output directory.
pub fn run_tasks(cfg: &RunConfig, tasks: &[Task]) -> RunOutcome {
    let started = Instant::now();
    let dir = PathBuf::from(&cfg.output.directory);
    let mut bundle = ResultBundle::default();
    let mut files = Vec::new();
    if let Err(e) = std::fs::create_dir_all(&dir) {
        let err = Error::Io(format!("{}: {e}", dir.display()));
        bundle.error = Some(ErrorOut { kind: err.kind(), message: err.to_string(), exit_code: EXIT_IO, task: None });
        return RunOutcome { exit_code: EXIT_IO, bundle, files };
    }
    let mut exit_code = match execute(cfg, tasks, &mut bundle) {
        Ok(()) if bundle.residuals.iter().all(|r| r.pass) => EXIT_OK,
        Ok(()) => EXIT_RESIDUAL,
        Err((task, e)) => {
            let code = exit_code_for(&e);
            bundle.error = Some(ErrorOut { kind: e.kind(), message: e.to_string(), exit_code: code, task });
            code
        }
    };
    if let Err(e) = write_outputs(cfg, &dir, &bundle, &mut files) {
        exit_code = exit_code_for(&e);
        bundle.error = Some(ErrorOut { kind: e.kind(), message: e.to_string(), exit_code, task: None });
    }
    let meta = Metadata {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        exit_code,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        finished_unix_seconds: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        files: files.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect(),
    };
    match write_json(&dir, "metadata.json", &meta) {
        Ok(p) => files.push(p),
        Err(_) if exit_code == EXIT_OK => exit_code = EXIT_IO,
        Err(_) => {}
    }
    RunOutcome { exit_code, bundle, files }
}

pub fn run(cfg: &RunConfig) -> RunOutcome {
    run_tasks(cfg, &cfg.tasks)
}

