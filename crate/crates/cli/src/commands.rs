//! Subcommand implementations. Each command validates its input, calls the
//! core library and writes its output in one piece.

use crate::config::{Format, RunConfig};
use crate::{CliError, WORKERS_ENV};
use clap::Args;
use monfer_core::analytics::{
    flow_bkt_banded, flow_free, flow_interacting, phase_boundary, sine_gordon_kink, FreeFlowOptions, KinkOptions,
    PhaseBoundaryOptions, YhfIntegrator,
};
use monfer_core::ensemble::{EnsembleContext, EnsembleSummary};
use monfer_core::io::{fmt_f64, read_summary_csv, write_summary_csv, write_table, write_trajectory_jsonl, SummaryRecord};
use monfer_core::model::{characteristic_scales, Boundary, ModelParams, SymmetryClass};
use monfer_core::num_complex::Complex64;
use monfer_core::observables::{weak_localization_delta, GCurve, ObservableSet};
use monfer_core::oracle::oracle_check as run_oracle_check;
use monfer_core::Error;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn init_workers() -> Result<(), CliError> {
    let Ok(v) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

/// Report line on standard output; a closed pipe is not an error.
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

fn analytics_err(e: Error) -> CliError {
    CliError::Analytics(e.to_string())
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Writes the bytes to the path, or to standard output when absent.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout().write_all(bytes).map_err(config_err),
    }
}

fn table(header: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_table(&mut buf, header, rows).map_err(config_err)?;
    Ok(buf)
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Flat TOML file with the same keys; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: RunConfig,
}

/// Rejects a run_id already used by another summary in the output directory.
fn check_run_id_unique(output: &Path, run_id: &str) -> Result<(), CliError> {
    let dir = match output.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let Ok(entries) = std::fs::read_dir(&dir) else { return Ok(()) };
    for entry in entries.flatten() {
        let p = entry.path();
        if p.extension().is_none_or(|e| e != "csv") || p.file_name() == output.file_name() {
            continue;
        }
        let Ok(f) = std::fs::File::open(&p) else { continue };
        if let Ok(recs) = read_summary_csv(f) {
            if recs.first().is_some_and(|r| r.run_id == run_id) {
                return Err(CliError::Config(format!("run_id '{run_id}' already used by {}", p.display())));
            }
        }
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let base = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = base.merge(a.overrides).resolve()?;
    let obs = ObservableSet::parse(&cfg.observables, cfg.params.l, cfg.params.boundary).map_err(config_err)?;
    let ctx = EnsembleContext::new(cfg.params.clone(), cfg.protocol.clone(), obs).map_err(config_err)?;
    if let Some(out) = &cfg.output {
        check_run_id_unique(out, &cfg.run_id)?;
    }
    let trajs = ctx.run_all().map_err(|e| CliError::Trajectory(e.to_string()))?;
    let mut buf = Vec::new();
    match cfg.format {
        Format::Csv => {
            let summary = EnsembleSummary::from_trajectories(&ctx, &trajs).map_err(config_err)?;
            write_summary_csv(&mut buf, &cfg.run_id, &summary).map_err(config_err)?;
        }
        Format::Jsonl => {
            write_trajectory_jsonl(&mut buf, &trajs, &ctx.probes, ctx.observables.channels()).map_err(config_err)?
        }
    }
    emit(cfg.output.as_deref(), &buf)
}

#[derive(Args, Debug)]
pub struct RgArgs {
    /// Initial dimensionless conductance G0.
    #[arg(long)]
    pub g0: f64,
    /// AIII | BDI (free flow only).
    #[arg(long, default_value = "AIII")]
    pub class: String,
    /// d - 1 (free flow only).
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    /// Replica number (free flow only).
    #[arg(long, default_value_t = 1.0)]
    pub replicas: f64,
    /// Initial scale in lattice spacings (free flow only).
    #[arg(long, default_value_t = 1.0)]
    pub ell0: f64,
    /// Conductance at which the free flow stops.
    #[arg(long, default_value_t = 1.0)]
    pub g_stop: f64,
    /// Largest scale of the integration, in lattice spacings.
    #[arg(long, default_value = "1e300")]
    pub ell_max: f64,
    /// Initial interaction coupling; selects the interacting flow.
    #[arg(long)]
    pub u0: Option<f64>,
    /// Spatial dimension of the interacting flow.
    #[arg(long, default_value_t = 1)]
    pub d: u32,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn rg(a: RgArgs) -> Result<(), CliError> {
    let buf = if let Some(u0) = a.u0 {
        let f = flow_interacting(a.g0, u0, a.d, a.ell_max).map_err(analytics_err)?;
        eprintln!("regime = {}\nell_star = {}", f.regime.as_str(), fmt_f64(f.ell_star));
        let rows: Vec<Vec<f64>> =
            f.curve.ln_ell.iter().zip(&f.curve.state).map(|(t, s)| vec![*t, s[0], s[1]]).collect();
        table(&["ln_ell", "G", "u"], &rows)?
    } else {
        let class: SymmetryClass = a.class.parse().map_err(CliError::Config)?;
        let o = FreeFlowOptions { class, eps: a.eps, r: a.replicas, ell0: a.ell0, g_stop: a.g_stop, ell_max: a.ell_max };
        let f = flow_free(a.g0, &o).map_err(analytics_err)?;
        match f.ell_loc {
            Some(l) => eprintln!("ell_loc = {}", fmt_f64(l)),
            None => eprintln!("ell_loc = none"),
        }
        let rows: Vec<Vec<f64>> = f.curve.ln_ell.iter().zip(&f.curve.state).map(|(t, s)| vec![*t, s[0]]).collect();
        table(&["ln_ell", "G"], &rows)?
    };
    emit(a.output.as_deref(), &buf)
}

#[derive(Args, Debug)]
pub struct BktArgs {
    #[arg(long)]
    pub g0: f64,
    #[arg(long)]
    pub kappa0: f64,
    /// Integration range in ln(ell).
    #[arg(long, default_value_t = 50.0)]
    pub ln_ell_max: f64,
    /// Relative distance from g_c (kappa0 = 0) or from the separatrix classified as critical.
    #[arg(long, default_value_t = 1e-4)]
    pub critical_band: f64,
    /// Flow curve CSV (ln_ell, g, kappa).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn bkt(a: BktArgs) -> Result<(), CliError> {
    let f = flow_bkt_banded(a.g0, a.kappa0, a.ln_ell_max, a.critical_band).map_err(analytics_err)?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_else(|| "none".into());
    say!("side = {}", f.side.as_str());
    say!("c = {}", fmt_f64(f.c));
    say!("g_infinity = {}", opt(f.g_infinity));
    say!("ell_c = {}", opt(f.ell_c));
    say!("max_c_drift = {}", fmt_f64(f.max_c_drift));
    if let Some(p) = &a.output {
        let rows: Vec<Vec<f64>> =
            f.curve.ln_ell.iter().zip(&f.curve.state).map(|(t, s)| vec![*t, s[0], s[1]]).collect();
        emit(Some(p), &table(&["ln_ell", "g", "kappa"], &rows)?)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct YhfArgs {
    /// gamma/J; several values may be given separated by commas.
    #[arg(long, value_delimiter = ',', required = true)]
    pub z: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub d: u32,
    #[arg(long = "V", default_value_t = 1.0)]
    pub v: f64,
    #[arg(long = "J", default_value_t = 1.0)]
    pub j: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn yhf(a: YhfArgs) -> Result<(), CliError> {
    if !(a.j > 0.0) {
        return Err(CliError::Analytics("J must be positive".into()));
    }
    let integ = YhfIntegrator::new(a.d).map_err(analytics_err)?;
    eprintln!("tau_switch = {}", fmt_f64(integ.tau_switch));
    let mut rows = Vec::with_capacity(a.z.len());
    for &z in &a.z {
        let y = a.v * a.v / a.j * integ.integral(z).map_err(analytics_err)?;
        rows.push(vec![z, a.d as f64, y]);
    }
    emit(a.output.as_deref(), &table(&["z", "d", "Y_HF"], &rows)?)
}

#[derive(Args, Debug)]
pub struct KinkArgs {
    #[arg(long)]
    pub m: f64,
    #[arg(long)]
    pub g: f64,
    /// Replica index of the Renyi entropy.
    #[arg(long = "N")]
    pub n: u32,
    /// Domain length in units of 1/m.
    #[arg(long, default_value_t = 40.0)]
    pub y_max_m: f64,
    /// Grid spacing in units of 1/m.
    #[arg(long, default_value_t = 0.01)]
    pub h_m: f64,
    /// Two-column profile CSV (y, phi).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn kink(a: KinkArgs) -> Result<(), CliError> {
    let o = KinkOptions { y_max_m: a.y_max_m, h_m: a.h_m, ..Default::default() };
    let k = sine_gordon_kink(a.m, a.g, a.n, &o).map_err(analytics_err)?;
    say!("action_per_area = {:.6}", k.action_per_area);
    say!("entropy_density = {:.6}", k.entropy_density);
    say!("energy = {}", fmt_f64(k.energy));
    say!("residual = {}", fmt_f64(k.residual));
    if let Some(p) = &a.output {
        let rows: Vec<Vec<f64>> = k.y.iter().zip(&k.phi).map(|(y, f)| vec![*y, *f]).collect();
        emit(Some(p), &table(&["y", "phi"], &rows)?)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct PhaseDiagramArgs {
    /// Explicit comma-separated rates; overrides the uniform grid.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    pub gamma_min: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma_max: f64,
    #[arg(long, default_value_t = 10)]
    pub n_gamma: usize,
    #[arg(long = "J1", default_value_t = 1.0)]
    pub j1: f64,
    #[arg(long = "J2-re", default_value_t = 0.0)]
    pub j2_re: f64,
    #[arg(long = "J2-im", default_value_t = 0.0)]
    pub j2_im: f64,
    #[arg(long, default_value_t = 0.5)]
    pub n0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ell_loc_prefactor: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ell_int_prefactor: f64,
    /// Second localization-length prefactor, reported as V_c_alt.
    #[arg(long, default_value_t = 2.0)]
    pub alt_ell_loc_prefactor: f64,
    #[arg(long, default_value_t = 1.0)]
    pub g_stop: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn phase_diagram(a: PhaseDiagramArgs) -> Result<(), CliError> {
    let gammas = match a.gammas {
        Some(g) => g,
        None if a.n_gamma >= 2 => (0..a.n_gamma)
            .map(|k| a.gamma_min + (a.gamma_max - a.gamma_min) * k as f64 / (a.n_gamma - 1) as f64)
            .collect(),
        None => vec![a.gamma_min],
    };
    if gammas.is_empty() {
        return Err(CliError::Analytics("empty gamma grid".into()));
    }
    let template = ModelParams {
        j1: a.j1,
        j2: Complex64::new(a.j2_re, a.j2_im),
        n0: a.n0,
        ..Default::default()
    };
    let o = PhaseBoundaryOptions {
        ell_loc_prefactor: a.ell_loc_prefactor,
        ell_int_prefactor: a.ell_int_prefactor,
        g_stop: a.g_stop,
        ..Default::default()
    };
    let main = phase_boundary(&gammas, &template, &o).map_err(analytics_err)?;
    let alt_o = PhaseBoundaryOptions { ell_loc_prefactor: a.alt_ell_loc_prefactor, ..o };
    let alt = phase_boundary(&gammas, &template, &alt_o).map_err(analytics_err)?;
    let mut rows = Vec::with_capacity(gammas.len());
    for (p, q) in main.iter().zip(&alt) {
        if p.v_c.is_none() {
            eprintln!("no crossing in the V window at gamma = {}", fmt_f64(p.gamma));
        }
        rows.push(vec![p.gamma, p.v_c.unwrap_or(f64::NAN), q.v_c.unwrap_or(f64::NAN), p.ln_ell_loc]);
    }
    emit(a.output.as_deref(), &table(&["gamma", "V_c", "V_c_alt", "ln_ell_loc"], &rows)?)
}

#[derive(Args, Debug)]
pub struct CorrelatorArgs {
    /// Summary CSVs containing pooled "gq" rows; one curve per run_id.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    /// g(q) table.
    #[arg(long)]
    pub output_g: Option<PathBuf>,
    /// Weak-localization correction table.
    #[arg(long)]
    pub output_dg: Option<PathBuf>,
}

fn curves_from_records(recs: &[SummaryRecord]) -> Result<Vec<(GCurve, Vec<f64>)>, CliError> {
    let mut runs: BTreeMap<&str, Vec<&SummaryRecord>> = BTreeMap::new();
    for r in recs.iter().filter(|r| r.observable == "gq" && r.is_pooled()) {
        runs.entry(&r.run_id).or_default().push(r);
    }
    if runs.is_empty() {
        return Err(CliError::Config("no pooled gq rows in the input".into()));
    }
    let mut out = Vec::new();
    for (id, rows) in runs {
        let p = rows[0].params().map_err(config_err)?;
        if p.boundary != Boundary::Periodic {
            return Err(CliError::Config(format!("run '{id}' does not use periodic boundaries")));
        }
        let sc = characteristic_scales(&p).map_err(config_err)?;
        let mut pts: Vec<(usize, f64, f64)> = Vec::new();
        for r in rows {
            let k = r.region_index().ok_or_else(|| CliError::Config(format!("bad region '{}'", r.region)))?;
            pts.push((k, r.mean, r.stderr));
        }
        pts.sort_by_key(|x| x.0);
        let q = pts.iter().map(|x| 2.0 * PI * x.0 as f64 / p.l as f64).collect();
        let g = pts.iter().map(|x| x.1).collect();
        let se = pts.iter().map(|x| x.2).collect();
        out.push((GCurve { gamma: p.gamma, ell0: sc.ell0, g0: sc.g0, q, g }, se));
    }
    Ok(out)
}

pub fn correlator(a: CorrelatorArgs) -> Result<(), CliError> {
    let mut recs = Vec::new();
    for p in &a.input {
        let f = std::fs::File::open(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
        recs.extend(read_summary_csv(f).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?);
    }
    let curves = curves_from_records(&recs)?;
    let mut g_rows = Vec::new();
    for (c, se) in &curves {
        for ((q, g), s) in c.q.iter().zip(&c.g).zip(se) {
            g_rows.push(vec![c.gamma, *q, q * c.ell0, *g, g / c.g0, *s]);
        }
    }
    let g_only: Vec<GCurve> = curves.into_iter().map(|x| x.0).collect();
    let wl = weak_localization_delta(&g_only).map_err(analytics_err)?;
    say!("crossover_p = {}", fmt_f64(wl.fit.p));
    say!("collapse_residual = {}", fmt_f64(wl.fit.residual));
    say!("wl_slope = {}", fmt_f64(wl.slope));
    say!("wl_r_squared = {}", fmt_f64(wl.r_squared));
    let mut dg_rows = Vec::new();
    for c in &wl.curves {
        for ((s, l), d) in c.s.iter().zip(&c.ln_inv_s).zip(&c.delta_g) {
            dg_rows.push(vec![c.gamma, *s, *l, *d]);
        }
    }
    if let Some(p) = &a.output_g {
        emit(Some(p), &table(&["gamma", "q", "s", "g", "g_over_g0", "stderr"], &g_rows)?)?;
    }
    if let Some(p) = &a.output_dg {
        emit(Some(p), &table(&["gamma", "s", "ln_inv_s", "delta_g"], &dg_rows)?)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long = "L", default_value_t = 8)]
    pub l: usize,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long = "V", default_value_t = 0.0)]
    pub v: f64,
    #[arg(long = "J1", default_value_t = 1.0)]
    pub j1: f64,
    #[arg(long = "J2-re", default_value_t = 0.0)]
    pub j2_re: f64,
    #[arg(long = "J2-im", default_value_t = 0.0)]
    pub j2_im: f64,
    #[arg(long, default_value_t = 0.5)]
    pub n0: f64,
    #[arg(long, default_value = "open")]
    pub boundary: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub n_traj: usize,
    /// Sign of the exchange term in the checked right-hand side (mutation testing).
    #[arg(long, default_value_t = 1.0, hide = true, allow_negative_numbers = true)]
    pub fock_sign: f64,
}

pub fn oracle_check(a: OracleArgs) -> Result<(), CliError> {
    let params = ModelParams {
        l: a.l,
        j1: a.j1,
        j2: Complex64::new(a.j2_re, a.j2_im),
        v: a.v,
        gamma: a.gamma,
        n0: a.n0,
        boundary: a.boundary.parse().map_err(CliError::Config)?,
    };
    let report = run_oracle_check(&params, a.seed, a.n_traj, a.fock_sign).map_err(|e| match e {
        Error::InvalidParams(_) | Error::DimensionOverflow(_) => config_err(e),
        other => CliError::Trajectory(other.to_string()),
    })?;
    say!("{}", serde_json::to_string_pretty(&report).map_err(config_err)?);
    if report.passed() {
        say!("oracle-check: PASS");
        Ok(())
    } else {
        Err(CliError::Breach("oracle-check: tolerance breach".into()))
    }
}
