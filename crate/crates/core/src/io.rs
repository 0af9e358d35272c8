//! CSV summaries, JSON-lines trajectory logs and analysis tables.

use crate::ensemble::{EnsembleSummary, TrajectoryOutput};
use crate::error::{invalid, Error, Result};
use crate::model::{Boundary, ModelParams};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

pub const SUMMARY_COLUMNS: [&str; 17] = [
    "run_id", "engine", "L", "gamma", "V", "J1", "J2_re", "J2_im", "n0", "boundary", "seed", "observable", "region",
    "t", "mean", "stderr", "n_traj",
];

pub const UNITS_COMMENT: &str =
    "# units: J1 = 1; energies and rates in J1, times in 1/J1, lengths in lattice spacings";

pub const POOLED: &str = "pooled";

/// Round-trip exact float formatting (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidParams(format!("i/o: {e}"))
}

fn check_run_id(run_id: &str) -> Result<()> {
    if run_id.is_empty() || run_id.contains([',', '"', '\n', '\r']) {
        return invalid(format!("run_id '{run_id}' must be non-empty without commas, quotes or newlines"));
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(mut w: W, run_id: &str, summary: &EnsembleSummary) -> Result<()> {
    check_run_id(run_id)?;
    writeln!(w, "{UNITS_COMMENT}").map_err(io_err)?;
    writeln!(w, "# build: {}", summary.build_id).map_err(io_err)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(SUMMARY_COLUMNS).map_err(io_err)?;
    let p = &summary.params;
    let fixed = [
        run_id.to_string(),
        summary.protocol.engine.to_string(),
        p.l.to_string(),
        fmt_f64(p.gamma),
        fmt_f64(p.v),
        fmt_f64(p.j1),
        fmt_f64(p.j2.re),
        fmt_f64(p.j2.im),
        fmt_f64(p.n0),
        p.boundary.as_str().to_string(),
        summary.protocol.master_seed.to_string(),
    ];
    for r in &summary.rows {
        let mut rec: Vec<String> = fixed.to_vec();
        rec.push(r.observable.clone());
        rec.push(r.region.clone());
        rec.push(r.t.map(fmt_f64).unwrap_or_else(|| POOLED.to_string()));
        rec.push(fmt_f64(r.mean));
        rec.push(fmt_f64(r.stderr));
        rec.push(r.n_traj.to_string());
        csv.write_record(&rec).map_err(io_err)?;
    }
    csv.flush().map_err(io_err)?;
    Ok(())
}

/// One parsed row of a summary CSV.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct SummaryRecord {
    pub run_id: String,
    pub engine: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub gamma: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "J1")]
    pub j1: f64,
    #[serde(rename = "J2_re")]
    pub j2_re: f64,
    #[serde(rename = "J2_im")]
    pub j2_im: f64,
    pub n0: f64,
    pub boundary: String,
    pub seed: u64,
    pub observable: String,
    pub region: String,
    pub t: String,
    pub mean: f64,
    pub stderr: f64,
    pub n_traj: usize,
}

impl SummaryRecord {
    pub fn is_pooled(&self) -> bool {
        self.t == POOLED
    }

    pub fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams {
            l: self.l,
            j1: self.j1,
            j2: C64::new(self.j2_re, self.j2_im),
            v: self.v,
            gamma: self.gamma,
            n0: self.n0,
            boundary: self.boundary.parse::<Boundary>().map_err(Error::InvalidParams)?,
        })
    }

    /// Integer label of "x=<i>" or "k=<i>" regions.
    pub fn region_index(&self) -> Option<usize> {
        self.region.split_once('=').and_then(|(_, v)| v.parse().ok())
    }
}

pub fn read_summary_csv<R: Read>(r: R) -> Result<Vec<SummaryRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let headers = rdr.headers().map_err(io_err)?.clone();
    if headers.iter().ne(SUMMARY_COLUMNS.iter().copied()) {
        return invalid("CSV header does not match the summary schema");
    }
    rdr.deserialize().map(|r| r.map_err(io_err)).collect()
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum LogLine<'a> {
    Init { trajectory: u64, occupations: &'a [bool] },
    Event { trajectory: u64, t: f64, site: usize, outcome: crate::gaussian::Outcome, p_click: f64 },
    Probe { trajectory: u64, t: f64, values: Vec<(String, f64)> },
}

/// Trajectory log as JSON lines: the initial state, every measurement
/// event and every probe, in time order per trajectory.
pub fn write_trajectory_jsonl<W: Write>(
    mut w: W,
    trajs: &[TrajectoryOutput],
    probes: &[f64],
    channels: &[crate::observables::Channel],
) -> Result<()> {
    let mut emit = |line: &LogLine| -> Result<()> {
        serde_json::to_writer(&mut w, line).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)
    };
    for tr in trajs {
        emit(&LogLine::Init { trajectory: tr.index, occupations: &tr.occupations })?;
        let mut ev = tr.events.iter().peekable();
        for (k, &tp) in probes.iter().enumerate() {
            while let Some(e) = ev.next_if(|e| e.t <= tp) {
                emit(&LogLine::Event { trajectory: tr.index, t: e.t, site: e.site, outcome: e.outcome, p_click: e.p_click })?;
            }
            let values = channels
                .iter()
                .zip(&tr.values[k])
                .map(|(c, v)| (format!("{}@{}", c.observable, c.region), *v))
                .collect();
            emit(&LogLine::Probe { trajectory: tr.index, t: tp, values })?;
        }
    }
    Ok(())
}

/// Plain numeric table with a units comment line.
pub fn write_table<W: Write>(mut w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "{UNITS_COMMENT}").map_err(io_err)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(header).map_err(io_err)?;
    for r in rows {
        if r.len() != header.len() {
            return invalid("table row length does not match header");
        }
        csv.write_record(r.iter().map(|x| fmt_f64(*x))).map_err(io_err)?;
    }
    csv.flush().map_err(io_err)?;
    Ok(())
}
