//! Sweep driver and the CSV result schema.

use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::heisenberg::GaugeParams;
use crate::scalar::{int, parse_rational, Scalar};
use crate::shell::{
    averaged_shell_count, fit_scaling_exponent, theorem_bound, LatticeSpec, Sampling, ScalingFit, ShellQuery,
};
use crate::Rational;

/// One line of a sweep CSV. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub n: usize,
    pub alpha: u32,
    #[serde(rename = "C_alpha")]
    pub c_alpha: String,
    pub c: String,
    #[serde(rename = "Q")]
    pub q: String,
    pub delta: String,
    pub mode: String,
    pub centers_used: u64,
    pub raw_count: String,
    pub normalized: f64,
    pub bound_rhs: f64,
    pub ratio: f64,
    pub stderr: f64,
    pub seed: u64,
    pub wall_ms: u64,
}

pub const CSV_HEADER: &str =
    "experiment_id,n,alpha,C_alpha,c,Q,delta,mode,centers_used,raw_count,normalized,bound_rhs,ratio,stderr,seed,wall_ms";

/// Thickness as a function of the radius.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeltaRule {
    Fixed(Rational),
    /// `δ = 1/Q`
    InverseQ,
}

impl DeltaRule {
    pub fn delta(&self, q: &Rational) -> Rational {
        match self {
            Self::Fixed(d) => d.clone(),
            Self::InverseQ => q.recip(),
        }
    }
}

impl FromStr for DeltaRule {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("1/Q") {
            return Ok(Self::InverseQ);
        }
        match parse_rational(s) {
            Some(d) if d > int(0) => Ok(Self::Fixed(d)),
            _ => Err(invalid(format!("delta rule must be \"1/Q\" or a positive number, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub experiment_id: String,
    pub gauge: GaugeParams,
    pub radii: Vec<Rational>,
    pub delta_rule: DeltaRule,
    pub c: Rational,
    pub signed: bool,
    /// `None` sums over every center.
    pub samples: Option<usize>,
    pub seed: u64,
}

/// Averaged count for one query as a CSV row.
pub fn count_row(experiment_id: &str, query: &ShellQuery, sampling: Sampling, seed: u64) -> Result<ResultRow> {
    let start = Instant::now();
    let count = averaged_shell_count(query, sampling)?;
    let bound = theorem_bound(query)?;
    let g = &query.gauge;
    Ok(ResultRow {
        experiment_id: experiment_id.to_string(),
        n: g.n(),
        alpha: g.alpha(),
        c_alpha: g.c_alpha().to_string(),
        c: query.lattice.c().to_string(),
        q: query.radius.to_string(),
        delta: query.delta.to_string(),
        mode: match count.sampling {
            Sampling::Exhaustive => "exhaustive".into(),
            Sampling::Random { .. } => "random".into(),
        },
        centers_used: count.centers_used,
        raw_count: count.raw_count.to_string(),
        normalized: count.normalized,
        bound_rhs: bound,
        ratio: if bound > 0.0 { count.normalized / bound } else { f64::NAN },
        stderr: count.stderr,
        seed,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<ResultRow>> {
    if cfg.radii.is_empty() {
        return Err(invalid("sweep needs at least one radius"));
    }
    cfg.radii
        .iter()
        .map(|q| {
            let lattice = LatticeSpec::new(cfg.gauge.n(), cfg.c.clone(), q.clone(), cfg.signed)?;
            let query = ShellQuery::with_lattice(cfg.gauge.clone(), lattice, q.clone(), cfg.delta_rule.delta(q))?;
            let sampling = match cfg.samples {
                Some(samples) => Sampling::Random { samples, seed: cfg.seed },
                None => Sampling::Exhaustive,
            };
            count_row(&cfg.experiment_id, &query, sampling, cfg.seed)
        })
        .collect()
}

/// Write rows with the fixed header; `\n` line endings.
pub fn write_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| invalid(e.to_string()))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(invalid(format!("unexpected CSV header: {}", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> crate::Error {
    invalid(format!("csv: {e}"))
}

/// Log-log fit of `normalized` against `Q`.
pub fn fit_rows(rows: &[ResultRow]) -> Result<ScalingFit> {
    let series = rows
        .iter()
        .map(|r| {
            let q = parse_rational(&r.q).ok_or_else(|| invalid(format!("bad Q value {:?}", r.q)))?;
            Ok((q.to_f64_lossy(), r.normalized))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_scaling_exponent(&series)
}

/// The CSV bytes with the `wall_ms` column blanked, for reproducibility checks.
pub fn strip_timing(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|l| match l.rsplit_once(',') {
            Some((head, _)) => format!("{head},"),
            None => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}
