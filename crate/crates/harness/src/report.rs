//! JSON and CSV writers for criterion tables and fits.

use std::io::Write;

use serde::Serialize;
use slmfic_core::diagnostics::{aic, MoranResult};
use slmfic_core::fic::{FicReport, ScoreRow};
use slmfic_core::{Dataset, FitResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// One submodel in an emitted criterion table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub mask: u64,
    pub variables: Vec<String>,
    pub bias2: f64,
    pub variance: f64,
    pub score: f64,
    pub rank: usize,
}

impl From<&ScoreRow> for TableRow {
    fn from(r: &ScoreRow) -> Self {
        TableRow {
            mask: r.submodel.mask(),
            variables: r.variables.clone(),
            bias2: r.bias2,
            variance: r.variance,
            score: r.score,
            rank: r.rank,
        }
    }
}

/// Rows in rank order.
pub fn table_rows(report: &FicReport) -> Vec<TableRow> {
    report.ranked().into_iter().map(TableRow::from).collect()
}

pub fn write_table<W: Write>(rows: &[TableRow], format: Format, mut out: W) -> anyhow::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["mask", "variables", "bias2", "variance", "score", "rank"])?;
            for r in rows {
                w.write_record([
                    r.mask.to_string(),
                    r.variables.join(";"),
                    r.bias2.to_string(),
                    r.variance.to_string(),
                    r.score.to_string(),
                    r.rank.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub rho: f64,
    pub sigma2: f64,
    pub beta: Vec<(String, f64)>,
    pub loglik: f64,
    pub aic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    pub rho_interval: (f64, f64),
    pub warnings: Vec<String>,
}

impl FitSummary {
    pub fn new(fit: &FitResult, data: &Dataset) -> Self {
        let names = data.variable_names(&fit.submodel);
        FitSummary {
            rho: fit.theta_hat.rho,
            sigma2: fit.theta_hat.sigma2,
            beta: names.into_iter().zip(fit.theta_hat.beta.iter().copied()).collect(),
            loglik: fit.loglik,
            aic: aic(fit),
            converged: fit.converged,
            iterations: fit.iterations,
            score_norm: fit.score_norm,
            rho_interval: data.weights().rho_interval(),
            warnings: fit.warnings.iter().map(|w| format!("{w:?}")).collect(),
        }
    }

    fn pairs(&self) -> Vec<(String, String)> {
        let mut v = vec![("rho".to_owned(), self.rho.to_string()), ("sigma2".to_owned(), self.sigma2.to_string())];
        v.extend(self.beta.iter().map(|(n, b)| (format!("beta[{n}]"), b.to_string())));
        v.extend([
            ("loglik".to_owned(), self.loglik.to_string()),
            ("aic".to_owned(), self.aic.to_string()),
            ("converged".to_owned(), self.converged.to_string()),
            ("iterations".to_owned(), self.iterations.to_string()),
            ("score_norm".to_owned(), self.score_norm.to_string()),
        ]);
        v
    }
}

pub fn write_fit<W: Write>(fit: &FitSummary, format: Format, out: W) -> anyhow::Result<()> {
    write_record_or_json(fit, fit.pairs(), format, out)
}

#[derive(Debug, Clone, Serialize)]
pub struct MoranSummary {
    pub variable: String,
    pub i: f64,
    pub expected: f64,
    pub variance: f64,
    pub z: f64,
    pub p_value: f64,
}

impl MoranSummary {
    pub fn new(variable: &str, m: &MoranResult) -> Self {
        MoranSummary {
            variable: variable.to_owned(),
            i: m.i,
            expected: m.expected,
            variance: m.variance,
            z: m.z,
            p_value: m.p_value,
        }
    }
}

pub fn write_moran<W: Write>(m: &MoranSummary, format: Format, out: W) -> anyhow::Result<()> {
    let pairs = vec![
        ("variable".to_owned(), m.variable.clone()),
        ("i".to_owned(), m.i.to_string()),
        ("expected".to_owned(), m.expected.to_string()),
        ("variance".to_owned(), m.variance.to_string()),
        ("z".to_owned(), m.z.to_string()),
        ("p_value".to_owned(), m.p_value.to_string()),
    ];
    write_record_or_json(m, pairs, format, out)
}

fn write_record_or_json<T: Serialize, W: Write>(
    value: &T,
    pairs: Vec<(String, String)>,
    format: Format,
    mut out: W,
) -> anyhow::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, value)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["name", "value"])?;
            for (k, v) in pairs {
                w.write_record([k, v])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
