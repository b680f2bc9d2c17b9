//! Seeded Monte-Carlo experiments: simulate spatial lag data, fit every
//! submodel, and tally which model each criterion ranks first.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use slmfic_core::diagnostics::aic;
use slmfic_core::fic::{fic_sweep, rank_models, FicReport, ScoreRow};
use slmfic_core::focus::eval_focus;
use slmfic_core::nalgebra::{DMatrix, DVector};
use slmfic_core::safic::{median_pairwise_distance, safic_sweep, WeightScheme};
use slmfic_core::slm::fit_mle;
use slmfic_core::submodel::{enumerate_submodels, SubmodelId};
use slmfic_core::weights::{build_chain_lag1, row_normalize};
use slmfic_core::{Dataset, FitResult, SpatialWeights, Theta};

use crate::io::load_weights;
use crate::report::{table_rows, TableRow};
use crate::FocusName;

/// Failed replications allowed before a run is abandoned, as a fraction.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsKind {
    /// First-order neighbours on a line.
    Chain,
    /// A weights file in either format accepted by [`load_weights`].
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Uniform,
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CriterionSpec {
    Fic {
        focus: FocusName,
        #[serde(default)]
        location: usize,
        #[serde(default)]
        coeffs: Option<Vec<usize>>,
    },
    Safic {
        scheme: SchemeName,
        /// Kernel centre; defaults to the covariate row of `location`.
        #[serde(default)]
        z0: Option<Vec<f64>>,
        /// Kernel bandwidth; defaults to the median pairwise distance.
        #[serde(default)]
        bandwidth: Option<f64>,
        #[serde(default)]
        location: usize,
    },
    Aic,
}

impl CriterionSpec {
    pub fn label(&self) -> String {
        match self {
            CriterionSpec::Fic { focus, .. } => format!("FIC-{}", focus.as_str()),
            CriterionSpec::Safic { scheme: SchemeName::Uniform, .. } => "sAFIC-uniform".into(),
            CriterionSpec::Safic { scheme: SchemeName::Kernel, .. } => "sAFIC-kernel".into(),
            CriterionSpec::Aic => "AIC".into(),
        }
    }
}

/// The focus whose realized squared error is accumulated per submodel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub focus: FocusName,
    #[serde(default)]
    pub location: usize,
    #[serde(default)]
    pub coeffs: Option<Vec<usize>>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub rho_true: f64,
    pub beta_true: Vec<f64>,
    pub sigma2_true: f64,
    pub reps: usize,
    pub seed: u64,
    pub weights_kind: WeightsKind,
    #[serde(default = "default_true")]
    pub row_normalize: bool,
    pub criteria: Vec<CriterionSpec>,
    #[serde(default)]
    pub track: Option<TrackSpec>,
    /// Keep every replication's ranked tables in the report.
    #[serde(default)]
    pub keep_tables: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Load(#[from] crate::io::LoadError),
    #[error(transparent)]
    Model(#[from] slmfic_core::Error),
    #[error("{failed} of {reps} replications failed (limit 10%); first failures: {first}")]
    TooManyFailures { failed: usize, reps: usize, first: String },
}

impl SimConfig {
    pub fn build_weights(&self) -> Result<SpatialWeights, SimError> {
        let w = match &self.weights_kind {
            WeightsKind::Chain => {
                let a = build_chain_lag1(self.n)?;
                if self.row_normalize {
                    row_normalize(a)?
                } else {
                    SpatialWeights::unnormalized(a)?
                }
            }
            WeightsKind::File(path) => load_weights(path, self.n, self.row_normalize)?,
        };
        Ok(w)
    }

    pub fn validate(&self, weights: &SpatialWeights) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.beta_true.len() != self.p {
            return bad(format!("beta_true has {} entries, p = {}", self.beta_true.len(), self.p));
        }
        if self.p >= self.n {
            return bad(format!("p = {} must be below n = {}", self.p, self.n));
        }
        if self.sigma2_true.is_nan() || self.sigma2_true <= 0.0 {
            return bad(format!("sigma2_true = {} must be positive", self.sigma2_true));
        }
        if weights.n() != self.n {
            return bad(format!("weights describe {} units, n = {}", weights.n(), self.n));
        }
        if !weights.contains_rho(self.rho_true) {
            let (lo, hi) = weights.rho_interval();
            return bad(format!("rho_true = {} outside ({lo}, {hi})", self.rho_true));
        }
        if self.criteria.is_empty() {
            return bad("no criteria".into());
        }
        for c in &self.criteria {
            if let CriterionSpec::Fic { focus: FocusName::Mean, location, .. } | CriterionSpec::Safic { location, .. } =
                c
            {
                if *location >= self.n {
                    return bad(format!("location {location} outside [0, {})", self.n));
                }
            }
        }
        if let Some(t) = &self.track {
            if t.focus == FocusName::Maxvar {
                return bad("the realized error of the max-variance focus is not tracked".into());
            }
        }
        enumerate_submodels(self.p)?;
        Ok(())
    }
}

/// Simulated dataset for replication `rep`. The draw depends only on
/// `(seed, rep)`.
pub fn generate_dataset(cfg: &SimConfig, weights: &Arc<SpatialWeights>, rep: usize) -> Result<Dataset, SimError> {
    let (n, p) = (cfg.n, cfg.p);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let noise = Normal::new(0.0, cfg.sigma2_true.sqrt()).map_err(|e| SimError::Config(e.to_string()))?;
    let eps = DVector::from_fn(n, |_, _| noise.sample(&mut rng));
    let beta = DVector::from_column_slice(&cfg.beta_true);
    let rhs = &x * beta + eps;
    let a = DMatrix::identity(n, n) - weights.matrix() * cfg.rho_true;
    let y = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| SimError::Config(format!("I - rho W is singular at rho = {}", cfg.rho_true)))?;
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    Ok(Dataset::new(y, x, Arc::clone(weights), names)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frequency {
    pub submodel: String,
    pub mask: u64,
    pub variables: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionSummary {
    pub label: String,
    pub top5: Vec<Frequency>,
    /// Every submodel selected at least once, most frequent first.
    pub frequencies: Vec<Frequency>,
    /// Mean score of each submodel over successful replications, by mask.
    pub mean_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepFailure {
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepTables {
    pub rep: usize,
    /// One ranked table per criterion, in configuration order.
    pub tables: Vec<Vec<TableRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub reps: usize,
    pub seed: u64,
    pub successes: usize,
    pub failures: Vec<RepFailure>,
    pub criteria: Vec<CriterionSummary>,
    /// Mean squared error of the tracked focus per submodel, by mask.
    pub realized_sq_error: Option<Vec<f64>>,
    pub tables: Option<Vec<RepTables>>,
}

struct RepOutcome {
    reports: Vec<FicReport>,
    sq_err: Option<Vec<f64>>,
}

fn variable_names(s: &SubmodelId) -> Vec<String> {
    s.indices().into_iter().map(|j| format!("x{}", j + 1)).collect()
}

/// AIC table with `-2 loglik` as the fit term and `2 (|S| + 2)` as the penalty.
pub fn aic_table(fits: &[FitResult], data: &Dataset) -> FicReport {
    let rows = fits
        .iter()
        .map(|f| {
            let penalty = aic(f) + 2.0 * f.loglik;
            ScoreRow::new(f.submodel, data.variable_names(&f.submodel), -2.0 * f.loglik, penalty)
        })
        .collect();
    rank_models(rows)
}

/// Ranked table for one criterion over a full set of submodel fits.
pub fn criterion_table(
    c: &CriterionSpec,
    fits: &[FitResult],
    submodels: &[SubmodelId],
    data: &Dataset,
) -> Result<FicReport, slmfic_core::Error> {
    match c {
        CriterionSpec::Fic { focus, location, coeffs } => fic_sweep(&focus.spec(*location, coeffs.clone()), fits, data),
        CriterionSpec::Safic { scheme, z0, bandwidth, location } => {
            let scheme = match scheme {
                SchemeName::Uniform => WeightScheme::Uniform,
                SchemeName::Kernel => WeightScheme::Kernel {
                    z0: z0.clone().unwrap_or_else(|| data.x().row(*location).iter().copied().collect()),
                    bandwidth: bandwidth.unwrap_or_else(|| median_pairwise_distance(data.x())),
                },
            };
            let wide = fits.iter().find(|f| f.submodel.is_wide()).expect("sweep includes the wide model");
            Ok(safic_sweep(data, wide, &scheme, submodels)?.table)
        }
        CriterionSpec::Aic => Ok(aic_table(fits, data)),
    }
}

fn run_rep(
    cfg: &SimConfig,
    weights: &Arc<SpatialWeights>,
    submodels: &[SubmodelId],
    rep: usize,
) -> Result<RepOutcome, String> {
    let data = generate_dataset(cfg, weights, rep).map_err(|e| e.to_string())?;
    let fits = submodels
        .iter()
        .map(|s| fit_mle(&data, s).map_err(|e| format!("submodel {s}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    let reports = cfg
        .criteria
        .iter()
        .map(|c| criterion_table(c, &fits, submodels, &data).map_err(|e| format!("{}: {e}", c.label())))
        .collect::<Result<Vec<_>, _>>()?;
    let sq_err = match &cfg.track {
        None => None,
        Some(t) => {
            let spec = t.focus.spec(t.location, t.coeffs.clone());
            let wide = SubmodelId::wide(cfg.p);
            let truth = Theta { rho: cfg.rho_true, sigma2: cfg.sigma2_true, beta: cfg.beta_true.clone() };
            let target = eval_focus(&spec, &truth, &data, &wide, None).map_err(|e| e.to_string())?.value;
            let errs = fits
                .iter()
                .map(|f| {
                    let est = eval_focus(&spec, &f.theta_hat, &data, &f.submodel, None)?.value;
                    Ok(est.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum())
                })
                .collect::<Result<Vec<f64>, slmfic_core::Error>>()
                .map_err(|e| e.to_string())?;
            Some(errs)
        }
    };
    Ok(RepOutcome { reports, sq_err })
}

/// Runs all replications, in parallel when a pool is available, and reduces
/// them in replication order. `threads = None` uses rayon's global pool.
pub fn monte_carlo(cfg: &SimConfig, threads: Option<usize>) -> Result<RunReport, SimError> {
    let weights = Arc::new(cfg.build_weights()?);
    cfg.validate(&weights)?;
    let submodels = enumerate_submodels(cfg.p)?;
    let job = || -> Vec<Result<RepOutcome, String>> {
        (0..cfg.reps).into_par_iter().map(|rep| run_rep(cfg, &weights, &submodels, rep)).collect()
    };
    let outcomes = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| SimError::Config(e.to_string()))?
            .install(job),
        None => job(),
    };

    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => ok.push((rep, v)),
            Err(message) => failures.push(RepFailure { rep, message }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * cfg.reps as f64 {
        let first =
            failures.iter().take(3).map(|f| format!("rep {}: {}", f.rep, f.message)).collect::<Vec<_>>().join("; ");
        return Err(SimError::TooManyFailures { failed: failures.len(), reps: cfg.reps, first });
    }

    let m = submodels.len();
    let successes = ok.len();
    let criteria = cfg
        .criteria
        .iter()
        .enumerate()
        .map(|(c, spec)| {
            let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
            let mut sums = vec![0.0; m];
            for (_, o) in &ok {
                let report = &o.reports[c];
                *counts.entry(report.best().submodel.mask()).or_default() += 1;
                for row in &report.rows {
                    sums[row.submodel.mask() as usize] += row.score;
                }
            }
            let mut frequencies: Vec<Frequency> = counts
                .into_iter()
                .map(|(mask, count)| {
                    let s = submodels[mask as usize];
                    Frequency { submodel: s.to_string(), mask, variables: variable_names(&s), count }
                })
                .collect();
            frequencies.sort_by(|a, b| b.count.cmp(&a.count).then(a.mask.cmp(&b.mask)));
            CriterionSummary {
                label: spec.label(),
                top5: frequencies.iter().take(5).cloned().collect(),
                frequencies,
                mean_scores: sums.into_iter().map(|s| s / successes.max(1) as f64).collect(),
            }
        })
        .collect();

    let realized_sq_error = cfg.track.as_ref().map(|_| {
        let mut sums = vec![0.0; m];
        for (_, o) in &ok {
            for (acc, e) in sums.iter_mut().zip(o.sq_err.as_deref().unwrap_or_default()) {
                *acc += e;
            }
        }
        sums.into_iter().map(|s| s / successes.max(1) as f64).collect()
    });

    let tables = cfg.keep_tables.then(|| {
        ok.iter().map(|(rep, o)| RepTables { rep: *rep, tables: o.reports.iter().map(table_rows).collect() }).collect()
    });

    Ok(RunReport { reps: cfg.reps, seed: cfg.seed, successes, failures, criteria, realized_sq_error, tables })
}

/// Spearman rank correlation, with tied values given their average rank.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman needs paired samples");
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && v[order[end + 1]] == v[order[start]] {
            end += 1;
        }
        let r = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            ranks[i] = r;
        }
        start = end + 1;
    }
    ranks
}
