use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use slmfic::io::{load_dataset, LoadError, LoadOptions};
use slmfic::report::{table_rows, write_fit, write_moran, write_table, FitSummary, Format, MoranSummary};
use slmfic::sim::{criterion_table, monte_carlo, CriterionSpec, SchemeName, SimConfig, SimError};
use slmfic::{is_numerical, FocusName};
use slmfic_core::diagnostics::morans_i;
use slmfic_core::nalgebra::DVector;
use slmfic_core::slm::fit_mle;
use slmfic_core::submodel::{enumerate_submodels, SubmodelId};
use slmfic_core::{Dataset, FitResult};

/// Spatial lag models with focused variable selection.
#[derive(Parser)]
#[command(name = "slmfic", version)]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model with all selected covariates.
    Fit {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Rank every covariate subset by the focused information criterion.
    Fic {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = FocusName::Mean)]
        focus: FocusName,
        /// Unit for the conditional-mean focus (0-based).
        #[arg(long, default_value_t = 0)]
        location: usize,
        /// Coefficients for the beta focus, by name or 0-based index.
        #[arg(long, value_delimiter = ',')]
        coeffs: Option<Vec<String>>,
    },
    /// Rank every covariate subset by the spatially averaged FIC.
    Safic {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = SchemeName::Uniform)]
        scheme: SchemeName,
        /// Kernel centre; defaults to the covariates of `--location`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        z0: Option<Vec<f64>>,
        /// Kernel bandwidth; defaults to the median pairwise covariate distance.
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long, default_value_t = 0)]
        location: usize,
    },
    /// Run a seeded Monte-Carlo selection experiment.
    Simulate {
        /// JSON simulation configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the number of replications.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Moran's I of the response (or another column).
    Moran {
        #[command(flatten)]
        data: DataArgs,
        /// Column to test; defaults to the response.
        #[arg(long)]
        variable: Option<String>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Dense CSV or edge list.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    row_normalize: bool,
    #[arg(long)]
    response: String,
    /// Covariate columns (default: all but the response).
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset, LoadError> {
        load_dataset(
            &self.data,
            &self.weights,
            &LoadOptions {
                response: self.response.clone(),
                columns: self.columns.clone(),
                row_normalize: self.row_normalize,
            },
        )
    }
}

fn output(out: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("{}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn fit_all(data: &Dataset) -> anyhow::Result<(Vec<SubmodelId>, Vec<FitResult>)> {
    let submodels = enumerate_submodels(data.p())?;
    let fits = submodels
        .par_iter()
        .map(|s| fit_mle(data, s).with_context(|| format!("fitting submodel {s}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((submodels, fits))
}

fn resolve_coeffs(names: &[String], data: &Dataset) -> anyhow::Result<Vec<usize>> {
    names
        .iter()
        .map(|c| {
            if let Some(j) = data.names().iter().position(|n| n == c) {
                Ok(j)
            } else if let Ok(j) = c.parse::<usize>() {
                Ok(j)
            } else {
                bail!("unknown coefficient {c:?}")
            }
        })
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let format = cli.format;
    match cli.command {
        Command::Fit { data } => {
            let d = data.load()?;
            let fit = fit_mle(&d, &SubmodelId::wide(d.p()))?;
            write_fit(&FitSummary::new(&fit, &d), format, output(&cli.out)?)
        }
        Command::Fic { data, focus, location, coeffs } => {
            let d = data.load()?;
            let coeffs = coeffs.map(|c| resolve_coeffs(&c, &d)).transpose()?;
            let (submodels, fits) = fit_all(&d)?;
            let c = CriterionSpec::Fic { focus, location, coeffs };
            let table = criterion_table(&c, &fits, &submodels, &d)?;
            write_table(&table_rows(&table), format, output(&cli.out)?)
        }
        Command::Safic { data, scheme, z0, bandwidth, location } => {
            let d = data.load()?;
            if location >= d.n() {
                bail!(LoadError::Parse {
                    path: "--location".into(),
                    line: 0,
                    message: format!("unit {location} outside [0, {})", d.n()),
                });
            }
            let (submodels, fits) = fit_all(&d)?;
            let c = CriterionSpec::Safic { scheme, z0, bandwidth, location };
            let table = criterion_table(&c, &fits, &submodels, &d)?;
            write_table(&table_rows(&table), format, output(&cli.out)?)
        }
        Command::Simulate { config, reps, seed, threads } => {
            let mut cfg = read_config(&config)?;
            if let Some(r) = reps {
                cfg.reps = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = monte_carlo(&cfg, threads)?;
            let mut out = output(&cli.out)?;
            match format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut out, &report)?;
                    writeln!(out)?;
                }
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(out);
                    w.write_record(["criterion", "position", "submodel", "variables", "count"])?;
                    for c in &report.criteria {
                        for (k, f) in c.top5.iter().enumerate() {
                            w.write_record([
                                c.label.clone(),
                                (k + 1).to_string(),
                                f.submodel.clone(),
                                f.variables.join(";"),
                                f.count.to_string(),
                            ])?;
                        }
                    }
                    w.flush()?;
                }
            }
            Ok(())
        }
        Command::Moran { data, variable } => {
            let d = data.load()?;
            let (name, x) = match variable {
                None => (data.response.clone(), d.y().clone()),
                Some(v) => {
                    let table = slmfic::io::read_table(&data.data)?;
                    let col = table.column(&v).ok_or_else(|| LoadError::MissingColumn {
                        path: data.data.display().to_string(),
                        name: v.clone(),
                    })?;
                    (v, DVector::from_vec(col))
                }
            };
            let m = morans_i(&x, d.weights())?;
            write_moran(&MoranSummary::new(&name, &m), format, output(&cli.out)?)
        }
    }
}

fn read_config(path: &Path) -> anyhow::Result<SimConfig> {
    let f = File::open(path).with_context(|| format!("{}", path.display()))?;
    serde_json::from_reader(f).with_context(|| format!("{}: invalid simulation config", path.display()))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<slmfic_core::Error>() {
            return if is_numerical(core) { 2 } else { 1 };
        }
        if let Some(SimError::TooManyFailures { .. }) = cause.downcast_ref::<SimError>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
