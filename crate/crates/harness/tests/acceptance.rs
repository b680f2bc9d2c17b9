//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --release -p slmfic --test acceptance`.

use std::process::{Command, ExitCode};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use slmfic::sim::{generate_dataset, monte_carlo, CriterionSpec, SchemeName, SimConfig, TrackSpec, WeightsKind};
use slmfic::FocusName;
use slmfic_core::fic::{fic_score, m_matrix};
use slmfic_core::focus::{eval_focus, jacobian_fd_focus, FocusSpec};
use slmfic_core::nalgebra::{DMatrix, DVector};
use slmfic_core::safic::{
    g_matrix, h_empirical, k_empirical, omega_i, pointwise_risk, psi_kernel, psi_uniform, rho_beta_blocks, safic_score,
};
use slmfic_core::slm::{fit_mle, Dataset, FisherInfo, Theta};
use slmfic_core::submodel::{enumerate_submodels, SubmodelId};
use slmfic_core::weights::{build_chain_lag1, row_normalize, AdjacencyMatrix, SpatialWeights};

type Outcome = (bool, String);

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn base_config(n: usize, beta: Vec<f64>, reps: usize, seed: u64, criteria: Vec<CriterionSpec>) -> SimConfig {
    SimConfig {
        n,
        p: beta.len(),
        rho_true: 0.5,
        beta_true: beta,
        sigma2_true: 1.0,
        reps,
        seed,
        weights_kind: WeightsKind::Chain,
        row_normalize: true,
        criteria,
        track: None,
        keep_tables: false,
    }
}

fn count(report: &slmfic::sim::CriterionSummary, pred: impl Fn(&slmfic::sim::Frequency) -> bool) -> usize {
    report.frequencies.iter().filter(|f| pred(f)).map(|f| f.count).sum()
}

fn chain_selection() -> Outcome {
    let cfg = base_config(
        75,
        vec![0.0, 0.2, 0.2, 0.0, 0.0],
        100,
        20240501,
        vec![
            CriterionSpec::Safic { scheme: SchemeName::Uniform, z0: None, bandwidth: None, location: 0 },
            CriterionSpec::Aic,
        ],
    );
    let r = match monte_carlo(&cfg, Some(1)) {
        Ok(r) => r,
        Err(e) => return (false, format!("simulation failed: {e}")),
    };
    let wide_mask = (1u64 << 5) - 1;
    let (safic, aic) = (&r.criteria[0], &r.criteria[1]);
    let safic_wide = count(safic, |f| f.mask == wide_mask);
    let aic_wide = count(aic, |f| f.mask == wide_mask);
    let safic_big = count(safic, |f| f.variables.len() >= 4);
    let aic_big = count(aic, |f| f.variables.len() >= 4);
    let ok = safic_wide >= 55 && aic_wide >= 50 && safic_big >= 80 && aic_big >= 80;
    let modal = |c: &slmfic::sim::CriterionSummary| format!("{}({})", c.top5[0].submodel, c.top5[0].count);
    (
        ok,
        format!(
            "S32 top-1: sAFIC {safic_wide}/100 (need 55), AIC {aic_wide}/100 (need 50); >=4 vars: sAFIC {safic_big}, \
             AIC {aic_big} (need 80); modal: sAFIC {}, AIC {}",
            modal(safic),
            modal(aic)
        ),
    )
}

/// Spearman correlation computed from scratch with average ranks.
fn spearman_oracle(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|x| {
                let below = v.iter().filter(|y| *y < x).count() as f64;
                let equal = v.iter().filter(|y| *y == x).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - mean) * (y - mean)).sum();
    let va: f64 = ra.iter().map(|x| (x - mean).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mean).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn fic_risk_validity() -> Outcome {
    let mut cfg = base_config(
        60,
        vec![1.0, 0.5, 0.2, 0.0],
        200,
        7,
        vec![CriterionSpec::Fic { focus: FocusName::Mean, location: 0, coeffs: None }],
    );
    cfg.track = Some(TrackSpec { focus: FocusName::Mean, location: 0, coeffs: None });
    let r = match monte_carlo(&cfg, None) {
        Ok(r) => r,
        Err(e) => return (false, format!("simulation failed: {e}")),
    };
    let scores = &r.criteria[0].mean_scores;
    let errors = r.realized_sq_error.as_deref().unwrap_or_default();
    let rho = spearman_oracle(scores, errors);
    (rho > 0.3, format!("Spearman(mean FIC score, realized squared error) = {rho:.3} over 16 submodels (need > 0.3)"))
}

fn mle_consistency() -> Outcome {
    let beta = vec![0.0, 0.2, 0.2, 0.0, 0.0];
    let cfg = base_config(400, beta.clone(), 50, 99, vec![CriterionSpec::Aic]);
    let weights = Arc::new(cfg.build_weights().expect("chain weights"));
    let wide = SubmodelId::wide(5);
    let mut rho_err = 0.0;
    let mut beta_err = [0.0; 5];
    for rep in 0..cfg.reps {
        let fit = generate_dataset(&cfg, &weights, rep)
            .map_err(|e| e.to_string())
            .and_then(|d| fit_mle(&d, &wide).map_err(|e| e.to_string()));
        let fit = match fit {
            Ok(f) => f,
            Err(e) => return (false, format!("rep {rep}: {e}")),
        };
        rho_err += (fit.theta_hat.rho - 0.5).abs();
        for j in 0..5 {
            beta_err[j] += (fit.theta_hat.beta[j] - beta[j]).abs();
        }
    }
    let reps = cfg.reps as f64;
    let rho_err = rho_err / reps;
    let (b1, b2) = (beta_err[1] / reps, beta_err[2] / reps);
    (
        rho_err < 0.08 && b1 < 0.1 && b2 < 0.1,
        format!("mean |rho - 0.5| = {rho_err:.4} (need < 0.08); mean |beta_j - beta| = {b1:.4}, {b2:.4} (need < 0.1)"),
    )
}

fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| normal(rng));
    let m = &a * a.transpose() + DMatrix::identity(d, d);
    (&m + m.transpose()) * 0.5
}

fn random_dataset(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let w = Arc::new(row_normalize(build_chain_lag1(n).unwrap()).unwrap());
    let x = DMatrix::from_fn(n, p, |_, _| normal(rng));
    let y = DVector::from_fn(n, |_, _| normal(rng));
    Dataset::new(y, x, w, (1..=p).map(|j| format!("x{j}")).collect()).unwrap()
}

fn oracle_equivalences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);

    // (a) random graphs: a chain plus random extra symmetric edges
    let mut worst_ld: f64 = 0.0;
    for k in 0..100 {
        let n = rng.random_range(4..30);
        let mut m = build_chain_lag1(n).unwrap().entries().clone();
        for i in 0..n {
            for j in i + 2..n {
                if rng.random_bool(0.15) {
                    let w = rng.random_range(0.5..2.0);
                    m[(i, j)] = w;
                    m[(j, i)] = w;
                }
            }
        }
        let a = AdjacencyMatrix::new(m).unwrap();
        let w =
            if k % 2 == 0 { SpatialWeights::row_normalized_from(a) } else { SpatialWeights::unnormalized(a) }.unwrap();
        let (lo, hi) = w.rho_interval();
        let rho = lo + (hi - lo) * (0.05 + 0.9 * rng.random::<f64>());
        let d = (w.log_det_spectrum(rho).unwrap() - w.log_det_lu(rho).unwrap()).abs();
        worst_ld = worst_ld.max(d);
    }

    let mut worst_k: f64 = 0.0;
    let mut worst_risk: f64 = 0.0;
    let mut worst_idem: f64 = 0.0;
    let mut exact = true;
    for _ in 0..10 {
        let p = rng.random_range(1..5);
        let n = rng.random_range(10..40);
        let d = random_dataset(n, p, &mut rng);
        let info = FisherInfo::new(random_spd(p + 2, &mut rng), n).unwrap();
        let blocks = rho_beta_blocks(&info).unwrap();
        let z0: Vec<f64> = d.x().row(0).iter().copied().collect();
        let delta = DVector::from_fn(p, |_, _| normal(&mut rng));
        for psi in [psi_uniform(n).unwrap(), psi_kernel(d.x(), &z0, 1.0).unwrap()] {
            let h = h_empirical(&d, &psi).unwrap();
            let k = k_empirical(&blocks, &h).unwrap();
            // (b)
            let mut sum = DMatrix::zeros(p, p);
            for (i, &w) in psi.as_slice().iter().enumerate() {
                let o = omega_i(i, &d, &blocks).unwrap();
                sum += &o * o.transpose() * w;
            }
            worst_k = worst_k.max((&k - sum).amax());
            // (c)
            for s in enumerate_submodels(p).unwrap() {
                let avg: f64 = psi
                    .as_slice()
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| w * pointwise_risk(i, &s, &delta, &blocks, &d).unwrap())
                    .sum();
                let row = safic_score(&s, &delta, &blocks, &k).unwrap();
                worst_risk = worst_risk.max((avg - row.score - h[(0, 0)] / blocks.i_rr).abs());
            }
        }
        // (d), (e)
        for s in enumerate_submodels(p).unwrap() {
            let g = g_matrix(&blocks, &s).unwrap();
            worst_idem = worst_idem.max((&g * &g - &g).amax());
        }
        exact &= g_matrix(&blocks, &SubmodelId::wide(p)).unwrap() == DMatrix::identity(p, p);
        exact &= g_matrix(&blocks, &SubmodelId::narrow(p)).unwrap() == DMatrix::zeros(p, p);
    }
    let ok = worst_ld < 1e-8 && worst_k < 1e-10 && worst_risk < 1e-10 && worst_idem < 1e-8 && exact;
    (
        ok,
        format!(
            "(a) log-det {worst_ld:.1e} (b) K {worst_k:.1e} (c) risk average {worst_risk:.1e} (d) idempotence \
             {worst_idem:.1e} (e) exact boundary G: {exact}"
        ),
    )
}

fn wide_unbiasedness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst_bias: f64 = 0.0;
    let mut worst_m: f64 = 0.0;
    for _ in 0..20 {
        let p = rng.random_range(1..5);
        let n = rng.random_range(15..40);
        let d = random_dataset(n, p, &mut rng);
        let wide = SubmodelId::wide(p);
        let mut fit = fit_mle(&d, &wide).unwrap();
        let mut m = random_spd(p + 2, &mut rng);
        for j in 2..p + 2 {
            m[(1, j)] = 0.0;
            m[(j, 1)] = 0.0;
        }
        let info = FisherInfo::new(m, n).unwrap();
        fit.info = info.clone();
        let mm = m_matrix(&info, &wide).unwrap();
        let mut want = DMatrix::zeros(p + 2, p);
        want.view_mut((2, 0), (p, p)).fill_with_identity();
        worst_m = worst_m.max((mm - want).amax());
        for spec in [
            FocusSpec::conditional_mean(rng.random_range(0..n)),
            FocusSpec::max_eigen(),
            FocusSpec::beta_coeffs(None),
            FocusSpec::spillover(),
        ] {
            let row = fic_score(&spec, &wide, &fit, &fit, &info, &d).unwrap();
            worst_bias = worst_bias.max(row.bias2.abs());
        }
    }
    (
        worst_bias < 1e-10 && worst_m < 1e-10,
        format!("max wide bias2 = {worst_bias:.1e} (need < 1e-10); max |m_wide - [0;0;I]| = {worst_m:.1e}"),
    )
}

/// Score of the full log-likelihood in closed form, as an oracle for the
/// finite-difference score.
fn analytic_score(theta: &Theta, d: &Dataset, s: &SubmodelId) -> Vec<f64> {
    let xs = d.x_columns(s);
    let beta = DVector::from_column_slice(&theta.beta);
    let e = d.y() - d.wy() * theta.rho - &xs * beta;
    let s2 = theta.sigma2;
    let n = d.n() as f64;
    let w = d.weights().matrix();
    let a = DMatrix::identity(d.n(), d.n()) - w * theta.rho;
    let trace_resolvent = a.lu().solve(w).expect("I - rho W is invertible").trace();
    let mut g = vec![-trace_resolvent + d.wy().dot(&e) / s2, -n / (2.0 * s2) + e.norm_squared() / (2.0 * s2 * s2)];
    g.extend((xs.transpose() * &e / s2).iter());
    g
}

fn jacobian_verification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst_j: f64 = 0.0;
    for _ in 0..50 {
        let p = rng.random_range(1..5);
        let n = rng.random_range(8..40);
        let d = random_dataset(n, p, &mut rng);
        let s = SubmodelId::new(rng.random_range(0..1u64 << p), p).unwrap();
        let theta = Theta {
            rho: rng.random_range(-0.9..0.9),
            sigma2: rng.random_range(0.2..3.0),
            beta: (0..s.len()).map(|_| normal(&mut rng)).collect(),
        };
        let coeffs: Vec<usize> = (0..p).filter(|_| rng.random_bool(0.6)).collect();
        for spec in [
            FocusSpec::conditional_mean(rng.random_range(0..n)),
            FocusSpec::beta_coeffs(if coeffs.is_empty() { None } else { Some(coeffs.clone()) }),
            FocusSpec::spillover(),
        ] {
            let a = eval_focus(&spec, &theta, &d, &s, None).unwrap().jacobian;
            let f = jacobian_fd_focus(&spec, &theta, &d, &s).unwrap();
            worst_j = worst_j.max((a - f).amax());
        }
    }

    let mut fits = 0;
    let mut bad = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for _ in 0..20 {
        let d = {
            let n = 50;
            let cfg = base_config(n, vec![0.5, -0.3, 0.0], 1, rng.random(), vec![CriterionSpec::Aic]);
            let w = Arc::new(cfg.build_weights().unwrap());
            generate_dataset(&cfg, &w, 0).unwrap()
        };
        for s in enumerate_submodels(3).unwrap() {
            let fit = fit_mle(&d, &s).unwrap();
            if !fit.converged {
                continue;
            }
            fits += 1;
            let tol = 1e-4 * (1.0 + fit.loglik.abs());
            let oracle = analytic_score(&fit.theta_hat, &d, &s).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            worst_ratio = worst_ratio.max(fit.score_norm / tol);
            worst_oracle = worst_oracle.max(oracle / tol);
            if fit.score_norm >= tol || oracle >= tol {
                bad += 1;
            }
        }
    }
    (
        worst_j < 1e-6 && bad == 0 && fits > 0,
        format!(
            "max |J - J_fd| = {worst_j:.1e} over 50 instances (need < 1e-6); {fits} converged fits, {bad} with large \
             score (worst score/tolerance: numerical {worst_ratio:.1e}, closed form {worst_oracle:.1e})"
        ),
    )
}

fn determinism() -> Outcome {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return (false, e.to_string()),
    };
    let mut cfg = base_config(
        75,
        vec![0.0, 0.2, 0.2, 0.0, 0.0],
        24,
        31337,
        vec![
            CriterionSpec::Fic { focus: FocusName::Mean, location: 0, coeffs: None },
            CriterionSpec::Fic { focus: FocusName::Maxvar, location: 0, coeffs: None },
            CriterionSpec::Safic { scheme: SchemeName::Kernel, z0: None, bandwidth: None, location: 3 },
            CriterionSpec::Aic,
        ],
    );
    cfg.keep_tables = true;
    cfg.track = Some(TrackSpec { focus: FocusName::Spill, location: 0, coeffs: None });
    let config = dir.path().join("config.json");
    std::fs::write(&config, serde_json::to_vec(&cfg).unwrap()).unwrap();
    let run = |threads: &str, name: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_slmfic"))
            .args(["simulate", "--config"])
            .arg(&config)
            .args(["--threads", threads, "--out"])
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("simulate exited with {status}"));
        }
        std::fs::read(&out).map_err(|e| e.to_string())
    };
    let outputs = [run("1", "a.json"), run("1", "b.json"), run("4", "c.json"), run("4", "d.json")];
    let outputs: Vec<Vec<u8>> = match outputs.into_iter().collect() {
        Ok(v) => v,
        Err(e) => return (false, e),
    };
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    let lib_a = serde_json::to_vec(&monte_carlo(&cfg, Some(1)).unwrap()).unwrap();
    let lib_b = serde_json::to_vec(&monte_carlo(&cfg, Some(3)).unwrap()).unwrap();
    (
        identical && lib_a == lib_b,
        format!(
            "CLI reports at 1,1,4,4 threads byte-identical: {identical} ({} bytes); library runs at 1 and 3 threads \
             identical: {}",
            outputs[0].len(),
            lib_a == lib_b
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 selection frequencies on the chain design", chain_selection),
        ("2 FIC risk validity", fic_risk_validity),
        ("3 MLE consistency", mle_consistency),
        ("4 oracle equivalences", oracle_equivalences),
        ("5 wide-model unbiasedness", wide_unbiasedness),
        ("6 Jacobian and score verification", jacobian_verification),
        ("7 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (ok, detail) = match std::panic::catch_unwind(check) {
            Ok(r) => r,
            Err(_) => (false, "panicked".to_owned()),
        };
        if !ok {
            failed += 1;
        }
        println!("{} [PRIMARY] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    println!("{} of 7 criteria passed", 7 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
