use std::fs::File;
use std::io::BufReader;

use anyhow::{anyhow, bail, Context, Result};
use cnnsense::diagnostics::{
    empirical_rip, iht_experiment, reconstruction_experiment, rip_2d_experiment, summarize,
    Histogram, RipReport, Summary,
};
use cnnsense::model_sparse::sample_model_sparse;
use cnnsense::operator::{
    build_operator, coherence, new_random_filterbank, normalize_rows, read_filterbank,
    write_filterbank,
};
use cnnsense::recovery::{recover_activation, IhtConfig, LassoConfig};
use cnnsense::{rng, Dims, FilterBank, InputGeometry, PoolingGeometry, StructuredOperator};
use serde::Serialize;

use crate::config::{Command, ExperimentConfig};
use crate::output::{Csv, RunDir};
use crate::ConfigError;

/// A validated config with the objects it describes.
pub struct Prepared {
    pub config: ExperimentConfig,
    op: StructuredOperator,
    geom: PoolingGeometry,
    seed: u64,
    input: Option<Vec<f64>>,
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError(anyhow!(msg.into()))
}

/// Validates every field and builds the operator. With `require_seed`
/// false a missing seed is tolerated (the bank is then drawn from seed 0
/// only to check shapes).
pub fn prepare(mut cfg: ExperimentConfig, require_seed: bool) -> Result<Prepared, ConfigError> {
    let command = cfg.command;
    if cfg.trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    if cfg.bins == 0 {
        return Err(invalid("bins must be >= 1"));
    }
    let from_file = cfg.operator.filters_path.is_some();
    let seed = match cfg.seed {
        Some(s) => s,
        None if !require_seed || (command == Command::Coherence && from_file) => 0,
        None => return Err(invalid(format!("--seed is required for {command}"))),
    };

    let bank = match &cfg.operator.filters_path {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let bank = read_filterbank(BufReader::new(file))
                .with_context(|| format!("reading {}", path.display()))?;
            let o = &mut cfg.operator;
            o.dims = bank.dims();
            o.filters = bank.num_filters();
            o.channels = bank.num_channels();
            o.filter_len = bank.filter_len();
            bank
        }
        None => {
            let o = &cfg.operator;
            new_random_filterbank(o.filters, o.channels, o.filter_len, o.dims, seed)?
        }
    };
    let bank = if cfg.operator.normalize {
        normalize_rows(&bank)?
    } else {
        bank
    };
    if command == Command::Coherence && !is_normalized(&bank) {
        return Err(invalid(
            "coherence needs unit-norm filters; set operator.normalize",
        ));
    }
    if command == Command::Rip2d && cfg.operator.dims != Dims::Two {
        return Err(invalid("rip-2d needs a 2-d operator (operator.dims = 2)"));
    }
    let o = &cfg.operator;
    let op = build_operator(bank, InputGeometry::new(o.dims, o.input_len, o.stride)?)?;
    let layout = op.block_layout();
    let geom = PoolingGeometry::new(layout, cfg.pooling)?;

    let needs_k = matches!(command, Command::Rip1d | Command::Iht)
        || (command == Command::Recover && cfg.input.is_none());
    if needs_k {
        match cfg.k {
            Some(k) if k >= 1 && k <= layout.blocks => {}
            Some(k) => {
                return Err(invalid(format!(
                    "k must be in 1..={}, got {k}",
                    layout.blocks
                )))
            }
            None => return Err(invalid(format!("{command} needs k"))),
        }
    }
    if command == Command::Rip2d {
        match cfg.region_fraction {
            Some(f) if f > 0.0 && f <= 1.0 => {}
            _ => return Err(invalid("region_fraction must be in (0, 1]")),
        }
    }
    if cfg.iht.max_iters == 0 || !(cfg.iht.residual_tol >= 0.0) {
        return Err(invalid("iht needs max_iters >= 1 and residual_tol >= 0"));
    }
    let lasso = &cfg.lasso;
    if lasso.lambda.is_some_and(|l| !(l > 0.0 && l.is_finite()))
        || !(lasso.lambda_scale > 0.0 && lasso.lambda_scale.is_finite())
        || lasso.max_iters == 0
        || !(lasso.objective_tol >= 0.0)
    {
        return Err(invalid(
            "lasso needs lambda > 0, lambda_scale > 0, max_iters >= 1, objective_tol >= 0",
        ));
    }
    if !(0.0..1.0).contains(&cfg.planted_min_magnitude) {
        return Err(invalid("planted_min_magnitude must be in [0, 1)"));
    }

    let input = match (&cfg.input, command) {
        (Some(path), Command::Recover) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let x = text
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("parsing {}", path.display()))?;
            if x.len() != op.col_count() {
                return Err(invalid(format!(
                    "input has {} values, the operator expects {}",
                    x.len(),
                    op.col_count()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(invalid("input contains non-finite values"));
            }
            Some(x)
        }
        _ => None,
    };
    Ok(Prepared {
        config: cfg,
        op,
        geom,
        seed,
        input,
    })
}

fn is_normalized(bank: &FilterBank) -> bool {
    (0..bank.num_filters()).all(|i| (bank.group_norm(i) - 1.0).abs() <= 1e-9)
}

pub fn execute(p: &Prepared) -> Result<()> {
    let mut dir = RunDir::new(&p.config.out);
    dir.json("config.json", &p.config)?;
    match p.config.command {
        Command::Rip1d => rip_1d(p, &mut dir)?,
        Command::Rip2d => rip_2d(p, &mut dir)?,
        Command::Recover => recover(p, &mut dir)?,
        Command::Coherence => coherence_run(p, &mut dir)?,
        Command::Iht => iht(p, &mut dir)?,
    }
    dir.commit()?;
    println!("wrote {}", p.config.out.display());
    Ok(())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Serialize)]
struct Rip1dReport {
    rip: RipReport,
    wwt_ratio: Summary,
    wwt_full_ratio: Summary,
    error: Summary,
    error_median: f64,
}

fn rip_1d(p: &Prepared, dir: &mut RunDir) -> Result<()> {
    let cfg = &p.config;
    let k = cfg.k.expect("validated");
    let rip = empirical_rip(&p.op, k, cfg.trials, p.seed)?;
    let exp = reconstruction_experiment(&p.op, k, &p.geom, cfg.upsampling, cfg.trials, p.seed)?;
    dir.text(
        "ratio_hist.csv",
        Histogram::new(&rip.ratios, cfg.bins, 0.0, 2.0)?.to_csv(),
    );
    dir.text(
        "wwt_ratio_hist.csv",
        Histogram::new(&exp.wwt_ratios, cfg.bins, 0.0, 2.0)?.to_csv(),
    );
    dir.text("recon_error_hist.csv", exp.error_histogram(cfg.bins)?.to_csv());
    let mut csv = Csv::new(&["trial", "rip_ratio", "wwt_ratio", "wwt_full_ratio", "error"]);
    for t in 0..cfg.trials {
        csv.row(vec![
            t.into(),
            rip.ratios[t].into(),
            exp.wwt_ratios[t].into(),
            exp.wwt_full_ratios[t].into(),
            exp.errors[t].into(),
        ]);
    }
    dir.text("trials.csv", csv.finish());
    println!(
        "ratio mean {:.4} sd {:.4}; median error {:.4}",
        rip.mean,
        rip.stddev,
        median(&exp.errors)
    );
    dir.json(
        "report.json",
        &Rip1dReport {
            wwt_ratio: summarize(&exp.wwt_ratios),
            wwt_full_ratio: summarize(&exp.wwt_full_ratios),
            error: summarize(&exp.errors),
            error_median: median(&exp.errors),
            rip,
        },
    )
}

fn rip_2d(p: &Prepared, dir: &mut RunDir) -> Result<()> {
    let cfg = &p.config;
    let fraction = cfg.region_fraction.expect("validated");
    let report = rip_2d_experiment(&p.op, &p.geom, fraction, cfg.trials, p.seed)?;
    dir.text(
        "ratio_hist.csv",
        Histogram::new(&report.ratios, cfg.bins, 0.0, 2.0)?.to_csv(),
    );
    let mut csv = Csv::new(&["trial", "ratio"]);
    for (t, r) in report.ratios.iter().enumerate() {
        csv.row(vec![t.into(), (*r).into()]);
    }
    dir.text("ratios.csv", csv.finish());
    println!("ratio mean {:.4} sd {:.4}", report.mean, report.stddev);
    dir.json("report.json", &report)
}

#[derive(Serialize)]
struct IhtReport {
    trials: usize,
    k: usize,
    max_iters: usize,
    /// Median over trials of the relative residual after each iteration.
    median_residual: Vec<f64>,
    /// Fraction of trials whose last residual is at most the first.
    improved_fraction: f64,
    mean_iterations: f64,
}

fn iht(p: &Prepared, dir: &mut RunDir) -> Result<()> {
    let cfg = &p.config;
    let k = cfg.k.expect("validated");
    let icfg = IhtConfig {
        k,
        max_iters: cfg.iht.max_iters,
        residual_tol: cfg.iht.residual_tol,
        pooling: p.geom,
        upsampling: cfg.upsampling,
    };
    let runs = iht_experiment(&p.op, &icfg, cfg.trials, p.seed)?;
    let iters = runs.iter().map(|r| r.iterations).max().unwrap_or(0);
    // a run stopped by the tolerance keeps its last residual
    let at = |r: &cnnsense::recovery::IhtResult, i: usize| {
        r.residual_history[i.min(r.residual_history.len() - 1)]
    };
    let mut history = Csv::new(&["iter", "relative_residual"]);
    let mut medians = Vec::with_capacity(iters);
    for i in 0..iters {
        let column: Vec<f64> = runs.iter().map(|r| at(r, i)).collect();
        let m = median(&column);
        medians.push(m);
        history.row(vec![(i + 1).into(), m.into()]);
    }
    dir.text("residual_history.csv", history.finish());
    let mut per_trial = Csv::new(&["trial", "iter", "relative_residual"]);
    for (t, r) in runs.iter().enumerate() {
        for (i, v) in r.residual_history.iter().enumerate() {
            per_trial.row(vec![t.into(), (i + 1).into(), (*v).into()]);
        }
    }
    dir.text("trial_residuals.csv", per_trial.finish());
    let improved = runs
        .iter()
        .filter(|r| r.residual_history.last() <= r.residual_history.first())
        .count();
    println!("median residual after {iters} iterations: {:.4}", medians.last().copied().unwrap_or(0.0));
    dir.json(
        "report.json",
        &IhtReport {
            trials: cfg.trials,
            k,
            max_iters: cfg.iht.max_iters,
            median_residual: medians,
            improved_fraction: improved as f64 / runs.len() as f64,
            mean_iterations: runs.iter().map(|r| r.iterations as f64).sum::<f64>()
                / runs.len() as f64,
        },
    )
}

#[derive(Serialize)]
struct RecoveryTrial {
    lambda: f64,
    nnz: usize,
    /// `||W^T z|| / ||z||` for the recovered code; null when it is zero.
    ratio: Option<f64>,
    /// Against the planted support; null without a planted code or when
    /// nothing was recovered.
    precision: Option<f64>,
    recall: Option<f64>,
}

#[derive(Serialize)]
struct RecoverReport {
    planted: bool,
    trials: Vec<RecoveryTrial>,
    mean_recall: Option<f64>,
}

fn recover(p: &Prepared, dir: &mut RunDir) -> Result<()> {
    let cfg = &p.config;
    let layout = p.op.block_layout();
    let bl = layout.block_len();
    let runs = if p.input.is_some() { 1 } else { cfg.trials };
    let mut trials = Vec::with_capacity(runs);
    let mut support_csv = Csv::new(&["trial", "index", "block", "position", "value"]);
    let mut planted_csv = Csv::new(&["trial", "index", "block", "position", "value"]);
    for t in 0..runs {
        let (x, truth) = match &p.input {
            Some(x) => (x.clone(), None),
            None => {
                let mut r = rng::stream(p.seed, t as u64);
                let mut z = sample_model_sparse(layout, cfg.k.expect("validated"), &mut r)?;
                let lo = cfg.planted_min_magnitude;
                for v in z.coeffs.iter_mut().filter(|v| **v != 0.0) {
                    *v = v.signum() * (lo + (1.0 - lo) * v.abs());
                }
                for i in z.flat_support(layout) {
                    planted_csv.row(vec![t.into(), i.into(), (i / bl).into(), (i % bl).into(), z.coeffs[i].into()]);
                }
                (p.op.apply_adjoint(&z.coeffs)?, Some(z.flat_support(layout)))
            }
        };
        let lambda = match cfg.lasso.lambda {
            Some(l) => l,
            None => {
                let wx = p.op.apply_forward(&x)?;
                cfg.lasso.lambda_scale * wx.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            }
        };
        if !(lambda > 0.0) {
            bail!("trial {t}: lambda is zero (the input is zero)");
        }
        let lcfg = LassoConfig {
            lambda,
            max_iters: cfg.lasso.max_iters,
            objective_tol: cfg.lasso.objective_tol,
        };
        let z = recover_activation(&p.op, &x, &lcfg, &p.geom)?;
        let found = z.flat_support(layout);
        for &i in &found {
            support_csv.row(vec![t.into(), i.into(), (i / bl).into(), (i % bl).into(), z.coeffs[i].into()]);
        }
        let zn = z.coeffs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = if zn > 0.0 {
            let back = p.op.apply_adjoint(&z.coeffs)?;
            Some(back.iter().map(|v| v * v).sum::<f64>().sqrt() / zn)
        } else {
            None
        };
        let (precision, recall) = match &truth {
            Some(truth) => {
                let hits = found.iter().filter(|i| truth.contains(i)).count() as f64;
                let precision = (!found.is_empty()).then(|| hits / found.len() as f64);
                (precision, Some(hits / truth.len() as f64))
            }
            None => (None, None),
        };
        trials.push(RecoveryTrial {
            lambda,
            nnz: found.len(),
            ratio,
            precision,
            recall,
        });
    }
    dir.text("support.csv", support_csv.finish());
    let planted = p.input.is_none();
    if planted {
        dir.text("planted.csv", planted_csv.finish());
    }
    let mean_recall = planted.then(|| {
        trials.iter().map(|t| t.recall.unwrap_or(0.0)).sum::<f64>() / trials.len() as f64
    });
    if let Some(r) = mean_recall {
        println!("mean support recall {r:.4}");
    }
    dir.json(
        "report.json",
        &RecoverReport {
            planted,
            trials,
            mean_recall,
        },
    )
}

#[derive(Serialize)]
struct CoherenceReport {
    mu: f64,
    dims: Dims,
    filters: usize,
    channels: usize,
    filter_len: usize,
    source: &'static str,
}

fn coherence_run(p: &Prepared, dir: &mut RunDir) -> Result<()> {
    let bank = p.op.bank();
    let mu = coherence(&p.op)?.mu;
    println!("mu = {mu}");
    let mut bytes = Vec::new();
    write_filterbank(&mut bytes, bank)?;
    dir.bytes("filters.mripfb", bytes);
    dir.json(
        "report.json",
        &CoherenceReport {
            mu,
            dims: bank.dims(),
            filters: bank.num_filters(),
            channels: bank.num_channels(),
            filter_len: bank.filter_len(),
            source: if p.config.operator.filters_path.is_some() {
                "file"
            } else {
                "random"
            },
        },
    )
}
