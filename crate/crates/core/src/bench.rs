//! Replicated simulation studies.
//!
//! `table1`: `linear_ratio` stream, online fit, absolute correlations of the transformed
//! held-out block with the true statistics. `table3`: `sine_product` stream, online and
//! batch fits, cross-validated kernel-regression error of `y` on the estimated statistics
//! of the training samples. Replications run in parallel; each one is single threaded.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use crate::batch::{batch_ksir, batch_transform};
use crate::error::{OksirError, Result};
use crate::evaluation::{direction_match, kernel_regression_cv, DEFAULT_BANDWIDTH_GRID, DEFAULT_FOLDS};
use crate::model::{OksirConfig, OksirModel};
use crate::simgen::{generate_split, SimConfig, SimData, SimModel};

pub const DEFAULT_TEST_SIZE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    Table1,
    Table3,
}

impl std::str::FromStr for Setting {
    type Err = OksirError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Setting::Table1),
            "table3" => Ok(Setting::Table3),
            _ => Err(OksirError::input(format!("unknown setting `{s}` (expected table1 or table3)"))),
        }
    }
}

impl Setting {
    pub fn sim_model(self) -> SimModel {
        match self {
            Setting::Table1 => SimModel::LinearRatio,
            Setting::Table3 => SimModel::SineProduct,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Setting::Table1 => "table1",
            Setting::Table3 => "table3",
        }
    }

    /// `(n, p)` of the reference study.
    pub fn default_size(self) -> (usize, usize) {
        match self {
            Setting::Table1 => (1000, 100),
            Setting::Table3 => (500, 10),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub setting: Setting,
    pub reps: usize,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub n_test: usize,
    /// Template for the online model; its seed is offset per replication.
    pub model: OksirConfig,
    /// Ridge for the batch baseline (`None`: its default).
    pub ridge: Option<f64>,
    pub folds: usize,
    /// Record wall-clock fit times. When off, times are written as 0 so that output
    /// files are reproducible byte for byte.
    pub timing: bool,
}

impl BenchConfig {
    pub fn new(setting: Setting, reps: usize, seed: u64) -> Self {
        let (n, p) = setting.default_size();
        BenchConfig {
            setting,
            reps,
            n,
            p,
            seed,
            n_test: DEFAULT_TEST_SIZE,
            model: OksirConfig::new(2),
            ridge: None,
            folds: DEFAULT_FOLDS,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepResult {
    /// `table1`, `table3` or `table3_batch`.
    pub setting: String,
    pub rep: usize,
    pub cor1: Option<f64>,
    pub cor2: Option<f64>,
    pub cv_error: Option<f64>,
    pub fit_seconds: f64,
    pub dict_size: usize,
}

/// Fits the online model on `data` in arrival order.
pub fn fit_stream(config: &OksirConfig, data: &SimData) -> Result<OksirModel> {
    let mut model = OksirModel::new(config.clone())?;
    for (x, &y) in data.x.rows().into_iter().zip(&data.y) {
        model.partial_fit(x.as_slice().expect("standard layout"), y)?;
    }
    model.flush_warmup()?;
    Ok(model)
}

fn correlations(est: &Array2<f64>, truth: &Array2<f64>) -> Result<(f64, f64)> {
    let m = direction_match(est.view(), truth.view())?;
    Ok((m[0], m[1]))
}

fn run_rep(cfg: &BenchConfig, rep: usize) -> Result<Vec<RepResult>> {
    let data_seed = cfg.seed.wrapping_add(rep as u64);
    let sim = SimConfig::new(cfg.setting.sim_model(), cfg.p, cfg.n, data_seed);
    let n_test = if cfg.setting == Setting::Table1 { cfg.n_test } else { 0 };
    let (train, test) = generate_split(sim, n_test)?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.seed = cfg.model.seed.wrapping_add(rep as u64);
    let clock = Instant::now();
    let model = fit_stream(&model_cfg, &train)?;
    let secs = if cfg.timing { clock.elapsed().as_secs_f64() } else { 0.0 };
    let mut out = Vec::new();
    match cfg.setting {
        Setting::Table1 => {
            let est = model.transform_batch(test.x.view())?;
            let (c1, c2) = correlations(&est, &test.v)?;
            out.push(RepResult {
                setting: cfg.setting.name().into(),
                rep,
                cor1: Some(c1),
                cor2: Some(c2),
                cv_error: None,
                fit_seconds: secs,
                dict_size: model.dict_size(),
            });
        }
        Setting::Table3 => {
            let cv_seed = data_seed ^ 0x5eed;
            let est = model.transform_batch(train.x.view())?;
            let (c1, c2) = correlations(&est, &train.v)?;
            let err = kernel_regression_cv(est.view(), train.y.view(), cfg.folds, &DEFAULT_BANDWIDTH_GRID, cv_seed)?;
            out.push(RepResult {
                setting: cfg.setting.name().into(),
                rep,
                cor1: Some(c1),
                cor2: Some(c2),
                cv_error: Some(err),
                fit_seconds: secs,
                dict_size: model.dict_size(),
            });
            let clock = Instant::now();
            let batch = batch_ksir(
                train.x.view(),
                train.y.view(),
                model_cfg.num_slices,
                model_cfg.d,
                &model_cfg.kernel,
                cfg.ridge,
                model.slice_config(),
            )?;
            let secs = if cfg.timing { clock.elapsed().as_secs_f64() } else { 0.0 };
            let est = batch_transform(&batch, train.x.view(), train.x.view())?;
            let (c1, c2) = correlations(&est, &train.v)?;
            let err = kernel_regression_cv(est.view(), train.y.view(), cfg.folds, &DEFAULT_BANDWIDTH_GRID, cv_seed)?;
            out.push(RepResult {
                setting: format!("{}_batch", cfg.setting.name()),
                rep,
                cor1: Some(c1),
                cor2: Some(c2),
                cv_error: Some(err),
                fit_seconds: secs,
                dict_size: train.len(),
            });
        }
    }
    Ok(out)
}

/// Runs all replications (in parallel) and returns the rows ordered by setting, then rep.
pub fn run(cfg: &BenchConfig) -> Result<Vec<RepResult>> {
    if cfg.reps == 0 {
        return Err(OksirError::input("need at least one replication"));
    }
    let per_rep: Vec<Result<Vec<RepResult>>> = (0..cfg.reps).into_par_iter().map(|r| run_rep(cfg, r)).collect();
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| a.setting.cmp(&b.setting).then(a.rep.cmp(&b.rep)));
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_csv(out: &mut dyn Write, rows: &[RepResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["setting", "rep", "cor1", "cor2", "cv_error", "fit_seconds", "dict_size"])
        .map_err(crate::data::csv_io)?;
    for r in rows {
        w.write_record([
            r.setting.clone(),
            r.rep.to_string(),
            cell(r.cor1),
            cell(r.cor2),
            cell(r.cv_error),
            r.fit_seconds.to_string(),
            r.dict_size.to_string(),
        ])
        .map_err(crate::data::csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub setting: String,
    pub reps: usize,
    pub cor1: Option<(f64, f64)>,
    pub cor2: Option<(f64, f64)>,
    pub cv_error: Option<(f64, f64)>,
    pub fit_seconds: (f64, f64),
    pub dict_size: (f64, f64),
}

pub fn summarize(rows: &[RepResult]) -> Vec<Summary> {
    let mut settings: Vec<&str> = rows.iter().map(|r| r.setting.as_str()).collect();
    settings.dedup();
    settings
        .into_iter()
        .map(|s| {
            let sel: Vec<&RepResult> = rows.iter().filter(|r| r.setting == s).collect();
            let stat = |f: &dyn Fn(&RepResult) -> Option<f64>| {
                let v: Vec<f64> = sel.iter().filter_map(|r| f(r)).collect();
                (!v.is_empty()).then(|| mean_sd(&v))
            };
            Summary {
                setting: s.to_string(),
                reps: sel.len(),
                cor1: stat(&|r| r.cor1),
                cor2: stat(&|r| r.cor2),
                cv_error: stat(&|r| r.cv_error),
                fit_seconds: stat(&|r| Some(r.fit_seconds)).expect("non-empty"),
                dict_size: stat(&|r| Some(r.dict_size as f64)).expect("non-empty"),
            }
        })
        .collect()
}

pub fn format_summary(summaries: &[Summary]) -> String {
    let ms = |v: Option<(f64, f64)>| v.map_or_else(|| "-".to_string(), |(m, s)| format!("{m:.3}({s:.3})"));
    let mut out = format!(
        "{:<14} {:>5} {:>15} {:>15} {:>15} {:>15} {:>15}\n",
        "setting", "reps", "cor1", "cor2", "cv_error", "fit_seconds", "dict_size"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<14} {:>5} {:>15} {:>15} {:>15} {:>15} {:>15}",
            s.setting,
            s.reps,
            ms(s.cor1),
            ms(s.cor2),
            ms(s.cv_error),
            ms(Some(s.fit_seconds)),
            format!("{:.1}({:.1})", s.dict_size.0, s.dict_size.1),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd_values() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_sd(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn small_table3_run_is_deterministic() {
        let mut cfg = BenchConfig::new(Setting::Table3, 2, 3);
        cfg.n = 150;
        cfg.p = 4;
        cfg.timing = false;
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(a[0].setting, "table3");
        assert_eq!(a[2].setting, "table3_batch");
        let mut buf = Vec::new();
        write_csv(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("setting,rep,cor1,cor2,cv_error,fit_seconds,dict_size\n"));
        assert_eq!(summarize(&a).len(), 2);
    }
}
