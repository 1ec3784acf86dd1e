//! L1 distance estimation and the statistical experiment harness.
//!
//! The Monte-Carlo L1 estimator uses the one-sided identity for densities:
//! `int |g - f| = 2 int (g - f)+ = 2 E_{X~g} (1 - f(X)/g(X))+`. Sampling
//! from the reference and evaluating the fitted model keeps the integrand
//! inside [0,1], so estimates live in [0,2] with no heavy tails. The grid
//! oracle computes the same integral deterministically for d <= 3.

use serde::{Deserialize, Serialize};

use crate::density::{default_root, fit_tree_density, root_and_order, TreeDensityModel};
use crate::error::{Error, Result};
use crate::ground_truth::FgmTreeTruth;
use crate::histograms::{Dataset, Partition1D};
use crate::mi::{default_bin_widths, mi_matrix};
use crate::quadrature::GaussRule;
use crate::rng::{mix, tag};
use crate::stats::{mean_and_se, median, quantile, weighted_line_fit, KahanSum};
use crate::tree::{max_spanning_tree, mi_gap};

/// A distribution that can be evaluated pointwise and sampled
/// reproducibly. Implemented by ground truths and fitted models alike, so
/// either can serve as the reference side of an L1 comparison.
pub trait Density: Sync {
    fn dim(&self) -> usize;
    /// Natural log density at a finite point; `-inf` off the support.
    fn log_density(&self, x: &[f64]) -> f64;
    /// Deterministic m-row sample derived from `seed` (m >= 1).
    fn try_sample(&self, seed: u64, m: usize) -> Result<Dataset>;
}

impl Density for FgmTreeTruth {
    fn dim(&self) -> usize {
        self.d()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        FgmTreeTruth::log_density(self, x)
    }

    fn try_sample(&self, seed: u64, m: usize) -> Result<Dataset> {
        Ok(self.sample(seed, m))
    }
}

impl Density for TreeDensityModel {
    fn dim(&self) -> usize {
        self.d()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.eval_log_density(x).expect("finite point")
    }

    fn try_sample(&self, seed: u64, m: usize) -> Result<Dataset> {
        self.sample(seed, m)
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L1Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

const MC_MIN_SAMPLES: usize = 100;

/// Monte-Carlo L1 distance between a fitted model and a reference density.
pub fn l1_distance_mc<G: Density + ?Sized>(
    model: &TreeDensityModel,
    reference: &G,
    m: usize,
    seed: u64,
) -> Result<L1Estimate> {
    if m < MC_MIN_SAMPLES {
        return Err(Error::TooFewMcSamples {
            got: m,
            min: MC_MIN_SAMPLES,
        });
    }
    if model.d() != reference.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.dim(),
            got: model.d(),
        });
    }
    let points = reference.try_sample(seed, m)?;
    // y = (1 - f_n/g)+ per reference point; evaluation parallelizes and
    // the reduction runs over the ordered values, so the estimate is
    // independent of worker count
    let indices: Vec<usize> = (0..m).collect();
    let ys = crate::par::map_ordered(&indices, |&r| -> Result<f64> {
        let x = points.row(r);
        let lg = reference.log_density(x);
        if lg == f64::NEG_INFINITY {
            return Err(Error::ReferenceDensityZero);
        }
        let lf = model.eval_log_density(x)?;
        Ok((1.0 - (lf - lg).exp()).max(0.0))
    });
    let ys = ys.into_iter().collect::<Result<Vec<f64>>>()?;
    let (mean, se) = mean_and_se(&ys);
    Ok(L1Estimate {
        value: 2.0 * mean,
        std_error: 2.0 * se,
        samples: m,
    })
}

const GRID_MAX_D: usize = 3;
const GRID_GL_ORDER: usize = 20;

/// Deterministic L1 distance between a fitted model and a ground truth,
/// for d <= 3: per-cell Gauss-Legendre integration of |g - f_n| over the
/// model's cell grid clipped to the unit cube, plus the model mass lying
/// outside the cube (where the truth vanishes).
pub fn l1_distance_grid(model: &TreeDensityModel, truth: &FgmTreeTruth) -> Result<f64> {
    let d = model.d();
    if d != truth.d() {
        return Err(Error::DimensionMismatch {
            expected: truth.d(),
            got: d,
        });
    }
    if d > GRID_MAX_D {
        return Err(Error::DimensionOutOfRange {
            d,
            min: 2,
            max: GRID_MAX_D,
        });
    }
    let h = model.partition().bin_width();
    let cells_per_axis = (1.0 / h).ceil() as i64;
    let rule = GaussRule::new(GRID_GL_ORDER);
    let mut total = KahanSum::new();

    // covering grid over the unit cube
    let mut idx = vec![0i64; d];
    'grid: loop {
        let lo: Vec<f64> = idx.iter().map(|&k| (k as f64) * h).collect();
        let hi: Vec<f64> = idx.iter().map(|&k| ((k + 1) as f64 * h).min(1.0)).collect();
        let v = model.cell_log_density(&idx).exp();
        total.add(rule.integrate_nd(&lo, &hi, |p| (truth.density(p) - v).abs()));
        let mut k = 0;
        loop {
            if k == d {
                break 'grid;
            }
            idx[k] += 1;
            if idx[k] < cells_per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }

    // model mass outside the unit cube
    for (cells, p) in model.cell_masses() {
        let mut inside_fraction = 1.0;
        for &k in &cells {
            let lo = k as f64 * h;
            let hi = (k + 1) as f64 * h;
            inside_fraction *= ((hi.min(1.0) - lo.max(0.0)) / h).max(0.0);
        }
        total.add(p * (1.0 - inside_fraction));
    }
    Ok(total.total())
}

/// Shared experiment configuration. All randomness derives from `seed`;
/// replication streams are keyed by (n, replication index), so extending
/// the grid never perturbs existing replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub c1: f64,
    pub c2: f64,
    pub seed: u64,
    /// Monte-Carlo sample count for each per-replication L1 estimate.
    pub mc_samples: usize,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.n_grid.is_empty() {
            return Err(Error::InvalidConfig("n_grid must be nonempty".into()));
        }
        if self.n_grid[0] < 1 {
            return Err(Error::InvalidConfig("sample sizes must be positive".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "n_grid must be strictly increasing".into(),
            ));
        }
        if self.mc_samples < MC_MIN_SAMPLES {
            return Err(Error::InvalidConfig(format!(
                "mc_samples must be at least {MC_MIN_SAMPLES}"
            )));
        }
        Ok(())
    }
}

/// One fitted replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub n: usize,
    pub rep: usize,
    pub identified: bool,
    pub l1: f64,
    pub l1_se: f64,
    pub h: f64,
    pub h_prime: f64,
}

/// Per-n aggregate of an identification experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationSummary {
    pub n: usize,
    pub reps: usize,
    pub freq_identified: f64,
    pub l1_mean: f64,
    pub l1_se: f64,
    pub l1_median: f64,
    pub l1_q10: f64,
    pub l1_q90: f64,
    pub h: f64,
    pub h_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationReport {
    pub config: ExperimentConfig,
    /// Minimum gap among distinct true MI values (None if all tied or d=2).
    pub delta: Option<f64>,
    /// Exactly tied true MI pairs.
    pub tied_pairs: u64,
    pub summaries: Vec<IdentificationSummary>,
    pub records: Vec<ReplicationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub reps: usize,
    pub l1_mean: f64,
    pub l1_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub config: ExperimentConfig,
    pub points: Vec<RatePoint>,
    /// Weighted least-squares slope of log(mean L1) against log(n).
    pub slope: f64,
    pub intercept: f64,
    /// 95% half-width of the slope under the per-n standard errors.
    pub slope_half_width: f64,
    pub records: Vec<ReplicationRecord>,
}

fn run_replications(gt: &FgmTreeTruth, cfg: &ExperimentConfig) -> Result<Vec<ReplicationRecord>> {
    let t_kl = gt.true_optimal_trees()?;
    let jobs: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.reps).map(move |rep| (n, rep)))
        .collect();
    let results = crate::par::map_ordered(&jobs, |&(n, rep)| -> Result<ReplicationRecord> {
        let data = gt.sample(mix(cfg.seed, &[tag::REPLICATION, n as u64, rep as u64]), n);
        let bw = default_bin_widths(n, cfg.c1, cfg.c2)?;
        let mi = mi_matrix(&data, Partition1D::new(bw.h_prime)?, None)?;
        let t_n = max_spanning_tree(&mi)?;
        let identified = t_kl.binary_search(&t_n).is_ok();
        let order = root_and_order(&t_n, default_root(&t_n))?;
        let model = fit_tree_density(&data, &order, Partition1D::new(bw.h)?)?;
        let target = gt.induced_tree_density(&t_n)?;
        let l1 = l1_distance_mc(
            &model,
            &target,
            cfg.mc_samples,
            mix(cfg.seed, &[tag::L1_MC, n as u64, rep as u64]),
        )?;
        Ok(ReplicationRecord {
            n,
            rep,
            identified,
            l1: l1.value,
            l1_se: l1.std_error,
            h: bw.h,
            h_prime: bw.h_prime,
        })
    });
    results.into_iter().collect()
}

fn true_gap_diagnostics(gt: &FgmTreeTruth) -> Result<(Option<f64>, u64)> {
    let true_mi = gt.true_mi_matrix()?;
    if true_mi.len() < 2 {
        return Ok((None, 0));
    }
    let gap = mi_gap(&true_mi)?;
    Ok((gap.delta, gap.tied_pairs))
}

/// Fit, select, and score over a grid of sample sizes; report how often
/// the selected tree is truly optimal and how the L1 error behaves.
pub fn identification_experiment(
    gt: &FgmTreeTruth,
    cfg: &ExperimentConfig,
) -> Result<IdentificationReport> {
    cfg.validate()?;
    let (delta, tied_pairs) = true_gap_diagnostics(gt)?;
    let records = run_replications(gt, cfg)?;
    let summaries = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let group: Vec<&ReplicationRecord> = records.iter().filter(|r| r.n == n).collect();
            let l1s: Vec<f64> = group.iter().map(|r| r.l1).collect();
            let (l1_mean, l1_se) = mean_and_se(&l1s);
            IdentificationSummary {
                n,
                reps: group.len(),
                freq_identified: group.iter().filter(|r| r.identified).count() as f64
                    / group.len() as f64,
                l1_mean,
                l1_se,
                l1_median: median(&l1s),
                l1_q10: quantile(&l1s, 0.1),
                l1_q90: quantile(&l1s, 0.9),
                h: group[0].h,
                h_prime: group[0].h_prime,
            }
        })
        .collect();
    Ok(IdentificationReport {
        config: cfg.clone(),
        delta,
        tied_pairs,
        summaries,
        records,
    })
}

/// Mean L1 error against sample size with a weighted log-log slope fit.
/// The grid must span at least two decades.
pub fn rate_experiment(gt: &FgmTreeTruth, cfg: &ExperimentConfig) -> Result<RateReport> {
    cfg.validate()?;
    let (min_n, max_n) = (cfg.n_grid[0], *cfg.n_grid.last().unwrap());
    if (max_n as f64) < 100.0 * min_n as f64 {
        return Err(Error::InvalidConfig(
            "rate experiments need an n-grid spanning at least two decades".into(),
        ));
    }
    if cfg.reps < 2 {
        return Err(Error::InvalidConfig(
            "rate experiments need reps >= 2 for standard errors".into(),
        ));
    }
    let records = run_replications(gt, cfg)?;
    let points: Vec<RatePoint> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let l1s: Vec<f64> = records.iter().filter(|r| r.n == n).map(|r| r.l1).collect();
            let (l1_mean, l1_se) = mean_and_se(&l1s);
            RatePoint {
                n,
                reps: l1s.len(),
                l1_mean,
                l1_se,
            }
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.l1_mean.ln()).collect();
    // delta-method weights: var(ln mean) ~ (se/mean)^2
    let ws: Vec<f64> = points
        .iter()
        .map(|p| {
            let rel = (p.l1_se / p.l1_mean).max(1e-12);
            1.0 / (rel * rel)
        })
        .collect();
    let (intercept, slope, slope_se) = weighted_line_fit(&xs, &ys, &ws);
    Ok(RateReport {
        config: cfg.clone(),
        points,
        slope,
        intercept,
        slope_half_width: 1.96 * slope_se,
        records,
    })
}

fn records_csv(records: &[ReplicationRecord]) -> String {
    let mut out = String::from("n,rep,identified,l1,l1_se,h,h_prime\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.n, r.rep, r.identified as u8, r.l1, r.l1_se, r.h, r.h_prime
        ));
    }
    out
}

impl IdentificationReport {
    /// Records block followed by a per-n summary block.
    pub fn to_csv(&self) -> String {
        let mut out = records_csv(&self.records);
        out.push('\n');
        out.push_str("n,reps,freq_identified,l1_mean,l1_se,l1_median,l1_q10,l1_q90,h,h_prime\n");
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                s.n,
                s.reps,
                s.freq_identified,
                s.l1_mean,
                s.l1_se,
                s.l1_median,
                s.l1_q10,
                s.l1_q90,
                s.h,
                s.h_prime
            ));
        }
        out
    }
}

impl RateReport {
    /// Records block, per-n summary block, and the fitted line.
    pub fn to_csv(&self) -> String {
        let mut out = records_csv(&self.records);
        out.push('\n');
        out.push_str("n,reps,l1_mean,l1_se\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.n, p.reps, p.l1_mean, p.l1_se));
        }
        out.push('\n');
        out.push_str("slope,intercept,slope_half_width\n");
        out.push_str(&format!(
            "{},{},{}\n",
            self.slope, self.intercept, self.slope_half_width
        ));
        out
    }
}
