//! Seeded sweeps over SNR and error variance.
//!
//! Trial `t` at every operating point draws its estimate and error matrices
//! from the same derived streams, so all strategies and sweep points are
//! paired. Trials run on the rayon pool and are reduced in index order.

use rayon::prelude::*;

use super::config::{Criterion, ScenarioConfig};
use super::seed::{stream, Purpose};
use crate::channel::draw_estimate;
use crate::error::{Error, Result};
use crate::multibranch::{
    calibrate_delta_f, pattern, patterns, select_branch_es, select_branch_fb, select_branch_fpa, BranchPattern,
    CalibrationResult,
};
use crate::rsrates::{AsrReport, EsrResult, EstimateContext, LinkBudget};
use crate::thp::ThpScheme;

/// What is evaluated at an operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// The configured rate-splitting scheme under a selection criterion.
    Criterion(Criterion),
    /// Conventional THP: identity ordering, no common stream.
    Thp,
    /// Rate splitting with the identity ordering only.
    RsThp,
    /// Multi-branch THP without a common stream.
    MbThp,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Criterion(c) => c.label(),
            Strategy::Thp => "thp",
            Strategy::RsThp => "rs-thp",
            Strategy::MbThp => "mb-thp",
        }
    }

    /// `(criterion, rs_enabled, L)` after applying the strategy's overrides.
    fn resolve(self, config: &ScenarioConfig) -> (Criterion, bool, usize) {
        match self {
            Strategy::Criterion(Criterion::None) => (Criterion::None, config.rs_enabled, 1),
            Strategy::Criterion(c) => (c, config.rs_enabled, config.l_branches),
            Strategy::Thp => (Criterion::None, false, 1),
            Strategy::RsThp => (Criterion::Es, true, 1),
            Strategy::MbThp => (Criterion::Es, false, config.l_branches),
        }
    }
}

/// Everything a trial needs at one operating point.
#[derive(Debug, Clone)]
pub struct PointSetup {
    pub k: usize,
    pub nt: usize,
    pub scheme: ThpScheme,
    pub strategy: Strategy,
    pub criterion: Criterion,
    pub branches: Vec<BranchPattern>,
    pub delta_grid: Vec<f64>,
    pub snr_db: f64,
    pub link: LinkBudget,
    pub sigma_e2: f64,
    pub n_estimates: usize,
    pub n_err: usize,
    pub n_cal: usize,
}

pub fn point_setup(config: &ScenarioConfig, strategy: Strategy, snr_db: f64, sigma_e2: f64) -> Result<PointSetup> {
    config.validate()?;
    if !snr_db.is_finite() {
        return Err(Error::config("snr_db", "values must be finite"));
    }
    if !(sigma_e2 >= 0.0 && sigma_e2.is_finite()) {
        return Err(Error::config("sigma_e2", format!("must be finite and >= 0, got {sigma_e2}")));
    }
    let (criterion, rs, l) = strategy.resolve(config);
    Ok(PointSetup {
        k: config.k,
        nt: config.nt,
        scheme: config.scheme,
        strategy,
        criterion,
        branches: patterns(l, config.k)?,
        delta_grid: if rs { config.delta_grid.clone() } else { vec![0.0] },
        snr_db,
        link: LinkBudget::from_snr_db(snr_db, config.sigma_n2),
        sigma_e2,
        n_estimates: config.n_estimates,
        n_err: config.n_err,
        n_cal: config.n_cal,
    })
}

fn estimate_context(setup: &PointSetup, master_seed: u64, t: u64, calibration: bool) -> Result<EstimateContext> {
    let (pe, pr) = if calibration {
        (Purpose::CalibrationEstimate, Purpose::CalibrationError)
    } else {
        (Purpose::Estimate, Purpose::Error)
    };
    let h_est = draw_estimate(setup.k, setup.nt, &mut stream(master_seed, t, pe));
    EstimateContext::draw(
        h_est,
        setup.n_err,
        setup.sigma_e2,
        setup.scheme,
        setup.link,
        &mut stream(master_seed, t, pr),
    )
}

/// Initialization phase of the FPA and FB criteria; `None` for the others.
///
/// Uses its own `n_cal` estimates, disjoint from the evaluation trials.
pub fn calibrate(setup: &PointSetup, master_seed: u64) -> Result<Option<CalibrationResult>> {
    if !matches!(setup.criterion, Criterion::Fpa | Criterion::Fb) {
        return Ok(None);
    }
    let ensemble = (0..setup.n_cal as u64)
        .map(|c| estimate_context(setup, master_seed, c, true))
        .collect::<Result<Vec<_>>>()?;
    let cal = match setup.criterion {
        Criterion::Fb => select_branch_fb(&ensemble, &setup.branches, &setup.delta_grid)?,
        _ => calibrate_delta_f(&ensemble, &setup.delta_grid)?,
    };
    Ok(Some(cal))
}

/// One evaluation trial (channel estimate `t`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub t: u64,
    pub branch_index: usize,
    pub delta: f64,
    pub report: AsrReport,
}

fn need_cal(cal: Option<&CalibrationResult>) -> Result<&CalibrationResult> {
    cal.ok_or_else(|| Error::config("criterion", "calibration result required for fpa/fb"))
}

/// Runs trial `t` alone; depends only on `(setup, calibration, master_seed, t)`.
pub fn run_trial(
    setup: &PointSetup,
    calibration: Option<&CalibrationResult>,
    master_seed: u64,
    t: u64,
) -> Result<TrialOutcome> {
    let ctx = estimate_context(setup, master_seed, t, false)?;
    let (branch_index, delta, report) = match setup.criterion {
        Criterion::Es | Criterion::None => {
            let o = select_branch_es(&ctx, &setup.branches, &setup.delta_grid)?;
            (o.branch.index(), o.delta, o.report)
        }
        Criterion::Fpa => {
            let cal = need_cal(calibration)?;
            let o = select_branch_fpa(&ctx, &setup.branches, cal.delta_f)?;
            (o.branch.index(), o.delta, o.report)
        }
        Criterion::Fb => {
            let cal = need_cal(calibration)?;
            let branch = match &cal.fixed_branch {
                Some(b) => b.clone(),
                None => pattern(1, setup.k)?,
            };
            let report = ctx.branch(&branch)?.asr(cal.delta_f)?;
            (branch.index(), cal.delta_f, report)
        }
    };
    Ok(TrialOutcome {
        t,
        branch_index,
        delta,
        report,
    })
}

/// One output row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scheme: ThpScheme,
    pub criterion: String,
    pub snr_db: f64,
    pub sigma_e2: f64,
    pub esr: f64,
    pub common_part: f64,
    pub private_part: f64,
    pub stderr: f64,
    pub mean_delta: f64,
    /// `(branch index, count)` for every candidate branch, ascending.
    pub branch_histogram: Vec<(usize, usize)>,
}

/// Row plus the per-trial detail it was reduced from.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub row: SweepRow,
    pub esr: EsrResult,
    pub calibration: Option<CalibrationResult>,
    pub trials: Vec<TrialOutcome>,
    /// Trials dropped because an estimate was rank deficient.
    pub skipped: usize,
}

pub fn evaluate_point(setup: &PointSetup, master_seed: u64) -> Result<PointResult> {
    let calibration = calibrate(setup, master_seed)?;
    let results: Vec<Result<TrialOutcome>> = (0..setup.n_estimates as u64)
        .into_par_iter()
        .map(|t| run_trial(setup, calibration.as_ref(), master_seed, t))
        .collect();

    let mut trials = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for r in results {
        match r {
            Ok(o) => trials.push(o),
            Err(Error::RankDeficient { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if trials.is_empty() {
        return Err(Error::RankDeficient {
            index: 0,
            magnitude: 0.0,
        });
    }

    let esr = EsrResult::from_reports(trials.iter().map(|o| &o.report));
    let mean_delta = trials.iter().map(|o| o.delta).sum::<f64>() / trials.len() as f64;
    let branch_histogram = setup
        .branches
        .iter()
        .map(|b| (b.index(), trials.iter().filter(|o| o.branch_index == b.index()).count()))
        .collect();
    let row = SweepRow {
        scheme: setup.scheme,
        criterion: setup.strategy.label().to_string(),
        snr_db: setup.snr_db,
        sigma_e2: setup.sigma_e2,
        esr: esr.esr,
        common_part: esr.common_part,
        private_part: esr.private_part,
        stderr: esr.stderr,
        mean_delta,
        branch_histogram,
    };
    Ok(PointResult {
        row,
        esr,
        calibration,
        trials,
        skipped,
    })
}

/// Builds and evaluates one operating point.
pub fn evaluate(config: &ScenarioConfig, strategy: Strategy, snr_db: f64, sigma_e2: f64) -> Result<PointResult> {
    evaluate_point(&point_setup(config, strategy, snr_db, sigma_e2)?, config.master_seed)
}

fn snr_points(config: &ScenarioConfig) -> Result<Vec<(f64, f64)>> {
    config.validate()?;
    let model = config.error_model();
    Ok(config
        .snr_db
        .iter()
        .map(|&s| (s, model.error_variance(LinkBudget::from_snr_db(s, config.sigma_n2).etr)))
        .collect())
}

/// One row per configured SNR, error variance from the configured model.
pub fn run_snr_sweep(config: &ScenarioConfig) -> Result<Vec<SweepRow>> {
    snr_points(config)?
        .into_iter()
        .map(|(s, e)| Ok(evaluate(config, Strategy::Criterion(config.criterion), s, e)?.row))
        .collect()
}

/// One row per listed error variance at a fixed SNR.
pub fn run_error_sweep(config: &ScenarioConfig, sigma_e2_list: &[f64], snr_db: f64) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if sigma_e2_list.is_empty() {
        return Err(Error::config("sigma_e2", "error-variance list must not be empty"));
    }
    if let Some(bad) = sigma_e2_list.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::config("sigma_e2", format!("must be finite and >= 0, got {bad}")));
    }
    sigma_e2_list
        .iter()
        .map(|&e| Ok(evaluate(config, Strategy::Criterion(config.criterion), snr_db, e)?.row))
        .collect()
}

/// Per SNR: the configured scheme, then RS-THP, MB-THP and THP on the same seeds.
pub fn run_baselines(config: &ScenarioConfig) -> Result<Vec<SweepRow>> {
    let strategies = [
        Strategy::Criterion(config.criterion),
        Strategy::RsThp,
        Strategy::MbThp,
        Strategy::Thp,
    ];
    let mut rows = Vec::new();
    for (s, e) in snr_points(config)? {
        for &strategy in &strategies {
            rows.push(evaluate(config, strategy, s, e)?.row);
        }
    }
    Ok(rows)
}

/// Worker-pool settings.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl RunOptions {
    /// Runs `f` inside a dedicated pool of the requested size.
    pub fn install<T, F>(&self, f: F) -> Result<T>
    where
        T: Send,
        F: FnOnce() -> T + Send,
    {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(Error::config("threads", "must be at least 1"));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::config("threads", e.to_string()))?;
        Ok(pool.install(f))
    }
}
