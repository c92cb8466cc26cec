//! Rate-splitting layer: common precoder, power split, closed-form SINRs,
//! and instantaneous / average / ergodic rates.
//!
//! A fraction `δ` of the budget `Etr` goes to the common stream along the
//! dominant right-singular direction of the estimate; the private THP streams
//! share the remaining `(1 − δ)·Etr`. Given one CSIT error draw `H̃`, the SINRs
//! depend on the error only through the `K×K` products `e_ki = h̃_k^T·w_i`
//! with the composite private columns `w_i`, which is what
//! [`InterferenceTerms`] caches.

use rand::Rng;

use crate::channel::draw_error;
use crate::error::{Error, Result};
use crate::matops::{
    dominant_right_singular_direction, dot, permute_rows, ComplexMatrix, C64, POWER_ITER_CAP,
    POWER_ITER_TOL,
};
use crate::multibranch::BranchPattern;
use crate::thp::{build_thp_filters, compute_beta, ThpFilterSet, ThpScheme};

/// Power budget and receiver noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub etr: f64,
    pub sigma_n2: f64,
}

impl LinkBudget {
    /// `Etr = σ_n² · 10^(snr_db/10)`.
    pub fn from_snr_db(snr_db: f64, sigma_n2: f64) -> Self {
        Self {
            etr: sigma_n2 * 10f64.powf(snr_db / 10.0),
            sigma_n2,
        }
    }
}

pub fn validate_delta(delta: f64) -> Result<()> {
    if (0.0..1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::config("delta_grid", format!("delta {delta} outside [0, 1)")))
    }
}

/// Common-stream power split: `‖p_c‖² = δ·Etr`.
#[derive(Debug, Clone, PartialEq)]
pub struct RsPowerSplit {
    pub delta: f64,
    pub etr: f64,
    pub sigma_n2: f64,
    pub p_c: Vec<C64>,
}

impl RsPowerSplit {
    /// Scales the unit direction `v1` to power `δ·Etr`. `δ = 0` gives the zero vector.
    pub fn from_direction(v1: &[C64], delta: f64, link: LinkBudget) -> Result<Self> {
        validate_delta(delta)?;
        let amp = (delta * link.etr).sqrt();
        Ok(Self {
            delta,
            etr: link.etr,
            sigma_n2: link.sigma_n2,
            p_c: v1.iter().map(|z| z * amp).collect(),
        })
    }

    pub fn pc_norm2(&self) -> f64 {
        self.p_c.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn link(&self) -> LinkBudget {
        LinkBudget {
            etr: self.etr,
            sigma_n2: self.sigma_n2,
        }
    }
}

/// `p_c = sqrt(δ·Etr)·v1` with `v1` the dominant right-singular direction of
/// the estimate. Row order does not matter for `v1`.
pub fn common_precoder(h_est: &ComplexMatrix, delta: f64, link: LinkBudget) -> Result<RsPowerSplit> {
    validate_delta(delta)?;
    if delta == 0.0 {
        return RsPowerSplit::from_direction(&vec![C64::new(0.0, 0.0); h_est.cols()], 0.0, link);
    }
    let v1 = dominant_right_singular_direction(h_est, POWER_ITER_TOL, POWER_ITER_CAP)?;
    RsPowerSplit::from_direction(&v1, delta, link)
}

/// Per-user SINRs (linear scale) for decoding the common and the private stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub gamma_c: Vec<f64>,
    pub gamma_p: Vec<f64>,
}

/// `e_ki = h̃_k^T·w_i` for one error draw (rows in branch order).
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceTerms {
    e: ComplexMatrix,
}

impl InterferenceTerms {
    pub fn new(h_err: &ComplexMatrix, filters: &ThpFilterSet) -> Result<Self> {
        Ok(Self {
            e: h_err.matmul(&filters.w_priv)?,
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.e
    }

    /// `Σ_{i≠k} |e_ki|²`.
    fn leakage(&self, k: usize) -> f64 {
        (0..self.e.cols()).filter(|&i| i != k).map(|i| self.e[(k, i)].norm_sqr()).sum()
    }
}

/// `|ĥ_k^T·p_c|²` for every row of `h_est`.
pub fn common_signal_power(h_est: &ComplexMatrix, p_c: &[C64]) -> Vec<f64> {
    (0..h_est.rows()).map(|k| dot(h_est.row(k), p_c).norm_sqr()).collect()
}

fn common_sinrs(filters: &ThpFilterSet, beta: f64, signal: &[f64], terms: &InterferenceTerms, sigma_n2: f64) -> Vec<f64> {
    let b2 = beta * beta;
    (0..filters.users())
        .map(|k| {
            let own = match filters.scheme {
                ThpScheme::Decentralized => C64::new(filters.l_diag(k), 0.0) + terms.e[(k, k)],
                ThpScheme::Centralized => C64::new(1.0, 0.0) + terms.e[(k, k)],
            };
            signal[k] / (b2 * (own.norm_sqr() + terms.leakage(k)) + sigma_n2)
        })
        .collect()
}

fn private_sinrs(
    filters: &ThpFilterSet,
    terms: &InterferenceTerms,
    etr: f64,
    pc_norm2: f64,
    sigma_n2: f64,
) -> Result<Vec<f64>> {
    let private = etr - pc_norm2;
    if !(private > 0.0) {
        return Err(Error::NoPrivatePower { etr, pc_norm2 });
    }
    let k_users = filters.users();
    Ok(match filters.scheme {
        ThpScheme::Decentralized => (0..k_users)
            .map(|k| {
                let l2 = filters.l_diag(k).powi(2);
                1.0 / (terms.leakage(k) / l2 + k_users as f64 * sigma_n2 / (private * l2))
            })
            .collect(),
        ThpScheme::Centralized => {
            let noise = sigma_n2 * filters.inverse_gain_energy() / private;
            (0..k_users).map(|k| 1.0 / (terms.leakage(k) + noise)).collect()
        }
    })
}

/// Closed-form common-stream SINRs on the branch-ordered matrices.
///
/// Decentralized: `|ĥ_k p_c|² / (β²(|l_kk + e_kk|² + Σ_{i≠k}|e_ki|²) + σ_n²)`.
/// Centralized: same with `|1 + e_kk|²` for the own-stream term.
pub fn sinr_common(
    filters: &ThpFilterSet,
    split: &RsPowerSplit,
    h_est: &ComplexMatrix,
    h_err: &ComplexMatrix,
) -> Result<Vec<f64>> {
    let beta = filters.beta()?;
    let terms = InterferenceTerms::new(h_err, filters)?;
    let signal = common_signal_power(h_est, &split.p_c);
    Ok(common_sinrs(filters, beta, &signal, &terms, split.sigma_n2))
}

/// Closed-form private-stream SINRs (common stream removed by SIC).
///
/// Decentralized: `1 / (Σ_{i≠k}|e_ki|²/l_kk² + K·σ_n² / ((Etr − ‖p_c‖²)·l_kk²))`.
/// Centralized: `1 / (Σ_{i≠k}|e_ki|² + σ_n²·Σ_j l_jj⁻² / (Etr − ‖p_c‖²))`.
pub fn sinr_private(
    filters: &ThpFilterSet,
    split: &RsPowerSplit,
    _h_est: &ComplexMatrix,
    h_err: &ComplexMatrix,
) -> Result<Vec<f64>> {
    filters.beta()?;
    let terms = InterferenceTerms::new(h_err, filters)?;
    private_sinrs(filters, &terms, split.etr, split.pc_norm2(), split.sigma_n2)
}

/// `log₂(1 + γ)` elementwise for the common and private SINRs.
pub fn instantaneous_rates(report: &SinrReport) -> (Vec<f64>, Vec<f64>) {
    let rate = |g: &f64| (1.0 + g).log2();
    (
        report.gamma_c.iter().map(rate).collect(),
        report.gamma_p.iter().map(rate).collect(),
    )
}

/// Rates averaged over the CSIT error given one channel estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct AsrReport {
    /// Average common rate per user, in original user order.
    pub rc_bar: Vec<f64>,
    /// Average private sum rate.
    pub rp_bar: f64,
    /// `min_k rc_bar[k] + rp_bar`.
    pub objective: f64,
    pub n_err_samples: usize,
}

impl AsrReport {
    pub fn new(rc_bar: Vec<f64>, rp_bar: f64, n_err_samples: usize) -> Self {
        let objective = min_of(&rc_bar) + rp_bar;
        Self {
            rc_bar,
            rp_bar,
            objective,
            n_err_samples,
        }
    }

    pub fn min_common(&self) -> f64 {
        min_of(&self.rc_bar)
    }
}

fn min_of(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

/// One channel estimate together with the CSIT error draws shared by every
/// candidate branch and power split (common random numbers).
///
/// Errors are stored in the original user order and permuted per branch, so
/// every branch sees the same physical error.
#[derive(Debug, Clone)]
pub struct EstimateContext {
    pub h_est: ComplexMatrix,
    pub errors: Vec<ComplexMatrix>,
    pub sigma_e2: f64,
    pub scheme: ThpScheme,
    pub link: LinkBudget,
    /// Dominant right-singular direction of the estimate.
    pub v1: Vec<C64>,
    /// False when power iteration hit its cap and the best iterate is used.
    pub v1_converged: bool,
}

impl EstimateContext {
    pub fn new(
        h_est: ComplexMatrix,
        errors: Vec<ComplexMatrix>,
        sigma_e2: f64,
        scheme: ThpScheme,
        link: LinkBudget,
    ) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::config("n_err", "must be at least 1"));
        }
        if let Some(bad) = errors.iter().find(|e| e.shape() != h_est.shape()) {
            return Err(Error::ShapeMismatch {
                expected: h_est.shape(),
                got: bad.shape(),
            });
        }
        let (v1, v1_converged) = match dominant_right_singular_direction(&h_est, POWER_ITER_TOL, POWER_ITER_CAP) {
            Ok(v) => (v, true),
            Err(Error::NoConvergence { best_iterate, .. }) => (best_iterate, false),
            Err(e) => return Err(e),
        };
        Ok(Self {
            h_est,
            errors,
            sigma_e2,
            scheme,
            link,
            v1,
            v1_converged,
        })
    }

    /// Draws `n_err` independent error matrices from `rng` for this estimate.
    pub fn draw<R: Rng + ?Sized>(
        h_est: ComplexMatrix,
        n_err: usize,
        sigma_e2: f64,
        scheme: ThpScheme,
        link: LinkBudget,
        rng: &mut R,
    ) -> Result<Self> {
        let (k, nt) = h_est.shape();
        let errors = (0..n_err).map(|_| draw_error(k, nt, sigma_e2, rng)).collect();
        Self::new(h_est, errors, sigma_e2, scheme, link)
    }

    pub fn users(&self) -> usize {
        self.h_est.rows()
    }

    /// Builds the filters for `branch` and caches the per-draw interference terms.
    pub fn branch(&self, branch: &BranchPattern) -> Result<BranchEvaluator<'_>> {
        let perm = branch.perm();
        let h_perm = permute_rows(&self.h_est, perm)?;
        let filters = build_thp_filters(&h_perm, self.scheme)?;
        let terms = self
            .errors
            .iter()
            .map(|e| InterferenceTerms::new(&permute_rows(e, perm)?, &filters))
            .collect::<Result<Vec<_>>>()?;
        let direction_gain = (0..h_perm.rows())
            .map(|k| dot(h_perm.row(k), &self.v1).norm_sqr())
            .collect();
        Ok(BranchEvaluator {
            ctx: self,
            perm: perm.to_vec(),
            filters,
            terms,
            direction_gain,
        })
    }
}

/// Average-rate evaluator for one (estimate, branch) pair; cheap per `δ`.
#[derive(Debug, Clone)]
pub struct BranchEvaluator<'a> {
    ctx: &'a EstimateContext,
    perm: Vec<usize>,
    filters: ThpFilterSet,
    terms: Vec<InterferenceTerms>,
    /// `|ĥ_k^T v1|²` in branch order.
    direction_gain: Vec<f64>,
}

impl BranchEvaluator<'_> {
    pub fn filters(&self) -> &ThpFilterSet {
        &self.filters
    }

    /// SINRs for error draw `draw` at power split `delta` (branch order).
    pub fn sinr(&self, draw: usize, delta: f64) -> Result<SinrReport> {
        validate_delta(delta)?;
        let link = self.ctx.link;
        let pc_norm2 = delta * link.etr;
        let beta = compute_beta(&self.filters, link.etr, pc_norm2)?;
        let signal: Vec<f64> = self.direction_gain.iter().map(|g| g * pc_norm2).collect();
        let terms = &self.terms[draw];
        Ok(SinrReport {
            gamma_c: common_sinrs(&self.filters, beta, &signal, terms, link.sigma_n2),
            gamma_p: private_sinrs(&self.filters, terms, link.etr, pc_norm2, link.sigma_n2)?,
        })
    }

    /// Average rates over all stored error draws at power split `delta`.
    pub fn asr(&self, delta: f64) -> Result<AsrReport> {
        let k = self.ctx.users();
        let n = self.terms.len();
        let mut rc = vec![0.0; k];
        let mut rp = 0.0;
        for draw in 0..n {
            let (c, p) = instantaneous_rates(&self.sinr(draw, delta)?);
            for (row, r) in c.iter().enumerate() {
                rc[self.perm[row]] += r;
            }
            rp += p.iter().sum::<f64>();
        }
        let nf = n as f64;
        Ok(AsrReport::new(rc.into_iter().map(|r| r / nf).collect(), rp / nf, n))
    }
}

/// Monte Carlo average rates for one estimate, branch, and power split, over
/// `n_err` fresh error draws from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn average_rates<R: Rng + ?Sized>(
    h_est: &ComplexMatrix,
    branch: &BranchPattern,
    delta: f64,
    n_err: usize,
    sigma_e2: f64,
    scheme: ThpScheme,
    link: LinkBudget,
    rng: &mut R,
) -> Result<AsrReport> {
    let ctx = EstimateContext::draw(h_est.clone(), n_err, sigma_e2, scheme, link, rng)?;
    ctx.branch(branch)?.asr(delta)
}

/// Ergodic sum rate over a set of per-estimate average-rate reports.
#[derive(Debug, Clone, PartialEq)]
pub struct EsrResult {
    pub esr: f64,
    /// `min_k` of the ergodic common rates.
    pub common_part: f64,
    /// Ergodic private sum rate.
    pub private_part: f64,
    /// Standard error of `esr`, linearized at the bottleneck user.
    pub stderr: f64,
    pub n_estimates: usize,
}

impl EsrResult {
    /// Aggregates in slice order, so the result is bitwise reproducible.
    pub fn from_reports<'a, I>(reports: I) -> Self
    where
        I: IntoIterator<Item = &'a AsrReport>,
    {
        let reports: Vec<&AsrReport> = reports.into_iter().collect();
        let n = reports.len();
        if n == 0 {
            return Self {
                esr: 0.0,
                common_part: 0.0,
                private_part: 0.0,
                stderr: 0.0,
                n_estimates: 0,
            };
        }
        let k = reports[0].rc_bar.len();
        let nf = n as f64;
        let mut rc = vec![0.0; k];
        let mut rp = 0.0;
        for r in &reports {
            for (acc, v) in rc.iter_mut().zip(&r.rc_bar) {
                *acc += v;
            }
            rp += r.rp_bar;
        }
        let common_means: Vec<f64> = rc.iter().map(|v| v / nf).collect();
        let common_part = min_of(&common_means);
        let worst = (0..k).fold(0, |b, u| if common_means[u] < common_means[b] { u } else { b });
        let private_part = rp / nf;
        // linearized at the bottleneck user: these contributions average to the ESR
        let contrib: Vec<f64> = reports.iter().map(|r| r.rc_bar[worst] + r.rp_bar).collect();
        let stderr = if n > 1 {
            let mean = contrib.iter().sum::<f64>() / nf;
            let var = contrib.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            (var / nf).sqrt()
        } else {
            0.0
        };
        Self {
            esr: common_part + private_part,
            common_part,
            private_part,
            stderr,
            n_estimates: n,
        }
    }
}

/// Grid search for the power split maximizing `evaluator`.
///
/// Grid points that leave no private power are skipped; ties go to the
/// smaller `δ`.
pub fn optimize_delta<F>(mut evaluator: F, grid: &[f64]) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::config("delta_grid", "must not be empty"));
    }
    let mut best: Option<(f64, f64)> = None;
    for &delta in grid {
        validate_delta(delta)?;
        let obj = match evaluator(delta) {
            Ok(v) => v,
            Err(Error::NoPrivatePower { .. }) => continue,
            Err(e) => return Err(e),
        };
        best = match best {
            None => Some((delta, obj)),
            Some((bd, bo)) if obj > bo || (obj == bo && delta < bd) => Some((delta, obj)),
            keep => keep,
        };
    }
    best.ok_or(Error::NoPrivatePower {
        etr: f64::NAN,
        pc_norm2: f64::NAN,
    })
}
