//! Signal-model oracle for the closed-form SINRs.
//!
//! The oracle never uses the composite columns `W`. It forms the end-to-end
//! gain of every private symbol at every receiver straight from the transmit
//! chain (`F`, `diag(g)`, `B⁻¹`, `β`, true channel, receiver scaling) and
//! applies the textbook SINR definition with ideal removal of the common
//! stream before private decoding. The effective symbol `s + d` is treated as
//! unit variance.

use std::io::Write;

use rand::Rng;

use crate::channel::ChannelRealization;
use crate::error::Result;
use crate::matops::{dot, invert_lower, permute_rows, ComplexMatrix, C64};
use crate::multibranch::BranchPattern;
use crate::rsrates::{
    common_precoder, common_signal_power, sinr_common, sinr_private, LinkBudget, RsPowerSplit, SinrReport,
};
use crate::thp::{build_thp_filters, compute_beta, ThpFilterSet, ThpScheme};

/// End-to-end gains of one realization under one branch (branch order).
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveGains {
    /// `r_k · h_k^T p_c` with the true channel.
    pub common_gain: Vec<C64>,
    /// Entry `(k, i)`: gain of private symbol `i` at receiver `k`.
    pub private_gain_matrix: ComplexMatrix,
    /// Receiver-side scaling `r_k` (`g_k` for decentralized, 1 for centralized);
    /// the noise at receiver `k` is scaled by the same factor.
    pub receiver_scaling: Vec<f64>,
}

/// `β·diag(g)·H·F·B⁻¹` (decentralized) or `β·H·F·diag(g)·B⁻¹` (centralized)
/// on the branch-permuted true channel.
pub fn effective_gain_matrix(
    realization: &ChannelRealization,
    filters: &ThpFilterSet,
    split: &RsPowerSplit,
    branch: &BranchPattern,
) -> Result<EffectiveGains> {
    let beta = filters.beta()?;
    let h = permute_rows(&realization.h_true, branch.perm())?;
    let binv = invert_lower(&filters.b)?;
    let k = filters.users();

    let (chain, scaling) = match filters.scheme {
        ThpScheme::Decentralized => (
            h.matmul(&filters.f)?.matmul(&binv)?.scale_rows(&filters.g),
            filters.g.clone(),
        ),
        ThpScheme::Centralized => (
            h.matmul(&filters.f.scale_cols(&filters.g))?.matmul(&binv)?,
            vec![1.0; k],
        ),
    };
    let common_gain = (0..k).map(|i| dot(h.row(i), &split.p_c) * scaling[i]).collect();
    Ok(EffectiveGains {
        common_gain,
        private_gain_matrix: chain.scale(C64::new(beta, 0.0)),
        receiver_scaling: scaling,
    })
}

/// SINRs from the effective gains with unit-variance symbols.
///
/// Common: `|c_k|² / (Σ_i |P_ki|² + r_k²σ_n²)`.
/// Private, after the common stream is removed: `|P_kk|² / (Σ_{i≠k} |P_ki|² + r_k²σ_n²)`.
pub fn model_sinr(gains: &EffectiveGains, sigma_n2: f64) -> SinrReport {
    let p = &gains.private_gain_matrix;
    let k_users = p.rows();
    let mut gamma_c = Vec::with_capacity(k_users);
    let mut gamma_p = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let noise = gains.receiver_scaling[k].powi(2) * sigma_n2;
        let total: f64 = p.row(k).iter().map(|z| z.norm_sqr()).sum();
        let own = p[(k, k)].norm_sqr();
        gamma_c.push(gains.common_gain[k].norm_sqr() / (total + noise));
        gamma_p.push(own / (total - own + noise));
    }
    SinrReport { gamma_c, gamma_p }
}

/// Symbol-level Monte Carlo estimate of the model SINRs: unit-variance complex
/// Gaussian symbols and noise, measured signal and interference powers.
pub fn simulate_sinr<R: Rng + ?Sized>(gains: &EffectiveGains, sigma_n2: f64, draws: usize, rng: &mut R) -> SinrReport {
    use rand_distr::{Distribution, StandardNormal};
    let p = &gains.private_gain_matrix;
    let k_users = p.rows();
    let mut cn = || {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    };
    let mut common_sig = vec![0.0; k_users];
    let mut common_rest = vec![0.0; k_users];
    let mut priv_sig = vec![0.0; k_users];
    let mut priv_rest = vec![0.0; k_users];
    let noise_std = sigma_n2.sqrt();
    let mut s = vec![C64::new(0.0, 0.0); k_users];
    for _ in 0..draws {
        let sc = cn();
        for x in s.iter_mut() {
            *x = cn();
        }
        for k in 0..k_users {
            let n = cn() * noise_std * gains.receiver_scaling[k];
            let private: C64 = p.row(k).iter().zip(&s).map(|(a, b)| a * b).sum();
            let common = gains.common_gain[k] * sc;
            let y = common + private + n;
            let own = p[(k, k)] * s[k];
            common_sig[k] += common.norm_sqr();
            common_rest[k] += (y - common).norm_sqr();
            priv_sig[k] += own.norm_sqr();
            priv_rest[k] += (y - common - own).norm_sqr();
        }
    }
    SinrReport {
        gamma_c: (0..k_users).map(|k| common_sig[k] / common_rest[k]).collect(),
        gamma_p: (0..k_users).map(|k| priv_sig[k] / priv_rest[k]).collect(),
    }
}

/// Closed form vs oracle on one instance (branch order).
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub closed_form: SinrReport,
    pub oracle: SinrReport,
    /// `|closed − oracle| / oracle` per user for the common SINR.
    pub common_rel: Vec<f64>,
    /// Same for the private SINR.
    pub private_rel: Vec<f64>,
    /// `|ĥ_k p_c|² / |h_k p_c|² − 1`: the part of the common deviation that
    /// comes from using the estimate in the numerator.
    pub numerator_gap: Vec<f64>,
}

impl DeviationReport {
    pub fn max_common(&self) -> f64 {
        self.common_rel.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_private(&self) -> f64 {
        self.private_rel.iter().copied().fold(0.0, f64::max)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Evaluates the closed forms and the oracle on the identical instance.
pub fn compare_closed_form(
    realization: &ChannelRealization,
    scheme: ThpScheme,
    delta: f64,
    branch: &BranchPattern,
    link: LinkBudget,
) -> Result<DeviationReport> {
    let perm = realization.permuted(branch.perm())?;
    let split = common_precoder(&perm.h_est, delta, link)?;
    let filters = build_thp_filters(&perm.h_est, scheme)?;
    let beta = compute_beta(&filters, link.etr, split.pc_norm2())?;
    let filters = filters.with_beta(beta);

    let closed_form = SinrReport {
        gamma_c: sinr_common(&filters, &split, &perm.h_est, &perm.h_err)?,
        gamma_p: sinr_private(&filters, &split, &perm.h_est, &perm.h_err)?,
    };
    let gains = effective_gain_matrix(realization, &filters, &split, branch)?;
    let oracle = model_sinr(&gains, link.sigma_n2);

    let est_num = common_signal_power(&perm.h_est, &split.p_c);
    let true_num = common_signal_power(&perm.h_true, &split.p_c);
    let numerator_gap = est_num
        .iter()
        .zip(&true_num)
        .map(|(e, t)| if e == t { 0.0 } else { e / t - 1.0 })
        .collect();

    let common_rel = closed_form.gamma_c.iter().zip(&oracle.gamma_c).map(|(a, b)| rel(*a, *b)).collect();
    let private_rel = closed_form.gamma_p.iter().zip(&oracle.gamma_p).map(|(a, b)| rel(*a, *b)).collect();
    Ok(DeviationReport {
        closed_form,
        oracle,
        common_rel,
        private_rel,
        numerator_gap,
    })
}

/// Deviation statistics over many instances at one error level.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationSummary {
    pub scheme: ThpScheme,
    pub sigma_e2: f64,
    pub instances: usize,
    pub median_common: f64,
    pub max_common: f64,
    pub median_private: f64,
    pub max_private: f64,
    pub median_numerator_gap: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs [`compare_closed_form`] on `instances` fresh `K×Nt` realizations and
/// pools the per-user deviations.
#[allow(clippy::too_many_arguments)]
pub fn deviation_sweep<R: Rng + ?Sized>(
    k: usize,
    nt: usize,
    scheme: ThpScheme,
    sigma_e2: f64,
    delta: f64,
    branch: &BranchPattern,
    link: LinkBudget,
    instances: usize,
    rng: &mut R,
) -> Result<DeviationSummary> {
    let mut common = Vec::with_capacity(instances * k);
    let mut private = Vec::with_capacity(instances * k);
    let mut gap = Vec::with_capacity(instances * k);
    for _ in 0..instances {
        let real = ChannelRealization::draw(k, nt, sigma_e2, rng);
        let rep = compare_closed_form(&real, scheme, delta, branch, link)?;
        common.extend(rep.common_rel);
        private.extend(rep.private_rel);
        gap.extend(rep.numerator_gap.iter().map(|g| g.abs()));
    }
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(DeviationSummary {
        scheme,
        sigma_e2,
        instances,
        max_common: max(&common),
        max_private: max(&private),
        median_common: median(&mut common),
        median_private: median(&mut private),
        median_numerator_gap: median(&mut gap),
    })
}

pub const DEVIATION_HEADER: &str =
    "scheme,sigma_e2,instances,median_common_dev,max_common_dev,median_private_dev,max_private_dev,median_numerator_gap";

/// Writes the deviation summaries as CSV.
pub fn write_deviation_csv<W: Write>(rows: &[DeviationSummary], mut out: W) -> Result<()> {
    writeln!(out, "{DEVIATION_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scheme,
            r.sigma_e2,
            r.instances,
            r.median_common,
            r.max_common,
            r.median_private,
            r.max_private,
            r.median_numerator_gap
        )?;
    }
    Ok(())
}
