//! Multi-branch user ordering and the branch / power-split selection criteria.
//!
//! Branch `l` reorders the users with the pattern `T_l`: `T_1` is the
//! identity, and for `l ≥ 2` the first `l − 2` users keep their place while
//! the remaining block is reversed. Three criteria pick a branch:
//!
//! - **ES**: per estimate, the best `(branch, δ)` pair over the full grid;
//! - **FPA**: per estimate, the best branch at a calibrated fixed `δ_f`;
//! - **FB**: one branch chosen at initialization from a calibration
//!   ensemble, with `δ_f` then re-tuned for that branch.
//!
//! Every candidate is evaluated on the same error draws of its estimate, so
//! the ES ⊇ FPA ⊇ {identity branch} dominance holds exactly.

use std::fmt;

use crate::error::{Error, Result};
use crate::rsrates::{optimize_delta, AsrReport, BranchEvaluator, EsrResult, EstimateContext};

/// One user-ordering pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BranchPattern {
    index: usize,
    perm: Vec<usize>,
}

impl BranchPattern {
    /// 1-based branch index.
    pub fn index(&self) -> usize {
        self.index
    }

    /// Row `i` of the reordered estimate is row `perm()[i]` of the original (0-based).
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn users(&self) -> usize {
        self.perm.len()
    }
}

impl fmt::Display for BranchPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_based: Vec<String> = self.perm.iter().map(|p| (p + 1).to_string()).collect();
        write!(f, "T{} = ({})", self.index, one_based.join(","))
    }
}

/// Pattern `T_l` for `K` users, `1 ≤ l ≤ K`.
pub fn pattern(l: usize, k: usize) -> Result<BranchPattern> {
    if l == 0 || l > k {
        return Err(Error::IndexOutOfRange { index: l, max: k });
    }
    let perm = if l == 1 {
        (0..k).collect()
    } else {
        let fixed = l - 2;
        (0..fixed).chain((fixed..k).rev()).collect()
    };
    Ok(BranchPattern { index: l, perm })
}

/// Patterns `T_1..T_L` in index order.
pub fn patterns(l_branches: usize, k: usize) -> Result<Vec<BranchPattern>> {
    if l_branches == 0 || l_branches > k {
        return Err(Error::config("L", format!("must satisfy 1 <= L <= K = {k}, got {l_branches}")));
    }
    (1..=l_branches).map(|l| pattern(l, k)).collect()
}

/// Branch and power split chosen for one estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub branch: BranchPattern,
    pub delta: f64,
    pub report: AsrReport,
}

impl SelectionOutcome {
    pub fn objective(&self) -> f64 {
        self.report.objective
    }
}

/// Calibrated power split (and, for FB, the fixed branch).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub delta_f: f64,
    pub fixed_branch: Option<BranchPattern>,
    pub n_cal: usize,
}

fn better(cand: (usize, f64, f64), best: Option<(usize, f64, f64)>) -> bool {
    match best {
        None => true,
        Some((bl, bd, bo)) => {
            let (l, d, o) = cand;
            o > bo || (o == bo && (l < bl || (l == bl && d < bd)))
        }
    }
}

/// Exhaustive search over `branches × delta_grid` for one estimate.
///
/// Ties go to the smaller branch index, then the smaller `δ`. Pairs without
/// private power are skipped.
pub fn select_branch_es(
    ctx: &EstimateContext,
    branches: &[BranchPattern],
    delta_grid: &[f64],
) -> Result<SelectionOutcome> {
    if branches.is_empty() {
        return Err(Error::config("L", "at least one branch is required"));
    }
    if delta_grid.is_empty() {
        return Err(Error::config("delta_grid", "must not be empty"));
    }
    let mut best: Option<(usize, f64, f64)> = None;
    let mut outcome: Option<SelectionOutcome> = None;
    for branch in branches {
        let ev = ctx.branch(branch)?;
        for &delta in delta_grid {
            let report = match ev.asr(delta) {
                Ok(r) => r,
                Err(Error::NoPrivatePower { .. }) => continue,
                Err(e) => return Err(e),
            };
            let key = (branch.index(), delta, report.objective);
            if better(key, best) {
                best = Some(key);
                outcome = Some(SelectionOutcome {
                    branch: branch.clone(),
                    delta,
                    report,
                });
            }
        }
    }
    outcome.ok_or(Error::NoPrivatePower {
        etr: ctx.link.etr,
        pc_norm2: ctx.link.etr,
    })
}

/// Best branch at the fixed power split `delta_f`.
pub fn select_branch_fpa(ctx: &EstimateContext, branches: &[BranchPattern], delta_f: f64) -> Result<SelectionOutcome> {
    select_branch_es(ctx, branches, &[delta_f])
}

/// Evaluators for every (estimate, branch) pair of an ensemble: `[estimate][branch]`.
struct EnsembleTable<'a> {
    evaluators: Vec<Vec<BranchEvaluator<'a>>>,
}

impl<'a> EnsembleTable<'a> {
    fn new(ensemble: &'a [EstimateContext], branches: &[BranchPattern]) -> Result<Self> {
        let evaluators = ensemble
            .iter()
            .map(|ctx| branches.iter().map(|b| ctx.branch(b)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { evaluators })
    }

    /// Ensemble ESR of branch slot `slot` at `delta`.
    fn esr(&self, slot: usize, delta: f64) -> Result<f64> {
        let reports = self
            .evaluators
            .iter()
            .map(|row| row[slot].asr(delta))
            .collect::<Result<Vec<_>>>()?;
        Ok(EsrResult::from_reports(&reports).esr)
    }
}

fn ensure_ensemble(ensemble: &[EstimateContext]) -> Result<()> {
    if ensemble.is_empty() {
        Err(Error::config("n_cal", "calibration ensemble must not be empty"))
    } else {
        Ok(())
    }
}

/// `δ_f`: the grid point maximizing the identity-branch ESR of the ensemble.
pub fn calibrate_delta_f(ensemble: &[EstimateContext], delta_grid: &[f64]) -> Result<CalibrationResult> {
    ensure_ensemble(ensemble)?;
    let k = ensemble[0].users();
    let table = EnsembleTable::new(ensemble, &[pattern(1, k)?])?;
    let (delta_f, _) = optimize_delta(|d| table.esr(0, d), delta_grid)?;
    Ok(CalibrationResult {
        delta_f,
        fixed_branch: None,
        n_cal: ensemble.len(),
    })
}

/// Fixed-branch calibration: pick the branch with the highest ensemble ESR at
/// `δ_f` (ties to the smaller index), then re-tune `δ_f` for that branch.
pub fn select_branch_fb(
    ensemble: &[EstimateContext],
    branches: &[BranchPattern],
    delta_grid: &[f64],
) -> Result<CalibrationResult> {
    ensure_ensemble(ensemble)?;
    if branches.is_empty() {
        return Err(Error::config("L", "at least one branch is required"));
    }
    let delta_f = calibrate_delta_f(ensemble, delta_grid)?.delta_f;
    let table = EnsembleTable::new(ensemble, branches)?;

    let mut best: Option<(usize, f64)> = None;
    for slot in 0..branches.len() {
        let esr = table.esr(slot, delta_f)?;
        if best.is_none_or(|(_, b)| esr > b) {
            best = Some((slot, esr));
        }
    }
    let (slot, _) = best.expect("branches is non-empty");
    let (delta_f, _) = optimize_delta(|d| table.esr(slot, d), delta_grid)?;
    Ok(CalibrationResult {
        delta_f,
        fixed_branch: Some(branches[slot].clone()),
        n_cal: ensemble.len(),
    })
}
