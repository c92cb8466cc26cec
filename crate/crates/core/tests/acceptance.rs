//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use mbthp::channel::{compose_true, draw_estimate, ChannelRealization};
use mbthp::expcli::{
    calibrate, evaluate, parse_config, point_setup, run_trial, write_csv, PointResult, RunOptions, ScenarioConfig,
    Strategy, Criterion, SweepRow,
};
use mbthp::matops::{invert_lower, is_permutation, lq_decompose, permute_rows, ComplexMatrix, C64};
use mbthp::multibranch::{pattern, patterns};
use mbthp::oracle::{compare_closed_form, deviation_sweep};
use mbthp::rsrates::{common_precoder, LinkBudget};
use mbthp::thp::{build_thp_filters, build_transmit_vector, compute_beta, thp_encode, ModuloParams, ThpScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SCHEMES: [ThpScheme; 2] = [ThpScheme::Centralized, ThpScheme::Decentralized];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn cn(r: &mut ChaCha8Rng) -> C64 {
    let re: f64 = StandardNormal.sample(r);
    let im: f64 = StandardNormal.sample(r);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn qpsk(r: &mut ChaCha8Rng) -> C64 {
    let bits = r.next_u64();
    let a = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(if bits & 1 == 0 { a } else { -a }, if bits & 2 == 0 { a } else { -a })
}

fn random_matrix(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| cn(r))
}

fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

fn lq_suite() -> Verdict {
    let mut r = rng(101);
    let shapes: Vec<(usize, usize)> = [2usize, 4, 8]
        .iter()
        .flat_map(|&k| (k..=8).map(move |nt| (k, nt)))
        .collect();
    let (mut recon, mut upper, mut diag, mut orth) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut nonpositive = 0;
    for i in 0..1000 {
        let (k, nt) = shapes[i % shapes.len()];
        let a = random_matrix(k, nt, &mut r);
        let f = match lq_decompose(&a) {
            Ok(f) => f,
            Err(e) => return verdict(false, format!("matrix {i}: {e}")),
        };
        recon = recon.max(f.l.matmul(&f.q).unwrap().sub(&a).unwrap().max_abs());
        for row in 0..k {
            for col in row + 1..k {
                upper = upper.max(f.l[(row, col)].norm());
            }
            let d = f.l[(row, row)];
            diag = diag.max(d.im.abs());
            if !(d.re > 1e-10) {
                nonpositive += 1;
            }
        }
        let qq = f.q.matmul(&f.q.hermitian()).unwrap();
        orth = orth.max(qq.sub(&ComplexMatrix::identity(k)).unwrap().max_abs());
    }
    let worst = recon.max(upper).max(diag).max(orth);
    verdict(
        worst <= 1e-10 && nonpositive == 0,
        format!(
            "1000 matrices; max |LQ−A| {recon:.1e}, max |L_upper| {upper:.1e}, max |Im l_kk| {diag:.1e}, \
             non-positive diagonals {nonpositive}, max |QQᴴ−I| {orth:.1e} (tol 1e-10)"
        ),
    )
}

fn thp_identity() -> Verdict {
    let mut r = rng(202);
    let params = ModuloParams::new(2.0 * 2f64.sqrt()).unwrap();
    let (mut fwd, mut inv) = (0.0f64, 0.0f64);
    for i in 0..1000 {
        let k = 2 + i % 7;
        let b = ComplexMatrix::from_fn(k, k, |row, col| match row.cmp(&col) {
            std::cmp::Ordering::Equal => C64::new(1.0, 0.0),
            std::cmp::Ordering::Greater => cn(&mut r),
            std::cmp::Ordering::Less => C64::new(0.0, 0.0),
        });
        let s: Vec<C64> = (0..k).map(|_| qpsk(&mut r)).collect();
        let (v, d) = thp_encode(&s, &b, params);
        let bv = b.mul_vec(&v).unwrap();
        let lhs: Vec<C64> = bv.iter().zip(&d).map(|(x, y)| x - y).collect();
        fwd = fwd.max(max_abs_diff(&lhs, &s));

        let sd: Vec<C64> = s.iter().zip(&d).map(|(x, y)| x + y).collect();
        let v_inv = invert_lower(&b).unwrap().mul_vec(&sd).unwrap();
        let scale = v_inv.iter().map(|z| z.norm()).fold(1.0, f64::max);
        inv = inv.max(max_abs_diff(&v, &v_inv) / scale);
    }
    verdict(
        fwd <= 1e-12 && inv <= 1e-12,
        format!("1000 (B, s); max |Bv − d − s| {fwd:.1e}, max rel |v − B⁻¹(s+d)| {inv:.1e} (tol 1e-12)"),
    )
}

fn perfect_csit_closed_forms() -> Verdict {
    let mut r = rng(303);
    let link = LinkBudget::from_snr_db(20.0, 1.0);
    let (mut worst_c, mut worst_p, mut worst_analytic) = (0.0f64, 0.0f64, 0.0f64);
    let mut cases = 0;
    for k in [2usize, 4, 8] {
        for _ in 0..10 {
            let h = draw_estimate(k, k, &mut r);
            let real = compose_true(h, ComplexMatrix::zeros(k, k), 0.0).unwrap();
            for scheme in SCHEMES {
                for delta in [0.0, 0.3, 0.6] {
                    for branch in patterns(k, k).unwrap() {
                        let rep = match compare_closed_form(&real, scheme, delta, &branch, link) {
                            Ok(rep) => rep,
                            Err(e) => return verdict(false, format!("K={k} {scheme}: {e}")),
                        };
                        worst_c = worst_c.max(rep.max_common());
                        worst_p = worst_p.max(rep.max_private());
                        if scheme == ThpScheme::Decentralized {
                            let hp = permute_rows(&real.h_est, branch.perm()).unwrap();
                            let fs = build_thp_filters(&hp, scheme).unwrap();
                            for kk in 0..k {
                                let l = fs.l_diag(kk);
                                let want = (1.0 - delta) * link.etr * l * l / (k as f64 * link.sigma_n2);
                                worst_analytic = worst_analytic.max(rel(rep.closed_form.gamma_p[kk], want));
                            }
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    verdict(
        worst_c <= 1e-10 && worst_p <= 1e-10 && worst_analytic <= 1e-10,
        format!(
            "{cases} cases; max rel dev common {worst_c:.1e}, private {worst_p:.1e}, \
             dTHP analytic private {worst_analytic:.1e} (tol 1e-10)"
        ),
    )
}

fn small_error_consistency() -> Verdict {
    let link = LinkBudget::from_snr_db(20.0, 1.0);
    let identity = pattern(1, 4).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for scheme in SCHEMES {
        for delta in [0.0, 0.3] {
            let mut r = rng(404);
            let s = deviation_sweep(4, 4, scheme, 1e-4, delta, &identity, link, 200, &mut r).unwrap();
            pass &= s.median_private < 0.01;
            parts.push(format!("{scheme} δ={delta}: {:.2e}", s.median_private));
        }
    }
    verdict(
        pass,
        format!("200 instances, median rel private deviation {} (tol 1e-2)", parts.join(", ")),
    )
}

fn desk_config(extra: &str) -> ScenarioConfig {
    parse_config(&format!(
        "K=4\nNt=4\nL=4\nscheme=dthp\nn_estimates=50\nn_err=50\nn_cal=20\nsnr_db=5,10,15,20,25\nseed=2024\n{extra}"
    ))
    .unwrap()
}

fn selection_dominance() -> Verdict {
    let cfg = desk_config("n_err=100\nsnr_db=20\n");
    let etr = LinkBudget::from_snr_db(20.0, 1.0).etr;
    let sigma_e2 = cfg.error_model().error_variance(etr);
    let es = point_setup(&cfg, Strategy::Criterion(Criterion::Es), 20.0, sigma_e2).unwrap();
    let fpa = point_setup(&cfg, Strategy::Criterion(Criterion::Fpa), 20.0, sigma_e2).unwrap();
    let mut one = cfg.clone();
    one.l_branches = 1;
    let b1 = point_setup(&one, Strategy::Criterion(Criterion::Fpa), 20.0, sigma_e2).unwrap();
    let cal = calibrate(&fpa, cfg.master_seed).unwrap();
    let delta_f = cal.as_ref().unwrap().delta_f;

    let (mut v1, mut v2) = (0, 0);
    let mut min_margin = (f64::INFINITY, f64::INFINITY);
    for t in 0..50 {
        let a = run_trial(&es, None, cfg.master_seed, t).unwrap().report.objective;
        let b = run_trial(&fpa, cal.as_ref(), cfg.master_seed, t).unwrap().report.objective;
        let c = run_trial(&b1, cal.as_ref(), cfg.master_seed, t).unwrap().report.objective;
        v1 += usize::from(a < b);
        v2 += usize::from(b < c);
        min_margin = (min_margin.0.min(a - b), min_margin.1.min(b - c));
    }
    verdict(
        v1 == 0 && v2 == 0,
        format!(
            "50 estimates, δ_f = {delta_f}; violations ES<FPA {v1}, FPA<T1 {v2}; \
             min margins {:.3e}, {:.3e} (zero violations allowed)",
            min_margin.0, min_margin.1
        ),
    )
}

/// Per-estimate contributions to the ESR: private rate plus the common rate of
/// the user with the smallest ergodic common rate. Their mean is the ESR.
fn esr_contributions(p: &PointResult) -> Vec<f64> {
    let k = p.trials[0].report.rc_bar.len();
    let n = p.trials.len() as f64;
    let means: Vec<f64> = (0..k)
        .map(|u| p.trials.iter().map(|t| t.report.rc_bar[u]).sum::<f64>() / n)
        .collect();
    let worst = (0..k).fold(0, |b, u| if means[u] < means[b] { u } else { b });
    p.trials.iter().map(|t| t.report.rc_bar[worst] + t.report.rp_bar).collect()
}

/// Paired standard error of an ESR difference (linearized at the bottleneck users).
fn paired_stderr(a: &PointResult, b: &PointResult) -> f64 {
    assert!(a.trials.iter().zip(&b.trials).all(|(x, y)| x.t == y.t));
    let d: Vec<f64> = esr_contributions(a)
        .iter()
        .zip(esr_contributions(b))
        .map(|(x, y)| x - y)
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Gap `a − b` and the bound `2·stderr` it must not fall below.
fn gap(a: &PointResult, b: &PointResult) -> (f64, f64) {
    (a.row.esr - b.row.esr, 2.0 * paired_stderr(a, b))
}

const FIG1: [(Strategy, &str); 5] = [
    (Strategy::Criterion(Criterion::Es), "ES"),
    (Strategy::Criterion(Criterion::Fpa), "FPA"),
    (Strategy::Criterion(Criterion::Fb), "FB"),
    (Strategy::RsThp, "RS-dTHP"),
    (Strategy::Thp, "dTHP"),
];

fn fig1_points(cfg: &ScenarioConfig) -> Vec<(f64, Vec<PointResult>)> {
    cfg.snr_db
        .iter()
        .map(|&snr| {
            let e = cfg.error_model().error_variance(LinkBudget::from_snr_db(snr, cfg.sigma_n2).etr);
            let pts = FIG1.iter().map(|(s, _)| evaluate(cfg, *s, snr, e).unwrap()).collect();
            (snr, pts)
        })
        .collect()
}

fn fig1_ordering() -> Verdict {
    let cfg = desk_config("");
    let mut pass = true;
    let mut lines = Vec::new();
    for (snr, pts) in fig1_points(&cfg) {
        let mut segs = vec![format!("{snr} dB")];
        for w in 0..pts.len() - 1 {
            let (g, bound) = gap(&pts[w], &pts[w + 1]);
            let ok = g >= -bound;
            pass &= ok;
            segs.push(format!(
                "{}−{} {:+.3} (2se {:.3}){}",
                FIG1[w].1,
                FIG1[w + 1].1,
                g,
                bound,
                if ok { "" } else { " INVERTED" }
            ));
        }
        let esr: Vec<String> = pts.iter().map(|p| format!("{:.3}", p.row.esr)).collect();
        segs.push(format!("ESR [{}]", esr.join(", ")));
        lines.push(segs.join("; "));
    }
    verdict(pass, format!("\n      {}", lines.join("\n      ")))
}

fn fig2_trend() -> Verdict {
    let cfg = desk_config("error_mode=fixed\nsnr_db=20\n");
    let levels = [0.01, 0.03, 0.06, 0.1, 0.2];
    let strategies = [
        (Strategy::Criterion(Criterion::Es), "ES"),
        (Strategy::Criterion(Criterion::Fpa), "FPA"),
        (Strategy::Criterion(Criterion::Fb), "FB"),
        (Strategy::RsThp, "RS-dTHP"),
        (Strategy::MbThp, "MB-dTHP"),
        (Strategy::Thp, "dTHP"),
    ];
    let grid: Vec<Vec<PointResult>> = strategies
        .iter()
        .map(|(s, _)| levels.iter().map(|&e| evaluate(&cfg, *s, 20.0, e).unwrap()).collect())
        .collect();

    let mut pass = true;
    let mut lines = Vec::new();
    for ((_, name), pts) in strategies.iter().zip(&grid) {
        let mut bad = Vec::new();
        for i in 0..pts.len() - 1 {
            let (rise, bound) = gap(&pts[i + 1], &pts[i]);
            if rise > bound {
                bad.push(format!("σ²={} → {} rises {rise:+.3} > 2se {bound:.3}", levels[i], levels[i + 1]));
            }
        }
        pass &= bad.is_empty();
        let esr: Vec<String> = pts.iter().map(|p| format!("{:.3}", p.row.esr)).collect();
        lines.push(format!("{name}: [{}] {}", esr.join(", "), if bad.is_empty() { "nonincreasing".into() } else { bad.join("; ") }));
    }
    let mut gains = Vec::new();
    for (i, e) in levels.iter().enumerate() {
        let (g, bound) = gap(&grid[0][i], &grid[3][i]);
        let ok = g >= -bound;
        pass &= ok;
        gains.push(format!("σ²={e}: {g:+.3} (2se {bound:.3}){}", if ok { "" } else { " NEGATIVE" }));
    }
    lines.push(format!("ES gain over RS-dTHP: {}", gains.join(", ")));
    verdict(pass, format!("\n      {}", lines.join("\n      ")))
}

fn pattern_suite() -> Verdict {
    let mut checked = 0;
    for k in 2..=8usize {
        for l in 1..=k {
            let p = pattern(l, k).unwrap();
            let perm = p.perm();
            if !is_permutation(perm, k) || (0..k).any(|i| perm[perm[i]] != i) {
                return verdict(false, format!("T{l} for K={k} is not an involutory bijection"));
            }
            // blockdiag(I_{l−2}, Π) with Π the (K−l+2)-exchange matrix; T_1 = I.
            let t = ComplexMatrix::from_fn(k, k, |row, col| {
                let one = if l == 1 || row < l - 2 {
                    row == col
                } else {
                    col >= l - 2 && row - (l - 2) + col - (l - 2) == k - l + 1
                };
                C64::new(if one { 1.0 } else { 0.0 }, 0.0)
            });
            let h = ComplexMatrix::from_fn(k, 3, |row, col| C64::new(row as f64, col as f64));
            if t.matmul(&h).unwrap() != permute_rows(&h, perm).unwrap() {
                return verdict(false, format!("T{l} for K={k} does not match the block formula"));
            }
            checked += 1;
        }
        if patterns(k + 1, k).is_ok() || pattern(k + 1, k).is_ok() || patterns(0, k).is_ok() {
            return verdict(false, format!("L outside 1..={k} accepted for K={k}"));
        }
    }
    verdict(true, format!("{checked} patterns for K = 2..8; L > K rejected"))
}

fn csv_bytes(rows: &[SweepRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).unwrap();
    buf
}

fn determinism() -> Verdict {
    let cfg = desk_config("");
    let rows = |threads: Option<usize>| -> (Vec<u8>, Vec<(f64, Vec<PointResult>)>) {
        let pts = RunOptions { threads }.install(|| fig1_points(&cfg)).unwrap();
        let rows: Vec<SweepRow> = pts.iter().flat_map(|(_, p)| p.iter().map(|x| x.row.clone())).collect();
        (csv_bytes(&rows), pts)
    };
    let (first, pts) = rows(None);
    let (second, _) = rows(Some(1));
    let identical = first == second;

    let mut mismatches = 0;
    let mut rerun = 0;
    for (snr, points) in &pts {
        for ((strategy, _), p) in FIG1.iter().zip(points) {
            let setup = point_setup(&cfg, *strategy, *snr, p.row.sigma_e2).unwrap();
            let cal = calibrate(&setup, cfg.master_seed).unwrap();
            if cal != p.calibration {
                mismatches += 1;
            }
            for t in [0u64, 7, 23, 49] {
                let alone = run_trial(&setup, cal.as_ref(), cfg.master_seed, t).unwrap();
                if alone != p.trials[t as usize] {
                    mismatches += 1;
                }
                rerun += 1;
            }
        }
    }
    verdict(
        identical && mismatches == 0,
        format!(
            "repeat run CSV byte-identical: {identical} ({} bytes); {rerun} trials rerun in isolation, {mismatches} mismatches",
            first.len()
        ),
    )
}

fn power_audit() -> Verdict {
    let k = 4;
    let link = LinkBudget::from_snr_db(20.0, 1.0);
    let params = ModuloParams::qpsk();
    let mut parts = Vec::new();
    let mut closure = Vec::new();
    let mut pass = true;
    for scheme in SCHEMES {
        for delta in [0.0, 0.3] {
            let mut r = rng(1010);
            let (mut chain, mut ideal) = (0.0, 0.0);
            let draws = 10_000;
            for _ in 0..draws {
                let real = ChannelRealization::draw(k, k, 0.0, &mut r);
                let split = common_precoder(&real.h_est, delta, link).unwrap();
                let fs = build_thp_filters(&real.h_est, scheme).unwrap();
                let beta = compute_beta(&fs, link.etr, split.pc_norm2()).unwrap();
                let fs = fs.with_beta(beta);
                let s: Vec<C64> = (0..k).map(|_| qpsk(&mut r)).collect();
                let s_c = qpsk(&mut r);
                let (v, _) = thp_encode(&s, &fs.b, params);
                let x = build_transmit_vector(&fs, &v, s_c, &split.p_c).unwrap();
                chain += x.iter().map(|z| z.norm_sqr()).sum::<f64>();
                let x_ideal = build_transmit_vector(&fs, &s, s_c, &split.p_c).unwrap();
                ideal += x_ideal.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
            let ratio = chain / draws as f64 / link.etr;
            pass &= (0.95..=1.05).contains(&ratio);
            parts.push(format!("{scheme} δ={delta}: {ratio:.4}"));
            closure.push(format!("{:.4}", ideal / draws as f64 / link.etr));
        }
    }
    verdict(
        pass,
        format!(
            "10⁴ QPSK draws, K=Nt=4, modulo chain E‖x‖²/Etr: {} (band [0.95, 1.05]); \
             without the modulo (v = s): [{}]",
            parts.join(", "),
            closure.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict, Duration); 10] = [
        ("LQ suite", lq_suite, Duration::from_secs(10)),
        ("THP identity", thp_identity, Duration::from_secs(5)),
        ("perfect-CSIT closed forms", perfect_csit_closed_forms, Duration::from_secs(10)),
        ("small-error consistency", small_error_consistency, Duration::from_secs(60)),
        ("selection dominance", selection_dominance, Duration::from_secs(300)),
        ("ESR ordering over SNR", fig1_ordering, Duration::from_secs(1200)),
        ("ESR trend over error variance", fig2_trend, Duration::from_secs(900)),
        ("pattern suite", pattern_suite, Duration::from_secs(1)),
        ("determinism", determinism, Duration::from_secs(1500)),
        ("power audit", power_audit, Duration::from_secs(30)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.ends_with(&format!(" {f}")) || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = v.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "{id} [{name}]: {} ({:.2} s, budget {} s) {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            v.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
