//! Acceptance suite: one test per headline criterion, each printing a
//! `[PASS]` line with the measured margins (visible with `--nocapture`).
//!
//! Every statistical check uses a fixed seed, so outcomes are deterministic;
//! tolerances are three standard errors unless an identity is exact.

use relaysim::bounds::{
    b1_limit, ceiling_constant, ceiling_fixed_hop1, ceiling_fixed_hop2, optimal_theta,
    rate_loss_bound_first_term, rate_loss_bound_high_snr, scale_bits, EULER_GAMMA,
};
use relaysim::cmatrix::{
    hermitian_eigen, min_eigenvalue_hermitian, sample_gaussian_matrix, sample_haar_columns,
    sample_isotropic_unit, thin_svd, ComplexMatrix, RngStream, C64,
};
use relaysim::precoder::{build_perfect, build_quantized, SystemConfig};
use relaysim::quantizer::{generate_codebook, quantize};
use relaysim::ratesim::{
    monte_carlo_rate, paired_run, sinr_general, sinr_perfect_reduced, sinr_quantized_reduced,
    sum_rate_realization, trial_channels, FeedbackMode,
};
use relaysim::scenario::power_from_db;

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// Criterion 1: scaled feedback bits keep the overall rate loss within budget
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_scaled_bits_control_the_rate_loss() {
    let trials = 20_000;
    let mut worst_margin = f64::NEG_INFINITY;
    for &(m, n) in &[(4usize, 2usize), (4, 4)] {
        let budget = 0.5 * n as f64; // (1/2) log2(2) per user
        for step in 0..=6 {
            let snr_db = 5.0 * step as f64;
            let p = power_from_db(snr_db);
            let plan = scale_bits(m, n, p, p, 2.0, 0.5).unwrap();
            let cfg = SystemConfig::new(m, n, p, p)
                .unwrap()
                .with_bits(plan.b1, plan.b2)
                .with_trials(trials)
                .with_seed(0xC1);
            let pair = paired_run(&cfg, FeedbackMode::Quantized).unwrap();
            let total_loss = n as f64 * pair.loss_per_user.mean;
            let slack = 3.0 * n as f64 * pair.loss_per_user.std_error;
            assert!(
                total_loss <= budget + slack,
                "M={m} N={n} at {snr_db} dB (B1={}, B2={}): overall loss {total_loss:.4} \
                 exceeds {budget} + {slack:.4}",
                plan.b1,
                plan.b2
            );
            worst_margin = worst_margin.max(total_loss - budget);
        }
    }
    println!(
        "[PASS] criterion 1: scaled bits keep N*dR within 1.0 (N=2) and 2.0 (N=4) b/s/Hz \
         over 0-30 dB; worst margin {worst_margin:.4} b/s/Hz"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: the rate-loss bound holds over the bit grid and tightens in B1
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_bound_validity_and_tightening() {
    let (m, n) = (4usize, 2usize);
    let snr = power_from_db(25.0);
    let trials = 4_000;
    let b1_grid: Vec<u32> = (4..=14).collect();
    let b2_grid: Vec<u32> = (2..=10).collect();

    // constant-term estimates, one per B1
    let mut first_terms = Vec::new();
    for &b1 in &b1_grid {
        first_terms.push(rate_loss_bound_first_term(m, n, b1, 10_000, 0xF1).unwrap());
    }

    let mut worst_gap = f64::INFINITY;
    let mut gaps = vec![vec![0.0f64; b2_grid.len()]; b1_grid.len()];
    let mut gap_ses = vec![vec![0.0f64; b2_grid.len()]; b1_grid.len()];
    for (i, &b1) in b1_grid.iter().enumerate() {
        for (j, &b2) in b2_grid.iter().enumerate() {
            let cfg = SystemConfig::new(m, n, snr, snr)
                .unwrap()
                .with_bits(b1, b2)
                .with_trials(trials)
                .with_seed(0xC2);
            let pair = paired_run(&cfg, FeedbackMode::Quantized).unwrap();
            let loss = pair.loss_per_user;

            let first = &first_terms[i];
            let bound = first.bound
                + rate_loss_bound_high_snr(m, n, snr, snr, b1 as f64, b2 as f64);
            let bound_se = 0.5 * first.ratio_std_error
                / ((1.0 + first.ratio_mean) * std::f64::consts::LN_2);
            let se = (loss.std_error.powi(2) + bound_se.powi(2)).sqrt();
            let gap = bound - loss.mean;
            assert!(
                gap >= -3.0 * se,
                "bound violated at B1={b1}, B2={b2}: sim {:.4} vs bound {bound:.4} (se {se:.4})",
                loss.mean
            );
            gaps[i][j] = gap;
            gap_ses[i][j] = se;
            worst_gap = worst_gap.min(gap);
        }
    }

    // the bound tightens along B1 at fixed B2
    for j in 0..b2_grid.len() {
        for i in 1..b1_grid.len() {
            let slack = 3.0 * (gap_ses[i - 1][j].powi(2) + gap_ses[i][j].powi(2)).sqrt();
            assert!(
                gaps[i][j] <= gaps[i - 1][j] + slack,
                "gap widened from B1={} to B1={} at B2={}: {:.4} -> {:.4}",
                b1_grid[i - 1],
                b1_grid[i],
                b2_grid[j],
                gaps[i - 1][j],
                gaps[i][j]
            );
        }
    }
    println!(
        "[PASS] criterion 2: loss bound holds over B1 in 4..14, B2 in 2..10 at 25 dB \
         (min gap {worst_gap:.4} b/s/Hz) and tightens along B1"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: interference-limited ceilings at very high SNR
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_interference_limited_ceilings() {
    let (m, n) = (4usize, 2usize);
    let trials = 20_000;
    let two_over_n = 2.0 / n as f64;
    let snr60 = power_from_db(60.0);

    // finite B2, perfect hop-1 feedback, against the hop-2 ceiling
    for &b2 in &[2u32, 4] {
        let cfg = SystemConfig::new(m, n, snr60, snr60)
            .unwrap()
            .with_bits(0, b2)
            .with_trials(trials)
            .with_seed(0xC3);
        let est = monte_carlo_rate(&cfg, FeedbackMode::QuantizedHop2Only).unwrap();
        let ceiling = ceiling_fixed_hop2(m, n, b2).unwrap().value;
        let scaled = two_over_n * est.mean;
        let slack = 3.0 * two_over_n * est.std_error;
        assert!(
            scaled <= ceiling + slack,
            "B2={b2}: (2/N) R_Q {scaled:.4} exceeds ceiling {ceiling:.4}"
        );
    }

    // finite B1, perfect hop-2 feedback, against the hop-1 ceiling
    for &b1 in &[6u32, 9] {
        let cfg = SystemConfig::new(m, n, snr60, snr60)
            .unwrap()
            .with_bits(b1, 0)
            .with_trials(trials)
            .with_seed(0xC3);
        let est = monte_carlo_rate(&cfg, FeedbackMode::QuantizedHop1Only).unwrap();
        let ceiling = ceiling_fixed_hop1(m, n, b1).unwrap().value;
        let scaled = two_over_n * est.mean;
        let slack = 3.0 * two_over_n * est.std_error;
        assert!(
            scaled <= ceiling + slack,
            "B1={b1}: (2/N) R_Q {scaled:.4} exceeds ceiling {ceiling:.4}"
        );
    }

    // with both hops fixed, the rate sits under the smaller of the two
    // single-hop ceilings
    {
        let (b1, b2) = (9u32, 4u32);
        let cfg = SystemConfig::new(m, n, snr60, snr60)
            .unwrap()
            .with_bits(b1, b2)
            .with_trials(trials)
            .with_seed(0xC3);
        let est = monte_carlo_rate(&cfg, FeedbackMode::Quantized).unwrap();
        let ceiling = ceiling_fixed_hop1(m, n, b1)
            .unwrap()
            .value
            .min(ceiling_fixed_hop2(m, n, b2).unwrap().value);
        let scaled = two_over_n * est.mean;
        assert!(
            scaled <= ceiling + 3.0 * two_over_n * est.std_error,
            "B1={b1}, B2={b2}: (2/N) R_Q {scaled:.4} exceeds min ceiling {ceiling:.4}"
        );
    }

    // monotone, flattening growth from 30 to 60 dB for every tested config
    let cases: Vec<(FeedbackMode, u32, u32, &str)> = vec![
        (FeedbackMode::QuantizedHop2Only, 0, 2, "B2=2"),
        (FeedbackMode::QuantizedHop2Only, 0, 4, "B2=4"),
        (FeedbackMode::QuantizedHop1Only, 6, 0, "B1=6"),
        (FeedbackMode::QuantizedHop1Only, 9, 0, "B1=9"),
        (FeedbackMode::Quantized, 9, 4, "B1=9,B2=4"),
    ];
    for (mode, b1, b2, label) in cases {
        let mut estimates = Vec::new();
        for &snr_db in &[30.0, 40.0, 50.0, 60.0] {
            let p = power_from_db(snr_db);
            let cfg = SystemConfig::new(m, n, p, p)
                .unwrap()
                .with_bits(b1, b2)
                .with_trials(trials)
                .with_seed(0xC3);
            estimates.push(monte_carlo_rate(&cfg, mode).unwrap());
        }
        for w in estimates.windows(2) {
            let slack = 3.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
            assert!(
                w[1].mean >= w[0].mean - slack,
                "{label}: rate decreased: {} -> {}",
                w[0].mean,
                w[1].mean
            );
        }
        let first_step = estimates[1].mean - estimates[0].mean;
        let last_step = estimates[3].mean - estimates[2].mean;
        let slack = 3.0
            * estimates
                .iter()
                .map(|e| e.std_error.powi(2))
                .sum::<f64>()
                .sqrt();
        assert!(
            last_step <= first_step + slack,
            "{label}: growth is not flattening: first step {first_step:.4}, last {last_step:.4}"
        );
    }
    println!(
        "[PASS] criterion 3: (2/N) R_Q at 60 dB sits under the fixed-bit ceilings for \
         B2 in {{2,4}} and B1 in {{6,9}}, with flattening growth over 30-60 dB"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: exact closed-form identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_closed_form_identities() {
    // (a) scaling-law closure for 100 random parameter tuples
    let mut rng = RngStream::new(0xC4, 0);
    for _ in 0..100 {
        let m = 2 + (rng.next_u64() % 5) as usize; // 2..=6
        let n = 2 + (rng.next_u64() % (m as u64 - 1)) as usize; // 2..=m
        let p1 = 10f64.powf(rng.next_f64() * 5.0 - 1.0);
        let p2 = 10f64.powf(rng.next_f64() * 5.0 - 1.0);
        let b = 1.0 + 10f64.powf(rng.next_f64() * 3.0 - 2.0);
        let theta = 0.02 + 0.96 * rng.next_f64();
        let plan = scale_bits(m, n, p1, p2, b, theta).unwrap();
        let bound = rate_loss_bound_high_snr(m, n, p1, p2, plan.b1_exact, plan.b2_exact);
        assert!(
            (bound - 0.5 * b.log2()).abs() <= 1e-9,
            "closure failed at M={m} N={n} P1={p1} P2={p2} b={b} theta={theta}: {bound}"
        );
    }

    // (b) theta* against a 10^4-point grid argmax of theta^(M-1)(1-theta)^(N-1)
    let points = 10_000usize;
    for m in 2..=6usize {
        for n in 2..=m {
            let star = optimal_theta(m, n);
            let mut best = (0.0f64, f64::NEG_INFINITY);
            for i in 1..points {
                let t = i as f64 / points as f64;
                let v = t.powi(m as i32 - 1) * (1.0 - t).powi(n as i32 - 1);
                if v > best.1 {
                    best = (t, v);
                }
            }
            assert!(
                (best.0 - star).abs() <= 1.0 / points as f64 + 1e-12,
                "grid argmax {} vs theta* {star} for M={m}, N={n}",
                best.0
            );
            // unique interior maximum: the objective falls away on each side
            let h = 1.0 / points as f64;
            let left = (star - h).powi(m as i32 - 1) * (1.0 - star + h).powi(n as i32 - 1);
            let right = (star + h).powi(m as i32 - 1) * (1.0 - star - h).powi(n as i32 - 1);
            let at_star = star.powi(m as i32 - 1) * (1.0 - star).powi(n as i32 - 1);
            assert!(at_star >= left && at_star >= right, "not a local max");
        }
    }

    // (c) the high-BS-power limit of the scaled B1
    let limit = b1_limit(4, 2, 100.0, 2.0);
    let plan = scale_bits(4, 2, 1e12, 100.0, 2.0, 0.5).unwrap();
    assert!(
        (limit - plan.b1_exact).abs() <= 1e-6,
        "limit {limit} vs scale_bits at P1=1e12 {}",
        plan.b1_exact
    );

    // (d) the ceiling constant for M=4, N=2 against the digamma identity
    // c = 1 - log2(e) (5/3 - gamma), since psi(4) + psi(3) = 10/3 - 2 gamma
    let c = ceiling_constant(4, 2).unwrap();
    let oracle = 1.0 - std::f64::consts::LOG2_E * (5.0 / 3.0 - EULER_GAMMA);
    assert!(
        (c - oracle).abs() <= 1e-9,
        "c(4,2) = {c} vs digamma oracle {oracle}"
    );

    println!(
        "[PASS] criterion 4: closure identity on 100 random tuples, theta* grid argmax for \
         2<=N<=M<=6, the large-P1 bit limit, and c(4,2) = {c:.6} all match"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: quantization statistics
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_quantization_statistics() {
    let started = std::time::Instant::now();
    let samples = 100_000usize;
    let (m, n) = (4usize, 2usize);

    // cross-moment of a quantization against an orthogonal direction:
    // E |v_i^H vhat_j|^2 = mean(eps) / (M - 1)
    {
        let mut rng = RngStream::new(0xC5, 1);
        let bits = 4;
        let mut cross = Vec::with_capacity(samples);
        let mut eps = Vec::with_capacity(samples);
        for _ in 0..samples {
            let pair = sample_haar_columns(m, 2, &mut rng);
            let v_i = pair.column(0);
            let v_j = pair.column(1);
            let cb = generate_codebook(m, bits, &mut rng).unwrap();
            let q = quantize(&v_j, &cb).unwrap();
            eps.push(q.error);
            cross.push(relaysim::cmatrix::inner_abs_sq(&v_i, &q.codeword));
        }
        let (eps_mean, _) = mean_and_se(&eps);
        let (cross_mean, cross_se) = mean_and_se(&cross);
        let predicted = eps_mean / (m as f64 - 1.0);
        assert!(
            (cross_mean - predicted).abs() <= 3.0 * cross_se,
            "cross moment {cross_mean} vs eps/(M-1) = {predicted} (se {cross_se})"
        );
    }

    // mean of V^H Vhat Vhat^H V over Haar V with independently quantized
    // columns: (1 - (M-N)/(M-1) mean(eps)) I_N
    {
        let mut rng = RngStream::new(0xC5, 2);
        let bits = 6;
        let mut eps = Vec::with_capacity(samples * n);
        let mut diag = vec![Vec::with_capacity(samples); n];
        let mut off_re = Vec::with_capacity(samples);
        let mut off_im = Vec::with_capacity(samples);
        for _ in 0..samples {
            let v = sample_haar_columns(m, n, &mut rng);
            let mut cols = Vec::with_capacity(n);
            for k in 0..n {
                let cb = generate_codebook(m, bits, &mut rng).unwrap();
                let q = quantize(&v.column(k), &cb).unwrap();
                eps.push(q.error);
                cols.push(q.codeword);
            }
            let vhat = ComplexMatrix::from_columns(&cols);
            let cross = v.hermitian().mul(&vhat);
            let t = cross.mul(&cross.hermitian()); // V^H Vhat Vhat^H V
            for (k, d) in diag.iter_mut().enumerate() {
                d.push(t.get(k, k).re);
            }
            off_re.push(t.get(0, 1).re);
            off_im.push(t.get(0, 1).im);
        }
        let (eps_mean, _) = mean_and_se(&eps);
        let predicted = 1.0 - (m as f64 - n as f64) / (m as f64 - 1.0) * eps_mean;
        for (k, d) in diag.iter().enumerate() {
            let (d_mean, d_se) = mean_and_se(d);
            assert!(
                (d_mean - predicted).abs() <= 3.0 * d_se,
                "diagonal {k}: {d_mean} vs {predicted} (se {d_se})"
            );
        }
        let (re_mean, re_se) = mean_and_se(&off_re);
        let (im_mean, im_se) = mean_and_se(&off_im);
        assert!(re_mean.abs() <= 3.0 * re_se, "off-diagonal real part {re_mean}");
        assert!(im_mean.abs() <= 3.0 * im_se, "off-diagonal imag part {im_mean}");
    }

    // spectral identity: the nonzero eigenvalues of v v^H - vhat vhat^H are
    // +/- sqrt(eps), and sqrt(eps) I - B is positive semidefinite
    {
        let mut rng = RngStream::new(0xC5, 3);
        for _ in 0..200 {
            let v = sample_isotropic_unit(m, &mut rng);
            let cb = generate_codebook(m, 3, &mut rng).unwrap();
            let q = quantize(&v, &cb).unwrap();
            let b_matrix = ComplexMatrix::from_fn(m, m, |i, j| {
                v[i] * v[j].conj() - q.codeword[i] * q.codeword[j].conj()
            });
            let eig = hermitian_eigen(&b_matrix).unwrap();
            let root = q.error.sqrt();
            assert!((eig.values[0] - root).abs() <= 1e-9, "top eigenvalue");
            assert!((eig.values[m - 1] + root).abs() <= 1e-9, "bottom eigenvalue");
            for &middle in &eig.values[1..m - 1] {
                assert!(middle.abs() <= 1e-9, "middle eigenvalues vanish");
            }
            let shifted = ComplexMatrix::from_fn(m, m, |i, j| {
                let delta = if i == j { C64::new(root, 0.0) } else { C64::new(0.0, 0.0) };
                delta - b_matrix.get(i, j)
            });
            let min = min_eigenvalue_hermitian(&shifted).unwrap();
            assert!(min >= -1e-9, "sqrt(eps) I - B should be PSD, min eig {min}");
        }
    }

    // beam gains through the quantized zero-forcing stage:
    // E |g_k^H fhat_k|^2 = 1 and E |g_k^H fhat_j|^2 = (N/(N-1)) mean(tau)
    {
        let bits = 4;
        let cfg = SystemConfig::new(m, n, 10.0, 10.0).unwrap().with_bits(0, bits);
        let mut own = Vec::with_capacity(samples);
        let mut other = Vec::with_capacity(samples);
        let mut tau = Vec::with_capacity(samples);
        let mut skipped = 0usize;
        for trial in 0..samples as u64 {
            let (h, g) = trial_channels(&cfg, trial, 0);
            let rng = RngStream::new(0xC5, 4_000_000 + trial);
            let ps = match build_quantized(&h, &g, &cfg, &rng) {
                Ok(ps) => ps,
                Err(e) if e.is_discardable() => {
                    skipped += 1;
                    continue;
                }
                Err(e) => panic!("{e}"),
            };
            let meta = ps.quant.as_ref().unwrap();
            tau.extend_from_slice(&meta.g_errors);
            for k in 0..n {
                let row = g.row(k);
                let dot = |col: Vec<C64>| -> f64 {
                    row.iter()
                        .zip(&col)
                        .map(|(a, b)| a * b)
                        .sum::<C64>()
                        .norm_sqr()
                };
                own.push(dot(ps.f1.column(k)));
                other.push(dot(ps.f1.column((k + 1) % n)));
            }
        }
        assert!(skipped < samples / 100, "too many discards: {skipped}");
        let (own_mean, own_se) = mean_and_se(&own);
        assert!(
            (own_mean - 1.0).abs() <= 3.0 * own_se,
            "own-beam gain {own_mean} vs 1 (se {own_se})"
        );
        let (tau_mean, _) = mean_and_se(&tau);
        let (other_mean, other_se) = mean_and_se(&other);
        let predicted = n as f64 / (n as f64 - 1.0) * tau_mean;
        assert!(
            (other_mean - predicted).abs() <= 3.0 * other_se,
            "cross-beam gain {other_mean} vs (N/(N-1)) tau = {predicted} (se {other_se})"
        );
    }

    // log-eigenvalue moment of the first-hop channel:
    // E[(1/N) sum log2 sigma_j^2] = (log2 e / N) (psi(4) + psi(3))
    {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for trial in 0..samples as u64 {
            let mut rng = RngStream::new(0xC5, 5_000_000 + trial);
            let h = sample_gaussian_matrix(n, m, &mut rng);
            let svd = thin_svd(&h).unwrap();
            let x = svd
                .sigma
                .iter()
                .map(|s| (s * s).log2())
                .sum::<f64>()
                / n as f64;
            sum += x;
            sum_sq += x * x;
        }
        let count = samples as f64;
        let mean = sum / count;
        let se = (((sum_sq / count - mean * mean) / count).max(0.0)).sqrt();
        let psi_sum = (11.0 / 6.0 - EULER_GAMMA) + (1.5 - EULER_GAMMA);
        let predicted = std::f64::consts::LOG2_E / n as f64 * psi_sum;
        assert!(
            (mean - predicted).abs() <= 3.0 * se,
            "log-eigenvalue moment {mean} vs {predicted} (se {se})"
        );
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 120,
        "quantization statistics took {elapsed:?}, budget is two minutes"
    );
    println!(
        "[PASS] criterion 5: quantization moment, projection mean, spectral identity, \
         beam-gain means, and log-eigenvalue moment all within 3 SE ({} samples, {:.1?})",
        samples, elapsed
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: structural invariants
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_structural_invariants() {
    let (m, n) = (4usize, 2usize);

    // SVD unitarity and reconstruction on random inputs
    {
        let mut rng = RngStream::new(0xC6, 0);
        for _ in 0..100 {
            let h = sample_gaussian_matrix(n, m, &mut rng);
            let svd = thin_svd(&h).unwrap();
            let id = ComplexMatrix::identity(n);
            let u_dev = svd.u.hermitian().mul(&svd.u).sub(&id).max_abs_entry();
            let v_dev = svd.v.hermitian().mul(&svd.v).sub(&id).max_abs_entry();
            assert!(u_dev <= 1e-10 && v_dev <= 1e-10, "unitarity {u_dev} {v_dev}");
            let rec = svd
                .u
                .mul(&ComplexMatrix::from_diagonal(&svd.sigma))
                .mul(&svd.v.hermitian());
            assert!(rec.sub(&h).frobenius_norm() <= 1e-9 * h.frobenius_norm());
        }
    }

    // zero-forcing nulls the quantized channel directions
    {
        let cfg = SystemConfig::new(m, n, 10.0, 10.0).unwrap().with_bits(4, 4);
        for trial in 0..50u64 {
            let (h, g) = trial_channels(&cfg, trial, 0);
            let rng = RngStream::new(0xC6, 100 + trial);
            let ps = build_quantized(&h, &g, &cfg, &rng).unwrap();
            let meta = ps.quant.as_ref().unwrap();
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let leak = relaysim::cmatrix::inner(&meta.g_quantized[i], &ps.f1.column(j))
                        .norm();
                    assert!(leak <= 1e-8, "ZF leak {leak} at ({i},{j})");
                }
            }
        }
    }

    // the general SINR matches both reduced forms to 1e-9 relative
    {
        let cfg = SystemConfig::new(m, n, 31.6, 31.6).unwrap().with_bits(5, 5);
        for trial in 0..50u64 {
            let (h, g) = trial_channels(&cfg, trial, 0);
            let perfect = build_perfect(&h, &g, &cfg).unwrap();
            let rng = RngStream::new(0xC6, 200 + trial);
            let quantized = build_quantized(&h, &g, &cfg, &rng).unwrap();
            for k in 0..n {
                let gp = sinr_general(k, &h, &g, &perfect);
                let rp = sinr_perfect_reduced(k, &g, &perfect);
                assert!((gp - rp).abs() <= 1e-9 * rp.abs(), "perfect reduction");
                let gq = sinr_general(k, &h, &g, &quantized);
                let rq = sinr_quantized_reduced(k, &g, &quantized);
                assert!((gq - rq).abs() <= 1e-9 * rq.abs(), "quantized reduction");
            }
        }
    }

    // average relay transmit power hits the constraint within 1%
    {
        let cfg = SystemConfig::new(m, n, 10.0, 10.0).unwrap();
        let trials = 100_000u64;
        let mut sum = 0.0;
        for trial in 0..trials {
            let (h, g) = trial_channels(&cfg, trial, 0);
            let ps = match build_perfect(&h, &g, &cfg) {
                Ok(ps) => ps,
                Err(e) if e.is_discardable() => continue,
                Err(e) => panic!("{e}"),
            };
            let through = ps.f.mul(&h.mul(&ps.w));
            let signal_power = through.frobenius_norm().powi(2);
            let noise_power = ps.f.frobenius_norm().powi(2);
            sum += ps.rho2 * (ps.rho1 * signal_power + noise_power);
        }
        let mean = sum / trials as f64;
        assert!(
            (mean - cfg.relay_power).abs() <= 0.01 * cfg.relay_power,
            "average relay power {mean} vs constraint {}",
            cfg.relay_power
        );
    }

    // zero-error codebooks produce exactly zero loss
    {
        let cfg = SystemConfig::new(m, n, 10.0, 10.0)
            .unwrap()
            .with_bits(8, 8)
            .with_trials(500)
            .with_seed(0xC6);
        let pair = paired_run(&cfg, FeedbackMode::ZeroError).unwrap();
        assert_eq!(pair.loss_per_user.mean, 0.0, "zero-error loss mean");
        assert_eq!(pair.loss_per_user.std_error, 0.0, "zero-error loss spread");
    }

    // bit-identical estimates across thread counts
    {
        let cfg = SystemConfig::new(m, n, 31.6, 31.6)
            .unwrap()
            .with_bits(6, 6)
            .with_trials(2_000)
            .with_seed(0xC6);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| paired_run(&cfg, FeedbackMode::Quantized))
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| paired_run(&cfg, FeedbackMode::Quantized))
            .unwrap();
        assert_eq!(
            single.quantized.mean.to_bits(),
            many.quantized.mean.to_bits(),
            "thread-count determinism (mean)"
        );
        assert_eq!(
            single.loss_per_user.std_error.to_bits(),
            many.loss_per_user.std_error.to_bits(),
            "thread-count determinism (spread)"
        );
    }

    // single-realization sanity: sum rate matches its definition
    {
        let cfg = SystemConfig::new(m, n, 10.0, 10.0).unwrap();
        let (h, g) = trial_channels(&cfg, 0, 0);
        let ps = build_perfect(&h, &g, &cfg).unwrap();
        let by_hand: f64 = (0..n)
            .map(|k| (1.0 + sinr_general(k, &h, &g, &ps)).log2())
            .sum::<f64>()
            * 0.5;
        assert_eq!(by_hand, sum_rate_realization(&h, &g, &ps));
    }

    println!(
        "[PASS] criterion 6: SVD contracts, ZF nulling, SINR reductions, the average \
         relay power constraint, exact zero-error loss, and thread-count determinism hold"
    );
}
