//! Per-realization SINR evaluation and Monte Carlo estimation of ergodic sum
//! rates and rate loss.
//!
//! Trials are embarrassingly parallel: trial `i` owns the stream
//! `(seed, i)` and all of its substreams (channel draws, codebooks, redraw
//! attempts), and partial results reduce in trial order, so estimates are
//! bit-identical across runs and thread counts. The perfect-CSI and
//! quantized-CSI pipelines consume identical channel draws, which makes the
//! paired rate-loss estimator exact at zero quantization error.

use rayon::prelude::*;

use crate::cmatrix::{sample_gaussian_matrix, ComplexMatrix, RngStream, C64};
use crate::precoder::{
    build_with_quantizers, PrecodingSet, SystemConfig, TAG_HOP1_CODEBOOKS, TAG_HOP2_CODEBOOKS,
};
use crate::quantizer::{CsiQuantizer, PerfectQuantizer, RvqQuantizer};
use crate::{SimError, SimResult};

/// Substream tag for the first-hop channel draw of a trial.
pub const TAG_CHANNEL_H: u64 = 0;
/// Substream tag for the second-hop channel draw of a trial.
pub const TAG_CHANNEL_G: u64 = 1;

/// Redraw budget per trial before a degenerate configuration is reported as
/// a hard numerical failure.
const MAX_REDRAWS: u64 = 10_000;

// ---------------------------------------------------------------------------
// SINR and sum rate
// ---------------------------------------------------------------------------

/// `g_k^H x` where `row` holds the entries of `g_k^H` (a row of G).
#[inline]
fn row_dot(row: &[C64], x: &[C64]) -> C64 {
    row.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// `g_k^H A` as a vector of length `A.cols()`.
fn row_times_matrix(row: &[C64], a: &ComplexMatrix) -> Vec<C64> {
    (0..a.cols())
        .map(|j| (0..a.rows()).map(|i| row[i] * a.get(i, j)).sum())
        .collect()
}

/// SINR of every user from the general expression
///
/// `gamma_k = |g_k^H F H w_k|^2 /
///            (sum_{j != k} |g_k^H F H w_j|^2 + (1/rho1)||g_k^H F||^2 + 1/(rho1 rho2))`
pub fn sinr_all_general(h: &ComplexMatrix, g: &ComplexMatrix, ps: &PrecodingSet) -> Vec<f64> {
    let n = g.rows();
    let cascade = ps.f.mul(&h.mul(&ps.w)); // F H W, N x N
    (0..n)
        .map(|k| {
            let row = g.row(k);
            let beams = row_times_matrix(row, &cascade);
            let signal = beams[k].norm_sqr();
            let interference: f64 = beams
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, z)| z.norm_sqr())
                .sum();
            let relay_noise: f64 = row_times_matrix(row, &ps.f)
                .iter()
                .map(|z| z.norm_sqr())
                .sum();
            signal / (interference + relay_noise / ps.rho1 + 1.0 / (ps.rho1 * ps.rho2))
        })
        .collect()
}

/// General-expression SINR of one user.
pub fn sinr_general(k: usize, h: &ComplexMatrix, g: &ComplexMatrix, ps: &PrecodingSet) -> f64 {
    sinr_all_general(h, g, ps)[k]
}

/// Perfect-CSI closed form: with the cascade diagonalized the SINR reduces to
/// `sigma_k^2 |g_k^H f_k|^2 / ((1/rho1)|g_k^H f_k|^2 + 1/(rho1 rho2))`.
pub fn sinr_perfect_reduced(k: usize, g: &ComplexMatrix, ps: &PrecodingSet) -> f64 {
    let gain = row_dot(g.row(k), &ps.f1.column(k)).norm_sqr();
    let sig = ps.sigma[k] * ps.sigma[k] * gain;
    sig / (gain / ps.rho1 + 1.0 / (ps.rho1 * ps.rho2))
}

/// Quantized-CSI reduced form, evaluated through the SVD factors instead of
/// the raw channel:
/// `|g_k^H Fhat S V^H vhat_k|^2` over the matching interference-plus-noise.
pub fn sinr_quantized_reduced(k: usize, g: &ComplexMatrix, ps: &PrecodingSet) -> f64 {
    let row = g.row(k);
    let through_zf = row_times_matrix(row, &ps.f1); // g_k^H Fhat
    let weighted: Vec<C64> = through_zf
        .iter()
        .zip(&ps.sigma)
        .map(|(z, s)| z * *s)
        .collect();
    let cross = ps.v.hermitian().mul(&ps.w); // V^H Vhat, N x N
    let beams = row_times_matrix(&weighted, &cross);
    let signal = beams[k].norm_sqr();
    let interference: f64 = beams
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, z)| z.norm_sqr())
        .sum();
    let relay_noise: f64 = through_zf.iter().map(|z| z.norm_sqr()).sum();
    signal / (interference + relay_noise / ps.rho1 + 1.0 / (ps.rho1 * ps.rho2))
}

/// Instantaneous sum rate `(1/2) sum_k log2(1 + gamma_k)` in b/s/Hz; the 1/2
/// accounts for the two transmission slots.
pub fn sum_rate_realization(h: &ComplexMatrix, g: &ComplexMatrix, ps: &PrecodingSet) -> f64 {
    sinr_all_general(h, g, ps)
        .iter()
        .map(|&snr| (1.0 + snr).log2())
        .sum::<f64>()
        * 0.5
}

// ---------------------------------------------------------------------------
// Monte Carlo estimation
// ---------------------------------------------------------------------------

/// Which CSI reaches the transmitters in a simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackMode {
    /// Perfect CSI at both transmitters.
    Perfect,
    /// Both hops quantized with the configured bit counts.
    Quantized,
    /// Hop 1 quantized, hop 2 fed back perfectly (fixed-B1 ceiling studies).
    QuantizedHop1Only,
    /// Hop 2 quantized, hop 1 fed back perfectly (fixed-B2 ceiling studies).
    QuantizedHop2Only,
    /// Diagnostic: the quantized pipeline with zero-error codebooks; must
    /// reproduce `Perfect` exactly.
    ZeroError,
}

impl FeedbackMode {
    fn is_quantized(self) -> bool {
        !matches!(self, FeedbackMode::Perfect)
    }
}

/// Monte Carlo mean with its standard error and the discard tally.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    /// Sample mean, b/s/Hz.
    pub mean: f64,
    /// Standard error of the mean: sample std / sqrt(trials).
    pub std_error: f64,
    pub trials: usize,
    /// Degenerate draws that were replaced by fresh ones.
    pub discards: usize,
}

impl RateEstimate {
    fn from_samples(samples: &[f64], discards: usize) -> RateEstimate {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        RateEstimate {
            mean,
            std_error,
            trials: n,
            discards,
        }
    }

    /// Fraction of draws that had to be replaced.
    pub fn discard_ratio(&self) -> f64 {
        self.discards as f64 / (self.trials + self.discards).max(1) as f64
    }

    /// True when the discard ratio exceeds the 1% reporting threshold.
    pub fn excessive_discards(&self) -> bool {
        self.discard_ratio() > 0.01
    }
}

/// Perfect and quantized estimates from one paired run, plus the per-user
/// rate loss `(R_P - R_Q)/N` estimated sample-by-sample on the shared draws.
#[derive(Debug, Clone)]
pub struct PairedRates {
    pub perfect: RateEstimate,
    pub quantized: RateEstimate,
    pub loss_per_user: RateEstimate,
}

/// Deterministic channel pair for one trial and redraw attempt.
pub fn trial_channels(
    cfg: &SystemConfig,
    trial: u64,
    attempt: u64,
) -> (ComplexMatrix, ComplexMatrix) {
    let base = RngStream::new(cfg.seed, trial).substream(attempt);
    let mut h_rng = base.substream(TAG_CHANNEL_H);
    let mut g_rng = base.substream(TAG_CHANNEL_G);
    let h = sample_gaussian_matrix(cfg.relay_antennas, cfg.bs_antennas, &mut h_rng);
    let g = sample_gaussian_matrix(cfg.relay_antennas, cfg.relay_antennas, &mut g_rng);
    (h, g)
}

fn build_for_mode(
    h: &ComplexMatrix,
    g: &ComplexMatrix,
    cfg: &SystemConfig,
    mode: FeedbackMode,
    base: &RngStream,
) -> SimResult<PrecodingSet> {
    let mut rvq_hop1 = RvqQuantizer::new(base.substream(TAG_HOP1_CODEBOOKS));
    let mut rvq_hop2 = RvqQuantizer::new(base.substream(TAG_HOP2_CODEBOOKS));
    let mut perfect_hop1 = PerfectQuantizer;
    let mut perfect_hop2 = PerfectQuantizer;
    let (hop1, hop2): (&mut dyn CsiQuantizer, &mut dyn CsiQuantizer) = match mode {
        FeedbackMode::Perfect | FeedbackMode::ZeroError => {
            (&mut perfect_hop1, &mut perfect_hop2)
        }
        FeedbackMode::Quantized => (&mut rvq_hop1, &mut rvq_hop2),
        FeedbackMode::QuantizedHop1Only => (&mut rvq_hop1, &mut perfect_hop2),
        FeedbackMode::QuantizedHop2Only => (&mut perfect_hop1, &mut rvq_hop2),
    };
    build_with_quantizers(h, g, cfg, hop1, hop2)
}

struct TrialOutcome {
    perfect: f64,
    quantized: f64,
    discards: usize,
}

/// One paired trial: both pipelines on the same accepted channel draw.
/// Degenerate draws (singular channels in either pipeline) are replaced by
/// fresh ones from the trial's own attempt substreams.
fn run_paired_trial(cfg: &SystemConfig, mode: FeedbackMode, trial: u64) -> SimResult<TrialOutcome> {
    let trial_stream = RngStream::new(cfg.seed, trial);
    let mut discards = 0usize;
    for attempt in 0..MAX_REDRAWS {
        let (h, g) = trial_channels(cfg, trial, attempt);
        let base = trial_stream.substream(attempt);

        let perfect = match build_for_mode(&h, &g, cfg, FeedbackMode::Perfect, &base) {
            Ok(ps) => ps,
            Err(e) if e.is_discardable() => {
                discards += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let quantized = if mode.is_quantized() {
            match build_for_mode(&h, &g, cfg, mode, &base) {
                Ok(ps) => Some(ps),
                Err(e) if e.is_discardable() => {
                    discards += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let perfect_rate = sum_rate_realization(&h, &g, &perfect);
        let quantized_rate = quantized
            .map(|ps| sum_rate_realization(&h, &g, &ps))
            .unwrap_or(perfect_rate);
        return Ok(TrialOutcome {
            perfect: perfect_rate,
            quantized: quantized_rate,
            discards,
        });
    }
    Err(SimError::Numerical(format!(
        "trial {trial} exhausted its redraw budget of {MAX_REDRAWS}"
    )))
}

/// Paired Monte Carlo run: perfect and mode-specific quantized rates on the
/// same channel draws, reduced in trial order.
pub fn paired_run(cfg: &SystemConfig, mode: FeedbackMode) -> SimResult<PairedRates> {
    cfg.validate()?;
    if cfg.trials < 1 {
        return Err(SimError::Config("trials must be >= 1".into()));
    }
    let outcomes: Vec<SimResult<TrialOutcome>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| run_paired_trial(cfg, mode, trial))
        .collect();

    let users = cfg.users() as f64;
    let mut perfect = Vec::with_capacity(cfg.trials);
    let mut quantized = Vec::with_capacity(cfg.trials);
    let mut loss = Vec::with_capacity(cfg.trials);
    let mut discards = 0usize;
    for outcome in outcomes {
        let o = outcome?;
        perfect.push(o.perfect);
        quantized.push(o.quantized);
        loss.push((o.perfect - o.quantized) / users);
        discards += o.discards;
    }
    Ok(PairedRates {
        perfect: RateEstimate::from_samples(&perfect, discards),
        quantized: RateEstimate::from_samples(&quantized, discards),
        loss_per_user: RateEstimate::from_samples(&loss, discards),
    })
}

/// Ergodic sum-rate estimate for one feedback mode.
pub fn monte_carlo_rate(cfg: &SystemConfig, mode: FeedbackMode) -> SimResult<RateEstimate> {
    let pair = paired_run(cfg, mode)?;
    Ok(match mode {
        FeedbackMode::Perfect => pair.perfect,
        _ => pair.quantized,
    })
}

/// Paired estimate of the per-user rate loss `(R_P - R_Q)/N` with both hops
/// quantized at the configured bit counts.
pub fn rate_loss(cfg: &SystemConfig) -> SimResult<RateEstimate> {
    Ok(paired_run(cfg, FeedbackMode::Quantized)?.loss_per_user)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoder::{build_perfect, build_quantized};

    fn cfg(m: usize, n: usize, p1: f64, p2: f64) -> SystemConfig {
        SystemConfig::new(m, n, p1, p2).unwrap()
    }

    #[test]
    fn reduced_forms_match_general_expression() {
        let c = cfg(4, 2, 10.0, 10.0).with_bits(5, 4);
        for seed in 0..20u64 {
            let c = c.clone().with_seed(1000 + seed);
            let (h, g) = trial_channels(&c, 0, 0);

            let perfect = build_perfect(&h, &g, &c).unwrap();
            for k in 0..2 {
                let general = sinr_general(k, &h, &g, &perfect);
                let reduced = sinr_perfect_reduced(k, &g, &perfect);
                let rel = (general - reduced).abs() / reduced.abs().max(1e-300);
                assert!(
                    rel <= 1e-9,
                    "perfect reduction mismatch: {general} vs {reduced} (rel {rel:.2e})"
                );
            }

            let rng = RngStream::new(c.seed, 7);
            let quantized = build_quantized(&h, &g, &c, &rng).unwrap();
            for k in 0..2 {
                let general = sinr_general(k, &h, &g, &quantized);
                let reduced = sinr_quantized_reduced(k, &g, &quantized);
                let rel = (general - reduced).abs() / reduced.abs().max(1e-300);
                assert!(
                    rel <= 1e-9,
                    "quantized reduction mismatch: {general} vs {reduced} (rel {rel:.2e})"
                );
            }
        }
    }

    #[test]
    fn noise_free_limit_grows_unbounded() {
        let base = cfg(4, 2, 10.0, 10.0);
        let (h, g) = trial_channels(&base, 0, 0);
        let modest = build_perfect(&h, &g, &base).unwrap();
        let loud_cfg = cfg(4, 2, 1e12, 1e12);
        let loud = build_perfect(&h, &g, &loud_cfg).unwrap();
        for k in 0..2 {
            let lo = sinr_general(k, &h, &g, &modest);
            let hi = sinr_general(k, &h, &g, &loud);
            assert!(hi > lo * 1e6, "SINR must blow up without noise: {lo} -> {hi}");
        }
    }

    #[test]
    fn sum_rate_arithmetic() {
        // all gamma_k = 1 over N = 2 streams gives (1/2) * 2 * log2(2) = 1,
        // and zero SINR contributes nothing
        let rates: f64 = [1.0f64, 1.0].iter().map(|&snr| (1.0 + snr).log2()).sum();
        assert_eq!(0.5 * rates, 1.0);
        let zeros: f64 = [0.0f64, 0.0].iter().map(|&snr| (1.0 + snr).log2()).sum();
        assert_eq!(0.5 * zeros, 0.0);
    }

    #[test]
    fn zero_error_mode_equals_perfect_exactly() {
        let c = cfg(4, 2, 10.0, 10.0).with_bits(6, 6).with_trials(50).with_seed(3);
        let pair = paired_run(&c, FeedbackMode::ZeroError).unwrap();
        assert_eq!(pair.perfect.mean.to_bits(), pair.quantized.mean.to_bits());
        assert_eq!(pair.loss_per_user.mean, 0.0);
        assert_eq!(pair.loss_per_user.std_error, 0.0);
    }

    #[test]
    fn single_trial_equals_direct_evaluation() {
        let c = cfg(4, 2, 10.0, 10.0).with_trials(1).with_seed(11);
        let est = monte_carlo_rate(&c, FeedbackMode::Perfect).unwrap();
        let (h, g) = trial_channels(&c, 0, 0);
        let ps = build_perfect(&h, &g, &c).unwrap();
        assert_eq!(est.mean, sum_rate_realization(&h, &g, &ps));
        assert_eq!(est.trials, 1);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn estimates_are_deterministic() {
        let c = cfg(4, 2, 10.0, 10.0).with_bits(4, 4).with_trials(300).with_seed(5);
        let a = paired_run(&c, FeedbackMode::Quantized).unwrap();
        let b = paired_run(&c, FeedbackMode::Quantized).unwrap();
        assert_eq!(a.quantized.mean.to_bits(), b.quantized.mean.to_bits());
        assert_eq!(a.loss_per_user.std_error.to_bits(), b.loss_per_user.std_error.to_bits());
    }

    #[test]
    fn discard_reporting_thresholds() {
        let clean = RateEstimate {
            mean: 1.0,
            std_error: 0.1,
            trials: 1000,
            discards: 5,
        };
        assert!(!clean.excessive_discards());
        let noisy = RateEstimate {
            discards: 20,
            ..clean.clone()
        };
        assert!(noisy.excessive_discards());
        assert!((noisy.discard_ratio() - 20.0 / 1020.0).abs() < 1e-15);
    }

    #[test]
    fn loss_is_nonnegative_in_the_mean() {
        let c = cfg(4, 2, 10.0, 10.0).with_bits(3, 3).with_trials(2000).with_seed(21);
        let loss = rate_loss(&c).unwrap();
        assert!(
            loss.mean > -3.0 * loss.std_error,
            "mean loss {} (se {})",
            loss.mean,
            loss.std_error
        );
    }

    #[test]
    fn hop_only_modes_lose_less_than_both_quantized() {
        let c = cfg(4, 2, 31.6, 31.6).with_bits(4, 4).with_trials(2000).with_seed(8);
        let both = paired_run(&c, FeedbackMode::Quantized).unwrap();
        let hop1 = paired_run(&c, FeedbackMode::QuantizedHop1Only).unwrap();
        let hop2 = paired_run(&c, FeedbackMode::QuantizedHop2Only).unwrap();
        let slack = 3.0
            * (both.quantized.std_error + hop1.quantized.std_error + hop2.quantized.std_error);
        assert!(hop1.quantized.mean >= both.quantized.mean - slack);
        assert!(hop2.quantized.mean >= both.quantized.mean - slack);
    }

    #[test]
    fn quantized_rate_grows_with_bits_on_each_hop() {
        // common random numbers across grid points keep the trend stable
        let base = cfg(4, 2, 31.6, 31.6).with_trials(2000).with_seed(13);
        let grids: [(&str, &dyn Fn(u32) -> SystemConfig); 3] = [
            ("B1", &|bits| base.clone().with_bits(bits, 6)),
            ("B2", &|bits| base.clone().with_bits(6, bits)),
            ("joint", &|bits| base.clone().with_bits(bits, bits)),
        ];
        for (axis, make) in grids {
            let mut prev = f64::NEG_INFINITY;
            for bits in [0u32, 2, 4, 8] {
                let est = monte_carlo_rate(&make(bits), FeedbackMode::Quantized).unwrap();
                assert!(
                    est.mean >= prev - 3.0 * est.std_error,
                    "R_Q should be non-decreasing in {axis}: {prev} -> {} at {bits}",
                    est.mean
                );
                prev = est.mean;
            }
        }
    }
}
