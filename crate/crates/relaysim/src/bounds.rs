//! Closed-form throughput analysis: the high-SNR rate-loss bound, the
//! interference-limited rate ceilings for fixed feedback bits, and the
//! feedback-bit scaling laws with their sum-feedback optimization.
//!
//! Rates are in b/s/Hz (base-2 logarithms); powers are linear (noise is unit
//! variance, so transmit power doubles as SNR).

use rayon::prelude::*;

use crate::cmatrix::{hermitian_eigen, sample_haar_columns, ComplexMatrix, RngStream};
use crate::precoder::power_scalars_raw;
use crate::quantizer::{CsiQuantizer, RvqQuantizer};
use crate::{SimError, SimResult};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Largest `n = 2^bits` whose harmonic sum is accumulated directly; beyond
/// this the asymptotic form `ln n + gamma + 1/(2n)` is used and the result is
/// flagged approximate.
pub const HARMONIC_DIRECT_MAX_BITS: u32 = 30;

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// Harmonic number `H(n) = sum_{k=1}^{n} 1/k` by compensated accumulation.
/// `H(0) = 0`.
pub fn harmonic(n: u64) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for k in 1..=n {
        let term = 1.0 / k as f64;
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Harmonic number of `2^bits`, with the asymptotic fallback above the
/// direct-accumulation guard. The flag reports when the fallback was used.
pub fn harmonic_pow2(bits: u32) -> (f64, bool) {
    if bits <= HARMONIC_DIRECT_MAX_BITS {
        (harmonic(1u64 << bits), false)
    } else {
        let ln_n = bits as f64 * std::f64::consts::LN_2;
        let half_inv_n = (-(bits as f64) - 1.0).exp2();
        (ln_n + EULER_GAMMA + half_inv_n, true)
    }
}

/// Digamma function at a positive integer:
/// `psi(n) = -gamma + sum_{k=1}^{n-1} 1/k`.
pub fn digamma_int(n: u64) -> SimResult<f64> {
    if n < 1 {
        return Err(SimError::Config(format!("digamma_int needs n >= 1, got {n}")));
    }
    Ok(harmonic(n - 1) - EULER_GAMMA)
}

// ---------------------------------------------------------------------------
// High-SNR rate-loss bound
// ---------------------------------------------------------------------------

/// Dominant (SNR-growing) term of the per-user rate-loss bound:
///
/// `(1/2) log2(1 + rho2 (N-1) (rho1 2^(-B1/(M-1)) + (1 + rho1 M) 2^(-B2/(N-1))))`
///
/// Bit counts are real-valued so the exact scaling-law solutions can be fed
/// back in; the constant first term is estimated separately by
/// [`rate_loss_bound_first_term`].
pub fn rate_loss_bound_high_snr(
    bs_antennas: usize,
    relay_antennas: usize,
    bs_power: f64,
    relay_power: f64,
    hop1_bits: f64,
    hop2_bits: f64,
) -> f64 {
    debug_assert!(bs_antennas >= relay_antennas && relay_antennas >= 2);
    let m = bs_antennas as f64;
    let n = relay_antennas as f64;
    let (rho1, rho2) = power_scalars_raw(bs_antennas, relay_antennas, bs_power, relay_power);
    let hop1_term = rho1 * (-hop1_bits / (m - 1.0)).exp2();
    let hop2_term = (1.0 + rho1 * m) * (-hop2_bits / (n - 1.0)).exp2();
    0.5 * (1.0 + rho2 * (n - 1.0) * (hop1_term + hop2_term)).log2()
}

/// Monte Carlo estimate of the constant term of the rate-loss bound.
#[derive(Debug, Clone)]
pub struct FirstTermBound {
    /// `(1/2) log2(1 + ratio_mean)`, in b/s/Hz.
    pub bound: f64,
    /// Estimated `E[sqrt(eps_k) / lambda_min(Q)]`.
    pub ratio_mean: f64,
    pub ratio_std_error: f64,
    pub trials: usize,
    pub discards: usize,
}

/// Estimate the constant term of the rate-loss bound: the expectation of
/// `sqrt(eps_k) / lambda_min(Q)` with `Q = V^H Vhat Vhat^H V`, over Haar
/// column-unitary `V` whose columns are independently RVQ-quantized with
/// `hop1_bits` bits. The coupling between the error and the eigenvalue is
/// kept: both come from the same realization. Realizations with
/// `lambda_min < 1e-12` are discarded and counted.
pub fn rate_loss_bound_first_term(
    bs_antennas: usize,
    relay_antennas: usize,
    hop1_bits: u32,
    trials: usize,
    seed: u64,
) -> SimResult<FirstTermBound> {
    if bs_antennas < relay_antennas || relay_antennas < 2 {
        return Err(SimError::Config(format!(
            "need M >= N >= 2, got M={bs_antennas}, N={relay_antennas}"
        )));
    }
    if trials < 1 {
        return Err(SimError::Config("trials must be >= 1".into()));
    }

    let samples: Vec<SimResult<(f64, usize)>> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| first_term_sample(bs_antennas, relay_antennas, hop1_bits, seed, trial))
        .collect();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut discards = 0;
    for s in samples {
        let (value, disc) = s?;
        sum += value;
        sum_sq += value * value;
        discards += disc;
    }
    let nf = trials as f64;
    let mean = sum / nf;
    let var = ((sum_sq / nf - mean * mean).max(0.0)) / nf;
    Ok(FirstTermBound {
        bound: 0.5 * (1.0 + mean).log2(),
        ratio_mean: mean,
        ratio_std_error: var.sqrt(),
        trials,
        discards,
    })
}

fn first_term_sample(
    bs_antennas: usize,
    relay_antennas: usize,
    hop1_bits: u32,
    seed: u64,
    trial: u64,
) -> SimResult<(f64, usize)> {
    let mut discards = 0;
    for attempt in 0..1000u64 {
        let base = RngStream::new(seed, trial).substream(attempt);
        let mut v_rng = base.substream(0);
        let mut quantizer = RvqQuantizer::new(base.substream(1));

        let v = sample_haar_columns(bs_antennas, relay_antennas, &mut v_rng);
        let mut errors = Vec::with_capacity(relay_antennas);
        let mut vhat_cols = Vec::with_capacity(relay_antennas);
        for k in 0..relay_antennas {
            let q = quantizer.quantize(&v.column(k), hop1_bits)?;
            errors.push(q.error);
            vhat_cols.push(q.codeword);
        }
        let vhat = ComplexMatrix::from_columns(&vhat_cols);
        let cross = v.hermitian().mul(&vhat); // N x N
        let q_matrix = cross.mul(&cross.hermitian());
        let eig = hermitian_eigen(&q_matrix)?;
        let lambda_min = *eig.values.last().expect("nonempty");
        if lambda_min < 1e-12 {
            discards += 1;
            continue;
        }
        let ratio = errors.iter().map(|e| e.sqrt() / lambda_min).sum::<f64>()
            / relay_antennas as f64;
        return Ok((ratio, discards));
    }
    Err(SimError::Numerical(
        "first-term estimator exhausted its redraw budget".into(),
    ))
}

// ---------------------------------------------------------------------------
// Interference-limited ceilings
// ---------------------------------------------------------------------------

/// A rate ceiling in `(2/N) * R` units, flagged when the harmonic sum had to
/// fall back to its asymptotic form.
#[derive(Debug, Clone, Copy)]
pub struct Ceiling {
    pub value: f64,
    pub approximate: bool,
}

/// The bit-independent constant shared by both ceilings:
///
/// `c = log2(M / (N(N-1))) + log2(e) H(N-2) - (log2(e)/N) sum_{k=0}^{N-1} psi(M-k)`
pub fn ceiling_constant(bs_antennas: usize, relay_antennas: usize) -> SimResult<f64> {
    if bs_antennas < relay_antennas || relay_antennas < 2 {
        return Err(SimError::Config(format!(
            "ceilings need M >= N >= 2, got M={bs_antennas}, N={relay_antennas}"
        )));
    }
    let m = bs_antennas as f64;
    let n = relay_antennas as f64;
    let mut psi_sum = 0.0;
    for k in 0..relay_antennas {
        psi_sum += digamma_int((bs_antennas - k) as u64)?;
    }
    Ok((m / (n * (n - 1.0))).log2() + LOG2_E * harmonic(relay_antennas as u64 - 2)
        - LOG2_E / n * psi_sum)
}

/// Rate ceiling (in `(2/N) R` units) as the transmit powers grow without
/// bound, for finite hop-1 feedback and perfect hop-2 feedback.
pub fn ceiling_fixed_hop1(
    bs_antennas: usize,
    relay_antennas: usize,
    hop1_bits: u32,
) -> SimResult<Ceiling> {
    let c = ceiling_constant(bs_antennas, relay_antennas)?;
    let m = bs_antennas as f64;
    let n = relay_antennas as f64;
    let (hsum, approximate) = harmonic_pow2(hop1_bits);
    let value = (1.0 - (m - n) / m * (-(hop1_bits as f64) / (m - 1.0)).exp2()).log2()
        + LOG2_E / (m - 1.0) * hsum
        + LOG2_E * harmonic(bs_antennas as u64 - 2)
        + LOG2_E / (n - 1.0)
        + c;
    Ok(Ceiling { value, approximate })
}

/// Rate ceiling (in `(2/N) R` units) for finite hop-2 feedback and perfect
/// hop-1 feedback.
pub fn ceiling_fixed_hop2(
    bs_antennas: usize,
    relay_antennas: usize,
    hop2_bits: u32,
) -> SimResult<Ceiling> {
    let c = ceiling_constant(bs_antennas, relay_antennas)?;
    let n = relay_antennas as f64;
    let (hsum, approximate) = harmonic_pow2(hop2_bits);
    let value = (1.0 + (n - 1.0) * (-(hop2_bits as f64) / (n - 1.0)).exp2()).log2()
        + LOG2_E / (n - 1.0) * hsum
        + c;
    Ok(Ceiling { value, approximate })
}

// ---------------------------------------------------------------------------
// Feedback-bit scaling laws
// ---------------------------------------------------------------------------

/// Feedback-bit budget that pins the high-SNR rate-loss bound to
/// `(1/2) log2 b` per user.
#[derive(Debug, Clone)]
pub struct BitPlan {
    /// Exact real-valued solutions of the scaling law.
    pub b1_exact: f64,
    pub b2_exact: f64,
    /// Integer bit counts: exact values ceiled, floored at zero.
    pub b1: u32,
    pub b2: u32,
    /// Split parameter in (0, 1) allocating the loss budget between hops.
    pub theta: f64,
    /// Target factor: the per-user loss bound is `(1/2) log2 b`.
    pub b: f64,
    /// Offset `log2(2(N-1) / (N(b-1)))` of the balanced split (theta = 1/2).
    pub alpha: f64,
}

fn clamp_bits(exact: f64) -> u32 {
    if exact <= 0.0 {
        0
    } else {
        exact.ceil() as u32
    }
}

/// Scale the feedback bits of both hops so the high-SNR rate-loss bound
/// equals `(1/2) log2 b` per user:
///
/// `B1/(M-1) = log2 P2 - log2(M + N/P1) + log2((N-1) / (theta (b-1) N))`
/// `B2/(N-1) = log2 P2 + log2((N-1) / ((1-theta) (b-1) N))`
///
/// Any `theta` in (0, 1) satisfies the bound; it only moves bits between the
/// hops. Negative exact solutions (possible at low relay power, outside the
/// high-SNR regime the law is built for) clamp to zero integer bits.
pub fn scale_bits(
    bs_antennas: usize,
    relay_antennas: usize,
    bs_power: f64,
    relay_power: f64,
    b: f64,
    theta: f64,
) -> SimResult<BitPlan> {
    if bs_antennas < relay_antennas || relay_antennas < 2 {
        return Err(SimError::Config(format!(
            "scaling law needs M >= N >= 2, got M={bs_antennas}, N={relay_antennas}"
        )));
    }
    if b.is_nan() || b <= 1.0 {
        return Err(SimError::Config(format!("loss factor b must exceed 1, got {b}")));
    }
    if theta.is_nan() || theta <= 0.0 || theta >= 1.0 {
        return Err(SimError::Config(format!("theta must lie in (0, 1), got {theta}")));
    }
    if !(bs_power.is_finite() && relay_power.is_finite()) || bs_power <= 0.0 || relay_power <= 0.0 {
        return Err(SimError::Config("transmit powers must be positive".into()));
    }
    let m = bs_antennas as f64;
    let n = relay_antennas as f64;
    let b1_exact =
        (m - 1.0) * (relay_power.log2() - (m + n / bs_power).log2()
            + ((n - 1.0) / (theta * (b - 1.0) * n)).log2());
    let b2_exact =
        (n - 1.0) * (relay_power.log2() + ((n - 1.0) / ((1.0 - theta) * (b - 1.0) * n)).log2());
    Ok(BitPlan {
        b1_exact,
        b2_exact,
        b1: clamp_bits(b1_exact),
        b2: clamp_bits(b2_exact),
        theta,
        b,
        alpha: (2.0 * (n - 1.0) / (n * (b - 1.0))).log2(),
    })
}

/// Limit of the hop-1 scaling law as the BS power grows without bound
/// (balanced split):
/// `(M-1) log2 P2 + (M-1) log2(2(N-1) / ((b-1) M N))`.
pub fn b1_limit(bs_antennas: usize, relay_antennas: usize, relay_power: f64, b: f64) -> f64 {
    debug_assert!(b > 1.0 && bs_antennas >= relay_antennas && relay_antennas >= 2);
    let m = bs_antennas as f64;
    let n = relay_antennas as f64;
    (m - 1.0) * (relay_power.log2() + (2.0 * (n - 1.0) / ((b - 1.0) * m * n)).log2())
}

/// Decibel-domain approximation of the balanced scaling law: both bit counts
/// grow linearly in the relay power in dB, with slopes `(M-1)/3` and
/// `(N-1)/3` and offsets independent of `P2`.
pub fn bits_db_approx(
    bs_antennas: usize,
    relay_antennas: usize,
    bs_power: f64,
    relay_power_db: f64,
    b: f64,
) -> (f64, f64) {
    debug_assert!(b > 1.0 && bs_antennas >= relay_antennas && relay_antennas >= 2);
    let m = bs_antennas as f64;
    let n = relay_antennas as f64;
    let alpha = (2.0 * (n - 1.0) / (n * (b - 1.0))).log2();
    let b1 = (m - 1.0) / 3.0 * relay_power_db - (m - 1.0) * (m + n / bs_power).log2()
        + (m - 1.0) * alpha;
    let b2 = (n - 1.0) / 3.0 * relay_power_db + (n - 1.0) * alpha;
    (b1, b2)
}

/// Sum feedback rate `N (B1_exact + B2_exact)` of the two-hop plan, using the
/// exact (unrounded) bit values.
pub fn sum_feedback(
    bs_antennas: usize,
    relay_antennas: usize,
    bs_power: f64,
    relay_power: f64,
    b: f64,
    theta: f64,
) -> SimResult<f64> {
    let plan = scale_bits(bs_antennas, relay_antennas, bs_power, relay_power, b, theta)?;
    Ok(relay_antennas as f64 * (plan.b1_exact + plan.b2_exact))
}

/// Split minimizing the sum feedback rate: `theta* = (M-1)/(M+N-2)`.
/// The optimum depends only on the antenna configuration.
pub fn optimal_theta(bs_antennas: usize, relay_antennas: usize) -> f64 {
    debug_assert!(bs_antennas >= 2 && relay_antennas >= 2);
    let m = bs_antennas as f64;
    let n = relay_antennas as f64;
    (m - 1.0) / (m + n - 2.0)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
