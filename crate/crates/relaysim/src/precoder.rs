//! Structured source and relay precoders for one channel realization.
//!
//! The source precoder is the right singular basis of the first-hop channel
//! (or its quantized version fed back from the relay); the relay precoder
//! chains the SVD receive matrix with zero-forcing beamforming on the
//! (possibly quantized) user channel directions. Power scalars depend only on
//! the configuration, never on the realization.

use crate::cmatrix::{
    normalized, thin_svd, vec_norm, zf_pseudo_inverse, ComplexMatrix, RngStream, ThinSvd, C64,
};
use crate::quantizer::{CsiQuantizer, PerfectQuantizer, RvqQuantizer};
use crate::{SimError, SimResult};

// ---------------------------------------------------------------------------
// SystemConfig
// ---------------------------------------------------------------------------

/// One simulation scenario: antenna counts, transmit powers (linear; noise is
/// unit variance so power doubles as SNR), per-hop feedback bits, and the
/// Monte Carlo budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// BS antennas (M). The served user count equals `relay_antennas`.
    pub bs_antennas: usize,
    /// Relay antennas (N), also the number of single-antenna users.
    pub relay_antennas: usize,
    /// BS transmit power constraint (linear).
    pub bs_power: f64,
    /// Relay transmit power constraint (linear, enforced on average).
    pub relay_power: f64,
    /// Feedback bits per quantized source-precoder column (hop 1).
    pub hop1_bits: u32,
    /// Feedback bits per quantized user channel direction (hop 2).
    pub hop2_bits: u32,
    /// Monte Carlo trials.
    pub trials: usize,
    /// Base seed; trial `i` uses the stream `(seed, i)`.
    pub seed: u64,
}

impl SystemConfig {
    pub fn new(
        bs_antennas: usize,
        relay_antennas: usize,
        bs_power: f64,
        relay_power: f64,
    ) -> SimResult<Self> {
        let cfg = SystemConfig {
            bs_antennas,
            relay_antennas,
            bs_power,
            relay_power,
            hop1_bits: 0,
            hop2_bits: 0,
            trials: 20_000,
            seed: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_bits(mut self, hop1_bits: u32, hop2_bits: u32) -> Self {
        self.hop1_bits = hop1_bits;
        self.hop2_bits = hop2_bits;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Number of served users (equal to the relay antenna count).
    pub fn users(&self) -> usize {
        self.relay_antennas
    }

    pub fn validate(&self) -> SimResult<()> {
        if self.relay_antennas < 2 {
            return Err(SimError::Config(format!(
                "need at least 2 relay antennas, got {}",
                self.relay_antennas
            )));
        }
        if self.bs_antennas < self.relay_antennas {
            return Err(SimError::Config(format!(
                "BS must have at least as many antennas as the relay (M >= N), got M={}, N={}",
                self.bs_antennas, self.relay_antennas
            )));
        }
        if !(self.bs_power.is_finite() && self.relay_power.is_finite())
            || self.bs_power <= 0.0
            || self.relay_power <= 0.0
        {
            return Err(SimError::Config(format!(
                "transmit powers must be positive, got P1={}, P2={}",
                self.bs_power, self.relay_power
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Power scalars
// ---------------------------------------------------------------------------

/// Power scaling pair `(rho1, rho2)` for raw parameters:
/// `rho1 = P1/N` and `rho2 = P2/(P1 M + N)`.
///
/// `rho2` already folds in the ensemble averages `E[sum sigma_k^2] = M N`
/// and `tr(F1^H F1) = N`, so the relay power constraint holds on average over
/// realizations rather than per draw.
pub fn power_scalars_raw(
    bs_antennas: usize,
    relay_antennas: usize,
    bs_power: f64,
    relay_power: f64,
) -> (f64, f64) {
    let rho1 = bs_power / relay_antennas as f64;
    let rho2 = relay_power / (bs_power * bs_antennas as f64 + relay_antennas as f64);
    (rho1, rho2)
}

/// Power scaling pair for a configuration.
pub fn power_scalars(cfg: &SystemConfig) -> (f64, f64) {
    power_scalars_raw(
        cfg.bs_antennas,
        cfg.relay_antennas,
        cfg.bs_power,
        cfg.relay_power,
    )
}

// ---------------------------------------------------------------------------
// PrecodingSet
// ---------------------------------------------------------------------------

/// Which CSI the precoders were built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiMode {
    Perfect,
    Quantized,
}

/// Per-stream quantization record of a quantized build.
#[derive(Debug, Clone)]
pub struct QuantizationMeta {
    /// Chordal error of each quantized source-precoder column.
    pub v_errors: Vec<f64>,
    pub v_indices: Vec<usize>,
    /// Chordal error of each quantized user channel direction.
    pub g_errors: Vec<f64>,
    pub g_indices: Vec<usize>,
    /// The quantized user channel directions the zero-forcing stage saw.
    pub g_quantized: Vec<Vec<C64>>,
}

/// Source and relay precoders plus power scalars for one realization.
#[derive(Debug, Clone)]
pub struct PrecodingSet {
    /// Source precoder (M x N): the true or quantized right singular basis.
    pub w: ComplexMatrix,
    /// Relay precoder `F = F1 U^H` (N x N).
    pub f: ComplexMatrix,
    /// Normalized zero-forcing columns on the (possibly quantized) user
    /// channel directions (N x N).
    pub f1: ComplexMatrix,
    /// Left singular basis of the first-hop channel (N x N).
    pub u: ComplexMatrix,
    /// True right singular basis of the first-hop channel (M x N).
    pub v: ComplexMatrix,
    /// Singular values of the first-hop channel, descending.
    pub sigma: Vec<f64>,
    pub rho1: f64,
    pub rho2: f64,
    pub mode: CsiMode,
    /// Present in quantized mode.
    pub quant: Option<QuantizationMeta>,
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// Substream tags for the two codebook families of a quantized build.
pub const TAG_HOP1_CODEBOOKS: u64 = 2;
pub const TAG_HOP2_CODEBOOKS: u64 = 3;

/// Build the precoders from perfect CSI.
///
/// Implemented as the quantized build with zero-error quantizers, so a
/// quantized build whose codebooks contain the true directions reproduces the
/// perfect build bit for bit.
pub fn build_perfect(
    h: &ComplexMatrix,
    g: &ComplexMatrix,
    cfg: &SystemConfig,
) -> SimResult<PrecodingSet> {
    let mut vq = PerfectQuantizer;
    let mut gq = PerfectQuantizer;
    let mut set = build_with_quantizers(h, g, cfg, &mut vq, &mut gq)?;
    set.mode = CsiMode::Perfect;
    set.quant = None;
    Ok(set)
}

/// Build the precoders from RVQ-quantized CSI: each column of the source
/// basis is quantized with `hop1_bits`, each normalized user direction with
/// `hop2_bits`, each against a fresh codebook.
pub fn build_quantized(
    h: &ComplexMatrix,
    g: &ComplexMatrix,
    cfg: &SystemConfig,
    rng: &RngStream,
) -> SimResult<PrecodingSet> {
    let mut vq = RvqQuantizer::new(rng.substream(TAG_HOP1_CODEBOOKS));
    let mut gq = RvqQuantizer::new(rng.substream(TAG_HOP2_CODEBOOKS));
    build_with_quantizers(h, g, cfg, &mut vq, &mut gq)
}

/// Build the precoders with caller-supplied quantization policies for the two
/// hops (the injection point for zero-error and mixed perfect/quantized
/// feedback).
pub fn build_with_quantizers(
    h: &ComplexMatrix,
    g: &ComplexMatrix,
    cfg: &SystemConfig,
    hop1: &mut dyn CsiQuantizer,
    hop2: &mut dyn CsiQuantizer,
) -> SimResult<PrecodingSet> {
    cfg.validate()?;
    let n = cfg.relay_antennas;
    let m = cfg.bs_antennas;
    if h.rows() != n || h.cols() != m {
        return Err(SimError::Dimension(format!(
            "first-hop channel must be {}x{}, got {}x{}",
            n,
            m,
            h.rows(),
            h.cols()
        )));
    }
    if g.rows() != n || g.cols() != n {
        return Err(SimError::Dimension(format!(
            "user channel matrix must be {}x{}, got {}x{}",
            n,
            n,
            g.rows(),
            g.cols()
        )));
    }

    let ThinSvd { u, sigma, v } = thin_svd(h)?;

    // hop 1: the relay quantizes each column of V for the BS
    let mut w_cols = Vec::with_capacity(n);
    let mut v_errors = Vec::with_capacity(n);
    let mut v_indices = Vec::with_capacity(n);
    for k in 0..n {
        let q = hop1.quantize(&v.column(k), cfg.hop1_bits)?;
        v_errors.push(q.error);
        v_indices.push(q.index);
        w_cols.push(q.codeword);
    }
    let w = ComplexMatrix::from_columns(&w_cols);

    // hop 2: each user quantizes its normalized channel direction for the
    // relay (the k-th row of G is g_k^H)
    let mut g_rows = Vec::with_capacity(n);
    let mut g_errors = Vec::with_capacity(n);
    let mut g_indices = Vec::with_capacity(n);
    for k in 0..n {
        let gk: Vec<C64> = g.row(k).iter().map(|z| z.conj()).collect();
        let norm = vec_norm(&gk);
        if !norm.is_finite() || norm <= 0.0 {
            return Err(SimError::SingularChannel { cond: f64::INFINITY });
        }
        let direction: Vec<C64> = gk.iter().map(|z| z / norm).collect();
        let q = hop2.quantize(&direction, cfg.hop2_bits)?;
        g_errors.push(q.error);
        g_indices.push(q.index);
        g_rows.push(q.codeword);
    }
    // quantized channel matrix: row k is ghat_k^H
    let ghat = ComplexMatrix::from_fn(n, n, |i, j| g_rows[i][j].conj());
    let g_quantized = g_rows;

    let pinv = zf_pseudo_inverse(&ghat)?;
    let f1 = ComplexMatrix::from_columns(
        &(0..n).map(|k| normalized(&pinv.column(k))).collect::<Vec<_>>(),
    );
    let f = f1.mul(&u.hermitian());

    let (rho1, rho2) = power_scalars(cfg);
    Ok(PrecodingSet {
        w,
        f,
        f1,
        u,
        v,
        sigma,
        rho1,
        rho2,
        mode: CsiMode::Quantized,
        quant: Some(QuantizationMeta {
            v_errors,
            v_indices,
            g_errors,
            g_indices,
            g_quantized,
        }),
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
