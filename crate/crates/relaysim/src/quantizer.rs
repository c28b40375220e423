//! Random vector quantization (RVQ) of channel directions.
//!
//! A codebook holds `2^B` isotropically distributed unit vectors; quantizing
//! a unit vector picks the codeword maximizing `|v^H c|^2` and reports the
//! chordal error `eps = 1 - |v^H c|^2`. Fresh codebooks are drawn per
//! quantized vector, matching the ensemble the analytical bounds average
//! over.
//!
//! For large `B`, materializing `2^B` codewords is infeasible. The ensemble
//! law of the argmax quantization is known in closed form, so
//! [`sample_quantization`] draws `(eps, codeword)` directly: `eps` comes from
//! inverting `P(eps <= x) = 1 - (1 - x^(d-1))^(2^B)` and the codeword is
//! `e^(i psi) (sqrt(1-eps) v + sqrt(eps) s)` with `s` isotropic in the
//! orthogonal complement of `v` and `psi` a uniform phase. Every quantity the
//! simulator computes from a codeword is invariant to that construction, and
//! [`RvqQuantizer`] switches to it above an explicit-search cutoff.

use crate::cmatrix::{inner, sample_gaussian_vector, sample_isotropic_unit, vec_norm, C64, RngStream};
use crate::{SimError, SimResult};

/// Hard cap on codebook size: `2^20` codewords.
pub const MAX_CODEBOOK_BITS: u32 = 20;

/// Above this bit count [`RvqQuantizer`] stops materializing codebooks and
/// draws from the ensemble law instead. Exhaustive search over `2^12`
/// codewords keeps a Monte Carlo trial comfortably cheap.
pub const EXPLICIT_SEARCH_MAX_BITS: u32 = 12;

// ---------------------------------------------------------------------------
// Codebook
// ---------------------------------------------------------------------------

/// `2^bits` unit-norm complex codewords of a common dimension.
#[derive(Debug, Clone)]
pub struct Codebook {
    dim: usize,
    bits: u32,
    codewords: Vec<Vec<C64>>,
}

impl Codebook {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn codeword(&self, index: usize) -> &[C64] {
        &self.codewords[index]
    }

    pub fn codewords(&self) -> &[Vec<C64>] {
        &self.codewords
    }

    /// Codebook from explicit unit vectors, for tests that need to inject
    /// known codewords (for example the vector being quantized itself).
    pub fn from_codewords(codewords: Vec<Vec<C64>>) -> SimResult<Codebook> {
        let dim = codewords.first().map(Vec::len).unwrap_or(0);
        if codewords.is_empty() || dim == 0 {
            return Err(SimError::Config("codebook needs at least one codeword".into()));
        }
        for (j, c) in codewords.iter().enumerate() {
            if c.len() != dim {
                return Err(SimError::Dimension(format!(
                    "codeword {j} has length {}, expected {dim}",
                    c.len()
                )));
            }
            let n = vec_norm(c);
            if (n - 1.0).abs() > 1e-12 {
                return Err(SimError::Config(format!(
                    "codeword {j} has norm {n}, expected 1 within 1e-12"
                )));
            }
        }
        let bits = codewords.len().next_power_of_two().trailing_zeros();
        Ok(Codebook { dim, bits, codewords })
    }
}

/// Draw a fresh RVQ codebook: `2^bits` i.i.d. isotropic unit vectors.
pub fn generate_codebook(dim: usize, bits: u32, rng: &mut RngStream) -> SimResult<Codebook> {
    if dim < 2 {
        return Err(SimError::Config(format!("codebook dimension {dim} must be >= 2")));
    }
    if bits > MAX_CODEBOOK_BITS {
        return Err(SimError::Config(format!(
            "codebook of 2^{bits} codewords exceeds the 2^{MAX_CODEBOOK_BITS} guard"
        )));
    }
    let count = 1usize << bits;
    let codewords = (0..count).map(|_| sample_isotropic_unit(dim, rng)).collect();
    Ok(Codebook { dim, bits, codewords })
}

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

/// Outcome of quantizing one unit vector.
#[derive(Debug, Clone)]
pub struct QuantizationResult {
    /// Index of the selected codeword (0 for ensemble draws, which have no
    /// materialized codebook to index into).
    pub index: usize,
    /// The selected unit-norm codeword.
    pub codeword: Vec<C64>,
    /// Chordal error `1 - |v^H codeword|^2`, in [0, 1].
    pub error: f64,
}

/// Quantize a unit vector against a codebook: argmax of `|v^H c_j|^2`, ties
/// broken by the lowest index.
pub fn quantize(v: &[C64], cb: &Codebook) -> SimResult<QuantizationResult> {
    if v.len() != cb.dim {
        return Err(SimError::Dimension(format!(
            "vector of dimension {} quantized against a dimension-{} codebook",
            v.len(),
            cb.dim
        )));
    }
    let n = vec_norm(v);
    if (n - 1.0).abs() > 1e-10 {
        return Err(SimError::Config(format!(
            "quantizer input must be unit-norm, got {n}"
        )));
    }
    let mut best_index = 0;
    let mut best_gain = -1.0;
    for (j, c) in cb.codewords.iter().enumerate() {
        let gain = inner(v, c).norm_sqr();
        if gain > best_gain {
            best_gain = gain;
            best_index = j;
        }
    }
    Ok(QuantizationResult {
        index: best_index,
        codeword: cb.codewords[best_index].clone(),
        error: (1.0 - best_gain).clamp(0.0, 1.0),
    })
}

/// Closed-form approximation to the mean RVQ error,
/// `((dim-1)/dim) * 2^(-bits/(dim-1))`.
pub fn expected_error_approx(dim: usize, bits: u32) -> f64 {
    assert!(dim >= 2, "expected_error_approx needs dim >= 2");
    let d = dim as f64;
    (d - 1.0) / d * (-(bits as f64) / (d - 1.0)).exp2()
}

// ---------------------------------------------------------------------------
// Ensemble sampling (codebook-free path)
// ---------------------------------------------------------------------------

/// Draw a quantization error from the exact RVQ ensemble law for `2^bits`
/// codewords in the given dimension.
///
/// Individual codeword errors have CDF `x^(d-1)` on [0, 1]; the argmax error
/// is their minimum, with tail `(1 - x^(d-1))^n`. Inverting via `expm1` stays
/// accurate for the huge `n` this path exists for.
pub fn sample_quantization_error(dim: usize, bits: u32, rng: &mut RngStream) -> f64 {
    assert!(dim >= 2, "quantization error law needs dim >= 2");
    let n = (bits as f64).exp2();
    let u = rng.next_f64_open();
    // eps = (1 - u^(1/n))^(1/(d-1)), computed as -expm1(ln(u)/n)
    let base = -f64::exp_m1(u.ln() / n);
    base.powf(1.0 / (dim as f64 - 1.0)).clamp(0.0, 1.0)
}

/// Draw `(error, codeword)` from the RVQ ensemble law without materializing a
/// codebook. Distribution-equivalent to [`quantize`] against a fresh
/// codebook: the error direction of an RVQ selection is isotropic in the
/// orthogonal complement of `v` and independent of the error magnitude.
pub fn sample_quantization(v: &[C64], bits: u32, rng: &mut RngStream) -> SimResult<QuantizationResult> {
    let dim = v.len();
    if dim < 2 {
        return Err(SimError::Dimension("ensemble quantization needs dim >= 2".into()));
    }
    let n = vec_norm(v);
    if (n - 1.0).abs() > 1e-10 {
        return Err(SimError::Config(format!(
            "quantizer input must be unit-norm, got {n}"
        )));
    }
    let error = sample_quantization_error(dim, bits, rng);
    // isotropic unit vector in the orthogonal complement of v
    let s = loop {
        let mut raw = sample_gaussian_vector(dim, rng);
        let proj = inner(v, &raw);
        for (ri, vi) in raw.iter_mut().zip(v) {
            *ri -= proj * vi;
        }
        let norm = vec_norm(&raw);
        if norm > 1e-8 {
            break raw.into_iter().map(|z| z / norm).collect::<Vec<C64>>();
        }
    };
    let phase = rng.next_phase();
    let a = (1.0 - error).sqrt();
    let b = error.sqrt();
    let codeword: Vec<C64> = v
        .iter()
        .zip(&s)
        .map(|(vi, si)| phase * (vi * a + si * b))
        .collect();
    Ok(QuantizationResult {
        index: 0,
        codeword,
        error,
    })
}

// ---------------------------------------------------------------------------
// Quantizer policies
// ---------------------------------------------------------------------------

/// Source of CSI quantizations for the precoder builders. Implementations
/// own whatever randomness they need; the builder feeds them unit vectors.
pub trait CsiQuantizer {
    fn quantize(&mut self, direction: &[C64], bits: u32) -> SimResult<QuantizationResult>;
}

/// Production policy: a fresh RVQ codebook per quantized vector, searched
/// exhaustively up to the cutoff, ensemble-sampled beyond it.
#[derive(Debug, Clone)]
pub struct RvqQuantizer {
    rng: RngStream,
    explicit_max_bits: u32,
}

impl RvqQuantizer {
    pub fn new(rng: RngStream) -> Self {
        RvqQuantizer {
            rng,
            explicit_max_bits: EXPLICIT_SEARCH_MAX_BITS,
        }
    }

    /// Override the explicit-search cutoff (capped at the codebook guard);
    /// tests use this to force one path or the other.
    pub fn with_explicit_cutoff(rng: RngStream, explicit_max_bits: u32) -> Self {
        RvqQuantizer {
            rng,
            explicit_max_bits: explicit_max_bits.min(MAX_CODEBOOK_BITS),
        }
    }
}

impl CsiQuantizer for RvqQuantizer {
    fn quantize(&mut self, direction: &[C64], bits: u32) -> SimResult<QuantizationResult> {
        if bits <= self.explicit_max_bits {
            let cb = generate_codebook(direction.len(), bits, &mut self.rng)?;
            quantize(direction, &cb)
        } else {
            sample_quantization(direction, bits, &mut self.rng)
        }
    }
}

/// Zero-error policy: returns the input direction unchanged. Stands in for a
/// codebook that contains the true vector, i.e. perfect feedback.
#[derive(Debug, Clone, Default)]
pub struct PerfectQuantizer;

impl CsiQuantizer for PerfectQuantizer {
    fn quantize(&mut self, direction: &[C64], _bits: u32) -> SimResult<QuantizationResult> {
        Ok(QuantizationResult {
            index: 0,
            codeword: direction.to_vec(),
            error: 0.0,
        })
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
