//! Dense complex linear algebra and seeded random sampling for small
//! matrices (dimensions up to ~8).
//!
//! Everything here is deterministic: decompositions are pure functions of
//! their inputs, and random sampling is driven by [`RngStream`] values keyed
//! by `(seed, stream_id)` that reproduce the same scalar sequence on every
//! run and platform. Parallel Monte Carlo trials each own their own stream.

use num_complex::Complex;

use crate::{SimError, SimResult};

/// Complex scalar used throughout the crate.
pub type C64 = Complex<f64>;

/// Off-diagonal mass threshold (relative to the Frobenius norm) at which the
/// Jacobi eigensolver stops.
const JACOBI_THRESHOLD: f64 = 1e-12;

/// Sweep cap for the Jacobi eigensolver. The matrices in scope converge in a
/// handful of sweeps; hitting the cap signals a degenerate input.
const JACOBI_MAX_SWEEPS: usize = 200;

/// Condition-number guard for [`zf_pseudo_inverse`]: inputs whose Gram matrix
/// exceeds this estimate are reported as singular channels.
const SINGULAR_COND_LIMIT: f64 = 1e12;

/// Residual guard for [`zf_pseudo_inverse`]: `max |(G P - I)_ij|` must stay
/// below this on every accepted input.
const ZF_RESIDUAL_LIMIT: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Deterministic RNG streams
// ---------------------------------------------------------------------------

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn splitmix_hash(x: u64) -> u64 {
    let mut state = x;
    splitmix_next(&mut state)
}

/// Deterministic random stream keyed by `(seed, stream_id)`.
///
/// Internally a xoshiro256** generator whose state is expanded from the key
/// with SplitMix64. Identical keys yield identical scalar sequences on every
/// run and platform; distinct stream ids under one seed are statistically
/// independent. Streams are value types: clone freely, one per parallel
/// trial.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    state: [u64; 4],
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut z = seed ^ splitmix_hash(stream_id);
        let mut state = [
            splitmix_next(&mut z),
            splitmix_next(&mut z),
            splitmix_next(&mut z),
            splitmix_next(&mut z),
        ];
        // xoshiro requires a nonzero state
        if state.iter().all(|&s| s == 0) {
            state[0] = GOLDEN_GAMMA;
        }
        RngStream {
            seed,
            stream_id,
            state,
        }
    }

    /// Derive an independent stream for a sub-purpose (codebooks vs. channel
    /// draws, attempt counters, ...) without advancing this one.
    pub fn substream(&self, tag: u64) -> RngStream {
        let derived = splitmix_hash(self.stream_id ^ tag.wrapping_mul(GOLDEN_GAMMA) ^ 0x632B_E59B_D9B4_E019);
        RngStream::new(self.seed, derived)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1]; safe to pass through `ln`.
    pub fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Pair of independent standard normals (Marsaglia polar method).
    pub fn next_normal_pair(&mut self) -> (f64, f64) {
        loop {
            let x = 2.0 * self.next_f64() - 1.0;
            let y = 2.0 * self.next_f64() - 1.0;
            let s = x * x + y * y;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                return (x * f, y * f);
            }
        }
    }

    /// One CN(0, 1) draw: real and imaginary parts independent N(0, 1/2).
    pub fn next_complex_gaussian(&mut self) -> C64 {
        let (re, im) = self.next_normal_pair();
        C64::new(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
    }

    /// Uniform phase factor `exp(i*phi)`, `phi ~ U[0, 2*pi)`.
    pub fn next_phase(&mut self) -> C64 {
        let phi = 2.0 * std::f64::consts::PI * self.next_f64();
        C64::new(phi.cos(), phi.sin())
    }
}

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

/// Inner product `a^H b` (conjugate-linear in the first argument).
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Euclidean norm.
pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Copy of `v` scaled to unit norm.
pub fn normalized(v: &[C64]) -> Vec<C64> {
    let n = vec_norm(v);
    v.iter().map(|z| z / n).collect()
}

/// `|a^H b|^2`.
pub fn inner_abs_sq(a: &[C64], b: &[C64]) -> f64 {
    inner(a, b).norm_sqr()
}

// ---------------------------------------------------------------------------
// ComplexMatrix
// ---------------------------------------------------------------------------

/// Dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            entries: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, C64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<C64>) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count must be rows*cols");
        ComplexMatrix { rows, cols, entries }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        ComplexMatrix { rows, cols, entries }
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m.set(i, i, C64::new(x, 0.0));
        }
        m
    }

    /// Matrix whose columns are the given vectors (all of equal length).
    pub fn from_columns(cols: &[Vec<C64>]) -> Self {
        let rows = cols.first().map_or(0, |c| c.len());
        ComplexMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.entries[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn mul(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matrix product shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    let v = out.get(i, j) + a * rhs.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.rows, rhs.rows);
        assert_eq!(self.cols, rhs.cols);
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    /// `A x` for a column vector `x`.
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, x.len(), "matrix-vector shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `v^H A` as a length-`cols` vector (the row covector written as a Vec).
    pub fn left_mul_hermitian(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.rows, v.len(), "vector-matrix shape mismatch");
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| v[i].conj() * self.get(i, j)).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `max |(A - A^H)_ij|`, the deviation from Hermitian symmetry.
    pub fn hermitian_deviation(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut dev: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                dev = dev.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        dev
    }
}

// ---------------------------------------------------------------------------
// Random sampling
// ---------------------------------------------------------------------------

/// Matrix of i.i.d. CN(0, 1) entries (real and imaginary parts independent
/// with variance 1/2 each, unit variance per entry).
pub fn sample_gaussian_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> ComplexMatrix {
    assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
    let entries = (0..rows * cols).map(|_| rng.next_complex_gaussian()).collect();
    ComplexMatrix { rows, cols, entries }
}

/// Vector of i.i.d. CN(0, 1) entries.
pub fn sample_gaussian_vector(dim: usize, rng: &mut RngStream) -> Vec<C64> {
    (0..dim).map(|_| rng.next_complex_gaussian()).collect()
}

/// Isotropically distributed unit vector (normalized complex Gaussian).
pub fn sample_isotropic_unit(dim: usize, rng: &mut RngStream) -> Vec<C64> {
    loop {
        let v = sample_gaussian_vector(dim, rng);
        let n = vec_norm(&v);
        if n > 1e-100 {
            return v.iter().map(|z| z / n).collect();
        }
    }
}

/// Haar-distributed column-unitary matrix (`rows >= cols`): modified
/// Gram-Schmidt applied to i.i.d. Gaussian columns. Left rotation invariance
/// of the Gaussian ensemble makes the result Haar on the Stiefel manifold.
pub fn sample_haar_columns(rows: usize, cols: usize, rng: &mut RngStream) -> ComplexMatrix {
    assert!(rows >= cols, "need rows >= cols for column-unitary sampling");
    let mut columns: Vec<Vec<C64>> = Vec::with_capacity(cols);
    while columns.len() < cols {
        let mut v = sample_gaussian_vector(rows, rng);
        for q in &columns {
            let proj = inner(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
        }
        let n = vec_norm(&v);
        if n > 1e-8 {
            columns.push(v.iter().map(|z| z / n).collect());
        }
    }
    ComplexMatrix::from_columns(&columns)
}

// ---------------------------------------------------------------------------
// Hermitian eigendecomposition (cyclic complex Jacobi)
// ---------------------------------------------------------------------------

/// Eigendecomposition `A = Q diag(values) Q^H` of a Hermitian matrix, with
/// eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Unitary matrix whose k-th column is the eigenvector for `values[k]`.
    pub vectors: ComplexMatrix,
}

/// Cyclic Jacobi for Hermitian matrices. Each rotation zeroes one
/// off-diagonal pair; sweeps repeat until the off-diagonal Frobenius mass
/// falls below `1e-12` of the matrix norm or the sweep cap is hit.
pub fn hermitian_eigen(a: &ComplexMatrix) -> SimResult<HermitianEigen> {
    if a.rows() != a.cols() {
        return Err(SimError::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut q = ComplexMatrix::identity(n);
    let fro = m.frobenius_norm();
    if n == 1 {
        return Ok(HermitianEigen {
            values: vec![m.get(0, 0).re],
            vectors: q,
        });
    }
    let tol = JACOBI_THRESHOLD * fro.max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m.get(i, j).norm_sqr();
                }
            }
        }
        if off.sqrt() <= tol {
            converged = true;
            break;
        }

        for p in 0..n - 1 {
            for qq in p + 1..n {
                let apq = m.get(p, qq);
                let r = apq.norm();
                if r <= tol / (n as f64) {
                    continue;
                }
                let phase = apq / r; // e^{i*phi}
                let app = m.get(p, p).re;
                let aqq = m.get(qq, qq).re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Unitary J = I with J[p][p]=c, J[p][q]=s*phase,
                // J[q][p]=-s*conj(phase), J[q][q]=c; apply A <- J^H A J.
                let s_phase = phase * s;
                for i in 0..n {
                    let aip = m.get(i, p);
                    let aiq = m.get(i, qq);
                    m.set(i, p, aip * c - aiq * s_phase.conj());
                    m.set(i, qq, aip * s_phase + aiq * c);
                }
                for j in 0..n {
                    let apj = m.get(p, j);
                    let aqj = m.get(qq, j);
                    m.set(p, j, apj * c - aqj * s_phase);
                    m.set(qq, j, apj * s_phase.conj() + aqj * c);
                }
                m.set(p, p, C64::new(app - t * r, 0.0));
                m.set(qq, qq, C64::new(aqq + t * r, 0.0));
                m.set(p, qq, C64::new(0.0, 0.0));
                m.set(qq, p, C64::new(0.0, 0.0));

                for i in 0..n {
                    let qip = q.get(i, p);
                    let qiq = q.get(i, qq);
                    q.set(i, p, qip * c - qiq * s_phase.conj());
                    q.set(i, qq, qip * s_phase + qiq * c);
                }
            }
        }
    }
    if !converged {
        // one final check after the last sweep
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m.get(i, j).norm_sqr();
                }
            }
        }
        if off.sqrt() > tol {
            return Err(SimError::SvdNonConvergence {
                sweeps: JACOBI_MAX_SWEEPS,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i).re).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| q.get(i, order[j]));
    Ok(HermitianEigen { values, vectors })
}

/// Smallest real eigenvalue of a Hermitian matrix.
///
/// Rejects inputs deviating from Hermitian symmetry by more than `1e-10`.
pub fn min_eigenvalue_hermitian(q: &ComplexMatrix) -> SimResult<f64> {
    if q.rows() != q.cols() {
        return Err(SimError::Dimension(format!(
            "expected a square matrix, got {}x{}",
            q.rows(),
            q.cols()
        )));
    }
    let dev = q.hermitian_deviation();
    if dev > 1e-10 {
        return Err(SimError::NonHermitian { deviation: dev });
    }
    // symmetrize to wash out the sub-tolerance asymmetry
    let h = ComplexMatrix::from_fn(q.rows(), q.cols(), |i, j| {
        (q.get(i, j) + q.get(j, i).conj()) * 0.5
    });
    let eig = hermitian_eigen(&h)?;
    Ok(*eig.values.last().expect("nonempty spectrum"))
}

// ---------------------------------------------------------------------------
// Thin SVD
// ---------------------------------------------------------------------------

/// Thin singular value decomposition `A = U diag(sigma) V^H` of an N x M
/// matrix with N <= M: `U` is N x N unitary, `sigma` has N nonnegative values
/// in descending order, `V` is M x N column-unitary.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

/// Thin SVD via the Hermitian eigendecomposition of `A A^H`.
///
/// Requires `rows <= cols` and finite entries. Right singular vectors come
/// from `v_k = A^H u_k / sigma_k`; a Gram-Schmidt pass restores column
/// orthonormality (and completes the basis if a singular value underflows).
pub fn thin_svd(a: &ComplexMatrix) -> SimResult<ThinSvd> {
    if a.rows() > a.cols() {
        return Err(SimError::Dimension(format!(
            "thin_svd expects rows <= cols, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(SimError::Numerical("thin_svd input has non-finite entries".into()));
    }
    let n = a.rows();
    let gram = a.mul(&a.hermitian());
    let eig = hermitian_eigen(&gram)?;
    let sigma: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let u = eig.vectors;
    let ah = a.hermitian();

    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let cutoff = sigma_max * 1e-13;
    let mut v_cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    for (k, &sk) in sigma.iter().enumerate() {
        let col = if sk > cutoff && sk > 0.0 {
            let uk = u.column(k);
            let raw = ah.mul_vec(&uk);
            raw.iter().map(|z| z / sk).collect()
        } else {
            // null direction: orthonormalize a canonical basis vector against
            // the columns found so far
            complete_orthonormal(a.cols(), &v_cols)
        };
        v_cols.push(col);
    }
    // one Gram-Schmidt pass keeps V^H V = I well inside tolerance even when
    // the singular values are widely spread
    for k in 0..n {
        let (done, rest) = v_cols.split_at_mut(k);
        let col = &mut rest[0];
        for q in done.iter() {
            let proj = inner(q, col);
            for (ci, qi) in col.iter_mut().zip(q) {
                *ci -= proj * qi;
            }
        }
        let nm = vec_norm(col);
        if nm > 1e-8 {
            for ci in col.iter_mut() {
                *ci /= nm;
            }
        } else {
            *col = complete_orthonormal(a.cols(), done);
        }
    }
    let v = ComplexMatrix::from_columns(&v_cols);
    Ok(ThinSvd { u, sigma, v })
}

/// Unit vector orthogonal to all of `existing` (canonical basis candidate
/// with the smallest projection, then Gram-Schmidt).
fn complete_orthonormal(dim: usize, existing: &[Vec<C64>]) -> Vec<C64> {
    let mut best: Option<(f64, Vec<C64>)> = None;
    for e in 0..dim {
        let mut v = vec![C64::new(0.0, 0.0); dim];
        v[e] = C64::new(1.0, 0.0);
        for q in existing {
            let proj = inner(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
        }
        let n = vec_norm(&v);
        if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
            best = Some((n, v));
        }
    }
    let (n, v) = best.expect("dim >= 1");
    v.iter().map(|z| z / n).collect()
}

// ---------------------------------------------------------------------------
// Zero-forcing pseudo-inverse
// ---------------------------------------------------------------------------

/// `P = G^H (G G^H)^{-1}` for a square nonsingular `G`, so that `G P = I`.
///
/// The Gram matrix `G G^H` is inverted through its eigendecomposition; a
/// condition estimate above `1e12` (or a residual above `1e-8`) reports a
/// singular channel, which callers discard and count.
pub fn zf_pseudo_inverse(g: &ComplexMatrix) -> SimResult<ComplexMatrix> {
    if g.rows() != g.cols() {
        return Err(SimError::Dimension(format!(
            "zf_pseudo_inverse expects a square matrix, got {}x{}",
            g.rows(),
            g.cols()
        )));
    }
    let n = g.rows();
    let gram = g.mul(&g.hermitian());
    let eig = hermitian_eigen(&gram)?;
    let lmax = eig.values[0];
    let lmin = eig.values[n - 1];
    if !(lmax.is_finite() && lmin.is_finite()) || lmin <= 0.0 {
        return Err(SimError::SingularChannel { cond: f64::INFINITY });
    }
    let cond = lmax / lmin;
    if cond > SINGULAR_COND_LIMIT {
        return Err(SimError::SingularChannel { cond });
    }
    // (G G^H)^{-1} = Q diag(1/lambda) Q^H
    let q = &eig.vectors;
    let inv_diag = ComplexMatrix::from_diagonal(
        &eig.values.iter().map(|&l| 1.0 / l).collect::<Vec<_>>(),
    );
    let gram_inv = q.mul(&inv_diag).mul(&q.hermitian());
    let p = g.hermitian().mul(&gram_inv);

    let residual = g.mul(&p).sub(&ComplexMatrix::identity(n)).max_abs_entry();
    if !residual.is_finite() || residual > ZF_RESIDUAL_LIMIT {
        return Err(SimError::SingularChannel { cond });
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
