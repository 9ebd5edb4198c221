//! Dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `(m + m†) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    frobenius(&(m - m.adjoint()))
}

/// `Re Tr(a·b)`, exact for Hermitian arguments.
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            let x = a[(i, k)];
            let y = b[(k, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

pub fn real_trace(m: &CMat) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted
/// ascending; column `k` of the returned matrix is the eigenvector of value `k`.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitian_part(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// `V·diag(values)·V†`, symmetrised so the result is exactly Hermitian.
pub fn reassemble(values: &[f64], vectors: &CMat) -> CMat {
    let n = vectors.nrows();
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        for i in 0..n {
            scaled[(i, j)] *= v;
        }
    }
    hermitian_part(&(scaled * vectors.adjoint()))
}

/// Principal square root of a PSD matrix; negative roundoff eigenvalues are
/// treated as zero.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let (values, vectors) = eigh(m);
    let roots: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    reassemble(&roots, &vectors)
}

/// Matrix of independent standard complex Gaussians (`E|z|² = 1`), filled in
/// column-major order.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            out[(i, j)] = C64::new(re * s, im * s);
        }
    }
    out
}

/// Coordinates of a Hermitian `q×q` matrix in the generalized Gell-Mann
/// basis, normalised to be orthonormal under `⟨A, B⟩ = Tr(A·B)`.
///
/// Layout: `[I/√q, diagonal_1 .. diagonal_{q-1}, (sym, antisym) for each j<k]`,
/// `q²` entries in total. For Hermitian `A`, `B`:
/// `Tr(A·B) = coords(A) · coords(B)`.
pub fn hermitian_coordinates(x: &CMat) -> Vec<f64> {
    let q = x.nrows();
    let mut out = Vec::with_capacity(q * q);
    out.push(real_trace(x) / (q as f64).sqrt());
    let mut partial = 0.0;
    for l in 1..q {
        partial += x[(l - 1, l - 1)].re;
        let lf = l as f64;
        out.push((partial - lf * x[(l, l)].re) / (lf * (lf + 1.0)).sqrt());
    }
    let r2 = std::f64::consts::SQRT_2;
    for j in 0..q {
        for k in (j + 1)..q {
            let z = x[(j, k)];
            out.push(r2 * z.re);
            out.push(-r2 * z.im);
        }
    }
    out
}

/// Inverse of [`hermitian_coordinates`].
pub fn from_hermitian_coordinates(c: &[f64], q: usize) -> CMat {
    assert_eq!(c.len(), q * q, "coordinate vector must have q² entries");
    let mut out = CMat::zeros(q, q);
    let id = c[0] / (q as f64).sqrt();
    for i in 0..q {
        out[(i, i)].re = id;
    }
    for l in 1..q {
        let lf = l as f64;
        let a = c[l] / (lf * (lf + 1.0)).sqrt();
        for j in 0..l {
            out[(j, j)].re += a;
        }
        out[(l, l)].re -= lf * a;
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut idx = q;
    for j in 0..q {
        for k in (j + 1)..q {
            let re = c[idx] * h;
            let im = -c[idx + 1] * h;
            out[(j, k)] = C64::new(re, im);
            out[(k, j)] = C64::new(re, -im);
            idx += 2;
        }
    }
    out
}

/// Numerical rank of a real matrix from its singular values, using a
/// threshold relative to the largest one. Returns `(rank, singular values
/// sorted descending)`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_threshold: f64) -> (usize, Vec<f64>) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0, Vec::new());
    }
    // Reduce tall matrices to their square R factor first; singular values are
    // unchanged and the SVD stays cheap.
    let reduced = if m.nrows() > m.ncols() {
        m.clone().qr().r()
    } else {
        m.clone()
    };
    let mut sv: Vec<f64> = reduced.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let max = sv.first().copied().unwrap_or(0.0);
    let rank = if max > 0.0 {
        sv.iter().filter(|&&s| s > rel_threshold * max).count()
    } else {
        0
    };
    (rank, sv)
}
