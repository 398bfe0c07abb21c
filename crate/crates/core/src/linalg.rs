//! Dense linear-algebra helpers on top of `faer`.
//!
//! The matrix exponential is a scaling-and-squaring Padé implementation
//! (Higham 2005, degrees 3/5/7/9/13). Everything else is thin glue.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub type CMat = Mat<C64>;
pub type RMat = Mat<f64>;

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn kron(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * br, a.ncols() * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Kronecker product of a list of factors, leftmost factor most significant.
pub fn kron_all(factors: &[CMat]) -> CMat {
    let mut out = identity(1);
    for f in factors {
        out = kron(out.as_ref(), f.as_ref());
    }
    out
}

pub fn transpose(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)])
}

pub fn conjugate(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].conj())
}

pub fn adjoint(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn scale(a: MatRef<'_, C64>, s: C64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn matmul(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    a * b
}

/// Maximum absolute column sum.
pub fn one_norm(a: MatRef<'_, C64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_diff(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

pub fn mat_vec(a: MatRef<'_, C64>, x: &[C64]) -> Vec<C64> {
    assert_eq!(a.ncols(), x.len());
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

pub fn vec_mat(x: &[C64], a: MatRef<'_, C64>) -> Vec<C64> {
    assert_eq!(a.nrows(), x.len());
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| x[i] * a[(i, j)]).sum())
        .collect()
}

// Backward-error bounds for the [m/m] Padé approximants (Higham 2005, Table 2.3).
const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE_9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

// Above this 1-norm condition number of the Padé denominator the result is
// no longer trustworthy to ~1e-12.
const MAX_DENOMINATOR_CONDITION: f64 = 1e10;

fn axpy_into(out: &mut CMat, a: MatRef<'_, C64>, s: f64) {
    for j in 0..out.ncols() {
        for i in 0..out.nrows() {
            out[(i, j)] += a[(i, j)] * s;
        }
    }
}

fn add_identity(out: &mut CMat, s: f64) {
    for i in 0..out.nrows() {
        out[(i, i)] += C64::new(s, 0.0);
    }
}

/// Numerator odd part `U` and even part `V` of the [m/m] Padé approximant
/// for the low degrees, where `powers[k] = A^(2k)`.
fn pade_low(a: MatRef<'_, C64>, b: &[f64], powers: &[CMat]) -> (CMat, CMat) {
    let n = a.nrows();
    let mut odd = Mat::zeros(n, n);
    let mut even = Mat::zeros(n, n);
    add_identity(&mut odd, b[1]);
    add_identity(&mut even, b[0]);
    for k in 1..b.len() / 2 {
        axpy_into(&mut odd, powers[k].as_ref(), b[2 * k + 1]);
        axpy_into(&mut even, powers[k].as_ref(), b[2 * k]);
    }
    (a * &odd, even)
}

fn pade_13(a: MatRef<'_, C64>) -> (CMat, CMat) {
    let n = a.nrows();
    let b = &PADE_13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let mut inner_u = Mat::zeros(n, n);
    axpy_into(&mut inner_u, a6.as_ref(), b[13]);
    axpy_into(&mut inner_u, a4.as_ref(), b[11]);
    axpy_into(&mut inner_u, a2.as_ref(), b[9]);
    let mut u = &a6 * &inner_u;
    axpy_into(&mut u, a6.as_ref(), b[7]);
    axpy_into(&mut u, a4.as_ref(), b[5]);
    axpy_into(&mut u, a2.as_ref(), b[3]);
    add_identity(&mut u, b[1]);
    let u = a * &u;

    let mut inner_v = Mat::zeros(n, n);
    axpy_into(&mut inner_v, a6.as_ref(), b[12]);
    axpy_into(&mut inner_v, a4.as_ref(), b[10]);
    axpy_into(&mut inner_v, a2.as_ref(), b[8]);
    let mut v = &a6 * &inner_v;
    axpy_into(&mut v, a6.as_ref(), b[6]);
    axpy_into(&mut v, a4.as_ref(), b[4]);
    axpy_into(&mut v, a2.as_ref(), b[2]);
    add_identity(&mut v, b[0]);
    (u, v)
}

/// `exp(a * t)` by scaling and squaring.
pub fn expm(a: MatRef<'_, C64>, t: f64) -> Result<CMat> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Shape(format!("expm needs a square matrix, got {}x{}", n, a.ncols())));
    }
    if !t.is_finite() {
        return Err(Error::InvalidParameter(format!("expm time must be finite, got {t}")));
    }
    let at = scale(a, C64::new(t, 0.0));
    if at.as_ref().col_iter().any(|c| c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(Error::IllConditioned("non-finite matrix entries".into()));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let norm = one_norm(at.as_ref());

    let mut squarings = 0u32;
    let (u, v) = if norm <= THETA_9 {
        let a2 = &at * &at;
        let mut powers = vec![identity(n), a2];
        let coeffs: &[f64] = if norm <= THETA_3 {
            &PADE_3
        } else if norm <= THETA_5 {
            &PADE_5
        } else if norm <= THETA_7 {
            &PADE_7
        } else {
            &PADE_9
        };
        while powers.len() < coeffs.len() / 2 {
            let next = &powers[powers.len() - 1] * &powers[1];
            powers.push(next);
        }
        pade_low(at.as_ref(), coeffs, &powers)
    } else {
        squarings = (norm / THETA_13).log2().ceil().max(0.0) as u32;
        let scaled = scale(at.as_ref(), C64::new(0.5f64.powi(squarings as i32), 0.0));
        pade_13(scaled.as_ref())
    };

    let mut denom = v.clone();
    axpy_into(&mut denom, u.as_ref(), -1.0);
    let mut numer = v;
    axpy_into(&mut numer, u.as_ref(), 1.0);

    let lu = denom.partial_piv_lu();
    let denom_inv = lu.inverse();
    let condition = one_norm(denom.as_ref()) * one_norm(denom_inv.as_ref());
    if !condition.is_finite() || condition > MAX_DENOMINATOR_CONDITION {
        return Err(Error::IllConditioned(format!(
            "Padé denominator condition number {condition:.3e}"
        )));
    }
    let mut result = &denom_inv * &numer;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Hermitian eigendecomposition, eigenvalues ascending.
pub fn eigh(a: MatRef<'_, C64>) -> Result<(Vec<f64>, CMat)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigenFailure(format!("{e:?}")))?;
    let s = evd.S();
    let vals = (0..s.dim()).map(|i| s[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Real symmetric eigendecomposition, eigenvalues ascending.
pub fn eigh_real(a: MatRef<'_, f64>) -> Result<(Vec<f64>, RMat)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigenFailure(format!("{e:?}")))?;
    let s = evd.S();
    let vals = (0..s.dim()).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Thin real SVD with singular values sorted descending.
pub fn svd_real(a: MatRef<'_, f64>) -> std::result::Result<(RMat, Vec<f64>, RMat), String> {
    let svd = a.thin_svd().map_err(|e| format!("{e:?}"))?;
    let s = svd.S();
    let vals = (0..s.dim()).map(|i| s[i]).collect();
    Ok((svd.U().to_owned(), vals, svd.V().to_owned()))
}

/// Singular values of a complex matrix, descending.
pub fn singular_values(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    a.singular_values()
        .map_err(|e| Error::EigenFailure(format!("{e:?}")))
}

/// Right singular vectors and values of a complex matrix.
pub fn svd_complex(a: MatRef<'_, C64>) -> Result<(CMat, Vec<f64>, CMat)> {
    let svd = a.svd().map_err(|e| Error::EigenFailure(format!("{e:?}")))?;
    let s = svd.S();
    let vals = (0..s.dim()).map(|i| s[i].re).collect();
    Ok((svd.U().to_owned(), vals, svd.V().to_owned()))
}

/// Eigenvalues and right eigenvectors of a general real matrix.
pub fn eig_real(a: MatRef<'_, f64>) -> Result<(Vec<C64>, CMat)> {
    let evd = a.eigen().map_err(|e| Error::EigenFailure(format!("{e:?}")))?;
    let s = evd.S();
    let vals = (0..s.dim()).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Thin QR factorization `a = q r`.
pub fn qr_real(a: MatRef<'_, f64>) -> (RMat, RMat) {
    let qr = a.qr();
    (qr.compute_thin_Q(), qr.thin_R().to_owned())
}

/// Eigenvalues of a general real matrix.
pub fn eigenvalues_real(a: MatRef<'_, f64>) -> Result<Vec<C64>> {
    a.eigenvalues()
        .map_err(|e| Error::EigenFailure(format!("{e:?}")))
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(a: MatRef<'_, C64>) -> Result<Vec<C64>> {
    a.eigenvalues()
        .map_err(|e| Error::EigenFailure(format!("{e:?}")))
}
