//! Linear algebra on Sp(2m, R), its complexification, and the metaplectic
//! coefficients built from the holomorphic block.
//!
//! Matrices act on chart coordinates ordered (x_1..x_m, y_1..y_m). The
//! complex structure is the standard one (J0 x = y blocks) and residuals are
//! measured against the unit symplectic form Omega = [[0, I], [-I, 0]].

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

type CMat = DMatrix<Complex64>;
type CVec = DVector<Complex64>;

pub const DEFAULT_TOL: f64 = 1e-10;

/// Unit symplectic form [[0, I], [-I, 0]].
pub fn standard_omega(m: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        w[(i, m + i)] = 1.0;
        w[(m + i, i)] = -1.0;
    }
    w
}

/// Standard complex structure [[0, -I], [I, 0]].
pub fn standard_j(m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        j[(i, m + i)] = -1.0;
        j[(m + i, i)] = 1.0;
    }
    j
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

fn max_abs_c(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.norm()))
}

/// Residual of membership in Sp(2m, R): max-entry norm of S^t Omega S - Omega.
pub fn symplectic_residual(s: &DMatrix<f64>) -> Result<f64> {
    let n = s.nrows();
    if n != s.ncols() || n % 2 != 0 || n == 0 {
        return Err(Error::OddDimension(n));
    }
    let omega = standard_omega(n / 2);
    Ok(max_abs(&(s.transpose() * &omega * s - &omega)))
}

/// Returns (is_symplectic, residual).
pub fn check_symplectic(s: &DMatrix<f64>, tol: f64) -> Result<(bool, f64)> {
    let r = symplectic_residual(s)?;
    Ok((r <= tol, r))
}

/// A validated element of Sp(2m, R).
#[derive(Debug, Clone)]
pub struct SymplecticMap {
    m: usize,
    mat: DMatrix<f64>,
    tol: f64,
    /// Distance moved by the Newton re-projection at construction (0 if none).
    pub projection_distance: f64,
}

impl SymplecticMap {
    /// Validates and, when the residual is within tolerance but nonzero,
    /// applies one Newton step of projection onto the symplectic group.
    pub fn new(mat: DMatrix<f64>, tol: f64) -> Result<Self> {
        let residual = symplectic_residual(&mat)?;
        if residual > tol {
            return Err(Error::NotSymplectic { residual, tol });
        }
        let m = mat.nrows() / 2;
        let mut out = SymplecticMap {
            m,
            mat,
            tol,
            projection_distance: 0.0,
        };
        if residual > 0.0 {
            let omega = standard_omega(m);
            let err = out.mat.transpose() * &omega * &out.mat - &omega;
            // one Newton step: S <- S (I - 1/2 Omega^{-1} E), Omega^{-1} = -Omega
            let corr = DMatrix::identity(2 * m, 2 * m) + 0.5 * (&omega * err);
            let projected = &out.mat * corr;
            out.projection_distance = max_abs(&(&projected - &out.mat));
            out.mat = projected;
        }
        Ok(out)
    }

    pub fn identity(m: usize) -> Self {
        SymplecticMap {
            m,
            mat: DMatrix::identity(2 * m, 2 * m),
            tol: DEFAULT_TOL,
            projection_distance: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Symplectic inverse S^{-1} = Omega^{-1} S^t Omega, exact in blocks.
    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        let m = self.m;
        let mut out = DMatrix::zeros(2 * m, 2 * m);
        let a = self.mat.view((0, 0), (m, m));
        let b = self.mat.view((0, m), (m, m));
        let c = self.mat.view((m, 0), (m, m));
        let d = self.mat.view((m, m), (m, m));
        out.view_mut((0, 0), (m, m)).copy_from(&d.transpose());
        out.view_mut((0, m), (m, m)).copy_from(&(-b.transpose()));
        out.view_mut((m, 0), (m, m)).copy_from(&(-c.transpose()));
        out.view_mut((m, m), (m, m)).copy_from(&a.transpose());
        out
    }

    /// S^n for n in Z.
    pub fn iterate(&self, n: i64) -> DMatrix<f64> {
        let base = if n >= 0 {
            self.mat.clone()
        } else {
            self.inverse_matrix()
        };
        let mut k = n.unsigned_abs();
        let mut acc = DMatrix::identity(2 * self.m, 2 * self.m);
        let mut pow = base;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &pow;
            }
            k >>= 1;
            if k > 0 {
                pow = &pow * &pow;
            }
        }
        acc
    }
}

/// The (P, Q) blocks of the conjugated matrix [[P, Q], [Q̄, P̄]].
#[derive(Debug, Clone)]
pub struct ComplexBlocks {
    pub p: CMat,
    pub q: CMat,
}

impl ComplexBlocks {
    /// Residuals of the four block identities:
    /// PP* - QQ* = I, PQ^t = QP^t, P*P - Q^t Q̄ = I, P^t Q̄ = Q*P.
    pub fn folland_residuals(&self) -> [f64; 4] {
        let m = self.p.nrows();
        let id = CMat::identity(m, m);
        let r1 = max_abs_c(&(&self.p * self.p.adjoint() - &self.q * self.q.adjoint() - &id));
        let r2 = max_abs_c(&(&self.p * self.q.transpose() - &self.q * self.p.transpose()));
        let r3 = max_abs_c(
            &(self.p.adjoint() * &self.p - self.q.transpose() * self.q.conjugate() - &id),
        );
        let r4 = max_abs_c(&(self.p.transpose() * self.q.conjugate() - self.q.adjoint() * &self.p));
        [r1, r2, r3, r4]
    }

    pub fn max_folland_residual(&self) -> f64 {
        self.folland_residuals().into_iter().fold(0.0f64, f64::max)
    }

    /// Full 2m x 2m matrix [[P, Q], [Q̄, P̄]].
    pub fn full_matrix(&self) -> CMat {
        let m = self.p.nrows();
        let mut out = CMat::zeros(2 * m, 2 * m);
        out.view_mut((0, 0), (m, m)).copy_from(&self.p);
        out.view_mut((0, m), (m, m)).copy_from(&self.q);
        out.view_mut((m, 0), (m, m)).copy_from(&self.q.conjugate());
        out.view_mut((m, m), (m, m)).copy_from(&self.p.conjugate());
        out
    }
}

fn real_blocks(s: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let m = s.nrows() / 2;
    (
        s.view((0, 0), (m, m)).into(),
        s.view((0, m), (m, m)).into(),
        s.view((m, 0), (m, m)).into(),
        s.view((m, m), (m, m)).into(),
    )
}

/// W-conjugation of a raw real matrix (no symplectic validation):
/// P = (A + D + i(C - B))/2, Q = (A - D + i(B + C))/2.
pub fn complexify_matrix(s: &DMatrix<f64>) -> ComplexBlocks {
    let (a, b, c, d) = real_blocks(s);
    let m = a.nrows();
    let mut p = CMat::zeros(m, m);
    let mut q = CMat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            p[(i, j)] =
                Complex64::new(0.5 * (a[(i, j)] + d[(i, j)]), 0.5 * (c[(i, j)] - b[(i, j)]));
            q[(i, j)] =
                Complex64::new(0.5 * (a[(i, j)] - d[(i, j)]), 0.5 * (b[(i, j)] + c[(i, j)]));
        }
    }
    ComplexBlocks { p, q }
}

/// W-conjugation of a validated symplectic map.
pub fn complexify(s: &SymplecticMap) -> ComplexBlocks {
    complexify_matrix(s.matrix())
}

/// Inverse of `complexify`: A = Re(P+Q), B = Im(Q-P), C = Im(P+Q), D = Re(P-Q).
pub fn decomplexify(blocks: &ComplexBlocks, tol: f64) -> Result<SymplecticMap> {
    let r = blocks.max_folland_residual();
    if r > tol {
        return Err(Error::Validation(format!(
            "block identities violated: residual {r:.3e} exceeds tol {tol:.3e}"
        )));
    }
    let m = blocks.p.nrows();
    let mut s = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let p = blocks.p[(i, j)];
            let q = blocks.q[(i, j)];
            s[(i, j)] = p.re + q.re;
            s[(i, m + j)] = q.im - p.im;
            s[(m + i, j)] = p.im + q.im;
            s[(m + i, m + j)] = p.re - q.re;
        }
    }
    SymplecticMap::new(s, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SymplecticClass {
    Identity,
    PositiveDefiniteSymmetric,
    UnitaryType,
    Other,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Classification {
    pub class: SymplecticClass,
    /// Exponents lambda_j >= 0 sorted descending (only for the symmetric
    /// positive definite case; zeros for identity, empty otherwise).
    pub lambdas: Vec<f64>,
    /// Dimension of the clustered eigenvalue-1 eigenspace V(1).
    pub v1_dim: usize,
}

/// Relative gap threshold for clustering eigenvalues at 1.
const V1_CLUSTER_TOL: f64 = 1e-6;

pub fn classify(s: &SymplecticMap) -> Classification {
    let n = 2 * s.m;
    let mat = s.matrix();
    let tol = s.tol.max(1e-12);
    let id = DMatrix::identity(n, n);
    if max_abs(&(mat - &id)) <= tol.max(1e-9) {
        return Classification {
            class: SymplecticClass::Identity,
            lambdas: vec![0.0; s.m],
            v1_dim: n,
        };
    }
    let sym_res = max_abs(&(mat - mat.transpose()));
    if sym_res <= tol.max(1e-9) {
        let symm = 0.5 * (mat + mat.transpose());
        let eig = symm.symmetric_eigen();
        if eig.eigenvalues.iter().all(|&e| e > 0.0) {
            let mut logs: Vec<f64> = eig.eigenvalues.iter().map(|&e| e.ln().abs()).collect();
            logs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let v1_dim = logs.iter().filter(|&&l| l <= V1_CLUSTER_TOL).count();
            // each exponent appears twice (e^l and e^-l); keep one per pair
            let mut lambdas: Vec<f64> = logs.iter().step_by(2).copied().collect();
            for l in lambdas.iter_mut() {
                if *l <= V1_CLUSTER_TOL {
                    *l = 0.0;
                }
            }
            return Classification {
                class: SymplecticClass::PositiveDefiniteSymmetric,
                lambdas,
                v1_dim,
            };
        }
    }
    let orth_res = max_abs(&(mat.transpose() * mat - &id));
    if orth_res <= tol.max(1e-9) {
        return Classification {
            class: SymplecticClass::UnitaryType,
            lambdas: vec![],
            v1_dim: 0,
        };
    }
    Classification {
        class: SymplecticClass::Other,
        lambdas: vec![],
        v1_dim: 0,
    }
}

/// det of the holomorphic block P of the complexification. For symmetric
/// positive definite input this is cross-checked against prod_j cosh(lambda_j).
pub fn holomorphic_block_det(s: &SymplecticMap) -> Result<Complex64> {
    let blocks = complexify(s);
    let det = blocks.p.determinant();
    let class = classify(s);
    if matches!(
        class.class,
        SymplecticClass::PositiveDefiniteSymmetric | SymplecticClass::Identity
    ) {
        let prod: f64 = class.lambdas.iter().map(|l| l.cosh()).product();
        let rel = (det - Complex64::new(prod, 0.0)).norm() / prod.max(1.0);
        if rel > 1e-7 {
            return Err(Error::Validation(format!(
                "det P = {det} disagrees with cosh product {prod:.12e} (rel {rel:.3e})"
            )));
        }
    }
    Ok(det)
}

/// A flow-invariant tangent vector together with its (1,0) component.
#[derive(Debug, Clone)]
pub struct InvariantVector {
    pub xi: DVector<f64>,
    pub alpha: CVec,
}

impl InvariantVector {
    /// alpha_j = xi_{x_j} + i xi_{y_j} in chart coordinates.
    pub fn from_real(xi: DVector<f64>) -> Self {
        let m = xi.len() / 2;
        let alpha = CVec::from_iterator(m, (0..m).map(|i| Complex64::new(xi[i], xi[m + i])));
        InvariantVector { xi, alpha }
    }

    pub fn from_alpha(alpha: CVec) -> Self {
        let m = alpha.len();
        let mut xi = DVector::zeros(2 * m);
        for i in 0..m {
            xi[i] = alpha[i].re;
            xi[m + i] = alpha[i].im;
        }
        InvariantVector { xi, alpha }
    }

    /// Residual of S xi = xi.
    pub fn invariance_residual(&self, s: &SymplecticMap) -> f64 {
        let img = s.matrix() * &self.xi;
        (img - &self.xi).amax()
    }
}

fn solve_p(p: &CMat, rhs: &CVec, context: &str) -> Result<CVec> {
    let lu = p.clone().lu();
    let det = lu.determinant();
    let scale = max_abs_c(p).max(1.0);
    if det.norm() < 1e-300 * scale {
        return Err(Error::Singular {
            context: context.to_string(),
            cond: f64::INFINITY,
        });
    }
    lu.solve(rhs).ok_or_else(|| {
        let cond = max_abs_c(p) / det.norm().max(1e-300);
        Error::Singular {
            context: context.to_string(),
            cond,
        }
    })
}

/// Alpha-contraction ᾱ^t P^{-1} α of the holomorphic block.
pub fn invariant_matrix_element(s: &SymplecticMap, v: &InvariantVector) -> Result<Complex64> {
    let blocks = complexify(s);
    let x = solve_p(&blocks.p, &v.alpha, "invariant_matrix_element")?;
    Ok(v.alpha
        .iter()
        .zip(x.iter())
        .map(|(a, xi)| a.conj() * xi)
        .sum())
}

/// One periodic-orbit expansion coefficient.
#[derive(Debug, Clone)]
pub struct GcalCoefficient {
    pub n: i64,
    pub value: Complex64,
    pub det_p: Complex64,
    pub matrix_element: Complex64,
}

impl GcalCoefficient {
    /// value^{-2} - det_p * matrix_element, zero by construction.
    pub fn consistency_residual(&self) -> f64 {
        let inv2 = 1.0 / (self.value * self.value);
        (inv2 - self.det_p * self.matrix_element).norm()
    }
}

fn wrap_to_pi(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x % two_pi;
    if y > std::f64::consts::PI {
        y -= two_pi;
    } else if y < -std::f64::consts::PI {
        y += two_pi;
    }
    y
}

/// Coefficients for n in [-n_max, n_max] with the square-root branch tracked
/// continuously from n = 0, where det P_0 * (ᾱ α) is real positive.
pub fn gcal_coefficients(
    s: &SymplecticMap,
    v: &InvariantVector,
    n_max: u32,
) -> Result<Vec<GcalCoefficient>> {
    let res = v.invariance_residual(s);
    if res > s.tol.max(1e-6) {
        return Err(Error::Validation(format!(
            "xi is not invariant under S: residual {res:.3e}"
        )));
    }
    let mut out: Vec<GcalCoefficient> = Vec::with_capacity(2 * n_max as usize + 1);
    for direction in [1i64, -1i64] {
        let mut prev_arg = 0.0f64;
        let mut prev_theta = 0.0f64;
        let range: Box<dyn Iterator<Item = i64>> = if direction == 1 {
            Box::new(0..=n_max as i64)
        } else {
            Box::new((-(n_max as i64)..0).rev())
        };
        for n in range {
            // iterates of a validated map are symplectic by group closure;
            // re-checking the residual would reject large hyperbolic powers
            // whose entries cancel only up to eps * |S^n|^2
            let blocks = complexify_matrix(&s.iterate(n));
            let det_p = blocks.p.determinant();
            let x = solve_p(&blocks.p, &v.alpha, "gcal_coefficient")?;
            let me: Complex64 = v
                .alpha
                .iter()
                .zip(x.iter())
                .map(|(a, xi)| a.conj() * xi)
                .sum();
            let w = det_p * me;
            if w.norm() == 0.0 {
                return Err(Error::Singular {
                    context: format!("gcal at n = {n}"),
                    cond: f64::INFINITY,
                });
            }
            let arg = w.arg();
            let theta = if n == 0 {
                arg
            } else {
                prev_theta + wrap_to_pi(arg - prev_arg)
            };
            prev_arg = arg;
            prev_theta = theta;
            // value = w^{-1/2} on the tracked branch
            let value = Complex64::from_polar(w.norm().powf(-0.5), -0.5 * theta);
            if direction == 1 || n < 0 {
                out.push(GcalCoefficient {
                    n,
                    value,
                    det_p,
                    matrix_element: me,
                });
            }
        }
    }
    out.sort_by_key(|g| g.n);
    Ok(out)
}

/// Metaplectic normalization factor eta and its two identity residuals.
#[derive(Debug, Clone)]
pub struct EtaFactor {
    pub eta: Complex64,
    /// |det((I+iJ) + S(I-iJ)) - 4^m det P| / scale.
    pub daub_residual: f64,
    /// | |det P| - 2^{-m} det(I + S^t S)^{1/2} | / scale.
    pub beta_residual: f64,
}

pub fn metaplectic_eta(s: &SymplecticMap) -> Result<EtaFactor> {
    let m = s.m;
    let blocks = complexify(s);
    let det_p = blocks.p.determinant();
    if det_p.norm() < 1e-300 {
        return Err(Error::Singular {
            context: "metaplectic_eta".into(),
            cond: f64::INFINITY,
        });
    }
    let eta = Complex64::new(1.0, 0.0) / det_p;

    let n = 2 * m;
    let j = standard_j(m);
    let mut big = CMat::zeros(n, n);
    let mat = s.matrix();
    let sj = mat * &j;
    for r in 0..n {
        for c in 0..n {
            let idc = if r == c { 1.0 } else { 0.0 };
            // (I + iJ) + S(I - iJ)
            big[(r, c)] = Complex64::new(idc + mat[(r, c)], j[(r, c)] - sj[(r, c)]);
        }
    }
    let lhs = big.determinant();
    let rhs = det_p * 4f64.powi(m as i32);
    let scale = rhs.norm().max(1.0);
    let daub_residual = (lhs - rhs).norm() / scale;

    let sts = mat.transpose() * mat + DMatrix::identity(n, n);
    let det_sts = sts.determinant();
    let beta_sq = 2f64.powi(-(m as i32)) * det_sts.sqrt();
    let beta_residual = (det_p.norm() - beta_sq).abs() / beta_sq.max(1.0);

    Ok(EtaFactor {
        eta,
        daub_residual,
        beta_residual,
    })
}

/// Scaling-and-squaring matrix exponential (Taylor core).
pub fn matrix_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().fold(0.0f64, |acc, &x| acc.max(x.abs())) * n as f64;
    let s = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = DMatrix::<f64>::identity(n, n);
    for k in 1..=24 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    let mut out = sum;
    for _ in 0..s {
        out = &out * &out;
    }
    out
}

/// Random elements used by the invariant suites.
pub mod random {
    use super::*;
    use rand::Rng;

    fn symmetric(m: usize, rng: &mut impl Rng, scale: f64) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = rng.random_range(-scale..scale);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    /// exp(Omega^{-1} R) with R symmetric: a generic symplectic matrix.
    pub fn symplectic(m: usize, rng: &mut impl Rng, scale: f64) -> DMatrix<f64> {
        let r = symmetric(2 * m, rng, scale);
        let omega = standard_omega(m);
        matrix_exp(&(-(&omega) * r))
    }

    /// exp(X) with X symmetric in sp(2m): positive definite symmetric symplectic.
    pub fn pds(m: usize, rng: &mut impl Rng, scale: f64) -> DMatrix<f64> {
        let a = symmetric(m, rng, scale);
        let b = symmetric(m, rng, scale);
        let mut x = DMatrix::zeros(2 * m, 2 * m);
        x.view_mut((0, 0), (m, m)).copy_from(&a);
        x.view_mut((0, m), (m, m)).copy_from(&b);
        x.view_mut((m, 0), (m, m)).copy_from(&b);
        x.view_mut((m, m), (m, m)).copy_from(&(-&a));
        matrix_exp(&x)
    }

    /// exp of the u(m) embedding [[A, -B], [B, A]], A antisymmetric, B symmetric.
    pub fn unitary_symplectic(m: usize, rng: &mut impl Rng, scale: f64) -> DMatrix<f64> {
        let b = symmetric(m, rng, scale);
        let mut a = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..i {
                let v = rng.random_range(-scale..scale);
                a[(i, j)] = v;
                a[(j, i)] = -v;
            }
        }
        let mut x = DMatrix::zeros(2 * m, 2 * m);
        x.view_mut((0, 0), (m, m)).copy_from(&a);
        x.view_mut((0, m), (m, m)).copy_from(&(-&b));
        x.view_mut((m, 0), (m, m)).copy_from(&b);
        x.view_mut((m, m), (m, m)).copy_from(&a);
        matrix_exp(&x)
    }

    /// U^t Lambda U with lambda_1 = 0: a positive definite symmetric
    /// symplectic map with a guaranteed 2-dimensional V(1) and an invariant
    /// vector (returned alongside).
    pub fn pds_with_invariant(
        m: usize,
        rng: &mut impl Rng,
        scale: f64,
    ) -> (DMatrix<f64>, DVector<f64>, Vec<f64>) {
        let u = unitary_symplectic(m, rng, scale.min(1.0));
        let mut lambdas = vec![0.0f64];
        for _ in 1..m {
            lambdas.push(rng.random_range(0.2..1.4));
        }
        let mut diag = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            diag[(i, i)] = lambdas[i].exp();
            diag[(m + i, m + i)] = (-lambdas[i]).exp();
        }
        let s = u.transpose() * diag * &u;
        let xi = u.transpose().column(0).into_owned();
        let mut sorted = lambdas.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        (s, xi, sorted)
    }
}

/// Change of frame making a Hermitian chart metric G the identity, so that
/// monodromies and tangent vectors can be expressed in the standard basis
/// used by the expansion coefficients.
#[derive(Debug, Clone)]
pub struct BasisAdaptation {
    c: CMat,
    c_inv: CMat,
}

impl BasisAdaptation {
    /// G = L L^*; the new complex coordinates are s = L^t u_c.
    pub fn from_metric(g: &CMat) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(g.clone()).ok_or_else(|| {
            Error::Validation("chart metric is not positive definite".to_string())
        })?;
        let l = chol.l();
        let c_inv = l.transpose();
        let c = l
            .adjoint()
            .try_inverse()
            .ok_or_else(|| Error::Singular {
                context: "basis adaptation".into(),
                cond: f64::INFINITY,
            })?
            .conjugate();
        Ok(BasisAdaptation { c, c_inv })
    }

    pub fn identity(m: usize) -> Self {
        BasisAdaptation {
            c: CMat::identity(m, m),
            c_inv: CMat::identity(m, m),
        }
    }

    /// Adapted complex coordinates of a real chart tangent vector.
    pub fn vector(&self, xi: &DVector<f64>) -> CVec {
        let m = self.c.nrows();
        let uc = CVec::from_iterator(m, (0..m).map(|i| Complex64::new(xi[i], xi[m + i])));
        &self.c_inv * uc
    }

    /// Adapted standard-basis symplectic map of a real chart monodromy.
    pub fn monodromy(&self, mat: &DMatrix<f64>, tol: f64) -> Result<SymplecticMap> {
        let blocks = complexify_matrix(mat);
        let p = &self.c_inv * &blocks.p * &self.c;
        let q = &self.c_inv * &blocks.q * self.c.conjugate();
        decomplexify(&ComplexBlocks { p, q }, tol)
    }
}
