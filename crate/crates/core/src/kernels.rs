//! Bargmann-Fock and metaplectic kernels on C^m and on the lifted circle
//! bundle, Heisenberg translations, and Gauss-Hermite quadrature oracles for
//! the factorization identities.
//!
//! Kernels are assembled as exp(log part) with the log part exposed so
//! large-k callers can stay in log space. The volume form on C^m is
//! omega^m/m! = 2^m dx dy, and on X = C^m x S^1 an extra dtheta / 2pi.

use crate::error::{Error, Result};
use crate::quad::gauss_hermite;
use crate::symplectic::{standard_omega, ComplexBlocks, SymplecticMap};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

type CVec = DVector<Complex64>;
type CMat = DMatrix<Complex64>;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// A point of the lifted model space X = C^m x S^1.
#[derive(Debug, Clone)]
pub struct LiftedPoint {
    pub z: Vec<Complex64>,
    pub theta: f64,
}

impl LiftedPoint {
    pub fn new(z: Vec<Complex64>, theta: f64) -> Self {
        let mut t = theta % TWO_PI;
        if t < 0.0 {
            t += TWO_PI;
        }
        LiftedPoint { z, theta: t }
    }

    pub fn base(z: Vec<Complex64>) -> Self {
        Self::new(z, 0.0)
    }

    pub fn rotate(&self, phi: f64) -> Self {
        Self::new(self.z.clone(), self.theta + phi)
    }
}

pub fn dot_zwbar(z: &[Complex64], w: &[Complex64]) -> Complex64 {
    z.iter().zip(w).map(|(a, b)| a * b.conj()).sum()
}

pub fn norm_sqr(z: &[Complex64]) -> f64 {
    z.iter().map(|a| a.norm_sqr()).sum()
}

/// log of the Bergman kernel (k/2pi)^m exp(k(z.w̄ - |z|^2/2 - |w|^2/2)).
pub fn bergman_log(k: u32, z: &[Complex64], w: &[Complex64]) -> Complex64 {
    let m = z.len() as f64;
    let kf = k as f64;
    Complex64::new(m * (kf / TWO_PI).ln(), 0.0)
        + Complex64::new(kf, 0.0) * (dot_zwbar(z, w) - 0.5 * (norm_sqr(z) + norm_sqr(w)))
}

pub fn bergman_kernel(k: u32, z: &[Complex64], w: &[Complex64]) -> Complex64 {
    bergman_log(k, z, w).exp()
}

/// log of the lifted kernel with the fiber phase i k (theta_x - theta_y).
pub fn lifted_log(k: u32, x: &LiftedPoint, y: &LiftedPoint) -> Complex64 {
    bergman_log(k, &x.z, &y.z) + Complex64::new(0.0, k as f64 * (x.theta - y.theta))
}

pub fn lifted_kernel(k: u32, x: &LiftedPoint, y: &LiftedPoint) -> Complex64 {
    lifted_log(k, x, y).exp()
}

/// Projector kernel for a general compatible complex structure J (2m x 2m
/// real coordinates, k = 1 normalization, value 1 on the diagonal):
/// exp(-i sigma(z, w) - sigma(z - w, J (z - w)) / 2)
/// with sigma the unit symplectic form. At J = J0 this is
/// e^{i Im(z w̄)} e^{-|z-w|^2/2}.
pub fn general_j_kernel(j: &DMatrix<f64>, z: &DVector<f64>, w: &DVector<f64>) -> Result<Complex64> {
    let n = j.nrows();
    if n % 2 != 0 || j.ncols() != n || z.len() != n || w.len() != n {
        return Err(Error::Validation("dimension mismatch".into()));
    }
    let m = n / 2;
    let id = DMatrix::identity(n, n);
    if (j * j + &id).amax() > 1e-10 {
        return Err(Error::Validation("J^2 != -I".into()));
    }
    let omega = standard_omega(m);
    if (j.transpose() * &omega * j - &omega).amax() > 1e-10 {
        return Err(Error::Validation(
            "J is not compatible with the form".into(),
        ));
    }
    // positivity of v -> sigma(v, Jv)
    let gram = &omega * j;
    let sym = 0.5 * (&gram + gram.transpose());
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&e| e <= 0.0) {
        return Err(Error::Validation(
            "sigma(v, Jv) is not positive definite".into(),
        ));
    }
    let sigma = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * &omega * b)[(0, 0)];
    let d = z - w;
    let quad = sigma(&d, &(j * &d));
    Ok(Complex64::new(-0.5 * quad, -sigma(z, w)).exp())
}

/// Unnormalized coherent state centered at 0 in the weighted representation.
pub fn coherent_state(k: u32) -> impl Fn(&[Complex64]) -> Complex64 {
    move |z| Complex64::new(-0.5 * k as f64 * norm_sqr(z), 0.0).exp()
}

/// Squared norm of the unnormalized coherent state: (2 pi / k)^m.
pub fn coherent_norm_sqr(k: u32, m: usize) -> f64 {
    (TWO_PI / k as f64).powi(m as i32)
}

/// Heisenberg translation by w on weighted-representation states:
/// (beta(w) F)(z) = e^{i k Im(z.w̄)} F(z - w).
pub fn heisenberg_translate<F>(
    k: u32,
    w: Vec<Complex64>,
    f: F,
) -> impl Fn(&[Complex64]) -> Complex64
where
    F: Fn(&[Complex64]) -> Complex64,
{
    move |z: &[Complex64]| {
        let shifted: Vec<Complex64> = z.iter().zip(&w).map(|(a, b)| a - b).collect();
        let phase = Complex64::new(0.0, k as f64 * dot_zwbar(z, &w).im).exp();
        phase * f(&shifted)
    }
}

/// Closed form of beta(w) applied to the coherent state at 0:
/// exp(k [z.w̄ - |z|^2/2 - |w|^2/2]).
pub fn translated_coherent_log(k: u32, w: &[Complex64], z: &[Complex64]) -> Complex64 {
    Complex64::new(k as f64, 0.0) * (dot_zwbar(z, w) - 0.5 * (norm_sqr(z) + norm_sqr(w)))
}

/// Cocycle phase in beta(w1) beta(w2) = e^{-i k Im(w1.w̄2)} beta(w1 + w2).
pub fn heisenberg_cocycle(k: u32, w1: &[Complex64], w2: &[Complex64]) -> Complex64 {
    Complex64::new(0.0, -(k as f64) * dot_zwbar(w1, w2).im).exp()
}

/// Kernel data of a quantized linear symplectic map at level k.
#[derive(Debug, Clone)]
pub struct MetaplecticKernelSpec {
    pub k: u32,
    pub blocks: ComplexBlocks,
    /// Square root of det P entering the prefactor; principal branch by
    /// default, callers tracking the double cover may flip the sign.
    pub sqrt_det_p: Complex64,
}

impl MetaplecticKernelSpec {
    pub fn new(k: u32, blocks: ComplexBlocks) -> Result<Self> {
        let r = blocks.max_folland_residual();
        if r > 1e-8 {
            return Err(Error::Validation(format!(
                "metaplectic blocks fail the symplectic identities: residual {r:.3e}"
            )));
        }
        let sqrt_det_p = blocks.p.determinant().sqrt();
        Ok(MetaplecticKernelSpec {
            k,
            blocks,
            sqrt_det_p,
        })
    }

    pub fn from_map(k: u32, s: &SymplecticMap) -> Result<Self> {
        Self::new(k, crate::symplectic::complexify(s))
    }

    pub fn dim(&self) -> usize {
        self.blocks.p.nrows()
    }

    /// Image of u under the real-linear map: P u + Q ū.
    pub fn apply(&self, u: &CVec) -> CVec {
        &self.blocks.p * u + &self.blocks.q * u.conjugate()
    }
}

fn bilinear(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// log of the lifted metaplectic kernel (prefactor, fiber phases and the
/// Gaussian weights of both arguments included).
pub fn metaplectic_log(
    spec: &MetaplecticKernelSpec,
    x: &LiftedPoint,
    y: &LiftedPoint,
) -> Result<Complex64> {
    let m = spec.dim();
    let kf = spec.k as f64;
    let p = &spec.blocks.p;
    let q = &spec.blocks.q;
    let lu = p.clone().lu();
    if lu.determinant().norm() < 1e-300 {
        return Err(Error::Singular {
            context: "metaplectic kernel".into(),
            cond: f64::INFINITY,
        });
    }
    let z = CVec::from_column_slice(&x.z);
    let wbar = CVec::from_column_slice(&y.z).conjugate();
    let pinv_z = lu.solve(&z).ok_or_else(|| Error::Singular {
        context: "metaplectic kernel".into(),
        cond: f64::INFINITY,
    })?;
    let pinv_q_wbar = lu.solve(&(q * &wbar)).ok_or_else(|| Error::Singular {
        context: "metaplectic kernel".into(),
        cond: f64::INFINITY,
    })?;
    // 1/2 z^t (Q̄ P^{-1}) z + w̄^t P^{-1} z - 1/2 w̄^t (P^{-1} Q) w̄
    let quad = 0.5 * bilinear(&z, &(q.conjugate() * &pinv_z)) + bilinear(&wbar, &pinv_z)
        - 0.5 * bilinear(&wbar, &pinv_q_wbar);
    let log_pref = Complex64::new(m as f64 * (kf / TWO_PI).ln(), 0.0) - spec.sqrt_det_p.ln();
    let lift = Complex64::new(
        -0.5 * kf * (norm_sqr(&x.z) + norm_sqr(&y.z)),
        kf * (x.theta - y.theta),
    );
    Ok(log_pref + Complex64::new(kf, 0.0) * quad + lift)
}

pub fn metaplectic_kernel(
    spec: &MetaplecticKernelSpec,
    x: &LiftedPoint,
    y: &LiftedPoint,
) -> Result<Complex64> {
    Ok(metaplectic_log(spec, x, y)?.exp())
}

/// Tensor Gauss-Hermite sum over `dims` real dimensions, parallel over the
/// leading axis: sum of prod(w_i) * f(node).
fn gh_tensor_sum<F>(dims: usize, order: usize, f: F) -> Result<Complex64>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let rule = gauss_hermite(order)?;
    let nodes = rule.nodes;
    let weights = rule.weights;
    let total: Complex64 = (0..order)
        .into_par_iter()
        .map(|i0| {
            let mut point = vec![0.0f64; dims];
            point[0] = nodes[i0];
            let mut idx = vec![0usize; dims];
            let mut acc = Complex64::new(0.0, 0.0);
            loop {
                for d in 1..dims {
                    point[d] = nodes[idx[d]];
                }
                let mut w = weights[i0];
                for d in 1..dims {
                    w *= weights[idx[d]];
                }
                acc += w * f(&point);
                let mut d = 1;
                loop {
                    if d >= dims {
                        return acc;
                    }
                    idx[d] += 1;
                    if idx[d] < order {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
            }
        })
        .sum();
    Ok(total)
}

/// Result of checking a kernel identity by quadrature.
#[derive(Debug, Clone)]
pub struct QuadratureCheck {
    pub quadrature: Complex64,
    pub closed_form: Complex64,
    pub relative_residual: f64,
}

/// Verifies K_{k,A}(x, y) = (det P*)^{1/2} Int_X Pi_k(x, Â u) Pi_k(u, y) dVol
/// by Gauss-Hermite quadrature. The fiber integral is exact (the degree-k
/// phases cancel), leaving a 2m-dimensional Gaussian integral.
pub fn toep_met_factorization_check(
    spec: &MetaplecticKernelSpec,
    x: &LiftedPoint,
    y: &LiftedPoint,
    order: usize,
) -> Result<QuadratureCheck> {
    let m = spec.dim();
    if m > 2 {
        return Err(Error::Unsupported(
            "quadrature oracle limited to m <= 2".into(),
        ));
    }
    let kf = spec.k as f64;
    let closed_form = metaplectic_kernel(spec, x, y)?;

    let z = x.z.clone();
    let w = y.z.clone();
    let fiber = Complex64::new(0.0, kf * (x.theta - y.theta));
    if kf * (norm_sqr(&z) + norm_sqr(&w) + 20.0) > 600.0 {
        return Err(Error::Quadrature(
            "exponent too large for direct accumulation; reduce k".into(),
        ));
    }
    // stack-array integrand: the node loop runs order^{2m} times
    let mut p_arr = [[Complex64::new(0.0, 0.0); 2]; 2];
    let mut q_arr = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..m {
        for j in 0..m {
            p_arr[i][j] = spec.blocks.p[(i, j)];
            q_arr[i][j] = spec.blocks.q[(i, j)];
        }
    }
    let mut z_arr = [Complex64::new(0.0, 0.0); 2];
    let mut w_arr = [Complex64::new(0.0, 0.0); 2];
    for i in 0..m {
        z_arr[i] = z[i];
        w_arr[i] = w[i];
    }
    let const_part = -0.5 * (norm_sqr(&z) + norm_sqr(&w));
    let sqrt_k = kf.sqrt();
    let integrand = move |t: &[f64]| -> Complex64 {
        // u = (t_x + i t_y)/sqrt(k): the e^{-k|u|^2} factor is the GH weight
        let mut u = [Complex64::new(0.0, 0.0); 2];
        for i in 0..m {
            u[i] = Complex64::new(t[i], t[m + i]) / sqrt_k;
        }
        let mut expo = Complex64::new(const_part, 0.0);
        for i in 0..m {
            let mut au_i = Complex64::new(0.0, 0.0);
            for j in 0..m {
                au_i += p_arr[i][j] * u[j] + q_arr[i][j] * u[j].conj();
            }
            expo += z_arr[i] * au_i.conj()
                + u[i] * w_arr[i].conj()
                + 0.5 * (u[i].norm_sqr() - au_i.norm_sqr());
        }
        (Complex64::new(kf, 0.0) * expo + fiber).exp()
    };
    let sum = gh_tensor_sum(2 * m, order, integrand)?;
    // (k/2pi)^{2m} from two kernels, 2^m k^{-m} from dVol and the substitution
    let pref = (kf / TWO_PI).powi(2 * m as i32) * (2.0 / kf).powi(m as i32);
    let quadrature = spec.sqrt_det_p.conj() * pref * sum;
    let relative_residual = (quadrature - closed_form).norm() / closed_form.norm();
    Ok(QuadratureCheck {
        quadrature,
        closed_form,
        relative_residual,
    })
}

/// Result of the invariant-state matrix element check.
#[derive(Debug, Clone)]
pub struct BpuCheck {
    pub quadrature: Complex64,
    pub closed_form: Complex64,
    /// Relative residual against the P*-orientation closed form.
    pub relative_residual: f64,
    /// Relative residual against the opposite (P) orientation.
    pub alt_orientation_residual: f64,
}

/// Evaluates <M^{-1} v, P_Xi v> two ways: nested Gauss-Hermite quadrature
/// over C^m x R, and the closed form
/// (k/2pi)^{-m-1/2} (ᾱ (P*)^{-1} α)^{-1/2} (det P*)^{-1/2}.
pub fn bpu_matrix_element(
    s: &SymplecticMap,
    alpha: &CVec,
    k: u32,
    order: usize,
) -> Result<BpuCheck> {
    let m = s.dim();
    if m > 2 {
        return Err(Error::Unsupported(
            "quadrature oracle limited to m <= 2".into(),
        ));
    }
    let kf = k as f64;
    let blocks = crate::symplectic::complexify(s);
    let p_star: CMat = blocks.p.adjoint();
    let q_star: CMat = blocks.q.adjoint();
    let alpha_norm2 = alpha.iter().map(|a| a.norm_sqr()).sum::<f64>();
    if alpha_norm2 == 0.0 {
        return Err(Error::Input("alpha must be nonzero".into()));
    }

    let closed = |p: &CMat| -> Result<Complex64> {
        let lu = p.clone().lu();
        let xv = lu.solve(alpha).ok_or_else(|| Error::Singular {
            context: "bpu closed form".into(),
            cond: f64::INFINITY,
        })?;
        let me: Complex64 = alpha.iter().zip(xv.iter()).map(|(a, b)| a.conj() * b).sum();
        let det = p.determinant();
        Ok((kf / TWO_PI).powf(-(m as f64) - 0.5) * me.sqrt().inv() * det.sqrt().inv())
    };
    let closed_form = closed(&p_star)?;
    let closed_alt = closed(&blocks.p)?;

    let pstar_inv = p_star
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular {
            context: "bpu quadrature".into(),
            cond: f64::INFINITY,
        })?;
    let qsps: CMat = &q_star * pstar_inv;
    let sqrt_det_pstar_inv = p_star.determinant().sqrt().inv();
    let t_scale = (2.0 / kf).sqrt() / alpha_norm2.sqrt();
    // stack-array integrand: the node loop runs order^{2m+1} times
    let mut q_arr = [[Complex64::new(0.0, 0.0); 2]; 2];
    let mut a_arr = [Complex64::new(0.0, 0.0); 2];
    for i in 0..m {
        a_arr[i] = alpha[i];
        for j in 0..m {
            q_arr[i][j] = qsps[(i, j)];
        }
    }
    let sqrt_k = kf.sqrt();
    let integrand = move |t: &[f64]| -> Complex64 {
        let mut zv = [Complex64::new(0.0, 0.0); 2];
        for i in 0..m {
            zv[i] = Complex64::new(t[i], t[m + i]) / sqrt_k;
        }
        let tt = t[2 * m] * t_scale;
        let mut zqz = Complex64::new(0.0, 0.0);
        let mut zbar_alpha = Complex64::new(0.0, 0.0);
        for i in 0..m {
            let mut qz_i = Complex64::new(0.0, 0.0);
            for j in 0..m {
                qz_i += q_arr[i][j] * zv[j];
            }
            zqz += zv[i] * qz_i;
            zbar_alpha += zv[i].conj() * a_arr[i];
        }
        // exponent: k [-1/2 z Q*(P*)^{-1} z - i t z̄.alpha]; the -k|z|^2 and
        // -k t^2 |alpha|^2/2 Gaussians are the GH weights
        (Complex64::new(kf, 0.0) * (-0.5 * zqz - Complex64::new(0.0, tt) * zbar_alpha)).exp()
    };
    let sum = gh_tensor_sum(2 * m + 1, order, integrand)?;
    let pref = (2.0 / kf).powi(m as i32) * t_scale;
    let quadrature = sqrt_det_pstar_inv * pref * sum;

    let relative_residual = (quadrature - closed_form).norm() / closed_form.norm();
    let alt_orientation_residual = (quadrature - closed_alt).norm() / closed_alt.norm();
    Ok(BpuCheck {
        quadrature,
        closed_form,
        relative_residual,
        alt_orientation_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::{complexify, random, standard_j, SymplecticMap};
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn bergman_examples() {
        let v = bergman_kernel(1, &[c(0.0, 0.0)], &[c(0.0, 0.0)]);
        assert_relative_eq!(v.re, 1.0 / TWO_PI, max_relative = 1e-14);

        let z = [c(0.3, -0.4), c(0.1, 0.2)];
        let v = bergman_kernel(5, &z, &z);
        assert_relative_eq!(v.re, (5.0 / TWO_PI).powi(2), max_relative = 1e-14);

        let v = bergman_kernel(1, &[c(1.0, 0.0)], &[c(0.0, 0.0)]);
        assert_relative_eq!(v.re, (-0.5f64).exp() / TWO_PI, max_relative = 1e-14);
    }

    #[test]
    fn lifted_examples() {
        let x = LiftedPoint::new(vec![c(0.2, 0.1)], 0.7);
        let y = LiftedPoint::new(vec![c(-0.3, 0.5)], 0.7);
        let a = lifted_kernel(3, &x, &y);
        let b = bergman_kernel(3, &x.z, &y.z);
        assert!((a - b).norm() < 1e-13 * b.norm());

        // fiber rotation equivariance
        let phi = 0.37;
        let rot = lifted_kernel(3, &x.rotate(phi), &y);
        let expect = a * c(0.0, 3.0 * phi).exp();
        assert!((rot - expect).norm() < 1e-13 * a.norm());

        // k=2, m=1, x=(0, pi/2), y=(0,0) -> -1/pi
        let x = LiftedPoint::new(vec![c(0.0, 0.0)], std::f64::consts::FRAC_PI_2);
        let y = LiftedPoint::base(vec![c(0.0, 0.0)]);
        let v = lifted_kernel(2, &x, &y);
        assert_relative_eq!(v.re, -1.0 / std::f64::consts::PI, max_relative = 1e-13);
        assert!(v.im.abs() < 1e-15);
    }

    #[test]
    fn hermitian_symmetry() {
        let x = LiftedPoint::new(vec![c(0.4, -0.2)], 1.3);
        let y = LiftedPoint::new(vec![c(-0.1, 0.8)], 2.9);
        let a = lifted_kernel(4, &x, &y);
        let b = lifted_kernel(4, &y, &x);
        assert!((a - b.conj()).norm() < 1e-13 * a.norm());
    }

    #[test]
    fn general_j_examples() {
        let j0 = standard_j(1);
        let z = DVector::from_vec(vec![0.5, -0.2]);
        let v = general_j_kernel(&j0, &z, &z).unwrap();
        assert_relative_eq!(v.re, 1.0, max_relative = 1e-14);

        let w = DVector::from_vec(vec![-0.1, 0.7]);
        let v = general_j_kernel(&j0, &z, &w).unwrap();
        let zc = c(z[0], z[1]);
        let wc = c(w[0], w[1]);
        let expect = (c(0.0, (zc * wc.conj()).im) - 0.5 * (zc - wc).norm_sqr()).exp();
        assert!((v - expect).norm() < 1e-14);

        // conjugated structures stay admissible
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let t = random::symplectic(1, &mut rng, 0.5);
            let tj = &t * &j0 * t.try_inverse().unwrap();
            assert!(general_j_kernel(&tj, &z, &w).is_ok());
        }
        // J^2 = -I but sigma(v, Jv) negative: rejected
        let mut bad = DMatrix::zeros(2, 2);
        bad[(0, 1)] = 1.0;
        bad[(1, 0)] = -1.0;
        assert!(general_j_kernel(&bad, &z, &w).is_err());
    }

    #[test]
    fn heisenberg_translation_closed_form() {
        let k = 3;
        let w = vec![c(0.4, -0.6)];
        let f = heisenberg_translate(k, w.clone(), coherent_state(k));
        for z in [[c(0.0, 0.0)], [c(0.9, 0.2)], [c(-0.5, 1.1)]] {
            let direct = f(&z);
            let closed = translated_coherent_log(k, &w, &z).exp();
            assert!((direct - closed).norm() < 1e-13 * closed.norm().max(1e-10));
        }
        // w = 0 acts as the identity
        let id = heisenberg_translate(k, vec![c(0.0, 0.0)], coherent_state(k));
        let z = [c(0.3, 0.3)];
        assert!((id(&z) - coherent_state(k)(&z)).norm() < 1e-15);
        // |beta(w) v| = 1 at its center
        let at_center = f(&[w[0]]);
        assert!((at_center.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn heisenberg_group_law() {
        let k = 1;
        let w1 = vec![c(1.0, 0.0)];
        let w2 = vec![c(0.0, 1.0)];
        let lhs = heisenberg_translate(
            k,
            w1.clone(),
            heisenberg_translate(k, w2.clone(), coherent_state(k)),
        );
        let rhs_state = heisenberg_translate(k, vec![w1[0] + w2[0]], coherent_state(k));
        let cocycle = heisenberg_cocycle(k, &w1, &w2);
        // Im(w1 w̄2) = Im(1 * (-i)) = -1, so the multiplier is e^{+i}
        assert!((cocycle - c(0.0, 1.0).exp()).norm() < 1e-15);
        for z in [[c(0.0, 0.0)], [c(0.7, -0.2)], [c(-1.0, 0.4)]] {
            let a = lhs(&z);
            let b = cocycle * rhs_state(&z);
            assert!((a - b).norm() < 1e-13 * b.norm().max(1e-12));
        }
    }

    #[test]
    fn heisenberg_cocycle_property_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        for _ in 0..20 {
            let k = rng.random_range(1..5u32);
            let w1 = vec![c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))];
            let w2 = vec![c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))];
            let z = [c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))];
            let lhs = heisenberg_translate(
                k,
                w1.clone(),
                heisenberg_translate(k, w2.clone(), coherent_state(k)),
            )(&z);
            let rhs = heisenberg_cocycle(k, &w1, &w2)
                * heisenberg_translate(k, vec![w1[0] + w2[0]], coherent_state(k))(&z);
            assert!((lhs - rhs).norm() < 1e-12 * rhs.norm().max(1e-12));
        }
    }

    #[test]
    fn metaplectic_kernel_reduces_to_lifted() {
        let spec = MetaplecticKernelSpec::from_map(4, &SymplecticMap::identity(1)).unwrap();
        let x = LiftedPoint::new(vec![c(0.3, 0.2)], 0.4);
        let y = LiftedPoint::new(vec![c(-0.6, 0.1)], 1.9);
        let a = metaplectic_kernel(&spec, &x, &y).unwrap();
        let b = lifted_kernel(4, &x, &y);
        assert!((a - b).norm() < 1e-13 * b.norm());
    }

    #[test]
    fn metaplectic_kernel_hyperbolic_origin() {
        let lam = 2f64.ln();
        let s = SymplecticMap::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![lam.exp(), (-lam).exp()])),
            1e-12,
        )
        .unwrap();
        let spec = MetaplecticKernelSpec::from_map(4, &s).unwrap();
        let o = LiftedPoint::base(vec![c(0.0, 0.0)]);
        let v = metaplectic_kernel(&spec, &o, &o).unwrap();
        let expect = (4.0 / TWO_PI) * lam.cosh().powf(-0.5);
        assert_relative_eq!(v.re, expect, max_relative = 1e-13);
        assert!(v.im.abs() < 1e-14);
    }

    #[test]
    fn metaplectic_unitary_preserves_modulus() {
        // |K_U(x, y)| = |Pi(x, Û y)| for unitary blocks (P unitary, Q = 0)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let u = random::unitary_symplectic(1, &mut rng, 0.8);
            let s = SymplecticMap::new(u, 1e-10).unwrap();
            let spec = MetaplecticKernelSpec::from_map(3, &s).unwrap();
            assert!(spec.blocks.q[(0, 0)].norm() < 1e-12);
            let x = LiftedPoint::new(vec![c(0.5, -0.3)], 0.2);
            let y = LiftedPoint::new(vec![c(0.1, 0.9)], 1.4);
            let a = metaplectic_kernel(&spec, &x, &y).unwrap();
            let uy = LiftedPoint::new(vec![spec.blocks.p[(0, 0)] * y.z[0]], y.theta);
            let b = lifted_kernel(3, &x, &uy);
            assert_relative_eq!(a.norm(), b.norm(), max_relative = 1e-12);
        }
    }

    #[test]
    fn metaplectic_kernel_along_translation_orbit() {
        // closed Gaussian form of the kernel against the flow of a linear
        // symbol: K(0, g^t 0) = (det P)^{-1/2} (k/2pi)^m
        // e^{-k t^2 (|a|^2 - ā P^{-1} Q ā)/2} with g^t 0 = -i a t, and the
        // t-integral equals (k/2pi)^{m-1/2} (det P)^{-1/2} (ā P^{-1} a)^{-1/2}
        // when the field is invariant under the map
        let lam = 0.5f64;
        let s = SymplecticMap::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, lam.exp(), 1.0, (-lam).exp()])),
            1e-12,
        )
        .unwrap();
        let k = 3u32;
        let kf = k as f64;
        let spec = MetaplecticKernelSpec::from_map(k, &s).unwrap();
        let alpha = [c(1.0, 0.0), c(0.0, 0.0)];
        let origin = LiftedPoint::base(vec![c(0.0, 0.0); 2]);
        let p = &spec.blocks.p;
        let q = &spec.blocks.q;
        let p_inv = p.clone().try_inverse().unwrap();
        let a_vec = CVec::from_column_slice(&alpha);
        let piq_abar = &p_inv * (q * a_vec.conjugate());
        let me_q: Complex64 = alpha.iter().map(|a| a.norm_sqr()).sum::<f64>() * c(1.0, 0.0)
            - a_vec
                .conjugate()
                .iter()
                .zip(piq_abar.iter())
                .map(|(x, y)| x * y)
                .sum::<Complex64>();
        let det_p = p.determinant();
        for t in [0.0, 0.4, 1.1] {
            let flowed = LiftedPoint::base(vec![
                -Complex64::i() * alpha[0] * t,
                -Complex64::i() * alpha[1] * t,
            ]);
            let lhs = metaplectic_kernel(&spec, &origin, &flowed).unwrap();
            let rhs = det_p.sqrt().inv() * (kf / TWO_PI).powi(2) * (-0.5 * kf * t * t * me_q).exp();
            assert!((lhs - rhs).norm() < 1e-12 * rhs.norm(), "t = {t}");
        }
        // t-integral by quadrature against the closed form; the invariance
        // identity turns |a|^2 - ā P^{-1} Q ā into ā P^{-1} a
        let rule = crate::quad::gauss_hermite(48).unwrap();
        let scale = (2.0 / (kf * me_q.re)).sqrt();
        let mut integral = Complex64::new(0.0, 0.0);
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let t = x * scale;
            let flowed = LiftedPoint::base(vec![
                -Complex64::i() * alpha[0] * t,
                -Complex64::i() * alpha[1] * t,
            ]);
            // divide out the Gauss-Hermite weight already in the kernel value
            let val = metaplectic_kernel(&spec, &origin, &flowed).unwrap();
            integral += w * val * (x * x).exp().min(f64::MAX) * c(1.0, 0.0);
        }
        integral *= scale;
        let me_inv: Complex64 = {
            let sol = p.clone().lu().solve(&a_vec).unwrap();
            a_vec
                .iter()
                .zip(sol.iter())
                .map(|(a, b)| a.conj() * b)
                .sum()
        };
        let expect = (kf / TWO_PI).powf(1.5) * det_p.sqrt().inv() * me_inv.sqrt().inv();
        assert!(
            (integral - expect).norm() < 1e-9 * expect.norm(),
            "{integral} vs {expect}"
        );
    }

    #[test]
    fn toep_met_identity_map_is_reproducing() {
        let spec = MetaplecticKernelSpec::from_map(4, &SymplecticMap::identity(1)).unwrap();
        let x = LiftedPoint::new(vec![c(0.4, 0.1)], 0.3);
        let y = LiftedPoint::new(vec![c(-0.2, 0.5)], 2.1);
        let chk = toep_met_factorization_check(&spec, &x, &y, 40).unwrap();
        assert!(chk.relative_residual < 1e-8, "{}", chk.relative_residual);
    }

    #[test]
    fn toep_met_reproducing_m2() {
        // the reproducing identity also holds on C^2
        let spec = MetaplecticKernelSpec::from_map(2, &SymplecticMap::identity(2)).unwrap();
        let x = LiftedPoint::new(vec![c(0.3, 0.1), c(-0.2, 0.4)], 0.7);
        let y = LiftedPoint::new(vec![c(0.1, -0.5), c(0.6, 0.0)], 0.0);
        let chk = toep_met_factorization_check(&spec, &x, &y, 24).unwrap();
        assert!(chk.relative_residual < 1e-9, "{}", chk.relative_residual);
    }

    #[test]
    fn toep_met_hyperbolic() {
        let lam = 2f64.ln();
        let s = SymplecticMap::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![lam.exp(), (-lam).exp()])),
            1e-12,
        )
        .unwrap();
        let spec = MetaplecticKernelSpec::from_map(4, &s).unwrap();
        let o = LiftedPoint::base(vec![c(0.0, 0.0)]);
        let chk = toep_met_factorization_check(&spec, &o, &o, 40).unwrap();
        assert!(chk.relative_residual < 1e-6, "{}", chk.relative_residual);
    }

    #[test]
    fn coherent_norm_matches_quadrature() {
        // |v|^2 = Int e^{-k|z|^2} 2^m dx dy = (2 pi / k)^m
        let k = 3u32;
        for m in [1usize, 2] {
            let rule = crate::quad::gauss_hermite(24).unwrap();
            let kf = k as f64;
            let mut total = 0.0;
            let dims = 2 * m;
            let mut idx = vec![0usize; dims];
            loop {
                let mut w = 1.0;
                for d in 0..dims {
                    w *= rule.weights[idx[d]];
                }
                total += w;
                let mut d = 0;
                loop {
                    if d >= dims {
                        break;
                    }
                    idx[d] += 1;
                    if idx[d] < rule.nodes.len() {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
                if d >= dims {
                    break;
                }
            }
            // substitution x = sqrt(k) t gives k^{-m}, volume 2^m
            let quad = total * (2.0 / kf).powi(m as i32);
            assert_relative_eq!(quad, coherent_norm_sqr(k, m), max_relative = 1e-12);
        }
    }

    #[test]
    fn toep_met_mixed_blocks_m2() {
        // hyperbolic on one mode, a rotation on the other
        let lam = 0.6f64;
        let th = 0.9f64;
        let mut s = DMatrix::zeros(4, 4);
        s[(0, 0)] = th.cos();
        s[(0, 2)] = -th.sin();
        s[(2, 0)] = th.sin();
        s[(2, 2)] = th.cos();
        s[(1, 1)] = lam.exp();
        s[(3, 3)] = (-lam).exp();
        let sm = SymplecticMap::new(s, 1e-12).unwrap();
        let spec = MetaplecticKernelSpec::from_map(2, &sm).unwrap();
        let x = LiftedPoint::new(vec![c(0.2, -0.1), c(0.3, 0.1)], 0.4);
        let y = LiftedPoint::new(vec![c(-0.1, 0.2), c(0.0, -0.3)], 1.1);
        let chk = toep_met_factorization_check(&spec, &x, &y, 28).unwrap();
        assert!(chk.relative_residual < 1e-7, "{}", chk.relative_residual);
    }

    #[test]
    fn toep_met_residual_decreases_with_order() {
        let lam = 0.8f64;
        let s = SymplecticMap::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![lam.exp(), (-lam).exp()])),
            1e-12,
        )
        .unwrap();
        let spec = MetaplecticKernelSpec::from_map(2, &s).unwrap();
        let x = LiftedPoint::new(vec![c(0.3, -0.2)], 0.0);
        let y = LiftedPoint::new(vec![c(0.1, 0.4)], 0.0);
        let mut last = f64::INFINITY;
        for order in [8, 16, 32] {
            let chk = toep_met_factorization_check(&spec, &x, &y, order).unwrap();
            assert!(
                chk.relative_residual < last,
                "order {order}: {} !< {last}",
                chk.relative_residual
            );
            last = chk.relative_residual;
        }
        assert!(last < 1e-8);
    }

    #[test]
    fn bpu_identity_example() {
        // S = I, alpha = 1, m = 1, k = 1 -> (2 pi)^{3/2}
        let s = SymplecticMap::identity(1);
        let alpha = CVec::from_vec(vec![c(1.0, 0.0)]);
        let chk = bpu_matrix_element(&s, &alpha, 1, 40).unwrap();
        let expect = TWO_PI.powf(1.5);
        assert_relative_eq!(chk.closed_form.re, expect, max_relative = 1e-14);
        assert!(chk.relative_residual < 1e-10, "{}", chk.relative_residual);
    }

    #[test]
    fn bpu_scaling_in_k() {
        let s = SymplecticMap::identity(1);
        let alpha = CVec::from_vec(vec![c(0.0, -1.0)]);
        let mut values = vec![];
        for k in [1u32, 2, 4] {
            let chk = bpu_matrix_element(&s, &alpha, k, 40).unwrap();
            assert!(chk.relative_residual < 1e-9);
            values.push((k as f64, chk.quadrature.norm()));
        }
        let slope = (values[2].1 / values[0].1).ln() / (values[2].0 / values[0].0).ln();
        assert!((slope + 1.5).abs() < 1e-6, "slope {slope}");
    }

    #[test]
    fn bpu_orientation_report() {
        // a map with complex det P and an invariant vector: the P* orientation
        // must match the quadrature, the P orientation must not.
        // Identity on mode 1 (xi = e1 invariant), an SL(2) shear on mode 2.
        let mut s = DMatrix::identity(4, 4);
        s[(3, 1)] = 0.8; // y2' = 0.8 x2 + y2
        let sm = SymplecticMap::new(s, 1e-10).unwrap();
        let xi = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let v = crate::symplectic::InvariantVector::from_real(xi);
        assert!(v.invariance_residual(&sm) < 1e-12);
        let det_p = complexify(&sm).p.determinant();
        assert!(
            det_p.im.abs() / det_p.norm() > 1e-3,
            "test matrix lost its phase asymmetry: {det_p}"
        );
        let chk = bpu_matrix_element(&sm, &v.alpha, 2, 40).unwrap();
        assert!(chk.relative_residual < 1e-6, "{}", chk.relative_residual);
        assert!(chk.alt_orientation_residual > 20.0 * chk.relative_residual.max(1e-12));
    }
}
