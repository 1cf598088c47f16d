//! Finite-dimensional Toeplitz Hamiltonians in three exactly controllable
//! settings: truncated Bargmann-Fock space on C^m, radial-potential Bergman
//! spaces on C, and CP^1 spin spaces. Basis norms are kept in log space so
//! large levels k and cutoffs stay finite.

use crate::error::{Error, Result};
use crate::kernels::norm_sqr;
use crate::model::{KahlerModel, Potential, ScalarRep, SpherePoly};
use crate::poly::ZPoly;
use crate::quad::gauss_legendre;
use nalgebra::DMatrix;
use num_complex::Complex64;

type CMat = DMatrix<Complex64>;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SystemKind {
    FockTruncated,
    RadialBergman,
    SphereSpin,
}

/// A concrete Hermitian matrix model of the quantized Hamiltonian together
/// with the basis data needed for pointwise evaluation.
#[derive(Debug, Clone)]
pub struct QuantizedSystem {
    pub kind: SystemKind,
    pub k: u32,
    pub dim: usize,
    pub h_matrix: CMat,
    /// Monomial exponents of the basis elements.
    pub basis: Vec<Vec<u32>>,
    /// ln of the squared norms of the monomial basis elements.
    pub log_norms: Vec<f64>,
    pub model: KahlerModel,
    /// Hermiticity defect of the assembled matrix before symmetrization.
    pub hermiticity_residual: f64,
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n + 1];
    let mut acc = 0.0;
    for i in 1..=n {
        acc += (i as f64).ln();
        v[i] = acc;
    }
    v
}

fn multi_indices(m: usize, max_total: usize) -> Vec<Vec<u32>> {
    // enumerate by total degree, then lexicographically within each degree
    let mut out = vec![];
    let mut cur = vec![0u32; m];
    fn rec(m: usize, pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == m - 1 {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[pos] = v;
            rec(m, pos + 1, left - v, cur, out);
        }
    }
    for total in 0..=max_total {
        rec(m, 0, total as u32, &mut cur, &mut out);
    }
    out
}

/// Cutoff rule for Fock truncation: N = max(ceil(4 k |z|^2), 64).
pub fn fock_cutoff(k: u32, z_eval: &[Complex64]) -> usize {
    ((4.0 * k as f64 * norm_sqr(z_eval)).ceil() as usize).max(64)
}

/// log of the relative coherent-state mass beyond total degree N at z
/// (a Poisson(k |z|^2) upper-tail in the total degree).
pub fn husimi_tail_log(k: u32, z: &[Complex64], n_cut: usize) -> f64 {
    let lam = k as f64 * norm_sqr(z);
    if lam == 0.0 {
        return f64::NEG_INFINITY;
    }
    // sum_{j > N} e^{-lam} lam^j / j! in log space
    let mut lterm = -lam + (n_cut as f64 + 1.0) * lam.ln() - ln_factorials(n_cut + 1)[n_cut + 1];
    let mut acc = f64::NEG_INFINITY;
    let mut j = n_cut + 1;
    loop {
        acc = if acc == f64::NEG_INFINITY {
            lterm
        } else {
            let hi = acc.max(lterm);
            hi + ((acc - hi).exp() + (lterm - hi).exp()).ln()
        };
        j += 1;
        let ratio = lam.ln() - (j as f64).ln();
        lterm += ratio;
        if ratio < -0.5 && lterm < acc - 40.0 {
            break;
        }
        if j > n_cut + 200_000 {
            break;
        }
    }
    acc
}

fn symmetrize(mat: &mut CMat) -> f64 {
    // in place: the matrices can be large (dim ~ 4 k E)
    let n = mat.nrows();
    let mut resid = 0.0f64;
    for i in 0..n {
        let d = mat[(i, i)];
        resid = resid.max(2.0 * d.im.abs());
        mat[(i, i)] = Complex64::new(d.re, 0.0);
        for j in (i + 1)..n {
            let a = mat[(i, j)];
            let b = mat[(j, i)];
            resid = resid.max((a - b.conj()).norm());
            let avg = 0.5 * (a + b.conj());
            mat[(i, j)] = avg;
            mat[(j, i)] = avg.conj();
        }
    }
    resid
}

/// Toeplitz matrix of a polynomial Hamiltonian on truncated Bargmann-Fock
/// space: entries <e_a, H e_b> / (|e_a| |e_b|) over monomials z^a, |a| <= N,
/// from the closed-form Gaussian moments of the flat metric.
pub fn build_fock(model: &KahlerModel, k: u32, cutoff: usize) -> Result<QuantizedSystem> {
    let m = model.m;
    match &model.potential {
        Potential::Series { phi } => {
            if !phi.sub(&ZPoly::norm_squared(m)).is_zero() {
                return Err(Error::Unsupported(
                    "Fock builder requires the flat potential".into(),
                ));
            }
        }
        _ => {
            return Err(Error::Unsupported(
                "Fock builder requires the flat potential".into(),
            ))
        }
    }
    let h = match &model.hamiltonian {
        ScalarRep::Poly(p) => p.clone(),
        _ => return Err(Error::Unsupported("non-polynomial Hamiltonian".into())),
    };
    let basis = multi_indices(m, cutoff);
    let dim = basis.len();
    let kf = k as f64;
    let max_exp = cutoff + h.total_degree() + 2;
    let lnf = ln_factorials(max_exp);
    // |z^a|^2 = prod_i 2 pi a_i! / k^{a_i + 1}
    let log_norm = |a: &[u32]| -> f64 {
        a.iter()
            .map(|&ai| TWO_PI.ln() + lnf[ai as usize] - (ai as f64 + 1.0) * kf.ln())
            .sum()
    };
    let log_norms: Vec<f64> = basis.iter().map(|a| log_norm(a)).collect();
    let index: std::collections::BTreeMap<Vec<u32>, usize> = basis
        .iter()
        .enumerate()
        .map(|(i, a)| (a.clone(), i))
        .collect();
    let mut mat = CMat::zeros(dim, dim);
    for ((jj, kk), coef) in h.terms() {
        // <e_a, c z^J z̄^K e_b> nonzero iff a + K = b + J
        for (bi, b) in basis.iter().enumerate() {
            let target: Option<Vec<u32>> = b
                .iter()
                .zip(jj.iter().zip(kk.iter()))
                .map(|(&bv, (&jv, &kv))| {
                    let s = bv as i64 + jv as i64 - kv as i64;
                    if s < 0 {
                        None
                    } else {
                        Some(s as u32)
                    }
                })
                .collect();
            let Some(a) = target else { continue };
            let Some(&ai) = index.get(&a) else { continue };
            // moment exponent a + K (= b + J)
            let log_mom: f64 = a
                .iter()
                .zip(kk.iter())
                .map(|(&av, &kv)| {
                    let e = av as usize + kv as usize;
                    TWO_PI.ln() + lnf[e] - (e as f64 + 1.0) * kf.ln()
                })
                .sum();
            mat[(ai, bi)] += coef * (log_mom - 0.5 * (log_norms[ai] + log_norms[bi])).exp();
        }
    }
    let hermiticity_residual = symmetrize(&mut mat);
    Ok(QuantizedSystem {
        kind: SystemKind::FockTruncated,
        k,
        dim,
        h_matrix: mat,
        basis,
        log_norms,
        model: model.clone(),
        hermiticity_residual,
    })
}

/// Radial moment machinery for m = 1 Bergman builds:
/// mu(s) = 4 pi Int r^{2s+1} e^{-k phi(r)} G(r) dr, returned as ln mu.
pub struct RadialMoments<'a> {
    model: &'a KahlerModel,
    k: f64,
}

impl<'a> RadialMoments<'a> {
    pub fn new(model: &'a KahlerModel, k: u32) -> Self {
        RadialMoments { model, k: k as f64 }
    }

    fn log_integrand(&self, s: f64, r: f64) -> f64 {
        let z = [Complex64::new(r, 0.0)];
        let g = self.model.metric(&z)[(0, 0)].re;
        if g <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (2.0 * s + 1.0) * r.ln() - self.k * self.model.phi_value(&z) + g.ln()
    }

    fn window(&self, s: f64) -> (f64, f64, f64) {
        let r_max = self.model.domain_radius.min(40.0);
        let n = 6000;
        let mut fmax = f64::NEG_INFINITY;
        let mut r_at = 1.0;
        for i in 1..=n {
            let r = r_max * (i as f64 / n as f64).powi(2); // denser near 0
            let f = self.log_integrand(s, r);
            if f > fmax {
                fmax = f;
                r_at = r;
            }
        }
        let drop = 90.0;
        let mut lo = r_at;
        while lo > 1e-12 && self.log_integrand(s, lo) > fmax - drop {
            lo *= 0.85;
        }
        let mut hi = r_at;
        while hi < r_max && self.log_integrand(s, hi) > fmax - drop {
            hi *= 1.07;
        }
        (lo, hi.min(r_max), fmax)
    }

    /// ln of mu(s) by composite Gauss-Legendre quadrature.
    pub fn log_moment(&self, s: usize) -> Result<f64> {
        let sf = s as f64;
        let (lo, hi, fmax) = self.window(sf);
        let rule = gauss_legendre(32)?;
        let panels = 16;
        let mut acc = 0.0;
        for p in 0..panels {
            let a = lo + (hi - lo) * p as f64 / panels as f64;
            let b = lo + (hi - lo) * (p + 1) as f64 / panels as f64;
            acc += rule.integrate_on(a, b, |r| (self.log_integrand(sf, r) - fmax).exp());
        }
        if !(acc > 0.0) {
            return Err(Error::Quadrature(format!(
                "radial moment s = {s} underflowed"
            )));
        }
        Ok((4.0 * std::f64::consts::PI).ln() + fmax + acc.ln())
    }

    /// Same moment with the composite trapezoid rule (independent oracle).
    pub fn log_moment_trapezoid(&self, s: usize, n: usize) -> Result<f64> {
        let sf = s as f64;
        let (lo, hi, fmax) = self.window(sf);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let r = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * (self.log_integrand(sf, r) - fmax).exp();
        }
        acc *= h;
        Ok((4.0 * std::f64::consts::PI).ln() + fmax + acc.ln())
    }
}

/// Bergman-space Toeplitz matrix for a radial polynomial potential on C.
/// Monomials stay orthogonal; norms come from adaptive radial quadrature.
pub fn build_radial_bergman(model: &KahlerModel, k: u32, cutoff: usize) -> Result<QuantizedSystem> {
    if model.m != 1 {
        return Err(Error::Unsupported("radial Bergman builds are m = 1".into()));
    }
    match &model.potential {
        Potential::Series { phi } => {
            for ((j, kk), _) in phi.terms() {
                if j != kk {
                    return Err(Error::Unsupported(
                        "radial Bergman build requires a radial potential".into(),
                    ));
                }
            }
        }
        _ => {
            return Err(Error::Unsupported(
                "radial Bergman build requires a polynomial potential".into(),
            ))
        }
    }
    let h = match &model.hamiltonian {
        ScalarRep::Poly(p) => p.clone(),
        _ => return Err(Error::Unsupported("non-polynomial Hamiltonian".into())),
    };
    let moments = RadialMoments::new(model, k);
    let dim = cutoff + 1;
    let log_norms: Vec<f64> = (0..dim)
        .map(|j| moments.log_moment(j))
        .collect::<Result<_>>()?;
    let mut mat = CMat::zeros(dim, dim);
    for ((jj, kk), coef) in h.terms() {
        let p = jj[0] as i32;
        let q = kk[0] as i32;
        for b in 0..dim as i32 {
            let a = b + p - q;
            if a < 0 || a >= dim as i32 {
                continue;
            }
            let s = (a + q) as usize; // = b + p
            let log_mom = moments.log_moment(s)?;
            mat[(a as usize, b as usize)] +=
                coef * (log_mom - 0.5 * (log_norms[a as usize] + log_norms[b as usize])).exp();
        }
    }
    let hermiticity_residual = symmetrize(&mut mat);
    let basis = (0..dim).map(|j| vec![j as u32]).collect();
    Ok(QuantizedSystem {
        kind: SystemKind::RadialBergman,
        k,
        dim,
        h_matrix: mat,
        basis,
        log_norms,
        model: model.clone(),
        hermiticity_residual,
    })
}

/// Spin-space Toeplitz matrix on H^0(CP^1, O(k)): (k+1) x (k+1), built from
/// exact Beta-function integrals against the Fubini-Study measure.
pub fn build_sphere_spin(h: &SpherePoly, k: u32, energy: f64) -> Result<QuantizedSystem> {
    if h.degree() > 3 {
        return Err(Error::Unsupported(
            "sphere Hamiltonians limited to degree <= 3".into(),
        ));
    }
    let model = KahlerModel::sphere(h.clone(), energy)?;
    let (num, dpow) = match &model.hamiltonian {
        ScalarRep::Rational { num, dpow } => (num.clone(), *dpow),
        ScalarRep::Poly(p) => (p.clone(), 0),
    };
    let dim = (k + 1) as usize;
    let lnf = ln_factorials(k as usize + dpow as usize + 2);
    // |w^j|^2 = 2 pi j! (k - j)! / (k + 1)!
    let log_norms: Vec<f64> = (0..dim)
        .map(|j| TWO_PI.ln() + lnf[j] + lnf[k as usize - j] - lnf[k as usize + 1])
        .collect();
    // beta moment at level k + d: 2 pi j! (k + d - j)! / (k + d + 1)!
    let kd = k as usize + dpow as usize;
    let beta_log = |j: usize| -> f64 { TWO_PI.ln() + lnf[j] + lnf[kd - j] - lnf[kd + 1] };
    let mut mat = CMat::zeros(dim, dim);
    for ((jj, kk), coef) in num.terms() {
        let mu = jj[0] as i32;
        let nu = kk[0] as i32;
        for b in 0..dim as i32 {
            let a = b + mu - nu;
            if a < 0 || a >= dim as i32 {
                continue;
            }
            let j = (a + nu) as usize; // = b + mu
            if j > kd {
                continue;
            }
            mat[(a as usize, b as usize)] +=
                coef * (beta_log(j) - 0.5 * (log_norms[a as usize] + log_norms[b as usize])).exp();
        }
    }
    let hermiticity_residual = symmetrize(&mut mat);
    let basis = (0..dim).map(|j| vec![j as u32]).collect();
    Ok(QuantizedSystem {
        kind: SystemKind::SphereSpin,
        k,
        dim,
        h_matrix: mat,
        basis,
        log_norms,
        model,
        hermiticity_residual,
    })
}

/// Eigenvalues and pointwise masses of the eigenspace projectors at a base
/// point; numerically clustered eigenvalues are merged into one atom.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub k: u32,
    pub z: Vec<Complex64>,
    /// merged eigenvalues, ascending
    pub eigenvalues: Vec<f64>,
    /// nonnegative masses Pi_{k,j}(z), metric contractions
    pub masses: Vec<f64>,
    pub total_mass: f64,
    /// diagonal Bergman kernel at z (independently summed over the basis)
    pub bergman_diag: f64,
    /// |total_mass - bergman_diag| / bergman_diag
    pub mass_residual: f64,
    /// total mass clipped away from small negative values
    pub clipped_mass: f64,
}

const CLUSTER_GAP: f64 = 1e-10;
const MASS_CLIP: f64 = -1e-12;

/// Relative Husimi tail tolerance for truncated Fock systems.
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

pub fn pointwise_masses(system: &QuantizedSystem, z: &[Complex64]) -> Result<SpectralData> {
    pointwise_masses_with_tail(system, z, DEFAULT_TAIL_TOL)
}

pub fn pointwise_masses_with_tail(
    system: &QuantizedSystem,
    z: &[Complex64],
    tail_tol: f64,
) -> Result<SpectralData> {
    let dim = system.dim;
    if system.kind == SystemKind::FockTruncated {
        let n_cut = system
            .basis
            .iter()
            .map(|a| a.iter().map(|&x| x as usize).sum::<usize>())
            .max()
            .unwrap_or(0);
        let tail = husimi_tail_log(system.k, z, n_cut);
        if tail > tail_tol.ln() {
            return Err(Error::Cutoff(format!(
                "coherent-state tail beyond the cutoff is e^{tail:.2} > {tail_tol:.1e}"
            )));
        }
    }
    // log-space evaluation of e_a(z) / (|e_a| e^{k phi / 2})
    let kf = system.k as f64;
    let phi = system.model.phi_value(z);
    let mut log_vals: Vec<Complex64> = Vec::with_capacity(dim);
    for (a, log_norm) in system.basis.iter().zip(&system.log_norms) {
        let mut re = -0.5 * log_norm - 0.5 * kf * phi;
        let mut im = 0.0;
        let mut zero = false;
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0 {
                continue;
            }
            let r = z[i].norm();
            if r == 0.0 {
                zero = true;
                break;
            }
            re += ai as f64 * r.ln();
            im += ai as f64 * z[i].arg();
        }
        log_vals.push(if zero {
            Complex64::new(f64::NEG_INFINITY, 0.0)
        } else {
            Complex64::new(re, im)
        });
    }
    let max_re = log_vals
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_re.is_finite() {
        return Err(Error::Validation("all basis elements vanish at z".into()));
    }
    let scaled: Vec<Complex64> = log_vals
        .iter()
        .map(|l| {
            if l.re.is_finite() {
                Complex64::from_polar((l.re - max_re).exp(), l.im)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let bergman_diag: f64 = scaled.iter().map(|v| v.norm_sqr()).sum::<f64>() * (2.0 * max_re).exp();

    // eigendecomposition, with a fast path for numerically diagonal matrices
    let scale = system
        .h_matrix
        .iter()
        .fold(0.0f64, |a, c| a.max(c.norm()))
        .max(1e-300);
    let mut off = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            if i != j {
                off = off.max(system.h_matrix[(i, j)].norm());
            }
        }
    }
    let (eigenvalues, masses_raw): (Vec<f64>, Vec<f64>) = if off <= 1e-14 * scale {
        let mut pairs: Vec<(f64, f64)> = (0..dim)
            .map(|i| {
                (
                    system.h_matrix[(i, i)].re,
                    scaled[i].norm_sqr() * (2.0 * max_re).exp(),
                )
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pairs.into_iter().unzip()
    } else {
        let eig = system.h_matrix.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
        let mut evals = Vec::with_capacity(dim);
        let mut masses = Vec::with_capacity(dim);
        for &j in &order {
            let col = eig.eigenvectors.column(j);
            let s: Complex64 = col.iter().zip(&scaled).map(|(c, v)| c.conj() * v).sum();
            evals.push(eig.eigenvalues[j]);
            masses.push(s.norm_sqr() * (2.0 * max_re).exp());
        }
        (evals, masses)
    };

    // merge clustered eigenvalues (projector traces are basis-independent)
    let width = eigenvalues
        .last()
        .copied()
        .unwrap_or(1.0)
        .max(eigenvalues.first().copied().unwrap_or(0.0).abs())
        .max(1.0);
    let mut merged_e = Vec::with_capacity(dim);
    let mut merged_m = Vec::with_capacity(dim);
    let mut clipped = 0.0;
    let mut i = 0;
    while i < dim {
        let mut j = i + 1;
        let mut wsum = masses_raw[i].max(0.0);
        let cluster_eig = eigenvalues[i];
        clipped += (masses_raw[i].min(0.0)).abs();
        if masses_raw[i] < MASS_CLIP {
            return Err(Error::Validation(format!(
                "mass {} below clip threshold",
                masses_raw[i]
            )));
        }
        while j < dim && (eigenvalues[j] - eigenvalues[j - 1]).abs() <= CLUSTER_GAP * width {
            clipped += (masses_raw[j].min(0.0)).abs();
            wsum += masses_raw[j].max(0.0);
            j += 1;
        }
        merged_e.push(cluster_eig);
        merged_m.push(wsum);
        i = j;
    }
    let total_mass: f64 = merged_m.iter().sum();
    let mass_residual = (total_mass - bergman_diag).abs() / bergman_diag.max(1e-300);
    Ok(SpectralData {
        k: system.k,
        z: z.to_vec(),
        eigenvalues: merged_e,
        masses: merged_m,
        total_mass,
        bergman_diag,
        mass_residual,
        clipped_mass: clipped,
    })
}
