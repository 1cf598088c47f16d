//! Polynomials in (z, z̄) over C^m with complex coefficients.
//!
//! Terms are indexed by a pair of multi-indices (J, K) meaning z^J z̄^K.
//! This is enough for Kähler potentials in normal form, polynomial
//! Hamiltonians, and the exact chart-recentring transforms.

use num_complex::Complex64;
use std::collections::BTreeMap;

pub type MultiIndex = Vec<u8>;

#[derive(Debug, Clone, PartialEq)]
pub struct ZPoly {
    pub vars: usize,
    terms: BTreeMap<(MultiIndex, MultiIndex), Complex64>,
}

const DROP_EPS: f64 = 1e-300;

impl ZPoly {
    pub fn zero(vars: usize) -> Self {
        ZPoly {
            vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: usize, c: Complex64) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(&vec![0; vars], &vec![0; vars], c);
        p
    }

    /// c * z^J z̄^K
    pub fn monomial(vars: usize, j: &[u8], k: &[u8], c: Complex64) -> Self {
        assert_eq!(j.len(), vars);
        assert_eq!(k.len(), vars);
        let mut p = Self::zero(vars);
        p.add_term(j, k, c);
        p
    }

    /// |z|^2 = Σ z_i z̄_i
    pub fn norm_squared(vars: usize) -> Self {
        let mut p = Self::zero(vars);
        for i in 0..vars {
            let mut e = vec![0u8; vars];
            e[i] = 1;
            p.add_term(&e, &e, Complex64::new(1.0, 0.0));
        }
        p
    }

    pub fn add_term(&mut self, j: &[u8], k: &[u8], c: Complex64) {
        let key = (j.to_vec(), k.to_vec());
        let entry = self.terms.entry(key).or_insert(Complex64::new(0.0, 0.0));
        *entry += c;
        if entry.norm() < DROP_EPS {
            self.terms.remove(&(j.to_vec(), k.to_vec()));
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(MultiIndex, MultiIndex), &Complex64)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, j: &[u8], k: &[u8]) -> Complex64 {
        self.terms
            .get(&(j.to_vec(), k.to_vec()))
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn add(&self, other: &ZPoly) -> ZPoly {
        let mut out = self.clone();
        for ((j, k), c) in &other.terms {
            out.add_term(j, k, *c);
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> ZPoly {
        let mut out = Self::zero(self.vars);
        for ((j, k), a) in &self.terms {
            out.add_term(j, k, a * c);
        }
        out
    }

    pub fn sub(&self, other: &ZPoly) -> ZPoly {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &ZPoly) -> ZPoly {
        let mut out = Self::zero(self.vars);
        for ((j1, k1), c1) in &self.terms {
            for ((j2, k2), c2) in &other.terms {
                let j: Vec<u8> = j1.iter().zip(j2).map(|(a, b)| a + b).collect();
                let k: Vec<u8> = k1.iter().zip(k2).map(|(a, b)| a + b).collect();
                out.add_term(&j, &k, c1 * c2);
            }
        }
        out
    }

    /// Complex conjugate: swaps roles of z and z̄, conjugates coefficients.
    pub fn conj(&self) -> ZPoly {
        let mut out = Self::zero(self.vars);
        for ((j, k), c) in &self.terms {
            out.add_term(k, j, c.conj());
        }
        out
    }

    /// ∂/∂z_i
    pub fn d_z(&self, i: usize) -> ZPoly {
        let mut out = Self::zero(self.vars);
        for ((j, k), c) in &self.terms {
            if j[i] > 0 {
                let mut jj = j.clone();
                jj[i] -= 1;
                out.add_term(&jj, k, c * (j[i] as f64));
            }
        }
        out
    }

    /// ∂/∂z̄_i
    pub fn d_zbar(&self, i: usize) -> ZPoly {
        let mut out = Self::zero(self.vars);
        for ((j, k), c) in &self.terms {
            if k[i] > 0 {
                let mut kk = k.clone();
                kk[i] -= 1;
                out.add_term(j, &kk, c * (k[i] as f64));
            }
        }
        out
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((j, k), c) in &self.terms {
            let mut t = *c;
            for i in 0..self.vars {
                for _ in 0..j[i] {
                    t *= z[i];
                }
                for _ in 0..k[i] {
                    t *= z[i].conj();
                }
            }
            acc += t;
        }
        acc
    }

    /// Max residual of the reality condition c_{JK} = conj(c_{KJ}).
    pub fn reality_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((j, k), c) in &self.terms {
            let mirror = self.coeff(k, j);
            worst = worst.max((c - mirror.conj()).norm());
        }
        worst
    }

    pub fn total_degree(&self) -> usize {
        self.terms
            .keys()
            .map(|(j, k)| {
                j.iter().map(|&a| a as usize).sum::<usize>()
                    + k.iter().map(|&a| a as usize).sum::<usize>()
            })
            .max()
            .unwrap_or(0)
    }

    /// Drop terms of total degree above `cap`.
    pub fn truncate(&self, cap: usize) -> ZPoly {
        let mut out = Self::zero(self.vars);
        for ((j, k), c) in &self.terms {
            let d: usize = j.iter().map(|&a| a as usize).sum::<usize>()
                + k.iter().map(|&a| a as usize).sum::<usize>();
            if d <= cap {
                out.add_term(j, k, *c);
            }
        }
        out
    }

    /// Keep only terms with hol-degree `dj` and anti-degree `dk`.
    pub fn bidegree_part(&self, dj: usize, dk: usize) -> ZPoly {
        let mut out = Self::zero(self.vars);
        for ((j, k), c) in &self.terms {
            let a: usize = j.iter().map(|&x| x as usize).sum();
            let b: usize = k.iter().map(|&x| x as usize).sum();
            if a == dj && b == dk {
                out.add_term(j, k, *c);
            }
        }
        out
    }

    /// Substitute z_i -> s_i(z), z̄_i -> conj(s_i)(z) where `subs` are the
    /// holomorphic images (polynomials in z only). Exact composition.
    pub fn substitute_holomorphic(&self, subs: &[ZPoly]) -> ZPoly {
        assert_eq!(subs.len(), self.vars);
        let conj_subs: Vec<ZPoly> = subs.iter().map(|s| s.conj()).collect();
        let mut out = Self::zero(self.vars);
        for ((j, k), c) in &self.terms {
            let mut t = Self::constant(self.vars, *c);
            for i in 0..self.vars {
                for _ in 0..j[i] {
                    t = t.mul(&subs[i]);
                }
                for _ in 0..k[i] {
                    t = t.mul(&conj_subs[i]);
                }
            }
            out = out.add(&t);
        }
        out
    }

    /// Taylor recentring: returns p(z0 + u) as a polynomial in u.
    pub fn shift(&self, z0: &[Complex64]) -> ZPoly {
        let subs: Vec<ZPoly> = (0..self.vars)
            .map(|i| {
                let mut e = vec![0u8; self.vars];
                e[i] = 1;
                let zero = vec![0u8; self.vars];
                let mut s = Self::monomial(self.vars, &e, &zero, Complex64::new(1.0, 0.0));
                s.add_term(&zero, &zero, z0[i]);
                s
            })
            .collect();
        self.substitute_holomorphic(&subs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eval_and_derivatives() {
        // p = |z|^4 on m = 1
        let r2 = ZPoly::norm_squared(1);
        let p = r2.mul(&r2);
        let z = [c(0.3, -0.7)];
        let r = z[0].norm_sqr();
        assert_relative_eq!(p.eval(&z).re, r * r, max_relative = 1e-14);
        // d/dz |z|^4 = 2 z̄ |z|^2
        let dz = p.d_z(0);
        let expect = 2.0 * z[0].conj() * r;
        assert_relative_eq!(dz.eval(&z).re, expect.re, max_relative = 1e-14);
        assert_relative_eq!(dz.eval(&z).im, expect.im, max_relative = 1e-14);
    }

    #[test]
    fn reality_check() {
        // H = Re z = (z + z̄)/2 is real
        let mut h = ZPoly::monomial(1, &[1], &[0], c(0.5, 0.0));
        h.add_term(&[0], &[1], c(0.5, 0.0));
        assert!(h.reality_residual() < 1e-15);
        // i*z alone is not
        let bad = ZPoly::monomial(1, &[1], &[0], c(0.0, 1.0));
        assert!(bad.reality_residual() > 0.5);
    }

    #[test]
    fn shift_is_exact() {
        let r2 = ZPoly::norm_squared(1);
        let p = r2.mul(&r2); // |z|^4
        let z0 = [c(0.4, 0.2)];
        let shifted = p.shift(&z0);
        let u = [c(-0.1, 0.05)];
        let direct = [(z0[0] + u[0])];
        assert_relative_eq!(
            shifted.eval(&u).re,
            p.eval(&direct).re,
            max_relative = 1e-13
        );
    }

    #[test]
    fn conj_of_eval() {
        let p = ZPoly::monomial(2, &[1, 0], &[0, 2], c(1.0, 2.0));
        let z = [c(0.5, 0.1), c(-0.2, 0.9)];
        let a = p.eval(&z).conj();
        let b = p.conj().eval(&z);
        assert_relative_eq!(a.re, b.re, max_relative = 1e-14);
        assert_relative_eq!(a.im, b.im, max_relative = 1e-14);
    }
}
