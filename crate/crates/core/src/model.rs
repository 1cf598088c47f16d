//! Kähler models: a potential in normal form on a single chart, a
//! real-valued Hamiltonian, and the derived geometry (metric, symplectic
//! form, Hamilton vector field with analytic Jacobian).
//!
//! Two potential kinds are supported: polynomial normal forms
//! phi = |z|^2 + sum a_JK z^J z̄^K (|J|, |K| >= 2) and the round-sphere chart
//! phi = log(1 + |z|^2). Hamiltonians are polynomials in (z, z̄) or
//! polynomials in the sphere coordinates (x1, x2, x3), which become rational
//! with denominator powers of (1 + |z|^2).

use crate::error::{Error, Result};
use crate::poly::ZPoly;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

type CVec = DVector<Complex64>;
type CMat = DMatrix<Complex64>;

fn one_plus_r2(vars: usize) -> ZPoly {
    ZPoly::norm_squared(vars).add(&ZPoly::constant(vars, Complex64::new(1.0, 0.0)))
}

/// Scalar field on the chart: polynomial or rational with denominator
/// (1 + |z|^2)^d. Closed under Wirtinger derivatives.
#[derive(Debug, Clone)]
pub enum ScalarRep {
    Poly(ZPoly),
    Rational { num: ZPoly, dpow: u32 },
}

impl ScalarRep {
    pub fn vars(&self) -> usize {
        match self {
            ScalarRep::Poly(p) => p.vars,
            ScalarRep::Rational { num, .. } => num.vars,
        }
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        match self {
            ScalarRep::Poly(p) => p.eval(z),
            ScalarRep::Rational { num, dpow } => {
                let r2: f64 = z.iter().map(|a| a.norm_sqr()).sum();
                num.eval(z) / Complex64::new((1.0 + r2).powi(*dpow as i32), 0.0)
            }
        }
    }

    pub fn d_z(&self, i: usize) -> ScalarRep {
        match self {
            ScalarRep::Poly(p) => ScalarRep::Poly(p.d_z(i)),
            ScalarRep::Rational { num, dpow } => {
                let mut zbar = vec![0u8; num.vars];
                zbar[i] = 1;
                let zb = ZPoly::monomial(
                    num.vars,
                    &vec![0; num.vars],
                    &zbar,
                    Complex64::new(*dpow as f64, 0.0),
                );
                let new_num = num.d_z(i).mul(&one_plus_r2(num.vars)).sub(&zb.mul(num));
                ScalarRep::Rational {
                    num: new_num,
                    dpow: dpow + 1,
                }
            }
        }
    }

    pub fn d_zbar(&self, i: usize) -> ScalarRep {
        match self {
            ScalarRep::Poly(p) => ScalarRep::Poly(p.d_zbar(i)),
            ScalarRep::Rational { num, dpow } => {
                let mut zexp = vec![0u8; num.vars];
                zexp[i] = 1;
                let zm = ZPoly::monomial(
                    num.vars,
                    &zexp,
                    &vec![0; num.vars],
                    Complex64::new(*dpow as f64, 0.0),
                );
                let new_num = num.d_zbar(i).mul(&one_plus_r2(num.vars)).sub(&zm.mul(num));
                ScalarRep::Rational {
                    num: new_num,
                    dpow: dpow + 1,
                }
            }
        }
    }

    pub fn reality_residual(&self) -> f64 {
        match self {
            ScalarRep::Poly(p) => p.reality_residual(),
            ScalarRep::Rational { num, .. } => num.reality_residual(),
        }
    }
}

/// Polynomial in the ambient sphere coordinates (x1, x2, x3).
#[derive(Debug, Clone, Default)]
pub struct SpherePoly {
    /// ((a, b, c), coeff) terms for x1^a x2^b x3^c.
    pub terms: Vec<((u8, u8, u8), f64)>,
}

impl SpherePoly {
    pub fn height() -> Self {
        SpherePoly {
            terms: vec![((0, 0, 1), 1.0)],
        }
    }

    pub fn constant(c: f64) -> Self {
        SpherePoly {
            terms: vec![((0, 0, 0), c)],
        }
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .map(|((a, b, c), _)| (a + b + c) as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn eval_xyz(&self, x: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|((a, b, c), coef)| {
                coef * x[0].powi(*a as i32) * x[1].powi(*b as i32) * x[2].powi(*c as i32)
            })
            .sum()
    }

    /// Rotate the ambient coordinates: returns H' with H'(x) = H(R x).
    pub fn rotate(&self, r: &nalgebra::Matrix3<f64>) -> SpherePoly {
        fn add(acc: &mut Vec<((u8, u8, u8), f64)>, key: (u8, u8, u8), v: f64) {
            if let Some(e) = acc.iter_mut().find(|(k, _)| *k == key) {
                e.1 += v;
            } else {
                acc.push((key, v));
            }
        }
        let mut out: Vec<((u8, u8, u8), f64)> = Vec::new();
        for ((a, b, c), coef) in &self.terms {
            let mut partial: Vec<((u8, u8, u8), f64)> = vec![((0, 0, 0), *coef)];
            for (axis, reps) in [(0usize, *a), (1, *b), (2, *c)] {
                for _ in 0..reps {
                    let mut next: Vec<((u8, u8, u8), f64)> = Vec::new();
                    for ((p, q, s), v) in &partial {
                        for j in 0..3usize {
                            let mut key = (*p, *q, *s);
                            match j {
                                0 => key.0 += 1,
                                1 => key.1 += 1,
                                _ => key.2 += 1,
                            }
                            add(&mut next, key, v * r[(axis, j)]);
                        }
                    }
                    partial = next;
                }
            }
            for (k, v) in partial {
                add(&mut out, k, v);
            }
        }
        out.retain(|(_, v)| v.abs() > 1e-300);
        SpherePoly { terms: out }
    }

    /// Express on the affine chart: x1 = (w + w̄)/(1+r^2),
    /// x2 = -i(w - w̄)/(1+r^2), x3 = (1 - |w|^2)/(1+r^2).
    pub fn to_chart(&self) -> ScalarRep {
        let m = 1;
        let one = Complex64::new(1.0, 0.0);
        let x1 = ZPoly::monomial(m, &[1], &[0], one).add(&ZPoly::monomial(m, &[0], &[1], one));
        let x2 = ZPoly::monomial(m, &[1], &[0], Complex64::new(0.0, -1.0)).add(&ZPoly::monomial(
            m,
            &[0],
            &[1],
            Complex64::new(0.0, 1.0),
        ));
        let x3 = ZPoly::constant(m, one).sub(&ZPoly::monomial(m, &[1], &[1], one));
        let denom = one_plus_r2(m);
        let deg = self.degree() as u32;
        let mut num = ZPoly::zero(m);
        for ((a, b, c), coef) in &self.terms {
            let mut t = ZPoly::constant(m, Complex64::new(*coef, 0.0));
            for _ in 0..*a {
                t = t.mul(&x1);
            }
            for _ in 0..*b {
                t = t.mul(&x2);
            }
            for _ in 0..*c {
                t = t.mul(&x3);
            }
            // pad with (1+r^2) factors up to the common denominator power
            let pad = deg - (*a + *b + *c) as u32;
            for _ in 0..pad {
                t = t.mul(&denom);
            }
            num = num.add(&t);
        }
        ScalarRep::Rational { num, dpow: deg }
    }
}

#[derive(Debug, Clone)]
pub enum Potential {
    /// phi = |z|^2 + perturbation, a polynomial in K-normal form.
    Series { phi: ZPoly },
    /// phi = log(1 + |z|^2).
    FubiniStudy,
}

impl Potential {
    pub fn flat(m: usize) -> Self {
        Potential::Series {
            phi: ZPoly::norm_squared(m),
        }
    }

    /// |z|^2 plus the given (J, K, coeff) perturbation terms, each with
    /// |J| >= 2 and |K| >= 2. Off-diagonal terms are mirrored so the result
    /// stays real.
    pub fn series(m: usize, terms: &[(Vec<u8>, Vec<u8>, f64)]) -> Result<Self> {
        let mut phi = ZPoly::norm_squared(m);
        for (j, k, c) in terms {
            let dj: usize = j.iter().map(|&a| a as usize).sum();
            let dk: usize = k.iter().map(|&a| a as usize).sum();
            if dj < 2 || dk < 2 {
                return Err(Error::Validation(format!(
                    "potential term ({j:?}, {k:?}) violates the |J|, |K| >= 2 normal form"
                )));
            }
            phi.add_term(j, k, Complex64::new(*c, 0.0));
            if j != k {
                phi.add_term(k, j, Complex64::new(*c, 0.0));
            }
        }
        if phi.reality_residual() > 1e-12 {
            return Err(Error::Validation("potential is not real-valued".into()));
        }
        Ok(Potential::Series { phi })
    }

    /// Accepts an already-built polynomial potential, validating reality and
    /// the K-normal-form structure within `tol`.
    pub fn from_poly(phi: ZPoly, tol: f64) -> Result<Self> {
        if phi.reality_residual() > tol.max(1e-12) {
            return Err(Error::Validation("potential is not real-valued".into()));
        }
        let mut bad: f64 = 0.0;
        for ((j, k), c) in phi.terms() {
            let dj: usize = j.iter().map(|&a| a as usize).sum();
            let dk: usize = k.iter().map(|&a| a as usize).sum();
            if dj == 1 && dk == 1 {
                let expect = if j == k { 1.0 } else { 0.0 };
                bad = bad.max((c - Complex64::new(expect, 0.0)).norm());
            } else if dj < 2 || dk < 2 {
                bad = bad.max(c.norm());
            }
        }
        if bad > tol {
            return Err(Error::Validation(format!(
                "potential violates the K-normal form by {bad:.3e}"
            )));
        }
        Ok(Potential::Series { phi })
    }

    pub fn value(&self, z: &[Complex64]) -> f64 {
        match self {
            Potential::Series { phi } => phi.eval(z).re,
            Potential::FubiniStudy => {
                let r2: f64 = z.iter().map(|a| a.norm_sqr()).sum();
                (1.0 + r2).ln()
            }
        }
    }

    fn grad(&self, m: usize) -> Vec<ScalarRep> {
        match self {
            Potential::Series { phi } => (0..m).map(|i| ScalarRep::Poly(phi.d_z(i))).collect(),
            Potential::FubiniStudy => (0..m)
                .map(|i| {
                    let mut k = vec![0u8; m];
                    k[i] = 1;
                    ScalarRep::Rational {
                        num: ZPoly::monomial(m, &vec![0; m], &k, Complex64::new(1.0, 0.0)),
                        dpow: 1,
                    }
                })
                .collect(),
        }
    }
}

/// The model: chart dimension, potential, Hamiltonian, target energy, and
/// the chart domain radius past which flows are truncated.
#[derive(Debug, Clone)]
pub struct KahlerModel {
    pub m: usize,
    pub potential: Potential,
    pub hamiltonian: ScalarRep,
    pub energy: f64,
    pub domain_radius: f64,
    phi_z: Vec<ScalarRep>,
    metric_rep: Vec<Vec<ScalarRep>>,
    metric_dz_rep: Vec<Vec<Vec<ScalarRep>>>,
    h_z: Vec<ScalarRep>,
    h_zz: Vec<Vec<ScalarRep>>,
    h_zzbar: Vec<Vec<ScalarRep>>,
}

impl KahlerModel {
    pub fn new(
        m: usize,
        potential: Potential,
        hamiltonian: ScalarRep,
        energy: f64,
        domain_radius: f64,
    ) -> Result<Self> {
        if hamiltonian.vars() != m {
            return Err(Error::Validation("Hamiltonian dimension mismatch".into()));
        }
        let hr = hamiltonian.reality_residual();
        if hr > 1e-10 {
            return Err(Error::Validation(format!(
                "Hamiltonian is not real-valued: residual {hr:.3e}"
            )));
        }
        let phi_z = potential.grad(m);
        let metric_rep: Vec<Vec<ScalarRep>> = (0..m)
            .map(|i| (0..m).map(|j| phi_z[i].d_zbar(j)).collect())
            .collect();
        let metric_dz_rep: Vec<Vec<Vec<ScalarRep>>> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| (0..m).map(|k| metric_rep[i][j].d_z(k)).collect())
                    .collect()
            })
            .collect();
        let h_z: Vec<ScalarRep> = (0..m).map(|i| hamiltonian.d_z(i)).collect();
        let h_zz: Vec<Vec<ScalarRep>> = (0..m)
            .map(|i| (0..m).map(|j| h_z[i].d_z(j)).collect())
            .collect();
        let h_zzbar: Vec<Vec<ScalarRep>> = (0..m)
            .map(|i| (0..m).map(|j| h_z[i].d_zbar(j)).collect())
            .collect();
        let model = KahlerModel {
            m,
            potential,
            hamiltonian,
            energy,
            domain_radius,
            phi_z,
            metric_rep,
            metric_dz_rep,
            h_z,
            h_zz,
            h_zzbar,
        };
        model.check_positivity()?;
        Ok(model)
    }

    /// Flat potential on C^m with a polynomial Hamiltonian.
    pub fn flat(m: usize, hamiltonian: ZPoly, energy: f64) -> Result<Self> {
        Self::new(
            m,
            Potential::flat(m),
            ScalarRep::Poly(hamiltonian),
            energy,
            50.0,
        )
    }

    /// Round sphere (CP^1, Fubini-Study chart) with a polynomial Hamiltonian
    /// in the ambient coordinates, degree <= 3.
    pub fn sphere(hamiltonian: SpherePoly, energy: f64) -> Result<Self> {
        if hamiltonian.degree() > 3 {
            return Err(Error::Unsupported(
                "sphere Hamiltonians limited to degree <= 3".into(),
            ));
        }
        Self::new(
            1,
            Potential::FubiniStudy,
            hamiltonian.to_chart(),
            energy,
            1e6,
        )
    }

    fn check_positivity(&self) -> Result<()> {
        let samples: Vec<f64> = [0.0, 0.2, 0.5, 1.0, 1.5]
            .iter()
            .filter(|&&r| r <= self.domain_radius)
            .copied()
            .collect();
        for &r in &samples {
            for phase in [0.0, 1.0, 2.5] {
                let z: Vec<Complex64> = (0..self.m)
                    .map(|i| Complex64::from_polar(r / (1.0 + i as f64), phase + i as f64))
                    .collect();
                let g = self.metric(&z);
                if nalgebra::Cholesky::new(g).is_none() {
                    return Err(Error::Validation(format!(
                        "omega fails positivity at |z| = {r}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn h_value(&self, z: &[Complex64]) -> f64 {
        self.hamiltonian.eval(z).re
    }

    pub fn phi_value(&self, z: &[Complex64]) -> f64 {
        self.potential.value(z)
    }

    /// Metric G_ij = phi_{z_i z̄_j} (Hermitian positive).
    pub fn metric(&self, z: &[Complex64]) -> CMat {
        CMat::from_fn(self.m, self.m, |i, j| self.metric_rep[i][j].eval(z))
    }

    /// dG/dz_k entrywise.
    pub fn metric_dz(&self, z: &[Complex64], k: usize) -> CMat {
        CMat::from_fn(self.m, self.m, |i, j| self.metric_dz_rep[i][j][k].eval(z))
    }

    /// Pairing of d^c phi = i(phi_z dz - phi_z̄ dz̄) with a tangent vector
    /// given by its (1,0) coefficients: -2 Im(sum phi_{z_i} xi_i).
    pub fn dc_phi_pair(&self, z: &[Complex64], xi: &CVec) -> f64 {
        let s: Complex64 = (0..self.m).map(|i| self.phi_z[i].eval(z) * xi[i]).sum();
        -2.0 * s.im
    }

    /// phi_z as a vector (for path integrals of d^c phi).
    pub fn phi_z_vec(&self, z: &[Complex64]) -> CVec {
        CVec::from_iterator(self.m, (0..self.m).map(|i| self.phi_z[i].eval(z)))
    }

    /// Hamilton vector field in complex notation: G^t xi = -i conj(H_z).
    pub fn hamilton_field(&self, z: &[Complex64]) -> Result<CVec> {
        let g = self.metric(z);
        let rhs = CVec::from_iterator(
            self.m,
            (0..self.m).map(|j| -Complex64::i() * self.h_z[j].eval(z).conj()),
        );
        let lu = g.transpose().lu();
        lu.solve(&rhs).ok_or_else(|| Error::Singular {
            context: "hamilton_field".into(),
            cond: f64::INFINITY,
        })
    }

    /// Real 2m-vector form of the Hamilton field, (Re xi, Im xi) stacked.
    pub fn hamilton_field_real(&self, z: &[Complex64]) -> Result<DVector<f64>> {
        let xi = self.hamilton_field(z)?;
        let mut out = DVector::zeros(2 * self.m);
        for i in 0..self.m {
            out[i] = xi[i].re;
            out[self.m + i] = xi[i].im;
        }
        Ok(out)
    }

    /// Analytic real Jacobian of the Hamilton field, for the variational
    /// equation. Columns ordered (x_1..x_m, y_1..y_m).
    pub fn hamilton_jacobian(&self, z: &[Complex64]) -> Result<DMatrix<f64>> {
        let m = self.m;
        let g_t = self.metric(z).transpose();
        let lu = g_t.lu();
        let rhs = CVec::from_iterator(
            m,
            (0..m).map(|j| -Complex64::i() * self.h_z[j].eval(z).conj()),
        );
        let xi = lu.solve(&rhs).ok_or_else(|| Error::Singular {
            context: "hamilton_jacobian".into(),
            cond: f64::INFINITY,
        })?;
        let mut dxi_dz: Vec<CVec> = Vec::with_capacity(m);
        let mut dxi_dzb: Vec<CVec> = Vec::with_capacity(m);
        for k in 0..m {
            // rhs_j = -i H_{z̄_j}; d(rhs_j)/dz_k = -i H_{z_k z̄_j}
            let drhs_z = CVec::from_iterator(
                m,
                (0..m).map(|j| -Complex64::i() * self.h_zzbar[k][j].eval(z)),
            );
            // d(rhs_j)/dz̄_k = -i conj(H_{z_j z_k})
            let drhs_zb = CVec::from_iterator(
                m,
                (0..m).map(|j| -Complex64::i() * self.h_zz[j][k].eval(z).conj()),
            );
            // (G^t)_{ij} = G_{ji}; d/dz_k and d/dz̄_k = conj of d/dz_k mirrored
            let dgt_z = CMat::from_fn(m, m, |i, j| self.metric_dz_rep[j][i][k].eval(z));
            let dgt_zb = CMat::from_fn(m, m, |i, j| self.metric_dz_rep[i][j][k].eval(z).conj());
            let sol_z = lu
                .solve(&(&drhs_z - &dgt_z * &xi))
                .ok_or_else(|| Error::Singular {
                    context: "hamilton_jacobian".into(),
                    cond: f64::INFINITY,
                })?;
            let sol_zb = lu
                .solve(&(&drhs_zb - &dgt_zb * &xi))
                .ok_or_else(|| Error::Singular {
                    context: "hamilton_jacobian".into(),
                    cond: f64::INFINITY,
                })?;
            dxi_dz.push(sol_z);
            dxi_dzb.push(sol_zb);
        }
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for k in 0..m {
            let dx = &dxi_dz[k] + &dxi_dzb[k];
            let dy = (&dxi_dz[k] - &dxi_dzb[k]).map(|c| Complex64::i() * c);
            for i in 0..m {
                jac[(i, k)] = dx[i].re;
                jac[(m + i, k)] = dx[i].im;
                jac[(i, m + k)] = dy[i].re;
                jac[(m + i, m + k)] = dy[i].im;
            }
        }
        Ok(jac)
    }

    /// Real antisymmetric matrix of omega at z:
    /// omega(u, v) = -2 Im((u_c)^t G conj(v_c)).
    pub fn omega_matrix(&self, z: &[Complex64]) -> DMatrix<f64> {
        let m = self.m;
        let g = self.metric(z);
        let gr = g.map(|c| c.re);
        let gi = g.map(|c| c.im);
        let mut w = DMatrix::zeros(2 * m, 2 * m);
        w.view_mut((0, 0), (m, m)).copy_from(&(-2.0 * &gi));
        w.view_mut((0, m), (m, m)).copy_from(&(2.0 * &gr));
        w.view_mut((m, 0), (m, m)).copy_from(&(-2.0 * &gr));
        w.view_mut((m, m), (m, m)).copy_from(&(-2.0 * &gi));
        w
    }

    /// Squared Riemannian norm of a tangent vector: omega(v, Jv) = 2 v^t G v̄.
    pub fn metric_norm_sqr(&self, z: &[Complex64], xi: &CVec) -> f64 {
        let g = self.metric(z);
        let gv = &g * xi.conjugate();
        2.0 * xi
            .iter()
            .zip(gv.iter())
            .map(|(a, b)| (a * b).re)
            .sum::<f64>()
    }
}

/// Recentres a polynomial model at z0: returns an equivalent model in
/// K-coordinates centered on z0 (exact through `degree_cap`, truncated
/// above). The Hamiltonian is transported through the same chart maps.
pub fn recenter(model: &KahlerModel, z0: &[Complex64], degree_cap: usize) -> Result<KahlerModel> {
    let m = model.m;
    let phi = match &model.potential {
        Potential::Series { phi } => phi.clone(),
        Potential::FubiniStudy => {
            return Err(Error::Unsupported(
                "recentring implemented for polynomial potentials only".into(),
            ))
        }
    };
    let h = match &model.hamiltonian {
        ScalarRep::Poly(p) => p.clone(),
        _ => {
            return Err(Error::Unsupported(
                "recentring implemented for polynomial Hamiltonians only".into(),
            ))
        }
    };

    // Kähler gauge: pure-holomorphic and pure-antiholomorphic terms are
    // 2 Re(f) pairs and can be dropped (frame change)
    let drop_gauge = |p: &ZPoly| -> ZPoly {
        let mut out = ZPoly::zero(m);
        for ((j, k), c) in p.terms() {
            let dj: usize = j.iter().map(|&a| a as usize).sum();
            let dk: usize = k.iter().map(|&a| a as usize).sum();
            if dj >= 1 && dk >= 1 {
                out.add_term(j, k, *c);
            }
        }
        out
    };

    let mut phi_c = drop_gauge(&phi.shift(z0)).truncate(degree_cap);
    let mut h_c = h.shift(z0).truncate(degree_cap);

    // linear normalization: make the (1,1) part exactly |u|^2
    let g0 = CMat::from_fn(m, m, |i, j| {
        let mut ji = vec![0u8; m];
        let mut ki = vec![0u8; m];
        ji[i] = 1;
        ki[j] = 1;
        phi_c.coeff(&ji, &ki)
    });
    let chol = nalgebra::Cholesky::new(g0)
        .ok_or_else(|| Error::Validation("metric not positive at recentring point".into()))?;
    let a_mat = chol
        .l()
        .adjoint()
        .try_inverse()
        .ok_or_else(|| Error::Singular {
            context: "recenter".into(),
            cond: f64::INFINITY,
        })?
        .conjugate();
    let lin_subs: Vec<ZPoly> = (0..m)
        .map(|i| {
            let mut s = ZPoly::zero(m);
            for j in 0..m {
                let mut e = vec![0u8; m];
                e[j] = 1;
                s.add_term(&e, &vec![0; m], a_mat[(i, j)]);
            }
            s
        })
        .collect();
    phi_c = drop_gauge(&phi_c.substitute_holomorphic(&lin_subs)).truncate(degree_cap);
    h_c = h_c.substitute_holomorphic(&lin_subs).truncate(degree_cap);

    // degree-by-degree removal of (d, 1) terms (and their (1, d) mirrors)
    // via holomorphic coordinate changes u -> u + G(u)
    for d in 2..degree_cap {
        let part = phi_c.bidegree_part(d, 1);
        if part.is_zero() {
            continue;
        }
        let gsubs: Vec<ZPoly> = (0..m)
            .map(|i| {
                let mut e = vec![0u8; m];
                e[i] = 1;
                let mut s = ZPoly::monomial(m, &e, &vec![0; m], Complex64::new(1.0, 0.0));
                for ((j, k), c) in part.terms() {
                    if k[i] == 1 {
                        s.add_term(j, &vec![0; m], -c);
                    }
                }
                s
            })
            .collect();
        phi_c = drop_gauge(&phi_c.substitute_holomorphic(&gsubs)).truncate(degree_cap);
        h_c = h_c.substitute_holomorphic(&gsubs).truncate(degree_cap);
    }

    // numerical reality cleanup
    let h_sym = h_c.add(&h_c.conj()).scale(Complex64::new(0.5, 0.0));
    let phi_sym = phi_c.add(&phi_c.conj()).scale(Complex64::new(0.5, 0.0));

    let potential = Potential::from_poly(phi_sym, 1e-8)?;
    KahlerModel::new(
        m,
        potential,
        ScalarRep::Poly(h_sym),
        model.energy,
        model.domain_radius,
    )
}
