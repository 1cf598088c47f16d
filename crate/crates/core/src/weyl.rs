//! Scaled pointwise spectral measures, smoothed Weyl sums, and the
//! periodic-orbit predictions they are compared against: the coefficient
//! series over monodromy iterates, the Q-function, and window integrals.

use crate::error::{Error, Result};
use crate::flow::PeriodicOrbitData;
use crate::model::KahlerModel;
use crate::quantize::SpectralData;
use crate::symplectic::{gcal_coefficients, BasisAdaptation, GcalCoefficient, InvariantVector};
use num_complex::Complex64;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Weighted point-mass measure mu_k^{z,1,E} on the real line.
#[derive(Debug, Clone)]
pub struct WeylMeasure {
    pub k: u32,
    pub e: f64,
    /// (location k (mu_j - E), weight) pairs, ascending in location.
    pub atoms: Vec<(f64, f64)>,
    pub total_mass: f64,
    /// Mass outside the +-10 sqrt(k) log(k) concentration window, dropped.
    pub dropped_mass: f64,
}

/// Builds the scaled measure with atoms at k (mu_{k,j} - E). Atoms outside
/// the concentration window |lambda| <= 10 sqrt(k) log k are dropped and
/// their mass recorded.
pub fn weyl_measure(data: &SpectralData, e: f64) -> WeylMeasure {
    let kf = data.k as f64;
    let window = 10.0 * kf.sqrt() * kf.ln().max(1.0);
    let mut atoms = Vec::with_capacity(data.eigenvalues.len());
    let mut dropped = 0.0;
    for (&mu, &w) in data.eigenvalues.iter().zip(&data.masses) {
        let lam = kf * (mu - e);
        if lam.abs() <= window {
            atoms.push((lam, w));
        } else {
            dropped += w;
        }
    }
    let total_mass = atoms.iter().map(|a| a.1).sum();
    WeylMeasure {
        k: data.k,
        e,
        atoms,
        total_mass,
        dropped_mass: dropped,
    }
}

/// C^infinity step: 0 for x <= 0, 1 for x >= 1.
fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let g = (-1.0 / x).exp();
        let h = (-1.0 / (1.0 - x)).exp();
        g / (g + h)
    }
}

/// Test functions with (numerically) compactly supported Fourier transform,
/// in the convention f(x) = Int fhat(t) e^{itx} dt.
#[derive(Debug, Clone)]
pub enum TestFunction {
    /// f(x) = e^{-x^2/(2 sigma^2)} / (sigma sqrt(2 pi)), integral 1;
    /// fhat(t) = e^{-sigma^2 t^2 / 2} / (2 pi), support width ~ 9 / sigma.
    Gaussian { sigma: f64 },
    /// fhat = plateau of half-width `a` with C^infinity tapers of width
    /// `delta`; f is evaluated by a cached uniform grid transform.
    Plateau {
        a: f64,
        delta: f64,
        scale: f64,
        grid: Vec<(f64, f64)>,
    },
}

impl TestFunction {
    pub fn gaussian(sigma: f64) -> Self {
        TestFunction::Gaussian { sigma }
    }

    /// Plateau window with fhat(0) = scale; `samples` should be a power of
    /// two, defaults are fine for |lambda| up to ~ pi samples / (2 (a+delta)).
    pub fn plateau(a: f64, delta: f64, scale: f64, samples: usize) -> Self {
        let half = a + delta;
        let n = samples.max(1024);
        let grid = (0..=n)
            .map(|i| {
                let t = -half + 2.0 * half * i as f64 / n as f64;
                let v = scale * smoothstep((half - t.abs()) / delta);
                (t, v)
            })
            .collect();
        TestFunction::Plateau {
            a,
            delta,
            scale,
            grid,
        }
    }

    /// Normalized so that Int f = 1, i.e. fhat(0) = 1/(2 pi).
    pub fn plateau_normalized(a: f64, delta: f64, samples: usize) -> Self {
        Self::plateau(a, delta, 1.0 / TWO_PI, samples)
    }

    pub fn fhat(&self, t: f64) -> f64 {
        match self {
            TestFunction::Gaussian { sigma } => (-0.5 * sigma * sigma * t * t).exp() / TWO_PI,
            TestFunction::Plateau {
                a, delta, scale, ..
            } => scale * smoothstep((a + delta - t.abs()) / delta),
        }
    }

    /// Radius beyond which fhat is (numerically) zero.
    pub fn fourier_support(&self) -> f64 {
        match self {
            TestFunction::Gaussian { sigma } => 9.3 / sigma,
            TestFunction::Plateau { a, delta, .. } => a + delta,
        }
    }

    /// f(lambda), real (fhat is even and real).
    pub fn eval(&self, lambda: f64) -> f64 {
        match self {
            TestFunction::Gaussian { sigma } => {
                (-0.5 * lambda * lambda / (sigma * sigma)).exp() / (sigma * (TWO_PI).sqrt())
            }
            TestFunction::Plateau { grid, .. } => {
                // trapezoid transform of the C_c^infinity profile: spectrally
                // accurate as long as |lambda| << pi / dt
                let n = grid.len() - 1;
                let dt = grid[n].0 - grid[n - 1].0;
                let mut acc = 0.0;
                for (i, &(t, v)) in grid.iter().enumerate() {
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    acc += w * v * (lambda * t).cos();
                }
                acc * dt
            }
        }
    }
}

/// Kahan-compensated smoothed sum: sum of w_j f(lambda_j - shift).
pub fn smoothed_sum(mu: &WeylMeasure, f: &TestFunction, shift: f64) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &(lam, w) in &mu.atoms {
        let val = w * f.eval(lam - shift);
        let y = val - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Fourier transform of the measure: sum of w_j e^{i t lambda_j}.
pub fn measure_fourier_transform(mu: &WeylMeasure, t_grid: &[f64]) -> Vec<Complex64> {
    t_grid
        .iter()
        .map(|&t| {
            mu.atoms
                .iter()
                .map(|&(lam, w)| Complex64::from_polar(w, t * lam))
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Branch {
    OffLevel,
    NonPeriodic,
    Periodic,
}

/// The predicted expansion data at a base point: branch, orbit period and
/// holonomy, and the coefficient series over monodromy iterates.
#[derive(Debug, Clone)]
pub struct PredictedExpansion {
    pub branch: Branch,
    pub t_z: Option<f64>,
    pub holonomy_angle: f64,
    /// coefficients for n in [-n_max, n_max] (a single n = 0 entry on the
    /// non-periodic branch, empty off-level)
    pub coefficients: Vec<GcalCoefficient>,
    /// leading power of k/2pi in the smoothed law: m - 1/2
    pub prefactor_exponent: f64,
    /// fitted exponential decay rate of |G_n| (None when not decaying)
    pub decay_rate: Option<f64>,
}

/// Distance from the level set below which z counts as on-level.
pub const LEVEL_TOL: f64 = 1e-8;

fn fit_decay_rate(coeffs: &[GcalCoefficient]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = coeffs
        .iter()
        .filter(|c| c.n != 0 && c.value.norm() > 0.0)
        .map(|c| (c.n.unsigned_abs() as f64, c.value.norm().ln()))
        .collect();
    if pts.len() < 4 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    if slope < -1e-6 {
        Some(-slope)
    } else {
        None
    }
}

/// Builds the prediction for a point z of the model: branch per the critical
/// set analysis (off-level / on-level non-periodic / periodic), coefficients
/// from the monodromy iterates via the tracked square-root branch.
pub fn predicted_expansion(
    model: &KahlerModel,
    orbit: Option<&PeriodicOrbitData>,
    z: &[Complex64],
    e: f64,
    n_max: u32,
) -> Result<PredictedExpansion> {
    let m = model.m;
    let off_level = (model.h_value(z) - e).abs() > LEVEL_TOL;
    let prefactor_exponent = m as f64 - 0.5;
    if off_level {
        return Ok(PredictedExpansion {
            branch: Branch::OffLevel,
            t_z: None,
            holonomy_angle: 0.0,
            coefficients: vec![],
            prefactor_exponent,
            decay_rate: None,
        });
    }
    let xi = model.hamilton_field_real(z)?;
    if xi.norm() < 1e-12 {
        return Err(Error::Unsupported(
            "critical point of H: the expansion does not apply".into(),
        ));
    }
    match orbit {
        None => {
            let adapt = BasisAdaptation::from_metric(&model.metric(z))?;
            let alpha = adapt.vector(&xi);
            let v = InvariantVector::from_alpha(alpha);
            let id = crate::symplectic::SymplecticMap::identity(m);
            let coefficients = gcal_coefficients(&id, &v, 0)?;
            Ok(PredictedExpansion {
                branch: Branch::NonPeriodic,
                t_z: None,
                holonomy_angle: 0.0,
                coefficients,
                prefactor_exponent,
                decay_rate: None,
            })
        }
        Some(orb) => {
            let coefficients = gcal_coefficients(&orb.monodromy, &orb.invariant, n_max)?;
            let decay_rate = fit_decay_rate(&coefficients);
            Ok(PredictedExpansion {
                branch: Branch::Periodic,
                t_z: Some(orb.period),
                holonomy_angle: orb.holonomy_angle,
                coefficients,
                prefactor_exponent,
                decay_rate,
            })
        }
    }
}

/// Tail bound of the coefficient series beyond its largest computed index,
/// from the fitted exponential decay (infinite when not decaying).
pub fn series_tail_bound(coefficients: &[GcalCoefficient], rate: Option<f64>) -> f64 {
    let n_max = coefficients.iter().map(|c| c.n).max().unwrap_or(0);
    match rate {
        Some(r) if r > 0.0 => {
            let cmax = coefficients
                .iter()
                .filter(|c| c.n != 0)
                .map(|c| c.value.norm() * (r * c.n.unsigned_abs() as f64).exp())
                .fold(0.0f64, f64::max);
            2.0 * cmax * (-r * (n_max as f64 + 1.0)).exp() / (1.0 - (-r).exp()) / TWO_PI
        }
        _ => f64::INFINITY,
    }
}

/// `predicted_expansion` with the series length extended automatically:
/// starting from n_max = 32, doubles until the Q tail bound drops below
/// 1e-8 or the hard cap of 512 is reached. Series without exponential decay
/// (elliptic/identity monodromies) are returned at the initial length, since
/// no finite extension converges.
pub fn predicted_expansion_auto(
    model: &KahlerModel,
    orbit: Option<&PeriodicOrbitData>,
    z: &[Complex64],
    e: f64,
) -> Result<PredictedExpansion> {
    let mut n_max = 32u32;
    loop {
        let exp = predicted_expansion(model, orbit, z, e, n_max)?;
        if exp.branch != Branch::Periodic {
            return Ok(exp);
        }
        let tail = series_tail_bound(&exp.coefficients, exp.decay_rate);
        if !tail.is_finite() || tail < 1e-8 || n_max >= 512 {
            return Ok(exp);
        }
        n_max = (n_max * 2).min(512);
    }
}

/// The predicted smoothed sum (without the (k/2pi)^{m-1/2} prefactor):
/// sum over n of fhat(n T_z) G_n e^{-i k n theta_h}.
pub fn predicted_comb(exp: &PredictedExpansion, k: u32, f: &TestFunction) -> Complex64 {
    match exp.branch {
        Branch::OffLevel => Complex64::new(0.0, 0.0),
        Branch::NonPeriodic => {
            let g0 = exp
                .coefficients
                .iter()
                .find(|c| c.n == 0)
                .map(|c| c.value)
                .unwrap_or(Complex64::new(0.0, 0.0));
            g0 * f.fhat(0.0)
        }
        Branch::Periodic => {
            let t_z = exp.t_z.unwrap();
            exp.coefficients
                .iter()
                .map(|c| {
                    let phase =
                        Complex64::from_polar(1.0, -(k as f64) * c.n as f64 * exp.holonomy_angle);
                    phase * c.value * f.fhat(c.n as f64 * t_z)
                })
                .sum()
        }
    }
}

/// Q-function samples and the truncation tail bound.
#[derive(Debug, Clone)]
pub struct QFunction {
    pub s_grid: Vec<f64>,
    pub values: Vec<Complex64>,
    /// bound on the dropped tail, from the fitted exponential decay
    /// (infinite when the coefficients do not decay)
    pub tail_bound: f64,
    pub n_max: i64,
}

/// Partial sums of Q(s) = sum_n (2 pi)^{-1} G_n e^{-i n T_z s}
/// e^{-i n k theta_h}; on the non-periodic branch Q = (2 pi)^{-1} G_0.
pub fn q_function(exp: &PredictedExpansion, k: u32, s_grid: &[f64]) -> Result<QFunction> {
    match exp.branch {
        Branch::OffLevel => Err(Error::Input(
            "Q-function undefined on the off-level branch".into(),
        )),
        Branch::NonPeriodic => {
            let g0 = exp.coefficients[0].value / TWO_PI;
            Ok(QFunction {
                s_grid: s_grid.to_vec(),
                values: vec![g0; s_grid.len()],
                tail_bound: 0.0,
                n_max: 0,
            })
        }
        Branch::Periodic => {
            let t_z = exp.t_z.unwrap();
            let n_max = exp.coefficients.iter().map(|c| c.n).max().unwrap_or(0);
            let values: Vec<Complex64> = s_grid
                .iter()
                .map(|&s| {
                    exp.coefficients
                        .iter()
                        .map(|c| {
                            let arg = -(c.n as f64) * (t_z * s + k as f64 * exp.holonomy_angle);
                            Complex64::from_polar(c.value.norm() / TWO_PI, arg + c.value.arg())
                        })
                        .sum()
                })
                .collect();
            let tail_bound = series_tail_bound(&exp.coefficients, exp.decay_rate);
            Ok(QFunction {
                s_grid: s_grid.to_vec(),
                values,
                tail_bound,
                n_max,
            })
        }
    }
}

/// Integral of Q over [a, b], optionally with mollifier weights rho(n T_z)
/// (the two-term law window integral). Closed-form in-window integrals of
/// the exponentials are used, no sampling error.
pub fn nu_window<F: Fn(f64) -> f64>(
    exp: &PredictedExpansion,
    k: u32,
    a: f64,
    b: f64,
    rho: F,
) -> Result<Complex64> {
    if b < a {
        return Err(Error::Input("window must satisfy a <= b".into()));
    }
    match exp.branch {
        Branch::OffLevel => Ok(Complex64::new(0.0, 0.0)),
        Branch::NonPeriodic => {
            let g0 = exp.coefficients[0].value;
            Ok(g0 * (b - a) / TWO_PI)
        }
        Branch::Periodic => {
            let t_z = exp.t_z.unwrap();
            let mut acc = Complex64::new(0.0, 0.0);
            for c in &exp.coefficients {
                let w = rho(c.n as f64 * t_z);
                if w == 0.0 {
                    continue;
                }
                let hol = Complex64::from_polar(1.0, -(k as f64) * c.n as f64 * exp.holonomy_angle);
                let integral = if c.n == 0 {
                    Complex64::new(b - a, 0.0)
                } else {
                    let om = c.n as f64 * t_z;
                    // Int_a^b e^{-i om s} ds
                    (Complex64::from_polar(1.0, -om * a) - Complex64::from_polar(1.0, -om * b))
                        / Complex64::new(0.0, om)
                };
                acc += w * c.value * hol * integral / TWO_PI;
            }
            Ok(acc)
        }
    }
}

/// Comparison of an empirical quantity against a prediction over a k-ladder.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareReport {
    pub k_values: Vec<u32>,
    pub empirical: Vec<f64>,
    pub predicted: Vec<f64>,
    pub ratios: Vec<f64>,
    pub fitted_exponent: f64,
    pub expected_exponent: f64,
    /// max relative spread of the ratios around their mean
    pub ratio_spread: f64,
}

/// Fits the k-exponent of |empirical| by log-log regression and the ratio
/// constancy against the predicted values (which must carry the same
/// prefactor convention on both sides).
pub fn compare(
    k_values: &[u32],
    empirical: &[f64],
    predicted: &[f64],
    expected_exponent: f64,
) -> Result<CompareReport> {
    if k_values.len() < 3 {
        return Err(Error::Input(
            "need at least 3 ladder points to fit an exponent".into(),
        ));
    }
    if k_values.len() != empirical.len() || k_values.len() != predicted.len() {
        return Err(Error::Input("ladder length mismatch".into()));
    }
    let pts: Vec<(f64, f64)> = k_values
        .iter()
        .zip(empirical)
        .map(|(&k, &v)| ((k as f64).ln(), v.abs().max(1e-300).ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let fitted_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let ratios: Vec<f64> = empirical
        .iter()
        .zip(predicted)
        .map(|(&e, &p)| e / p)
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let ratio_spread = ratios
        .iter()
        .map(|r| (r - mean).abs() / mean.abs().max(1e-300))
        .fold(0.0f64, f64::max);
    Ok(CompareReport {
        k_values: k_values.to_vec(),
        empirical: empirical.to_vec(),
        predicted: predicted.to_vec(),
        ratios,
        fitted_exponent,
        expected_exponent,
        ratio_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::find_period;
    use crate::model::SpherePoly;
    use crate::poly::ZPoly;
    use crate::quantize::{build_fock, build_sphere_spin, pointwise_masses};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sphere_measure(k: u32, e: f64) -> WeylMeasure {
        let sys = build_sphere_spin(&SpherePoly::height(), k, e).unwrap();
        let data = pointwise_masses(&sys, &[c(1.0, 0.0)]).unwrap();
        weyl_measure(&data, e)
    }

    #[test]
    fn measure_basics() {
        let model = KahlerModel::flat(1, ZPoly::norm_squared(1), 1.0).unwrap();
        let k = 16;
        let sys = build_fock(&model, k, 96).unwrap();
        let data = pointwise_masses(&sys, &[c(1.0, 0.0)]).unwrap();
        // E at an eigenvalue puts an atom at 0
        let e0 = data.eigenvalues[10];
        let mu = weyl_measure(&data, e0);
        assert!(mu.atoms.iter().any(|&(l, _)| l.abs() < 1e-12));
        // total mass is invariant under shifts of E (modulo window drops)
        let mu2 = weyl_measure(&data, e0 + 0.3);
        assert_relative_eq!(
            mu.total_mass + mu.dropped_mass,
            mu2.total_mass + mu2.dropped_mass,
            max_relative = 1e-14
        );
    }

    #[test]
    fn sphere_equator_atoms_symmetric() {
        // ladder atoms at the equator are symmetric about 0 with symmetric
        // masses (up to the ladder offset, exact for even k)
        let mu = sphere_measure(20, 0.0);
        for &(lam, w) in &mu.atoms {
            let partner = mu
                .atoms
                .iter()
                .find(|&&(l2, _)| (l2 + lam).abs() < 1e-9)
                .expect("mirror atom");
            assert!((partner.1 - w).abs() < 1e-12 * w.max(1e-12));
        }
    }

    #[test]
    fn gaussian_sum_matches_grid_oracle() {
        // the closed-form Gaussian evaluation against an independent
        // uniform-grid transform of its Fourier profile
        let mu = sphere_measure(24, 0.0);
        let f = TestFunction::gaussian(2.0);
        let direct = smoothed_sum(&mu, &f, 0.0);
        let mut grid_sum = 0.0;
        let half = f.fourier_support();
        let n = 1 << 14;
        let dt = 2.0 * half / n as f64;
        for &(lam, w) in &mu.atoms {
            let mut acc = 0.0;
            for i in 0..=n {
                let t = -half + i as f64 * dt;
                let tw = if i == 0 || i == n { 0.5 } else { 1.0 };
                acc += tw * f.fhat(t) * (lam * t).cos();
            }
            grid_sum += w * acc * dt;
        }
        assert_relative_eq!(direct, grid_sum, max_relative = 1e-12);
    }

    #[test]
    fn plateau_profile_shape() {
        let f = TestFunction::plateau(3.0, 0.5, 1.0, 8192);
        assert_relative_eq!(f.fhat(0.0), 1.0, max_relative = 1e-14);
        assert_relative_eq!(f.fhat(2.9), 1.0, max_relative = 1e-14);
        assert!(f.fhat(3.6) == 0.0);
        // f(0) = Int fhat = 2 a + delta (tapers integrate to delta)
        assert_relative_eq!(f.eval(0.0), 6.5, max_relative = 1e-8);
    }

    #[test]
    fn fourier_transform_basics() {
        let mu = WeylMeasure {
            k: 4,
            e: 0.0,
            atoms: vec![(1.5, 0.7)],
            total_mass: 0.7,
            dropped_mass: 0.0,
        };
        let v = measure_fourier_transform(&mu, &[0.0, 0.9]);
        assert_relative_eq!(v[0].re, 0.7, max_relative = 1e-15);
        let expect = Complex64::from_polar(0.7, 0.9 * 1.5);
        assert!((v[1] - expect).norm() < 1e-15);

        // sphere ladder: periodic in t with period 2 pi / spacing
        let mu = sphere_measure(20, 0.0);
        let spacing = 2.0 * 20.0 / 22.0;
        let period = TWO_PI / spacing;
        let v = measure_fourier_transform(&mu, &[0.3, 0.3 + period]);
        assert!((v[0] - v[1]).norm() < 1e-10 * mu.total_mass);
    }

    #[test]
    fn expansion_branches() {
        let model = KahlerModel::flat(1, ZPoly::norm_squared(1), 1.0).unwrap();
        // off-level
        let exp = predicted_expansion(&model, None, &[c(1.0, 0.0)], 1.3, 8).unwrap();
        assert_eq!(exp.branch, Branch::OffLevel);
        assert!(exp.coefficients.is_empty());
        // on-level non-periodic: G_0 = 1/|alpha| = 1/sqrt(E)
        let exp = predicted_expansion(&model, None, &[c(1.0, 0.0)], 1.0, 8).unwrap();
        assert_eq!(exp.branch, Branch::NonPeriodic);
        assert_relative_eq!(exp.coefficients[0].value.re, 1.0, max_relative = 1e-12);
        // periodic (sphere): all G_n equal G_0
        let sphere = KahlerModel::sphere(SpherePoly::height(), 0.0).unwrap();
        let orbit = find_period(&sphere, &[c(1.0, 0.0)], 8.0, &Default::default())
            .unwrap()
            .unwrap();
        let exp = predicted_expansion(&sphere, Some(&orbit), &[c(1.0, 0.0)], 0.0, 6).unwrap();
        assert_eq!(exp.branch, Branch::Periodic);
        let g0 = exp.coefficients.iter().find(|c| c.n == 0).unwrap().value;
        for co in &exp.coefficients {
            assert!((co.value - g0).norm() < 1e-9);
        }
        assert_relative_eq!(g0.re, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn q_function_constant_and_geometric() {
        // single coefficient: Q = g / 2 pi
        let exp = PredictedExpansion {
            branch: Branch::NonPeriodic,
            t_z: None,
            holonomy_angle: 0.0,
            coefficients: vec![GcalCoefficient {
                n: 0,
                value: c(0.8, 0.0),
                det_p: c(1.0, 0.0),
                matrix_element: c(1.5625, 0.0),
            }],
            prefactor_exponent: 0.5,
            decay_rate: None,
        };
        let q = q_function(&exp, 3, &[0.0, 1.0]).unwrap();
        assert_relative_eq!(q.values[0].re, 0.8 / TWO_PI, max_relative = 1e-14);

        // synthetic G_n = e^{-|n|}: Poisson kernel closed form
        let n_max = 40i64;
        let coefficients: Vec<GcalCoefficient> = (-n_max..=n_max)
            .map(|n| GcalCoefficient {
                n,
                value: c((-(n.abs() as f64)).exp(), 0.0),
                det_p: c(1.0, 0.0),
                matrix_element: c(1.0, 0.0),
            })
            .collect();
        let t_z = 1.7;
        let hol = 0.4;
        let k = 2u32;
        let exp = PredictedExpansion {
            branch: Branch::Periodic,
            t_z: Some(t_z),
            holonomy_angle: hol,
            coefficients,
            prefactor_exponent: 0.5,
            decay_rate: Some(1.0),
        };
        let s_grid: Vec<f64> = (0..20).map(|i| 0.31 * i as f64).collect();
        let q = q_function(&exp, k, &s_grid).unwrap();
        assert!(q.tail_bound < 1e-12);
        let r = (-1.0f64).exp();
        for (i, &s) in s_grid.iter().enumerate() {
            let th = t_z * s + k as f64 * hol;
            let poisson = (1.0 - r * r) / (1.0 - 2.0 * r * th.cos() + r * r) / TWO_PI;
            assert_relative_eq!(q.values[i].re, poisson, max_relative = 1e-12);
            assert!(q.values[i].im.abs() < 1e-14);
        }
    }

    #[test]
    fn q_partial_sums_cauchy_for_hyperbolic() {
        // m = 2 hyperbolic monodromy, lambda = ln 2
        let lam = 2f64.ln();
        let s = crate::symplectic::SymplecticMap::new(
            nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                1.0,
                lam.exp(),
                1.0,
                (-lam).exp(),
            ])),
            1e-12,
        )
        .unwrap();
        let v = InvariantVector::from_alpha(nalgebra::DVector::from_vec(vec![
            c(1.0, 0.0),
            c(0.0, 0.0),
        ]));
        let s_grid: Vec<f64> = (0..64).map(|i| 0.1 * i as f64).collect();
        let mut sups = vec![];
        for n_max in [16u32, 32, 64] {
            let coefficients = gcal_coefficients(&s, &v, n_max).unwrap();
            let decay = fit_decay_rate(&coefficients);
            let exp = PredictedExpansion {
                branch: Branch::Periodic,
                t_z: Some(1.0),
                holonomy_angle: 0.2,
                coefficients,
                prefactor_exponent: 1.5,
                decay_rate: decay,
            };
            let q = q_function(&exp, 4, &s_grid).unwrap();
            sups.push(q);
        }
        // sup-norm Cauchy differences shrink with the tail bound
        let d01: f64 = sups[0]
            .values
            .iter()
            .zip(&sups[1].values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let d12: f64 = sups[1]
            .values
            .iter()
            .zip(&sups[2].values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(d12 < d01);
        assert!(sups[2].tail_bound < 1e-8, "tail {}", sups[2].tail_bound);
        assert!(d12 <= sups[1].tail_bound * 1.0001 + 1e-15);

        // uniform continuity of the limit on a period interval
        let q = &sups[2];
        let mut worst: f64 = 0.0;
        for w in q.values.windows(2) {
            worst = worst.max((w[1] - w[0]).norm());
        }
        assert!(worst < 0.6 * q.values.iter().map(|v| v.norm()).fold(0.0, f64::max));
    }

    #[test]
    fn expansion_auto_extends_until_tail_small() {
        // weakly hyperbolic monodromy: rate lambda/2 = 0.15 needs ~140 terms
        let lam = 0.3f64;
        let s = crate::symplectic::SymplecticMap::new(
            nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                1.0,
                lam.exp(),
                1.0,
                (-lam).exp(),
            ])),
            1e-12,
        )
        .unwrap();
        let model = KahlerModel::flat(2, crate::poly::ZPoly::norm_squared(2), 1.0).unwrap();
        let orbit = synthetic_orbit(&model, s);
        let exp = predicted_expansion_auto(&model, Some(&orbit), &orbit.z.clone(), 1.0).unwrap();
        let n_used = exp.coefficients.iter().map(|c| c.n).max().unwrap();
        assert!(n_used > 32, "extension did not trigger: {n_used}");
        assert!(series_tail_bound(&exp.coefficients, exp.decay_rate) < 1e-8);

        // identity monodromy: no extension possible, returned at base length
        let id = crate::symplectic::SymplecticMap::identity(2);
        let orbit = synthetic_orbit(&model, id);
        let exp = predicted_expansion_auto(&model, Some(&orbit), &orbit.z.clone(), 1.0).unwrap();
        let n_used = exp.coefficients.iter().map(|c| c.n).max().unwrap();
        assert_eq!(n_used, 32);
    }

    fn synthetic_orbit(
        model: &KahlerModel,
        monodromy: crate::symplectic::SymplecticMap,
    ) -> PeriodicOrbitData {
        // an orbit record with prescribed linearization at a point of the
        // flat model where xi is invariant under it
        let z = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let xi = model.hamilton_field_real(&z).unwrap();
        let invariant = InvariantVector::from_real(xi);
        let classification = crate::symplectic::classify(&monodromy);
        PeriodicOrbitData {
            z,
            period: 2.0 * std::f64::consts::PI,
            holonomy_angle: 0.5,
            theta_hat_period: 0.0,
            monodromy_chart: monodromy.matrix().clone(),
            monodromy,
            classification,
            invariant,
            return_residual: 0.0,
        }
    }

    #[test]
    fn nu_window_closed_forms() {
        // non-periodic: (2 pi)^{-1} G_0 (b - a)
        let exp = PredictedExpansion {
            branch: Branch::NonPeriodic,
            t_z: None,
            holonomy_angle: 0.0,
            coefficients: vec![GcalCoefficient {
                n: 0,
                value: c(2.0, 0.0),
                det_p: c(1.0, 0.0),
                matrix_element: c(0.25, 0.0),
            }],
            prefactor_exponent: 0.5,
            decay_rate: None,
        };
        let v = nu_window(&exp, 1, -1.0, 3.0, |_| 1.0).unwrap();
        assert_relative_eq!(v.re, 2.0 * 4.0 / TWO_PI, max_relative = 1e-14);

        // periodic with only n = 0 surviving the mollifier cut
        let coefficients: Vec<GcalCoefficient> = (-3i64..=3)
            .map(|n| GcalCoefficient {
                n,
                value: c(1.0, 0.0),
                det_p: c(1.0, 0.0),
                matrix_element: c(1.0, 0.0),
            })
            .collect();
        let exp = PredictedExpansion {
            branch: Branch::Periodic,
            t_z: Some(2.0),
            holonomy_angle: 0.1,
            coefficients,
            prefactor_exponent: 0.5,
            decay_rate: None,
        };
        let v = nu_window(&exp, 1, 0.0, 1.0, |t| if t == 0.0 { 1.0 } else { 0.0 }).unwrap();
        assert_relative_eq!(v.re, 1.0 / TWO_PI, max_relative = 1e-14);
    }

    #[test]
    fn smoothed_sum_linear_and_monotone() {
        let mu = sphere_measure(16, 0.0);
        let f = TestFunction::gaussian(1.5);
        let g = TestFunction::gaussian(3.0);
        // linearity in f via a scaled plateau against itself
        let p1 = TestFunction::plateau(2.0, 0.5, 1.0, 4096);
        let p2 = TestFunction::plateau(2.0, 0.5, 2.5, 4096);
        let a = smoothed_sum(&mu, &p1, 0.0);
        let b = smoothed_sum(&mu, &p2, 0.0);
        assert_relative_eq!(b, 2.5 * a, max_relative = 1e-12);
        // monotone: the wider Gaussian dominates the narrower one pointwise
        // after matching peak heights, so the sums order accordingly
        let peak_f = f.eval(0.0);
        let peak_g = g.eval(0.0);
        let sum_f = smoothed_sum(&mu, &f, 0.0) / peak_f;
        let sum_g = smoothed_sum(&mu, &g, 0.0) / peak_g;
        assert!(sum_g >= sum_f);
        // uniform continuity of Q as h -> 0 for hyperbolic data
        let lam = 2f64.ln();
        let s = crate::symplectic::SymplecticMap::new(
            nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                1.0,
                lam.exp(),
                1.0,
                (-lam).exp(),
            ])),
            1e-12,
        )
        .unwrap();
        let v = InvariantVector::from_alpha(nalgebra::DVector::from_vec(vec![
            c(1.0, 0.0),
            c(0.0, 0.0),
        ]));
        let coefficients = gcal_coefficients(&s, &v, 48).unwrap();
        let decay = fit_decay_rate(&coefficients);
        let exp = PredictedExpansion {
            branch: Branch::Periodic,
            t_z: Some(1.3),
            holonomy_angle: 0.2,
            coefficients,
            prefactor_exponent: 1.5,
            decay_rate: decay,
        };
        let base: Vec<f64> = (0..32).map(|i| 0.2 * i as f64).collect();
        let mut prev_sup = f64::INFINITY;
        for h in [0.1, 0.01, 0.001] {
            let shifted: Vec<f64> = base.iter().map(|s| s + h).collect();
            let q0 = q_function(&exp, 4, &base).unwrap();
            let q1 = q_function(&exp, 4, &shifted).unwrap();
            let sup: f64 = q0
                .values
                .iter()
                .zip(&q1.values)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(sup < prev_sup);
            prev_sup = sup;
        }
        // sup difference ~ |Q'| h at h = 1e-3
        assert!(prev_sup < 1e-2);
    }

    #[test]
    fn constant_shared_across_models_with_equal_coefficient() {
        // two flat models with the same predicted coefficient G_0 = 1/2:
        // H = |z|^2 at |z| = 2 (E = 4) and H = |z|^2/2 at |z| = 4 (E = 8);
        // their smoothed sums agree without any calibration
        use crate::quantize::{build_fock, fock_cutoff, pointwise_masses};
        let k = 64u32;
        let f = TestFunction::gaussian(2.0);
        let m1 = KahlerModel::flat(1, ZPoly::norm_squared(1), 4.0).unwrap();
        let z1 = [c(2.0, 0.0)];
        let s1 = build_fock(&m1, k, fock_cutoff(k, &z1)).unwrap();
        let mu1 = weyl_measure(&pointwise_masses(&s1, &z1).unwrap(), 4.0);
        let v1 = smoothed_sum(&mu1, &f, 0.0);

        let m2 = KahlerModel::flat(1, ZPoly::norm_squared(1).scale(c(0.5, 0.0)), 8.0).unwrap();
        let z2 = [c(4.0, 0.0)];
        let s2 = build_fock(&m2, k, fock_cutoff(k, &z2)).unwrap();
        let mu2 = weyl_measure(&pointwise_masses(&s2, &z2).unwrap(), 8.0);
        let v2 = smoothed_sum(&mu2, &f, 0.0);

        // identical predicted coefficient
        let e1 = predicted_expansion(&m1, None, &z1, 4.0, 0).unwrap();
        let e2 = predicted_expansion(&m2, None, &z2, 8.0, 0).unwrap();
        let g1 = e1.coefficients[0].value;
        let g2 = e2.coefficients[0].value;
        assert!((g1 - g2).norm() < 1e-12);
        assert!((g1.norm() - 0.5).abs() < 1e-12);

        assert!(
            (v1 / v2 - 1.0).abs() < 0.05,
            "smoothed sums differ: {v1} vs {v2}"
        );
    }

    #[test]
    fn compare_fits_exponent() {
        let ks = [16u32, 32, 64, 128];
        let emp: Vec<f64> = ks.iter().map(|&k| 3.0 * (k as f64).powf(0.5)).collect();
        let pred: Vec<f64> = ks.iter().map(|&k| 3.0 * (k as f64).powf(0.5)).collect();
        let rep = compare(&ks, &emp, &pred, 0.5).unwrap();
        assert_relative_eq!(rep.fitted_exponent, 0.5, max_relative = 1e-12);
        assert!(rep.ratio_spread < 1e-13);
        assert!(compare(&ks[..2], &emp[..2], &pred[..2], 0.5).is_err());
    }
}
