//! Hamiltonian flows on Kähler models, lifted to the circle bundle: base
//! trajectory, fiber holonomy, and the variational (monodromy) equation are
//! integrated as one augmented system with an adaptive Dormand-Prince 5(4)
//! scheme. Requested sample times are hit exactly (the controller clamps the
//! step), so no dense-output interpolation error enters the holonomy checks.

use crate::error::{Error, Result};
use crate::model::KahlerModel;
use crate::quad::gauss_legendre;
use crate::symplectic::{BasisAdaptation, Classification, InvariantVector, SymplecticMap};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy)]
pub struct FlowParams {
    pub ode_tol: f64,
    pub return_tol: f64,
    pub max_step: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            ode_tol: 1e-10,
            return_tol: 1e-9,
            max_step: 0.1,
        }
    }
}

/// State layout: [x_1..x_m, y_1..y_m, theta_hat, M column-major (2m)^2].
fn state_dim(m: usize) -> usize {
    2 * m + 1 + 4 * m * m
}

fn unpack_z(y: &[f64], m: usize) -> Vec<Complex64> {
    (0..m).map(|i| Complex64::new(y[i], y[m + i])).collect()
}

fn rhs(model: &KahlerModel, y: &[f64], dy: &mut [f64]) -> Result<()> {
    let m = model.m;
    let z = unpack_z(y, m);
    let xi = model.hamilton_field(&z)?;
    for i in 0..m {
        dy[i] = xi[i].re;
        dy[m + i] = xi[i].im;
    }
    // theta_hat' = (1/2) <d^c phi, xi> - H
    dy[2 * m] = 0.5 * model.dc_phi_pair(&z, &xi) - model.h_value(&z);
    // variational equation M' = A(z) M
    let a = model.hamilton_jacobian(&z)?;
    let n = 2 * m;
    let moff = 2 * m + 1;
    for col in 0..n {
        for row in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[(row, k)] * y[moff + col * n + k];
            }
            dy[moff + col * n + row] = acc;
        }
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Integrator<'a> {
    model: &'a KahlerModel,
    t: f64,
    y: Vec<f64>,
    h: f64,
    tol: f64,
    max_step: f64,
    direction: f64,
}

impl<'a> Integrator<'a> {
    fn new(model: &'a KahlerModel, z0: &[Complex64], params: &FlowParams, direction: f64) -> Self {
        let m = model.m;
        let mut y = vec![0.0; state_dim(m)];
        for i in 0..m {
            y[i] = z0[i].re;
            y[m + i] = z0[i].im;
        }
        let n = 2 * m;
        for i in 0..n {
            y[2 * m + 1 + i * n + i] = 1.0;
        }
        Integrator {
            model,
            t: 0.0,
            y,
            h: (params.max_step * 0.1).max(1e-6),
            tol: params.ode_tol,
            max_step: params.max_step,
            direction,
        }
    }

    /// One accepted adaptive step of size at most h_cap (> 0).
    fn step(&mut self, h_cap: f64) -> Result<()> {
        let dim = self.y.len();
        let mut k = vec![vec![0.0; dim]; 7];
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > 60 {
                return Err(Error::Integration {
                    t: self.t,
                    reason: "step size control failed to converge".into(),
                });
            }
            let h = self.h.min(h_cap) * self.direction;
            rhs(self.model, &self.y, &mut k[0])?;
            let mut ytmp = vec![0.0; dim];
            for stage in 1..7 {
                for i in 0..dim {
                    let mut acc = 0.0;
                    for j in 0..stage {
                        acc += A[stage - 1][j] * k[j][i];
                    }
                    ytmp[i] = self.y[i] + h * acc;
                }
                rhs(self.model, &ytmp, &mut k[stage])?;
            }
            let mut err: f64 = 0.0;
            let mut y5 = vec![0.0; dim];
            for i in 0..dim {
                let mut acc5 = 0.0;
                let mut acc4 = 0.0;
                for j in 0..7 {
                    acc5 += B5[j] * k[j][i];
                    acc4 += B4[j] * k[j][i];
                }
                y5[i] = self.y[i] + h * acc5;
                let sc = self.tol + self.tol * self.y[i].abs().max(y5[i].abs());
                let e = h * (acc5 - acc4) / sc;
                err += e * e;
            }
            err = (err / dim as f64).sqrt();
            if err <= 1.0 {
                self.t += h;
                self.y = y5;
                let grow = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
                self.h = (self.h * grow.clamp(0.2, 5.0)).min(self.max_step);
                let m = self.model.m;
                let r = self.y[..2 * m].iter().map(|v| v * v).sum::<f64>().sqrt();
                if r > self.model.domain_radius {
                    return Err(Error::DomainExit {
                        t: self.t,
                        radius: r,
                    });
                }
                return Ok(());
            }
            self.h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if self.h < 1e-14 {
                return Err(Error::Integration {
                    t: self.t,
                    reason: "step underflow".into(),
                });
            }
        }
    }

    /// Advance to exactly t_target along the integration direction.
    fn advance_to(&mut self, t_target: f64) -> Result<()> {
        while (t_target - self.t) * self.direction > 1e-14 {
            let remaining = (t_target - self.t) * self.direction;
            self.step(remaining)?;
        }
        Ok(())
    }
}

/// A sampled lifted trajectory with monodromy along it.
#[derive(Debug, Clone)]
pub struct LiftedTrajectory {
    pub times: Vec<f64>,
    pub base_points: Vec<Vec<Complex64>>,
    pub theta_hat: Vec<f64>,
    pub theta_h: Vec<f64>,
    pub monodromy: Vec<DMatrix<f64>>,
    pub energy: Vec<f64>,
    /// per-sample |M^t W(z_t) M - W(z_0)| (omega varies with z)
    pub symplectic_residuals: Vec<f64>,
    pub energy_drift: f64,
    /// max of `symplectic_residuals`
    pub symplectic_residual: f64,
}

/// Integrates the lifted flow and the variational equation, sampling at the
/// given times (strictly increasing, all of one sign; t = 0 is the start).
pub fn flow(
    model: &KahlerModel,
    z0: &[Complex64],
    t_grid: &[f64],
    params: &FlowParams,
) -> Result<LiftedTrajectory> {
    if t_grid.is_empty() {
        return Err(Error::Input("empty sample grid".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input(
            "sample times must be strictly increasing".into(),
        ));
    }
    let forward = t_grid.iter().all(|&t| t >= 0.0);
    let backward = t_grid.iter().all(|&t| t <= 0.0);
    if !(forward || backward) {
        return Err(Error::Input(
            "sample times must not mix signs in one call".into(),
        ));
    }
    let m = model.m;
    let n = 2 * m;
    let h0 = model.h_value(z0);
    let w0 = model.omega_matrix(z0);
    let direction = if backward && t_grid.iter().any(|&t| t < 0.0) {
        -1.0
    } else {
        1.0
    };
    let mut integ = Integrator::new(model, z0, params, direction);
    let mut out = LiftedTrajectory {
        times: Vec::with_capacity(t_grid.len()),
        base_points: Vec::with_capacity(t_grid.len()),
        theta_hat: Vec::with_capacity(t_grid.len()),
        theta_h: Vec::with_capacity(t_grid.len()),
        monodromy: Vec::with_capacity(t_grid.len()),
        energy: Vec::with_capacity(t_grid.len()),
        symplectic_residuals: Vec::with_capacity(t_grid.len()),
        energy_drift: 0.0,
        symplectic_residual: 0.0,
    };
    let grid: Vec<f64> = if direction < 0.0 {
        let mut g: Vec<f64> = t_grid.to_vec();
        g.reverse();
        g
    } else {
        t_grid.to_vec()
    };
    for &t in &grid {
        integ.advance_to(t)?;
        let z = unpack_z(&integ.y, m);
        let th = integ.y[2 * m];
        let mat = DMatrix::from_fn(n, n, |r, c| integ.y[2 * m + 1 + c * n + r]);
        let e = model.h_value(&z);
        out.energy_drift = out.energy_drift.max((e - h0).abs());
        let wt = model.omega_matrix(&z);
        let res = (mat.transpose() * wt * &mat - &w0).amax();
        out.symplectic_residual = out.symplectic_residual.max(res);
        out.symplectic_residuals.push(res);
        out.times.push(t);
        out.base_points.push(z);
        out.theta_hat.push(th);
        out.theta_h.push(th + t * h0);
        out.monodromy.push(mat);
        out.energy.push(e);
    }
    if direction < 0.0 {
        out.times.reverse();
        out.base_points.reverse();
        out.theta_hat.reverse();
        out.theta_h.reverse();
        out.monodromy.reverse();
        out.energy.reverse();
        out.symplectic_residuals.reverse();
    }
    Ok(out)
}

/// The contact lift of the Hamilton field at a base point, as the
/// (2m+1)-vector (xi_x, xi_y, theta-rate): the horizontal lift minus H times
/// the Reeb direction, so that pairing with the contact form is -H.
pub fn contact_lift_field(model: &KahlerModel, z: &[Complex64]) -> Result<DVector<f64>> {
    let m = model.m;
    let xi = model.hamilton_field(z)?;
    let mut out = DVector::zeros(2 * m + 1);
    for i in 0..m {
        out[i] = xi[i].re;
        out[m + i] = xi[i].im;
    }
    out[2 * m] = 0.5 * model.dc_phi_pair(z, &xi) - model.h_value(z);
    Ok(out)
}

/// Pairing of the contact form alpha = dtheta - (1/2) d^c phi with a lifted
/// tangent vector (v, s).
pub fn contact_form_pair(model: &KahlerModel, z: &[Complex64], v: &DVector<f64>, s: f64) -> f64 {
    let m = model.m;
    let vc = nalgebra::DVector::from_iterator(m, (0..m).map(|i| Complex64::new(v[i], v[m + i])));
    s - 0.5 * model.dc_phi_pair(z, &vc)
}

/// Single-sample convenience wrapper: (z_t, theta_hat(t), monodromy(t)).
pub fn flow_to(
    model: &KahlerModel,
    z0: &[Complex64],
    t: f64,
    params: &FlowParams,
) -> Result<(Vec<Complex64>, f64, DMatrix<f64>)> {
    if t == 0.0 {
        let n = 2 * model.m;
        return Ok((z0.to_vec(), 0.0, DMatrix::identity(n, n)));
    }
    let traj = flow(model, z0, &[t], params)?;
    Ok((
        traj.base_points[0].clone(),
        traj.theta_hat[0],
        traj.monodromy[0].clone(),
    ))
}

/// A detected closed orbit with its lift data and linearization.
#[derive(Debug, Clone)]
pub struct PeriodicOrbitData {
    pub z: Vec<Complex64>,
    pub period: f64,
    /// Horizontal holonomy angle theta_h at one period.
    pub holonomy_angle: f64,
    pub theta_hat_period: f64,
    /// Monodromy in raw chart coordinates.
    pub monodromy_chart: DMatrix<f64>,
    /// Monodromy in the omega(e, Je) = 2 adapted frame at z.
    pub monodromy: SymplecticMap,
    pub classification: Classification,
    /// Hamilton vector at z in the adapted frame.
    pub invariant: InvariantVector,
    pub return_residual: f64,
}

fn distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Builds the orbit data for a known (already polished) period.
pub fn orbit_data(
    model: &KahlerModel,
    z0: &[Complex64],
    period: f64,
    params: &FlowParams,
) -> Result<PeriodicOrbitData> {
    let (zt, theta_hat, mono) = flow_to(model, z0, period, params)?;
    let return_residual = distance(&zt, z0);
    let g = model.metric(z0);
    let adapt = BasisAdaptation::from_metric(&g)?;
    let mono_tol = (params.ode_tol * 1e3).max(1e-8);
    let adapted = adapt.monodromy(&mono, mono_tol)?;
    let xi = model.hamilton_field_real(z0)?;
    let alpha = adapt.vector(&xi);
    let invariant = InvariantVector::from_alpha(alpha);
    let classification = crate::symplectic::classify(&adapted);
    Ok(PeriodicOrbitData {
        z: z0.to_vec(),
        period,
        holonomy_angle: theta_hat + period * model.h_value(z0),
        theta_hat_period: theta_hat,
        monodromy_chart: mono,
        monodromy: adapted,
        classification,
        invariant,
        return_residual,
    })
}

/// Scans (0, t_max] for the first return of the base point and polishes it
/// by golden-section search. Returns None when no return below `return_tol`
/// exists.
pub fn find_period(
    model: &KahlerModel,
    z0: &[Complex64],
    t_max: f64,
    params: &FlowParams,
) -> Result<Option<PeriodicOrbitData>> {
    let xi = model.hamilton_field_real(z0)?;
    let speed = xi.norm();
    if speed < 1e-12 {
        return Err(Error::Unsupported(
            "base point is a critical point of H".into(),
        ));
    }
    const COARSE: usize = 10_000;
    let dt = t_max / COARSE as f64;
    let grid: Vec<f64> = (1..=COARSE).map(|i| i as f64 * dt).collect();
    let scan_params = FlowParams {
        ode_tol: (params.ode_tol * 100.0).min(1e-8),
        ..*params
    };
    let traj = flow(model, z0, &grid, &scan_params)?;
    let d: Vec<f64> = traj.base_points.iter().map(|z| distance(z, z0)).collect();
    // skip the immediate neighborhood of t = 0 (d grows linearly there)
    let skip = (((0.3 / speed).max(3.0 * dt)) / dt).ceil() as usize;
    let eval = |t: f64| -> Result<f64> {
        let (zt, _, _) = flow_to(model, z0, t, params)?;
        Ok(distance(&zt, z0))
    };
    for i in skip.max(1)..d.len() - 1 {
        if d[i] <= d[i - 1] && d[i] <= d[i + 1] && d[i] < 0.05 * speed * t_max {
            let mut a = grid[i - 1];
            let mut b = grid[i + 1];
            let gold = (5f64.sqrt() - 1.0) / 2.0;
            let mut c1 = b - gold * (b - a);
            let mut c2 = a + gold * (b - a);
            let mut f1 = eval(c1)?;
            let mut f2 = eval(c2)?;
            for _ in 0..80 {
                if b - a < 1e-13 * t_max.max(1.0) {
                    break;
                }
                if f1 < f2 {
                    b = c2;
                    c2 = c1;
                    f2 = f1;
                    c1 = b - gold * (b - a);
                    f1 = eval(c1)?;
                } else {
                    a = c1;
                    c1 = c2;
                    f1 = f2;
                    c2 = a + gold * (b - a);
                    f2 = eval(c2)?;
                }
            }
            let t_best = 0.5 * (a + b);
            let d_best = eval(t_best)?;
            if d_best <= params.return_tol {
                return Ok(Some(orbit_data(model, z0, t_best, params)?));
            }
        }
    }
    Ok(None)
}

/// Fixed-step RK4 return-time search: an independent period oracle
/// (different integrator, parabolic instead of golden-section refinement).
pub fn rk4_return_time(
    model: &KahlerModel,
    z0: &[Complex64],
    t_max: f64,
    dt: f64,
) -> Result<Option<f64>> {
    let m = model.m;
    let f = |z: &Vec<Complex64>| -> Result<Vec<Complex64>> {
        let xi = model.hamilton_field(z)?;
        Ok(xi.iter().copied().collect())
    };
    let step = |z: &Vec<Complex64>| -> Result<Vec<Complex64>> {
        let k1 = f(z)?;
        let z2: Vec<Complex64> = (0..m).map(|i| z[i] + 0.5 * dt * k1[i]).collect();
        let k2 = f(&z2)?;
        let z3: Vec<Complex64> = (0..m).map(|i| z[i] + 0.5 * dt * k2[i]).collect();
        let k3 = f(&z3)?;
        let z4: Vec<Complex64> = (0..m).map(|i| z[i] + dt * k3[i]).collect();
        let k4 = f(&z4)?;
        Ok((0..m)
            .map(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect())
    };
    let speed = model.hamilton_field_real(z0)?.norm();
    let mut z = z0.to_vec();
    let mut t = 0.0;
    let mut history: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    while t < t_max {
        z = step(&z)?;
        t += dt;
        history.push((t, distance(&z, z0)));
    }
    let skip = (((0.3 / speed).max(3.0 * dt)) / dt).ceil() as usize;
    for i in skip..history.len() - 1 {
        let (tm, dm) = history[i];
        if dm <= history[i - 1].1 && dm <= history[i + 1].1 && dm < 0.1 {
            // parabolic refinement on the squared distance (smooth at the
            // minimum, unlike the distance itself)
            let d0 = history[i - 1].1.powi(2);
            let dmid = dm * dm;
            let d2 = history[i + 1].1.powi(2);
            let denom = d0 - 2.0 * dmid + d2;
            let t_ref = if denom.abs() > 1e-300 {
                tm + 0.5 * dt * (d0 - d2) / denom
            } else {
                tm
            };
            return Ok(Some(t_ref));
        }
    }
    Ok(None)
}

/// Fit of |theta_hat_w(T) - theta_hat_0(T)| against |w| on a log-log scale.
/// The chart must be K-centred on the orbit point (use `model::recenter`
/// first); a slope >= 3 - eps verifies the cubic vanishing of the holonomy
/// difference.
#[derive(Debug, Clone)]
pub struct HolonomySlope {
    pub radii: Vec<f64>,
    pub max_diffs: Vec<f64>,
    pub slope: f64,
    /// true when all differences sit at the integrator noise floor.
    pub below_noise_floor: bool,
}

pub fn holonomy_hessian_check(
    model: &KahlerModel,
    period: f64,
    radii: &[f64],
    directions: usize,
    params: &FlowParams,
) -> Result<HolonomySlope> {
    let m = model.m;
    let origin = vec![Complex64::new(0.0, 0.0); m];
    let (_, theta0, _) = flow_to(model, &origin, period, params)?;
    let mut max_diffs = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut worst: f64 = 0.0;
        for d in 0..directions {
            let ang = 2.0 * std::f64::consts::PI * d as f64 / directions as f64;
            let mut w = vec![Complex64::new(0.0, 0.0); m];
            w[0] = Complex64::from_polar(r, ang);
            if m > 1 {
                w[1] = Complex64::from_polar(0.37 * r, 2.1 * ang + 0.5);
            }
            let (_, theta_w, _) = flow_to(model, &w, period, params)?;
            worst = worst.max((theta_w - theta0).abs());
        }
        max_diffs.push(worst);
    }
    let noise = (params.ode_tol * 100.0).max(1e-13);
    let below_noise_floor = max_diffs.iter().all(|&d| d < noise);
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(&max_diffs)
        .filter(|(_, &d)| d > 1e-300)
        .map(|(&r, &d)| (r.ln(), d.ln()))
        .collect();
    let slope = if pts.len() >= 2 && !below_noise_floor {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::INFINITY
    };
    Ok(HolonomySlope {
        radii: radii.to_vec(),
        max_diffs,
        slope,
        below_noise_floor,
    })
}

/// Integral of (1/2) d^c phi along the piecewise-linear path through the
/// samples, by per-segment Gauss-Legendre quadrature.
pub fn loop_potential_integral(model: &KahlerModel, path: &[Vec<Complex64>]) -> Result<f64> {
    if path.len() < 2 {
        return Err(Error::Input("path needs at least two samples".into()));
    }
    let rule = gauss_legendre(24)?;
    let mut total = 0.0;
    for seg in path.windows(2) {
        let a = &seg[0];
        let b = &seg[1];
        let tangent = DVector::from_iterator(model.m, (0..model.m).map(|i| b[i] - a[i]));
        total += rule.integrate_on(0.0, 1.0, |s| {
            let z: Vec<Complex64> = (0..model.m).map(|i| a[i] + s * (b[i] - a[i])).collect();
            0.5 * model.dc_phi_pair(&z, &tangent)
        });
    }
    Ok(total)
}

/// Both sides of the single-chart holonomy comparison for a straight path
/// gamma from z0 to w: theta_hat_w(T) - theta_hat_0(T) against
/// -Int_gamma (1/2) d^c phi + Int_{g^T gamma} (1/2) d^c phi.
pub fn phase_local_check(
    model: &KahlerModel,
    z0: &[Complex64],
    w: &[Complex64],
    period: f64,
    segments: usize,
    params: &FlowParams,
) -> Result<(f64, f64)> {
    let (_, theta_0, _) = flow_to(model, z0, period, params)?;
    let (_, theta_w, _) = flow_to(model, w, period, params)?;
    let lhs = theta_w - theta_0;
    let mut gamma: Vec<Vec<Complex64>> = Vec::with_capacity(segments + 1);
    let mut image: Vec<Vec<Complex64>> = Vec::with_capacity(segments + 1);
    for i in 0..=segments {
        let s = i as f64 / segments as f64;
        let p: Vec<Complex64> = (0..model.m).map(|j| z0[j] + s * (w[j] - z0[j])).collect();
        let (gp, _, _) = flow_to(model, &p, period, params)?;
        gamma.push(p);
        image.push(gp);
    }
    let rhs = loop_potential_integral(model, &image)? - loop_potential_integral(model, &gamma)?;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{recenter, Potential, ScalarRep, SpherePoly};
    use crate::poly::ZPoly;
    use crate::symplectic::SymplecticClass;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn linear_h(beta: Complex64) -> ZPoly {
        // H = z beta̅ + beta z̄
        let mut h = ZPoly::monomial(1, &[1], &[0], beta.conj());
        h.add_term(&[0], &[1], beta);
        h
    }

    #[test]
    fn linear_flow_matches_closed_form() {
        // ĝ^t(z, theta) = (z - i beta t, theta - t Re(beta z̄))
        let beta = c(0.7, -0.4);
        let model = KahlerModel::flat(1, linear_h(beta), 0.0).unwrap();
        let z0 = [c(0.3, 0.9)];
        let params = FlowParams::default();
        let grid: Vec<f64> = (1..=10).map(|i| 0.3 * i as f64).collect();
        let traj = flow(&model, &z0, &grid, &params).unwrap();
        for (i, &t) in traj.times.iter().enumerate() {
            let expect_z = z0[0] - Complex64::i() * beta * t;
            assert!((traj.base_points[i][0] - expect_z).norm() < 1e-10);
            let expect_theta = -t * (beta * z0[0].conj()).re;
            assert_relative_eq!(traj.theta_hat[i], expect_theta, epsilon = 1e-10);
        }
        // linear flow never returns
        assert!(find_period(&model, &z0, 10.0, &params).unwrap().is_none());
    }

    #[test]
    fn quadratic_flow_circle_period_and_holonomy() {
        // flat phi, H = |z|^2: g^t is rotation by -t; theta_hat = 0 and
        // theta_h(T) = T E
        let model = KahlerModel::flat(1, ZPoly::norm_squared(1), 1.0).unwrap();
        let z0 = [c(1.0, 0.0)];
        let params = FlowParams::default();
        let orbit = find_period(&model, &z0, 10.0, &params).unwrap().unwrap();
        assert_relative_eq!(orbit.period, 2.0 * std::f64::consts::PI, epsilon = 1e-8);
        assert!(orbit.theta_hat_period.abs() < 1e-9);
        assert_relative_eq!(
            orbit.holonomy_angle,
            2.0 * std::f64::consts::PI,
            epsilon = 1e-8
        );
        assert!(orbit.return_residual < 1e-9);
        assert_eq!(orbit.classification.class, SymplecticClass::Identity);
        // alpha = complex rep of xi = -iz0: |alpha| = 1
        assert_relative_eq!(orbit.invariant.alpha[0].norm(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn energy_and_symplectic_residuals_stay_small() {
        let pot = Potential::series(1, &[(vec![2], vec![2], 0.1)]).unwrap();
        let model =
            KahlerModel::new(1, pot, ScalarRep::Poly(ZPoly::norm_squared(1)), 1.0, 30.0).unwrap();
        let params = FlowParams {
            ode_tol: 1e-11,
            ..Default::default()
        };
        let grid: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let traj = flow(&model, &[c(1.0, 0.0)], &grid, &params).unwrap();
        assert!(traj.energy_drift < 1e-9, "drift {}", traj.energy_drift);
        assert!(
            traj.symplectic_residual < 1e-8,
            "residual {}",
            traj.symplectic_residual
        );
    }

    #[test]
    fn perturbed_period_matches_independent_oracle() {
        // radial geometry: G = 1 + 0.4 r^2, H = |z|^2 gives
        // T(r) = 2 pi (1 + 0.4 r^2) exactly
        let pot = Potential::series(1, &[(vec![2], vec![2], 0.1)]).unwrap();
        let model =
            KahlerModel::new(1, pot, ScalarRep::Poly(ZPoly::norm_squared(1)), 1.0, 30.0).unwrap();
        let z0 = [c(1.0, 0.0)];
        let params = FlowParams::default();
        let orbit = find_period(&model, &z0, 12.0, &params).unwrap().unwrap();
        let exact = 2.0 * std::f64::consts::PI * 1.4;
        assert_relative_eq!(orbit.period, exact, epsilon = 1e-8);
        let rk4 = rk4_return_time(&model, &z0, 12.0, 1e-3).unwrap().unwrap();
        assert!((orbit.period - rk4).abs() < 1e-6);
    }

    #[test]
    fn sphere_orbit_period_and_holonomy() {
        // H = x3: rotation at angular speed 2, T = pi;
        // theta_h(T) = pi (E - 1) = -pi at the equator
        let model = KahlerModel::sphere(SpherePoly::height(), 0.0).unwrap();
        let z0 = [c(1.0, 0.0)];
        let params = FlowParams::default();
        let orbit = find_period(&model, &z0, 8.0, &params).unwrap().unwrap();
        assert_relative_eq!(orbit.period, std::f64::consts::PI, epsilon = 1e-9);
        assert_relative_eq!(orbit.holonomy_angle, -std::f64::consts::PI, epsilon = 1e-8);
        assert_eq!(orbit.classification.class, SymplecticClass::Identity);
        // adapted alpha: |alpha|^2 = |xi|_g^2 / 2 = 1
        assert_relative_eq!(orbit.invariant.alpha[0].norm(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn holonomy_cocycle_property() {
        let pot = Potential::series(1, &[(vec![2], vec![2], 0.07)]).unwrap();
        let mut h = ZPoly::norm_squared(1);
        h.add_term(&[3], &[0], c(0.02, 0.0));
        h.add_term(&[0], &[3], c(0.02, 0.0));
        let model = KahlerModel::new(1, pot, ScalarRep::Poly(h), 1.0, 30.0).unwrap();
        let params = FlowParams::default();
        let w = [c(0.9, -0.2)];
        for (s, t) in [(0.7, 1.3), (0.25, 2.0), (1.1, 0.4)] {
            let (_, th_total, _) = flow_to(&model, &w, s + t, &params).unwrap();
            let (ws, th_s, _) = flow_to(&model, &w, s, &params).unwrap();
            let (_, th_t_after, _) = flow_to(&model, &ws, t, &params).unwrap();
            assert!(
                (th_total - th_s - th_t_after).abs() < 1e-8,
                "cocycle violated: {} vs {}",
                th_total,
                th_s + th_t_after
            );
        }
    }

    #[test]
    fn monodromy_cocycle_property() {
        let pot = Potential::series(1, &[(vec![2], vec![2], 0.07)]).unwrap();
        let model =
            KahlerModel::new(1, pot, ScalarRep::Poly(ZPoly::norm_squared(1)), 1.0, 30.0).unwrap();
        let params = FlowParams::default();
        let w = [c(0.8, 0.3)];
        let (s, t) = (0.6, 1.7);
        let (_, _, m_total) = flow_to(&model, &w, s + t, &params).unwrap();
        let (ws, _, m_s) = flow_to(&model, &w, s, &params).unwrap();
        let (_, _, m_t) = flow_to(&model, &ws, t, &params).unwrap();
        assert!((m_total - m_t * m_s).amax() < 1e-8);
    }

    #[test]
    fn contact_form_invariance_finite_difference() {
        let pot = Potential::series(1, &[(vec![2], vec![2], 0.05)]).unwrap();
        let model =
            KahlerModel::new(1, pot, ScalarRep::Poly(ZPoly::norm_squared(1)), 1.0, 30.0).unwrap();
        let params = FlowParams {
            ode_tol: 1e-12,
            ..Default::default()
        };
        let z0 = [c(0.9, 0.4)];
        let t = 1.3;
        let eps = 1e-5;
        let (zt, _, mono) = flow_to(&model, &z0, t, &params).unwrap();
        for dir in 0..2 {
            let mut zp = z0;
            let mut zm = z0;
            if dir == 0 {
                zp[0] += c(eps, 0.0);
                zm[0] -= c(eps, 0.0);
            } else {
                zp[0] += c(0.0, eps);
                zm[0] -= c(0.0, eps);
            }
            let (_, thp, _) = flow_to(&model, &zp, t, &params).unwrap();
            let (_, thm, _) = flow_to(&model, &zm, t, &params).unwrap();
            let dtheta = (thp - thm) / (2.0 * eps);
            // alpha pairing: <alpha, (v, s)> = s - (1/2)<d^c phi, v>
            let v = DVector::from_vec(if dir == 0 {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            });
            let vc = DVector::from_vec(vec![c(v[0], v[1])]);
            let before = -0.5 * model.dc_phi_pair(&z0, &vc);
            let dgv = &mono * &v;
            let dgv_c = DVector::from_vec(vec![c(dgv[0], dgv[1])]);
            let after = dtheta - 0.5 * model.dc_phi_pair(&zt, &dgv_c);
            assert!(
                (after - before).abs() < 1e-6,
                "contact pairing drifted: {before} vs {after}"
            );
        }
    }

    #[test]
    fn holonomy_is_identically_zero_for_flat_quadratic() {
        let model = KahlerModel::flat(1, ZPoly::norm_squared(1), 1.0).unwrap();
        let params = FlowParams {
            ode_tol: 1e-12,
            ..Default::default()
        };
        let t = 2.0 * std::f64::consts::PI;
        let chk = holonomy_hessian_check(&model, t, &[1e-3, 1e-2, 1e-1], 4, &params).unwrap();
        assert!(chk.below_noise_floor, "diffs: {:?}", chk.max_diffs);
    }

    #[test]
    fn holonomy_cubic_vanishing_on_recentred_chart() {
        // perturbed potential and quartic Hamiltonian term; recentre on an
        // orbit point so the chart is K-centred there
        let pot = Potential::series(1, &[(vec![2], vec![2], 0.05)]).unwrap();
        let mut h = ZPoly::norm_squared(1);
        h.add_term(&[4], &[0], c(0.05, 0.0));
        h.add_term(&[0], &[4], c(0.05, 0.0));
        let base = KahlerModel::new(1, pot, ScalarRep::Poly(h), 0.0, 30.0).unwrap();
        let z0 = [c(0.8, 0.0)];
        let rec = recenter(&base, &z0, 10).unwrap();
        let params = FlowParams {
            ode_tol: 1e-12,
            return_tol: 1e-10,
            ..Default::default()
        };
        let orbit = find_period(&rec, &[c(0.0, 0.0)], 15.0, &params)
            .unwrap()
            .expect("recentred orbit through the origin");
        let chk = holonomy_hessian_check(
            &rec,
            orbit.period,
            &[1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
            6,
            &params,
        )
        .unwrap();
        assert!(
            chk.slope >= 2.9,
            "slope {} diffs {:?}",
            chk.slope,
            chk.max_diffs
        );
        // slope stable under tolerance refinement
        let coarse = FlowParams {
            ode_tol: 1e-9,
            return_tol: 1e-8,
            ..Default::default()
        };
        let chk2 = holonomy_hessian_check(
            &rec,
            orbit.period,
            &[1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
            6,
            &coarse,
        )
        .unwrap();
        assert!(
            (chk.slope - chk2.slope).abs() < 0.2,
            "slope unstable: {} vs {}",
            chk.slope,
            chk2.slope
        );
    }

    #[test]
    fn straight_line_potential_integral_is_cubic() {
        // non-radial perturbation a (z^3 z̄^2 + z^2 z̄^3): along the straight
        // line z = s w the integral is exactly -a |w|^4 Im(w) / 5
        let a = 0.05;
        let pot = Potential::series(1, &[(vec![3], vec![2], a)]).unwrap();
        let model =
            KahlerModel::new(1, pot, ScalarRep::Poly(ZPoly::norm_squared(1)), 1.0, 30.0).unwrap();
        let mut vals = vec![];
        for r in [0.05f64, 0.1, 0.2] {
            let w = c(r, 0.4 * r);
            let path: Vec<Vec<Complex64>> = (0..=32).map(|i| vec![w * (i as f64 / 32.0)]).collect();
            let v = loop_potential_integral(&model, &path).unwrap();
            let exact = -a * w.norm_sqr().powi(2) * w.im / 5.0;
            assert_relative_eq!(v, exact, max_relative = 1e-10);
            vals.push((r, v.abs()));
        }
        // bound O(|w|^3): the fitted decay exponent is at least cubic
        let slope = ((vals[2].1 / vals[0].1).ln()) / ((vals[2].0 / vals[0].0).ln());
        assert!(slope > 2.9, "slope {slope}");

        // radial path with radial potential: the integral vanishes
        let radial = Potential::series(1, &[(vec![2], vec![2], 0.08)]).unwrap();
        let model = KahlerModel::new(
            1,
            radial,
            ScalarRep::Poly(ZPoly::norm_squared(1)),
            1.0,
            30.0,
        )
        .unwrap();
        let path: Vec<Vec<Complex64>> = (0..=16).map(|i| vec![c(i as f64 / 16.0, 0.0)]).collect();
        let v = loop_potential_integral(&model, &path).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn phase_local_two_sided_comparison() {
        let pot = Potential::series(1, &[(vec![2], vec![2], 0.05)]).unwrap();
        let base =
            KahlerModel::new(1, pot, ScalarRep::Poly(ZPoly::norm_squared(1)), 0.0, 30.0).unwrap();
        let z0v = [c(0.7, 0.0)];
        let rec = recenter(&base, &z0v, 10).unwrap();
        let params = FlowParams {
            ode_tol: 1e-12,
            return_tol: 1e-10,
            ..Default::default()
        };
        let orbit = find_period(&rec, &[c(0.0, 0.0)], 15.0, &params)
            .unwrap()
            .unwrap();
        let w = [c(0.02, 0.015)];
        let (lhs, rhs) =
            phase_local_check(&rec, &[c(0.0, 0.0)], &w, orbit.period, 64, &params).unwrap();
        assert!(
            (lhs - rhs).abs() < 1e-8,
            "phase-local mismatch: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn contact_lift_examples() {
        // constant H = c: pure fiber rotation at rate -c
        let model = KahlerModel::flat(1, ZPoly::constant(1, c(2.0, 0.0)), 0.0).unwrap();
        let v = contact_lift_field(&model, &[c(0.4, -0.1)]).unwrap();
        assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15);
        assert_relative_eq!(v[2], -2.0, max_relative = 1e-15);

        // linear case: xi-hat = -i beta d_z + i beta-bar d_zbar
        //              - (1/2)(z beta-bar + beta z-bar) d_theta
        let beta = c(0.3, 0.8);
        let model = KahlerModel::flat(1, linear_h(beta), 0.0).unwrap();
        let z = [c(0.7, -0.2)];
        let v = contact_lift_field(&model, &z).unwrap();
        let xi = -Complex64::i() * beta;
        assert_relative_eq!(v[0], xi.re, max_relative = 1e-14);
        assert_relative_eq!(v[1], xi.im, max_relative = 1e-14);
        // theta rate -(1/2)(z beta-bar + beta z-bar) = -Re(z beta-bar)
        assert_relative_eq!(v[2], -(z[0] * beta.conj()).re, epsilon = 1e-14);

        // <alpha, xi-hat> + H = 0 on random samples of a curved model
        let pot = Potential::series(1, &[(vec![2], vec![2], 0.06)]).unwrap();
        let mut h = ZPoly::norm_squared(1);
        h.add_term(&[2], &[0], c(0.03, 0.0));
        h.add_term(&[0], &[2], c(0.03, 0.0));
        let model = KahlerModel::new(1, pot, ScalarRep::Poly(h), 0.0, 30.0).unwrap();
        for z in [[c(0.5, 0.1)], [c(-0.3, 0.9)], [c(1.1, -0.6)]] {
            let v = contact_lift_field(&model, &z).unwrap();
            let base = v.rows(0, 2).into_owned();
            let pair = contact_form_pair(&model, &z, &base, v[2]);
            assert!((pair + model.h_value(&z)).abs() < 1e-13);
        }
    }

    #[test]
    fn domain_exit_is_reported() {
        // linear Hamiltonian escapes to infinity
        let model = {
            let mut m = KahlerModel::flat(1, linear_h(c(1.0, 0.0)), 0.0).unwrap();
            m.domain_radius = 2.0;
            m
        };
        let err = flow(&model, &[c(0.0, 0.0)], &[10.0], &FlowParams::default()).unwrap_err();
        match err {
            Error::DomainExit { .. } => {}
            other => panic!("expected domain exit, got {other}"),
        }
    }
}
