//! First-order correction in the mass-ratio parameter on top of a
//! zeroth-order limit solution, and the corrected reconstruction.
//!
//! The correction triple (mu, nu, omega) consists of the amplitude
//! correction mu(t,x,y), the classical-phase correction nu(t,x) with
//! A nu = nu, and the quantum-phase correction omega(t,x,y) with
//! A omega = 0. The triple satisfies a linear transport system whose
//! coefficients come from the zeroth-order fields (R, theta_A, theta_B):
//!
//!   d mu / dt    = -(1/m1) [dx theta_A dx mu + (dx nu + dx theta_B) dx R]
//!                  -(1/2m1)[dxx theta_A mu + (dxx nu + dxx theta_B) R]
//!                  -(1/m2) [dy theta_B dy mu + dy omega dy R]
//!                  -(1/2m2)[dyy theta_B mu + dyy omega R],
//!   d nu / dt    = -(1/m1) dx theta_A dx nu
//!                  + A[-(1/2m2)(dy theta_B)^2 + (1/2m2) dyy R / R - V],
//!   d omega / dt = B[-(1/2m1)(2 dx theta_A dx omega + 2 dx nu dx theta_B
//!                  + (dx theta_B)^2) + (1/2m1) dxx R / R
//!                  - (1/m2) dy theta_B dy omega
//!                  + (1/2m2)(dyy mu - mu dyy R / R) / R].
//!
//! Amplitude quotients are evaluated through the log-amplitude identity
//! dyy R / R = dyy s + (dy s)^2 with s = ln R and multiplied by a smooth
//! amplitude taper, so the far tail never drives the stepper. The corrected
//! wave function is psi = exp(i(theta_A/eps + nu + theta_B + eps omega))
//! (R + eps mu), one order more accurate than the plain reconstruction.

use num_complex::Complex64;

use crate::cq_limit::{stream_limit_lagrangian, LagrangianOptions, LimitSolution};
use crate::defaults::{self, amplitude_taper};
use crate::error::{Error, Result};
use crate::full_qm::ModelParams;
use crate::numerics::derivative_line_nonperiodic;
use crate::numerics::grid::{ComplexField2D, Grid2D, RealField1D, RealField2D};
use crate::operators::AveragingKernel;
use crate::polar::PolarState;

/// First-order correction triple riding on a zeroth-order limit solution.
#[derive(Debug, Clone)]
pub struct CorrectionState {
    /// Amplitude correction mu(x, y).
    pub mu: RealField2D,
    /// Classical-phase correction nu(x); x-only storage keeps A nu = nu.
    pub nu: RealField1D,
    /// Quantum-phase correction omega(x, y) with zero kernel average.
    pub omega: RealField2D,
}

impl CorrectionState {
    /// Zero correction on the given grid, the convention for experiments
    /// whose physical initial state does not depend on the small parameter.
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            mu: RealField2D::zeros(grid),
            nu: RealField1D::zeros(grid.x_axis()),
            omega: RealField2D::zeros(grid),
        }
    }

    /// Validates the constraint structure: shared grids, finite entries,
    /// and |A omega| below `tol`.
    pub fn validated(
        mu: RealField2D,
        nu: RealField1D,
        omega: RealField2D,
        kernel: &AveragingKernel,
        tol: f64,
    ) -> Result<Self> {
        let state = Self { mu, nu, omega };
        state.check(kernel, tol)?;
        Ok(state)
    }

    fn check(&self, kernel: &AveragingKernel, tol: f64) -> Result<()> {
        if self.mu.grid() != self.omega.grid() || self.nu.grid().n != self.mu.grid().nx {
            return Err(Error::GridMismatch {
                context: "correction fields on one grid",
            });
        }
        let finite = self.mu.values().iter().all(|v| v.is_finite())
            && self.nu.values().iter().all(|v| v.is_finite())
            && self.omega.values().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter(
                "correction fields must be finite".into(),
            ));
        }
        let avg = kernel.average_profile(&self.omega)?;
        let drift = avg.values().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if drift > tol {
            return Err(Error::InvalidParameter(format!(
                "omega kernel average {drift:.3e} exceeds {tol:.1e}"
            )));
        }
        Ok(())
    }
}

/// Correction trajectory with the recorded constraint drift.
#[derive(Debug, Clone)]
pub struct CorrectionTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<CorrectionState>,
    /// Largest |A omega| seen before a re-projection since the previous
    /// stored time (first entry covers the initial state only).
    pub omega_drift: Vec<f64>,
}

/// Zeroth-order coefficient fields derived from one polar snapshot.
///
/// All derivatives use fourth-order stencils with one-sided closures; the
/// amplitude enters through s = ln R so that quotients are formed without
/// dividing fields by R. `chi` is the amplitude taper that switches the
/// quotient sources off in the far tail.
struct Coeffs {
    dta: Vec<f64>,
    d2ta: Vec<f64>,
    r: Vec<f64>,
    chi: Vec<f64>,
    dr_dx: Vec<f64>,
    dr_dy: Vec<f64>,
    qp_x: Vec<f64>,
    qp_y: Vec<f64>,
    dtb_dx: Vec<f64>,
    d2tb_dx: Vec<f64>,
    dtb_dy: Vec<f64>,
    d2tb_dy: Vec<f64>,
}

struct CorrectionStepper<'a> {
    grid: Grid2D,
    m1: f64,
    m2: f64,
    v_vals: Vec<f64>,
    kernel: &'a AveragingKernel,
    r_min: f64,
    mu: Vec<f64>,
    nu: Vec<f64>,
    omega: Vec<f64>,
}

/// d/dx lines of a 2D field stored x-major, one-sided closures.
fn ddx(grid: &Grid2D, src: &[f64], order: usize) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut line = vec![0.0; nx];
    let mut out = vec![0.0; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            line[ix] = src[ix * ny + iy];
        }
        let d = derivative_line_nonperiodic(&line, grid.dx(), order, 4);
        for ix in 0..nx {
            out[ix * ny + iy] = d[ix];
        }
    }
    out
}

/// d/dy rows of a 2D field stored x-major, one-sided closures.
fn ddy(grid: &Grid2D, src: &[f64], order: usize) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = vec![0.0; nx * ny];
    for ix in 0..nx {
        let d = derivative_line_nonperiodic(&src[ix * ny..(ix + 1) * ny], grid.dy(), order, 4);
        out[ix * ny..(ix + 1) * ny].copy_from_slice(&d);
    }
    out
}

impl<'a> CorrectionStepper<'a> {
    fn coeffs(&self, state: &PolarState, time: f64) -> Result<Coeffs> {
        let grid = self.grid;
        let n = grid.len();
        let mut r = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut chi = vec![0.0; n];
        let mut min_r = f64::INFINITY;
        for (k, &v) in state.r.values().iter().enumerate() {
            min_r = min_r.min(v);
            let f = v.max(self.r_min);
            r[k] = f;
            s[k] = f.ln();
            chi[k] = amplitude_taper(f, defaults::TAPER_LO, defaults::TAPER_HI);
        }
        if !(min_r >= 0.5 * self.r_min) {
            return Err(Error::AmplitudeFloorBreached { time, min_r });
        }

        let dta = derivative_line_nonperiodic(state.theta_a.values(), grid.dx(), 1, 4);
        let d2ta = derivative_line_nonperiodic(state.theta_a.values(), grid.dx(), 2, 4);
        let ds_dx = ddx(&grid, &s, 1);
        let d2s_dx = ddx(&grid, &s, 2);
        let ds_dy = ddy(&grid, &s, 1);
        let d2s_dy = ddy(&grid, &s, 2);
        let tb = state.theta_b.values();
        let coeffs = Coeffs {
            dta,
            d2ta,
            dr_dx: (0..n).map(|k| r[k] * ds_dx[k]).collect(),
            dr_dy: (0..n).map(|k| r[k] * ds_dy[k]).collect(),
            qp_x: (0..n).map(|k| d2s_dx[k] + ds_dx[k] * ds_dx[k]).collect(),
            qp_y: (0..n).map(|k| d2s_dy[k] + ds_dy[k] * ds_dy[k]).collect(),
            dtb_dx: ddx(&grid, tb, 1),
            d2tb_dx: ddx(&grid, tb, 2),
            dtb_dy: ddy(&grid, tb, 1),
            d2tb_dy: ddy(&grid, tb, 2),
            r,
            chi,
        };
        Ok(coeffs)
    }

    fn rhs(
        &self,
        c: &Coeffs,
        mu: &[f64],
        nu: &[f64],
        omega: &[f64],
        out_mu: &mut [f64],
        out_nu: &mut [f64],
        out_omega: &mut [f64],
    ) -> Result<()> {
        let grid = self.grid;
        let (nx, ny) = (grid.nx, grid.ny);
        let (m1, m2) = (self.m1, self.m2);
        let dnu = derivative_line_nonperiodic(nu, grid.dx(), 1, 4);
        let d2nu = derivative_line_nonperiodic(nu, grid.dx(), 2, 4);
        let dmu_dx = ddx(&grid, mu, 1);
        let dmu_dy = ddy(&grid, mu, 1);
        let d2mu_dy = ddy(&grid, mu, 2);
        let dom_dx = ddx(&grid, omega, 1);
        let dom_dy = ddy(&grid, omega, 1);
        let d2om_dy = ddy(&grid, omega, 2);

        let mut nu_src = vec![0.0; nx * ny];
        let mut om_raw = vec![0.0; nx * ny];
        for ix in 0..nx {
            for iy in 0..ny {
                let k = ix * ny + iy;
                out_mu[k] = -(c.dta[ix] * dmu_dx[k] + (dnu[ix] + c.dtb_dx[k]) * c.dr_dx[k]) / m1
                    - (c.d2ta[ix] * mu[k] + (d2nu[ix] + c.d2tb_dx[k]) * c.r[k]) / (2.0 * m1)
                    - (c.dtb_dy[k] * dmu_dy[k] + dom_dy[k] * c.dr_dy[k]) / m2
                    - (c.d2tb_dy[k] * mu[k] + d2om_dy[k] * c.r[k]) / (2.0 * m2);
                nu_src[k] = -c.dtb_dy[k] * c.dtb_dy[k] / (2.0 * m2)
                    + c.chi[k] * c.qp_y[k] / (2.0 * m2)
                    - self.v_vals[k];
                om_raw[k] = -(2.0 * c.dta[ix] * dom_dx[k]
                    + 2.0 * dnu[ix] * c.dtb_dx[k]
                    + c.dtb_dx[k] * c.dtb_dx[k])
                    / (2.0 * m1)
                    + c.chi[k] * c.qp_x[k] / (2.0 * m1)
                    - c.dtb_dy[k] * dom_dy[k] / m2
                    + c.chi[k] * (d2mu_dy[k] - mu[k] * c.qp_y[k]) / c.r[k] / (2.0 * m2);
            }
        }
        let nu_avg = self
            .kernel
            .average_profile(&RealField2D::from_values_unchecked(grid, nu_src))?;
        for ix in 0..nx {
            out_nu[ix] = -c.dta[ix] * dnu[ix] / m1 + nu_avg.at(ix);
        }
        let om_avg = self
            .kernel
            .average_profile(&RealField2D::from_values_unchecked(grid, om_raw.clone()))?;
        for ix in 0..nx {
            for iy in 0..ny {
                let k = ix * ny + iy;
                out_omega[k] = om_raw[k] - om_avg.at(ix);
            }
        }
        Ok(())
    }

    /// One RK4 step of length `h` with coefficients at the three stage
    /// times; returns the |A omega| drift removed by the re-projection.
    fn step(&mut self, z0: &Coeffs, zm: &Coeffs, z1: &Coeffs, h: f64, t1: f64) -> Result<f64> {
        let n = self.grid.len();
        let nx = self.grid.nx;
        let mut k = vec![(vec![0.0; n], vec![0.0; nx], vec![0.0; n]); 4];
        let stages = [(0usize, z0, 0.0), (1, zm, 0.5), (2, zm, 0.5), (3, z1, 1.0)];
        let mut tmp_mu = vec![0.0; n];
        let mut tmp_nu = vec![0.0; nx];
        let mut tmp_om = vec![0.0; n];
        for (idx, coeffs, frac) in stages {
            let (mu_in, nu_in, om_in): (&[f64], &[f64], &[f64]) = if idx == 0 {
                (&self.mu, &self.nu, &self.omega)
            } else {
                let prev = &k[idx - 1];
                for i in 0..n {
                    tmp_mu[i] = self.mu[i] + frac * h * prev.0[i];
                    tmp_om[i] = self.omega[i] + frac * h * prev.2[i];
                }
                for i in 0..nx {
                    tmp_nu[i] = self.nu[i] + frac * h * prev.1[i];
                }
                (&tmp_mu, &tmp_nu, &tmp_om)
            };
            let (head, tail) = k.split_at_mut(idx);
            let slot = &mut tail[0];
            let _ = head;
            self.rhs(coeffs, mu_in, nu_in, om_in, &mut slot.0, &mut slot.1, &mut slot.2)?;
        }
        for i in 0..n {
            self.mu[i] += h / 6.0 * (k[0].0[i] + 2.0 * k[1].0[i] + 2.0 * k[2].0[i] + k[3].0[i]);
            self.omega[i] += h / 6.0 * (k[0].2[i] + 2.0 * k[1].2[i] + 2.0 * k[2].2[i] + k[3].2[i]);
        }
        for i in 0..nx {
            self.nu[i] += h / 6.0 * (k[0].1[i] + 2.0 * k[1].1[i] + 2.0 * k[2].1[i] + k[3].1[i]);
        }

        let avg = self
            .kernel
            .average_profile(&RealField2D::from_values_unchecked(
                self.grid,
                self.omega.clone(),
            ))?;
        let mut drift = 0.0f64;
        for ix in 0..nx {
            let a = avg.at(ix);
            drift = drift.max(a.abs());
            for iy in 0..self.grid.ny {
                self.omega[ix * self.grid.ny + iy] -= a;
            }
        }

        let mut worst = 0.0f64;
        for i in 0..n {
            worst = worst.max(self.mu[i].abs()).max(self.omega[i].abs());
        }
        for i in 0..nx {
            worst = worst.max(self.nu[i].abs());
        }
        if !worst.is_finite() || worst > defaults::BLOWUP_LIMIT {
            return Err(Error::BlowUp {
                time: t1,
                what: "first-order correction",
            });
        }
        Ok(drift)
    }

    fn snapshot(&self) -> CorrectionState {
        CorrectionState {
            mu: RealField2D::from_values_unchecked(self.grid, self.mu.clone()),
            nu: RealField1D::from_values_unchecked(self.grid.x_axis(), self.nu.clone()),
            omega: RealField2D::from_values_unchecked(self.grid, self.omega.clone()),
        }
    }
}

/// Evolves the first-order correction triple along a zeroth-order limit
/// solution.
///
/// The zeroth-order coefficients are recomputed on the fine time grid by
/// re-running the Lagrangian solver from the trajectory's initial snapshot
/// instead of storing a dense zeroth-order trajectory. The correction
/// advances by RK4 with step 2 dt, taking its half-stage coefficients from
/// the odd flow steps, so `opts.n_steps` must be even; stride-based
/// snapshots land on the nearest even step. The constraints A nu = nu
/// (structural) and A omega = 0 (re-projected each step, drift recorded)
/// hold on every stored state.
pub fn evolve_correction(
    zeroth: &LimitSolution,
    corr0: &CorrectionState,
    mp: &ModelParams,
    kernel: &AveragingKernel,
    opts: &LagrangianOptions,
) -> Result<CorrectionTrajectory> {
    let state0 = zeroth
        .snapshots
        .first()
        .ok_or_else(|| Error::InvalidParameter("zeroth-order solution has no snapshots".into()))?;
    if zeroth.times.first().copied() != Some(0.0) {
        return Err(Error::InvalidParameter(
            "zeroth-order solution must start at t = 0".into(),
        ));
    }
    if opts.n_steps == 0 || opts.n_steps % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "correction stepping needs an even, positive step count, got {}",
            opts.n_steps
        )));
    }
    let grid = *state0.r.grid();
    corr0.check(kernel, defaults::NORM_TOL)?;
    if corr0.mu.grid() != &grid {
        return Err(Error::GridMismatch {
            context: "correction initial data on the zeroth-order grid",
        });
    }

    let mut stepper = CorrectionStepper {
        grid,
        m1: mp.m1,
        m2: mp.m2,
        v_vals: {
            let mut v = Vec::with_capacity(grid.len());
            for ix in 0..grid.nx {
                for iy in 0..grid.ny {
                    v.push(mp.v.value(grid.x(ix), grid.y(iy)));
                }
            }
            v
        },
        kernel,
        r_min: opts.r_min,
        mu: corr0.mu.values().to_vec(),
        nu: corr0.nu.values().to_vec(),
        omega: corr0.omega.values().to_vec(),
    };

    let stride = if opts.snapshot_stride == 0 {
        0
    } else {
        opts.snapshot_stride + opts.snapshot_stride % 2
    };
    let h = 2.0 * opts.dt;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut omega_drift = Vec::new();
    let mut pending_drift = 0.0f64;
    let mut even: Option<Coeffs> = None;
    let mut mid: Option<Coeffs> = None;
    stream_limit_lagrangian(state0, mp, opts, |step, t, state, _a_part| {
        let c = stepper.coeffs(state, t)?;
        if step % 2 == 1 {
            mid = Some(c);
            return Ok(());
        }
        if step > 0 {
            let z0 = even.take().ok_or(Error::GridMismatch {
                context: "correction stage bookkeeping",
            })?;
            let zm = mid.take().ok_or(Error::GridMismatch {
                context: "correction stage bookkeeping",
            })?;
            pending_drift = pending_drift.max(stepper.step(&z0, &zm, &c, h, t)?);
        }
        if step == 0 || step == opts.n_steps || (stride > 0 && step % stride == 0) {
            times.push(t);
            states.push(stepper.snapshot());
            omega_drift.push(pending_drift);
            pending_drift = 0.0;
        }
        even = Some(c);
        Ok(())
    })?;
    Ok(CorrectionTrajectory {
        times,
        states,
        omega_drift,
    })
}

/// First-order reconstruction
/// psi = exp(i(theta_A/eps + nu + theta_B + eps omega)) (R + eps mu).
///
/// Requires eps > 0 (the leading phase diverges otherwise) and a strictly
/// positive corrected amplitude.
pub fn corrected_reconstruct(
    zeroth: &PolarState,
    corr: &CorrectionState,
    epsilon: f64,
) -> Result<ComplexField2D> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "corrected reconstruction needs epsilon > 0, got {epsilon}"
        )));
    }
    let grid = *zeroth.r.grid();
    if corr.mu.grid() != &grid || corr.nu.grid().n != grid.nx {
        return Err(Error::GridMismatch {
            context: "correction and zeroth-order fields",
        });
    }
    let ny = grid.ny;
    let mut values = Vec::with_capacity(grid.len());
    for ix in 0..grid.nx {
        let base = zeroth.theta_a.at(ix) / epsilon + corr.nu.at(ix);
        for iy in 0..ny {
            let amp = zeroth.r.at(ix, iy) + epsilon * corr.mu.at(ix, iy);
            if amp <= 0.0 {
                return Err(Error::NodeDetected {
                    min_abs: amp,
                    floor: 0.0,
                    ix,
                    iy,
                });
            }
            let phase = base + zeroth.theta_b.at(ix, iy) + epsilon * corr.omega.at(ix, iy);
            values.push(Complex64::from_polar(amp, phase));
        }
    }
    Ok(ComplexField2D::from_values_unchecked(grid, values))
}
