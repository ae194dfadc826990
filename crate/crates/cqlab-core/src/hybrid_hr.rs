//! Hydrodynamic form of the limit dynamics and the Hall-Reginatto hybrid
//! scheme: the vector fields X_C, X_Q, X_I, X_HR on (rho, theta), small
//! oracle-grade steppers for generator subsets, and flow-commutation
//! checks.
//!
//! The density-phase representation writes the state as a probability
//! density rho = R^2 and one total non-local phase theta. With A the
//! kernel average and B = 1 - A,
//!
//!   X_C  = ( -dx((1/m1)(dx A theta) rho),
//!            -(1/2m1)[(dx A theta)^2 + 2 (dx A theta)(dx B theta)] - U )
//!   X_Q  = ( -dy((1/m2)(dy theta) rho),
//!            B[-(1/2m2)(dy theta)^2 + (1/2m2) dyy sqrt(rho)/sqrt(rho)] - V )
//!   X_HR = ( -dx((1/m1)(dx theta) rho) - dy((1/m2)(dy theta) rho),
//!            -(1/2m1)(dx theta)^2 - (1/2m2)(dy theta)^2
//!              + (1/2m2) dyy sqrt(rho)/sqrt(rho) - (U + V) )
//!   X_I  = X_HR - X_C - X_Q
//!        = ( -dx((1/m1)(dx B theta) rho),
//!            -(1/2m1)(dx B theta)^2
//!              + A[-(1/2m2)(dy theta)^2 + (1/2m2) dyy sqrt(rho)/sqrt(rho)] )
//!
//! X_C + X_Q evolves a non-interacting classical-quantum pair whose flows
//! commute; X_I is the non-local interaction that separates the
//! Hall-Reginatto scheme from that pair. The quantum-potential quotient is
//! evaluated through the half-log amplitude and switched off smoothly by
//! the amplitude taper, so the far tail never injects quotient noise.
//! Spatial derivatives use fourth-order stencils with one-sided closures:
//! densities decay and phases grow polynomially toward the box edge, so
//! wrap-around stencils would see an artificial seam jump. Continuity
//! slots are differenced in conservative flux form with zero flux through
//! the box faces, which conserves the discrete mass to round-off while
//! staying identical to the central stencil away from the edges.

use crate::defaults::{self, amplitude_taper};
use crate::error::{Error, Result};
use crate::full_qm::{ModelParams, Potential1D, Potential2D};
use crate::numerics::grid::{Grid2D, RealField2D};
use crate::numerics::{
    derivative_line_nonperiodic, flux_divergence_nonperiodic, partial_derivative_nonperiodic, Axis,
};
use crate::operators::AveragingKernel;
use crate::polar::PolarState;

/// Density floor used inside the half-log quantum-potential quotient.
const RHO_FLOOR: f64 = defaults::R_MIN * defaults::R_MIN;

/// Densities may brush zero in the far tail, where dispersion ripples on a
/// truncated box sit many orders below any resolved density; anything below
/// this band counts as a breached amplitude floor.
const RHO_NEG_BAND: f64 = 1e-9;

/// Density-phase state (rho, theta) of the hydrodynamic systems.
#[derive(Debug, Clone)]
pub struct HydroState {
    /// Probability density rho = R^2.
    pub rho: RealField2D,
    /// Total non-local phase.
    pub theta: RealField2D,
}

impl HydroState {
    /// Validates non-negativity (within a round-off band), unit mass, and
    /// finiteness.
    pub fn new(rho: RealField2D, theta: RealField2D) -> Result<Self> {
        if rho.grid() != theta.grid() {
            return Err(Error::GridMismatch {
                context: "density and phase fields",
            });
        }
        let min = rho.values().iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min >= -RHO_NEG_BAND) {
            return Err(Error::InvalidParameter(format!(
                "density must be non-negative, min = {min:.3e}"
            )));
        }
        if !theta.values().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("phase must be finite".into()));
        }
        let state = Self { rho, theta };
        let defect = (state.mass() - 1.0).abs();
        if defect > defaults::NORM_TOL {
            return Err(Error::NotNormalized { defect });
        }
        Ok(state)
    }

    /// Density-phase view of a polar state: rho = R^2 and
    /// theta = theta_A + theta_B.
    pub fn from_polar(state: &PolarState) -> Result<Self> {
        let grid = *state.r.grid();
        let ny = grid.ny;
        let mut rho = Vec::with_capacity(grid.len());
        let mut theta = Vec::with_capacity(grid.len());
        for ix in 0..grid.nx {
            let ta = state.theta_a.at(ix);
            for iy in 0..ny {
                let r = state.r.at(ix, iy);
                rho.push(r * r);
                theta.push(ta + state.theta_b.at(ix, iy));
            }
        }
        Self::new(
            RealField2D::from_values_unchecked(grid, rho),
            RealField2D::from_values_unchecked(grid, theta),
        )
    }

    /// Total mass, the discrete integral of rho over the box.
    pub fn mass(&self) -> f64 {
        self.rho.values().iter().sum::<f64>() * self.rho.grid().cell_area()
    }
}

/// Tangent (d rho / dt, d theta / dt) produced by a hydrodynamic field.
#[derive(Debug, Clone)]
pub struct HydroTangent {
    pub d_rho: RealField2D,
    pub d_theta: RealField2D,
}

/// Generators selectable in [`evolve_hydro`]: X_C + X_Q is the
/// non-interacting classical-quantum pair, adding X_I yields X_HR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HydroGenerator {
    Classical,
    Quantum,
    Interaction,
}

/// Floor guard shared by every field that forms the sqrt(rho) quotient.
fn check_density_floor(rho: &RealField2D) -> Result<()> {
    let min = rho.values().iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min >= -RHO_NEG_BAND) {
        return Err(Error::AmplitudeFloorBreached {
            time: 0.0,
            min_r: min,
        });
    }
    Ok(())
}

/// Tapered quantum-potential bracket
/// q = -(1/2m2)(dy theta)^2 + chi (1/2m2) dyy sqrt(rho)/sqrt(rho),
/// with the quotient evaluated as dyy s + (dy s)^2 for s = ln sqrt(rho).
fn quantum_bracket(rho: &RealField2D, theta: &RealField2D, m2: f64) -> RealField2D {
    let grid = *rho.grid();
    let s = rho.map(|v| 0.5 * v.max(RHO_FLOOR).ln());
    let ds = partial_derivative_nonperiodic(&s, Axis::Y, 1);
    let d2s = partial_derivative_nonperiodic(&s, Axis::Y, 2);
    let dth = partial_derivative_nonperiodic(theta, Axis::Y, 1);
    let mut out = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let r = rho.values()[k].max(RHO_FLOOR).sqrt();
        let chi = amplitude_taper(r, defaults::TAPER_LO, defaults::TAPER_HI);
        let qp = d2s.values()[k] + ds.values()[k] * ds.values()[k];
        out.push(
            -dth.values()[k] * dth.values()[k] / (2.0 * m2) + chi * qp / (2.0 * m2),
        );
    }
    RealField2D::from_values_unchecked(grid, out)
}

/// Classical vector field X_C.
pub fn field_xc(
    state: &HydroState,
    kernel: &AveragingKernel,
    m1: f64,
    u: &dyn Potential1D,
) -> Result<HydroTangent> {
    let grid = *state.rho.grid();
    let a_prof = kernel.average_profile(&state.theta)?;
    let da = derivative_line_nonperiodic(a_prof.values(), grid.dx(), 1, 4);
    let b = kernel.apply_b(&state.theta)?;
    let db = partial_derivative_nonperiodic(&b, Axis::X, 1);
    let ny = grid.ny;
    let mut flux = Vec::with_capacity(grid.len());
    let mut d_theta = Vec::with_capacity(grid.len());
    for ix in 0..grid.nx {
        let ux = u.value(grid.x(ix));
        for iy in 0..ny {
            let k = ix * ny + iy;
            flux.push(da[ix] * state.rho.values()[k] / m1);
            d_theta
                .push(-(da[ix] * da[ix] + 2.0 * da[ix] * db.values()[k]) / (2.0 * m1) - ux);
        }
    }
    let flux = RealField2D::from_values_unchecked(grid, flux);
    let d_rho = flux_divergence_nonperiodic(&flux, Axis::X).map(|v| -v);
    Ok(HydroTangent {
        d_rho,
        d_theta: RealField2D::from_values_unchecked(grid, d_theta),
    })
}

/// Quantum vector field X_Q.
pub fn field_xq(
    state: &HydroState,
    kernel: &AveragingKernel,
    m2: f64,
    v: &dyn Potential2D,
) -> Result<HydroTangent> {
    check_density_floor(&state.rho)?;
    let grid = *state.rho.grid();
    let dth = partial_derivative_nonperiodic(&state.theta, Axis::Y, 1);
    let flux = state.rho.zip_with(&dth, |r, t| r * t / m2)?;
    let d_rho = flux_divergence_nonperiodic(&flux, Axis::Y).map(|x| -x);
    let q = quantum_bracket(&state.rho, &state.theta, m2);
    let bq = kernel.apply_b(&q)?;
    let d_theta = RealField2D::from_fn(grid, |x, y| -v.value(x, y)).zip_with(&bq, |vv, b| b + vv)?;
    Ok(HydroTangent { d_rho, d_theta })
}

/// Local Hall-Reginatto vector field X_HR.
pub fn field_xhr(
    state: &HydroState,
    m1: f64,
    m2: f64,
    u: &dyn Potential1D,
    v: &dyn Potential2D,
) -> Result<HydroTangent> {
    check_density_floor(&state.rho)?;
    let grid = *state.rho.grid();
    let dth_x = partial_derivative_nonperiodic(&state.theta, Axis::X, 1);
    let dth_y = partial_derivative_nonperiodic(&state.theta, Axis::Y, 1);
    let flux_x = state.rho.zip_with(&dth_x, |r, t| r * t / m1)?;
    let flux_y = state.rho.zip_with(&dth_y, |r, t| r * t / m2)?;
    let div_x = flux_divergence_nonperiodic(&flux_x, Axis::X);
    let div_y = flux_divergence_nonperiodic(&flux_y, Axis::Y);
    let d_rho = div_x.zip_with(&div_y, |a, b| -a - b)?;
    let q = quantum_bracket(&state.rho, &state.theta, m2);
    let ny = grid.ny;
    let mut d_theta = Vec::with_capacity(grid.len());
    for ix in 0..grid.nx {
        let x = grid.x(ix);
        let ux = u.value(x);
        for iy in 0..ny {
            let k = ix * ny + iy;
            let tx = dth_x.values()[k];
            d_theta.push(
                -tx * tx / (2.0 * m1) + q.values()[k] - ux - v.value(x, grid.y(iy)),
            );
        }
    }
    Ok(HydroTangent {
        d_rho,
        d_theta: RealField2D::from_values_unchecked(grid, d_theta),
    })
}

/// Non-local interaction field X_I = X_HR - X_C - X_Q.
pub fn field_xi(
    state: &HydroState,
    kernel: &AveragingKernel,
    m1: f64,
    m2: f64,
) -> Result<HydroTangent> {
    check_density_floor(&state.rho)?;
    let grid = *state.rho.grid();
    let b = kernel.apply_b(&state.theta)?;
    let db = partial_derivative_nonperiodic(&b, Axis::X, 1);
    let flux = state.rho.zip_with(&db, |r, t| r * t / m1)?;
    let d_rho = flux_divergence_nonperiodic(&flux, Axis::X).map(|x| -x);
    let q = quantum_bracket(&state.rho, &state.theta, m2);
    let bq = kernel.apply_b(&q)?;
    // A q = q - B q keeps the complement exactly consistent with X_Q.
    let aq = q.zip_with(&bq, |full, bpart| full - bpart)?;
    let d_theta = db.zip_with(&aq, |d, a| -d * d / (2.0 * m1) + a)?;
    Ok(HydroTangent { d_rho, d_theta })
}

/// Trajectory of a hydrodynamic run.
#[derive(Debug, Clone)]
pub struct HydroTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<HydroState>,
}

fn combined_tangent(
    state: &HydroState,
    selection: &[HydroGenerator],
    mp: &ModelParams,
    kernel: &AveragingKernel,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = state.rho.grid().len();
    let mut d_rho = vec![0.0; n];
    let mut d_theta = vec![0.0; n];
    for gen in selection {
        let tan = match gen {
            HydroGenerator::Classical => field_xc(state, kernel, mp.m1, mp.u.as_ref())?,
            HydroGenerator::Quantum => field_xq(state, kernel, mp.m2, mp.v.as_ref())?,
            HydroGenerator::Interaction => field_xi(state, kernel, mp.m1, mp.m2)?,
        };
        for k in 0..n {
            d_rho[k] += tan.d_rho.values()[k];
            d_theta[k] += tan.d_theta.values()[k];
        }
    }
    Ok((d_rho, d_theta))
}

/// Evolves (rho, theta) under the sum of the selected generators with RK4.
///
/// Oracle-grade: meant for small grids with smooth node-free data. The
/// explicit scheme must resolve the quantum-potential dispersion scale,
/// roughly dt < m2 dy^2 / 3. `snapshot_stride` of 0 stores endpoints only.
pub fn evolve_hydro(
    state0: &HydroState,
    selection: &[HydroGenerator],
    mp: &ModelParams,
    kernel: &AveragingKernel,
    dt: f64,
    n_steps: usize,
    snapshot_stride: usize,
) -> Result<HydroTrajectory> {
    if selection.is_empty() {
        return Err(Error::InvalidParameter(
            "generator selection must not be empty".into(),
        ));
    }
    for (i, gen) in selection.iter().enumerate() {
        if selection[..i].contains(gen) {
            return Err(Error::InvalidParameter(format!(
                "generator {gen:?} selected twice"
            )));
        }
    }
    if !(dt > 0.0 && dt.is_finite()) || n_steps == 0 {
        return Err(Error::InvalidParameter(format!(
            "need dt > 0 and n_steps > 0, got dt = {dt}, n_steps = {n_steps}"
        )));
    }
    let grid = *state0.rho.grid();
    let n = grid.len();
    let mut rho = state0.rho.values().to_vec();
    let mut theta = state0.theta.values().to_vec();
    let mut times = vec![0.0];
    let mut states = vec![state0.clone()];

    let stage = |rho: &[f64], theta: &[f64], time: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let state = HydroState {
            rho: RealField2D::from_values_unchecked(grid, rho.to_vec()),
            theta: RealField2D::from_values_unchecked(grid, theta.to_vec()),
        };
        combined_tangent(&state, selection, mp, kernel).map_err(|e| match e {
            Error::AmplitudeFloorBreached { min_r, .. } => {
                Error::AmplitudeFloorBreached { time, min_r }
            }
            other => other,
        })
    };

    let mut sr = vec![0.0; n];
    let mut st = vec![0.0; n];
    for step in 1..=n_steps {
        let t0 = (step - 1) as f64 * dt;
        let k1 = stage(&rho, &theta, t0)?;
        for k in 0..n {
            sr[k] = rho[k] + 0.5 * dt * k1.0[k];
            st[k] = theta[k] + 0.5 * dt * k1.1[k];
        }
        let k2 = stage(&sr, &st, t0 + 0.5 * dt)?;
        for k in 0..n {
            sr[k] = rho[k] + 0.5 * dt * k2.0[k];
            st[k] = theta[k] + 0.5 * dt * k2.1[k];
        }
        let k3 = stage(&sr, &st, t0 + 0.5 * dt)?;
        for k in 0..n {
            sr[k] = rho[k] + dt * k3.0[k];
            st[k] = theta[k] + dt * k3.1[k];
        }
        let k4 = stage(&sr, &st, t0 + dt)?;
        let mut worst = 0.0f64;
        for k in 0..n {
            rho[k] += dt / 6.0 * (k1.0[k] + 2.0 * k2.0[k] + 2.0 * k3.0[k] + k4.0[k]);
            theta[k] += dt / 6.0 * (k1.1[k] + 2.0 * k2.1[k] + 2.0 * k3.1[k] + k4.1[k]);
            worst = worst.max(rho[k].abs()).max(theta[k].abs());
        }
        let t1 = step as f64 * dt;
        if !worst.is_finite() || worst > defaults::BLOWUP_LIMIT {
            return Err(Error::BlowUp {
                time: t1,
                what: "hydrodynamic state",
            });
        }
        if step == n_steps || (snapshot_stride > 0 && step % snapshot_stride == 0) {
            times.push(t1);
            states.push(HydroState {
                rho: RealField2D::from_values_unchecked(grid, rho.clone()),
                theta: RealField2D::from_values_unchecked(grid, theta.clone()),
            });
        }
    }
    Ok(HydroTrajectory { times, states })
}

/// Commutation defects of two generator subsets.
#[derive(Debug, Clone, Copy)]
pub struct CommutationReport {
    /// max-abs over both slots of F_t^a F_s^b (state) - F_s^b F_t^a (state).
    pub commutator: f64,
    /// max-abs defect of the product representation
    /// F_t^{a+b} vs F_t^a after F_t^b.
    pub product_defect: f64,
}

fn max_state_diff(a: &HydroState, b: &HydroState) -> Result<f64> {
    Ok(a.rho
        .max_abs_diff(&b.rho)?
        .max(a.theta.max_abs_diff(&b.theta)?))
}

/// Measures how far the flows of two generator subsets are from commuting.
///
/// Requires V = V(y): the non-interacting decomposition only holds when
/// the quantum potential energy does not couple back to x. Flow maps are
/// realized by the RK4 stepper with steps of size at most `dt`, so the
/// reported norms carry both the genuine commutator and an integrator
/// error that shrinks at fourth order in dt.
pub fn check_flow_commutation(
    state0: &HydroState,
    split_a: &[HydroGenerator],
    split_b: &[HydroGenerator],
    mp: &ModelParams,
    kernel: &AveragingKernel,
    t: f64,
    s: f64,
    dt: f64,
) -> Result<CommutationReport> {
    if !(t >= 0.0 && s >= 0.0 && dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need t, s >= 0 and dt > 0, got t = {t}, s = {s}, dt = {dt}"
        )));
    }
    for gen in split_a {
        if split_b.contains(gen) {
            return Err(Error::InvalidParameter(format!(
                "generator {gen:?} appears on both sides of the split"
            )));
        }
    }
    let grid = *state0.rho.grid();
    let mut v_spread = 0.0f64;
    for iy in 0..grid.ny {
        let y = grid.y(iy);
        let v0 = mp.v.value(grid.x(0), y);
        for ix in 1..grid.nx {
            v_spread = v_spread.max((mp.v.value(grid.x(ix), y) - v0).abs());
        }
    }
    if v_spread > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "flow commutation requires V = V(y); x-spread {v_spread:.3e}"
        )));
    }

    let flow = |state: &HydroState, sel: &[HydroGenerator], span: f64| -> Result<HydroState> {
        if span == 0.0 {
            return Ok(state.clone());
        }
        let n = (span / dt).ceil().max(1.0) as usize;
        let traj = evolve_hydro(state, sel, mp, kernel, span / n as f64, n, 0)?;
        Ok(traj.states.into_iter().next_back().expect("endpoint stored"))
    };

    let ab = flow(&flow(state0, split_b, s)?, split_a, t)?;
    let ba = flow(&flow(state0, split_a, t)?, split_b, s)?;
    let commutator = max_state_diff(&ab, &ba)?;

    let mut joint: Vec<HydroGenerator> = split_a.to_vec();
    joint.extend_from_slice(split_b);
    let sum = flow(state0, &joint, t)?;
    let product = flow(&flow(state0, split_b, t)?, split_a, t)?;
    let product_defect = max_state_diff(&sum, &product)?;

    Ok(CommutationReport {
        commutator,
        product_defect,
    })
}
