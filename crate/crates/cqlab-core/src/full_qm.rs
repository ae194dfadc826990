//! The exact mass-ratio-dependent two-particle Schrödinger solver and the
//! nondimensionalization map. Every limit claim in this crate is tested
//! against trajectories produced here.
//!
//! The evolved equation, in dimensionless variables, is
//! i dpsi/dt = -(eps/2 m1) dx^2 psi + (1/eps) U psi - (1/2 m2) dy^2 psi
//!             + V psi.

use crate::defaults;
use crate::error::{Error, Result};
use crate::numerics::fft::{fft_forward, fft_inverse, wavenumbers};
use crate::numerics::grid::{Axis, ComplexField2D};
use crate::numerics::quad::norm_l2;
use crate::numerics::{partial_derivative_complex, DerivativeMode};
use num_complex::Complex64;
use std::sync::Arc;

/// Potential acting on the classical coordinate x, with its derivative.
///
/// The slope is required analytically because characteristic trajectories
/// sample the force between grid nodes.
pub trait Potential1D: Send + Sync {
    fn value(&self, x: f64) -> f64;
    fn slope(&self, x: f64) -> f64;
}

/// Potential coupling the classical coordinate x and quantum coordinate y.
pub trait Potential2D: Send + Sync {
    fn value(&self, x: f64, y: f64) -> f64;
}

/// The identically zero potential.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPotential;

impl Potential1D for ZeroPotential {
    fn value(&self, _x: f64) -> f64 {
        0.0
    }
    fn slope(&self, _x: f64) -> f64 {
        0.0
    }
}

impl Potential2D for ZeroPotential {
    fn value(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }
}

/// Potential of x backed by value and slope closures.
pub struct FnPotential1D<F, G> {
    value: F,
    slope: G,
}

impl<F, G> FnPotential1D<F, G>
where
    F: Fn(f64) -> f64 + Send + Sync,
    G: Fn(f64) -> f64 + Send + Sync,
{
    pub fn new(value: F, slope: G) -> Self {
        Self { value, slope }
    }
}

impl<F, G> Potential1D for FnPotential1D<F, G>
where
    F: Fn(f64) -> f64 + Send + Sync,
    G: Fn(f64) -> f64 + Send + Sync,
{
    fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }
    fn slope(&self, x: f64) -> f64 {
        (self.slope)(x)
    }
}

/// Potential of (x, y) backed by a closure.
pub struct FnPotential2D<F> {
    value: F,
}

impl<F> FnPotential2D<F>
where
    F: Fn(f64, f64) -> f64 + Send + Sync,
{
    pub fn new(value: F) -> Self {
        Self { value }
    }
}

impl<F> Potential2D for FnPotential2D<F>
where
    F: Fn(f64, f64) -> f64 + Send + Sync,
{
    fn value(&self, x: f64, y: f64) -> f64 {
        (self.value)(x, y)
    }
}

/// Dimensional inputs: particle masses, length and time scales, the action
/// scale, and the dimensional potentials.
///
/// Invariants: all scales positive, M2 at most M1 so the mass ratio is a
/// small parameter.
#[derive(Clone)]
pub struct DimensionalParams {
    pub m1_mass: f64,
    pub m2_mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub t_scale: f64,
    pub hbar: f64,
    pub u_dim: Arc<dyn Potential1D>,
    pub v_dim: Arc<dyn Potential2D>,
}

impl DimensionalParams {
    pub fn new(
        m1_mass: f64,
        m2_mass: f64,
        l1: f64,
        l2: f64,
        t_scale: f64,
        hbar: f64,
        u_dim: Arc<dyn Potential1D>,
        v_dim: Arc<dyn Potential2D>,
    ) -> Result<Self> {
        for (name, v) in [
            ("M1", m1_mass),
            ("M2", m2_mass),
            ("L1", l1),
            ("L2", l2),
            ("T", t_scale),
            ("hbar", hbar),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if m2_mass > m1_mass {
            return Err(Error::InvalidParameter(format!(
                "M2 = {m2_mass} must not exceed M1 = {m1_mass}"
            )));
        }
        Ok(Self {
            m1_mass,
            m2_mass,
            l1,
            l2,
            t_scale,
            hbar,
            u_dim,
            v_dim,
        })
    }
}

/// Dimensionless model parameters: masses, the small parameter, and the
/// rescaled potentials.
#[derive(Clone)]
pub struct ModelParams {
    pub m1: f64,
    pub m2: f64,
    pub epsilon: f64,
    pub u: Arc<dyn Potential1D>,
    pub v: Arc<dyn Potential2D>,
}

impl ModelParams {
    pub fn new(
        m1: f64,
        m2: f64,
        epsilon: f64,
        u: Arc<dyn Potential1D>,
        v: Arc<dyn Potential2D>,
    ) -> Result<Self> {
        if !(m1 > 0.0 && m1.is_finite()) || !(m2 > 0.0 && m2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "masses m1 = {m1}, m2 = {m2} must be positive"
            )));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {epsilon} must lie in (0, 1]"
            )));
        }
        Ok(Self {
            m1,
            m2,
            epsilon,
            u,
            v,
        })
    }

    /// Same parameters at a different mass ratio.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.m1, self.m2, epsilon, self.u.clone(), self.v.clone())
    }
}

struct ScaledPotential1D {
    inner: Arc<dyn Potential1D>,
    amp: f64,
    len: f64,
}

impl Potential1D for ScaledPotential1D {
    fn value(&self, x: f64) -> f64 {
        self.amp * self.inner.value(self.len * x)
    }
    fn slope(&self, x: f64) -> f64 {
        self.amp * self.len * self.inner.slope(self.len * x)
    }
}

struct ScaledPotential2D {
    inner: Arc<dyn Potential2D>,
    amp: f64,
    len_x: f64,
    len_y: f64,
}

impl Potential2D for ScaledPotential2D {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.amp * self.inner.value(self.len_x * x, self.len_y * y)
    }
}

/// Maps dimensional scales to the dimensionless model.
///
/// The mass ratio becomes the small parameter eps = M2/M1, the dimensionless
/// masses are m1 = M2 L1^2/(hbar T) and m2 = M2 L2^2/(hbar T), and the
/// potentials are rescaled as U~(x) = (T M2)/(hbar M1) U(L1 x) and
/// V~(x, y) = (T/hbar) V(L1 x, L2 y).
pub fn nondimensionalize(dp: &DimensionalParams) -> Result<ModelParams> {
    let epsilon = dp.m2_mass / dp.m1_mass;
    let m1 = dp.m2_mass * dp.l1 * dp.l1 / (dp.hbar * dp.t_scale);
    let m2 = dp.m2_mass * dp.l2 * dp.l2 / (dp.hbar * dp.t_scale);
    let u = Arc::new(ScaledPotential1D {
        inner: dp.u_dim.clone(),
        amp: dp.t_scale * dp.m2_mass / (dp.hbar * dp.m1_mass),
        len: dp.l1,
    });
    let v = Arc::new(ScaledPotential2D {
        inner: dp.v_dim.clone(),
        amp: dp.t_scale / dp.hbar,
        len_x: dp.l1,
        len_y: dp.l2,
    });
    ModelParams::new(m1, m2, epsilon, u, v)
}

/// Snapshot trajectory of the full solver.
#[derive(Debug, Clone)]
pub struct FullEvolution {
    /// Snapshot times, starting at 0.
    pub times: Vec<f64>,
    pub snapshots: Vec<ComplexField2D>,
    /// L2 norm at each snapshot.
    pub norms: Vec<f64>,
    /// Set when dt times the largest potential phase exceeded pi, meaning
    /// the potential phase per step aliases.
    pub phase_advisory: bool,
}

impl FullEvolution {
    pub fn final_state(&self) -> &ComplexField2D {
        self.snapshots.last().expect("trajectory holds at least the initial state")
    }
}

fn check_finite(values: &[Complex64], time: f64) -> Result<()> {
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::BlowUp {
            time,
            what: "full wave function",
        });
    }
    Ok(())
}

/// Strang split-step evolution of the full two-particle equation.
///
/// Each step applies a half potential phase, a full spectral kinetic phase
/// with multiplier exp(-i dt (eps kx^2/(2 m1) + ky^2/(2 m2))), and a second
/// half potential phase; the stiff (1/eps) U term sits inside the exact
/// potential phase. Snapshots are stored every `snapshot_stride` steps
/// (0 stores only the endpoints) plus the final state. A zero dt performs
/// identity steps and returns the input bitwise.
pub fn evolve_full(
    psi0: &ComplexField2D,
    mp: &ModelParams,
    dt: f64,
    n_steps: usize,
    snapshot_stride: usize,
) -> Result<FullEvolution> {
    let g = *psi0.grid();
    if !(g.periodic_x && g.periodic_y) {
        return Err(Error::NonPeriodicSpectral {
            axis: if g.periodic_x { 'y' } else { 'x' },
        });
    }
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be nonnegative")));
    }
    let n0 = norm_l2(psi0);
    if (n0 - 1.0).abs() > defaults::NORM_TOL {
        return Err(Error::NotNormalized {
            defect: (n0 - 1.0).abs(),
        });
    }

    // Time-independent phase factors are fixed arrays, built once.
    let mut half_phase = Vec::with_capacity(g.len());
    let mut max_pot = 0.0f64;
    for ix in 0..g.nx {
        let x = g.x(ix);
        let ux = mp.u.value(x) / mp.epsilon;
        for iy in 0..g.ny {
            let w = ux + mp.v.value(x, g.y(iy));
            if !w.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "potential not finite at ({x}, {})",
                    g.y(iy)
                )));
            }
            max_pot = max_pot.max(w.abs());
            half_phase.push(Complex64::from_polar(1.0, -0.5 * dt * w));
        }
    }
    let phase_advisory = dt * max_pot > std::f64::consts::PI;
    let kin_x: Vec<Complex64> = wavenumbers(g.nx, g.x_max - g.x_min)
        .iter()
        .map(|&k| Complex64::from_polar(1.0, -dt * mp.epsilon * k * k / (2.0 * mp.m1)))
        .collect();
    let kin_y: Vec<Complex64> = wavenumbers(g.ny, g.y_max - g.y_min)
        .iter()
        .map(|&k| Complex64::from_polar(1.0, -dt * k * k / (2.0 * mp.m2)))
        .collect();

    let mut psi = psi0.clone();
    let mut times = vec![0.0];
    let mut snapshots = vec![psi.clone()];
    let mut norms = vec![n0];
    let mut col = vec![Complex64::new(0.0, 0.0); g.nx];

    for step in 1..=n_steps {
        let t = step as f64 * dt;
        if dt > 0.0 {
            let v = psi.values_mut();
            for (p, h) in v.iter_mut().zip(half_phase.iter()) {
                *p *= h;
            }
            for ix in 0..g.nx {
                let row = &mut v[ix * g.ny..(ix + 1) * g.ny];
                fft_forward(row);
                for (p, k) in row.iter_mut().zip(kin_y.iter()) {
                    *p *= k;
                }
                fft_inverse(row);
            }
            for iy in 0..g.ny {
                for ix in 0..g.nx {
                    col[ix] = v[ix * g.ny + iy];
                }
                fft_forward(&mut col);
                for (p, k) in col.iter_mut().zip(kin_x.iter()) {
                    *p *= k;
                }
                fft_inverse(&mut col);
                for ix in 0..g.nx {
                    v[ix * g.ny + iy] = col[ix];
                }
            }
            for (p, h) in v.iter_mut().zip(half_phase.iter()) {
                *p *= h;
            }
            check_finite(v, t)?;
        }
        let record = step == n_steps || (snapshot_stride > 0 && step % snapshot_stride == 0);
        if record {
            times.push(t);
            snapshots.push(psi.clone());
            norms.push(norm_l2(&psi));
        }
    }

    Ok(FullEvolution {
        times,
        snapshots,
        norms,
        phase_advisory,
    })
}

/// Total energy, the expectation of the evolution generator:
/// eps/(2 m1) |dx psi|^2 + 1/(2 m2) |dy psi|^2 + ((1/eps) U + V) |psi|^2
/// integrated by spectral quadrature.
pub fn energy(psi: &ComplexField2D, mp: &ModelParams) -> Result<f64> {
    let g = *psi.grid();
    let dx = partial_derivative_complex(psi, Axis::X, 1, DerivativeMode::Spectral)?;
    let dy = partial_derivative_complex(psi, Axis::Y, 1, DerivativeMode::Spectral)?;
    let mut total = 0.0;
    for ix in 0..g.nx {
        let x = g.x(ix);
        let ux = mp.u.value(x) / mp.epsilon;
        for iy in 0..g.ny {
            let k = g.idx(ix, iy);
            total += mp.epsilon / (2.0 * mp.m1) * dx.values()[k].norm_sqr()
                + 1.0 / (2.0 * mp.m2) * dy.values()[k].norm_sqr()
                + (ux + mp.v.value(x, g.y(iy))) * psi.values()[k].norm_sqr();
        }
    }
    Ok(total * g.cell_area())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grid::Grid2D;
    use crate::numerics::quad::{integrate_xy, total_probability};
    use crate::numerics::RealField2D;
    use std::f64::consts::PI;

    fn wide_grid(n: usize) -> Grid2D {
        Grid2D::new(n, n, -8.0, 8.0, -8.0, 8.0).unwrap()
    }

    /// Initial product state: normalized Gaussian in x times a Gaussian of
    /// position variance sigma0^2 in y.
    fn gaussian_product(g: Grid2D, sigma0: f64) -> ComplexField2D {
        let mut psi = ComplexField2D::from_fn(g, |x, y| {
            Complex64::new(
                (-(x * x) / 2.0).exp() * (-(y * y) / (4.0 * sigma0 * sigma0)).exp(),
                0.0,
            )
        });
        let n = norm_l2(&psi);
        for v in psi.values_mut() {
            *v /= n;
        }
        psi
    }

    fn zero_model(epsilon: f64) -> ModelParams {
        ModelParams::new(1.0, 1.0, epsilon, Arc::new(ZeroPotential), Arc::new(ZeroPotential))
            .unwrap()
    }

    fn y_variance(psi: &ComplexField2D) -> f64 {
        let g = *psi.grid();
        let rho = RealField2D::from_values_unchecked(
            g,
            psi.values().iter().map(|v| v.norm_sqr()).collect(),
        );
        let weighted = RealField2D::from_fn(g, |x, y| {
            let ix = ((x - g.x_min) / g.dx()).round() as usize;
            let iy = ((y - g.y_min) / g.dy()).round() as usize;
            y * y * rho.at(ix, iy)
        });
        integrate_xy(&weighted) / integrate_xy(&rho)
    }

    #[test]
    fn mass_ratio_and_scales_map_as_stated() {
        let dp = DimensionalParams::new(
            10.0,
            1.0,
            1.0,
            1.0,
            1.0,
            1.0,
            Arc::new(ZeroPotential),
            Arc::new(ZeroPotential),
        )
        .unwrap();
        let mp = nondimensionalize(&dp).unwrap();
        assert!((mp.epsilon - 0.1).abs() < 1e-15);
        assert!((mp.m2 - 1.0).abs() < 1e-15);
        assert!((mp.m1 - 1.0).abs() < 1e-15);
        assert_eq!(mp.u.value(0.7), 0.0);
        assert_eq!(mp.v.value(0.7, -0.3), 0.0);
    }

    #[test]
    fn scaled_potentials_carry_their_prefactors() {
        let u = Arc::new(FnPotential1D::new(|x: f64| x * x / 2.0, |x: f64| x));
        let v = Arc::new(FnPotential2D::new(|x: f64, y: f64| x * y));
        let dp = DimensionalParams::new(4.0, 2.0, 3.0, 0.5, 2.0, 1.0, u, v).unwrap();
        let mp = nondimensionalize(&dp).unwrap();
        assert!((mp.epsilon - 0.5).abs() < 1e-15);
        // m1 = M2 L1^2 / (hbar T) = 2 * 9 / 2 = 9; m2 = 2 * 0.25 / 2 = 0.25.
        assert!((mp.m1 - 9.0).abs() < 1e-12);
        assert!((mp.m2 - 0.25).abs() < 1e-12);
        // U~(x) = (T M2)/(hbar M1) U(L1 x) = 1.0 * (3x)^2/2.
        let x = 0.4;
        assert!((mp.u.value(x) - (2.0 * 2.0 / 4.0) * (3.0 * x) * (3.0 * x) / 2.0).abs() < 1e-12);
        assert!((mp.u.slope(x) - (2.0 * 2.0 / 4.0) * 3.0 * (3.0 * x)).abs() < 1e-12);
        // V~(x, y) = (T/hbar) V(L1 x, L2 y) = 2 * 3x * 0.5y.
        assert!((mp.v.value(x, 1.2) - 2.0 * (3.0 * x) * (0.5 * 1.2)).abs() < 1e-12);
    }

    #[test]
    fn nondimensionalize_rejects_heavy_quantum_particle() {
        let r = DimensionalParams::new(
            1.0,
            2.0,
            1.0,
            1.0,
            1.0,
            1.0,
            Arc::new(ZeroPotential),
            Arc::new(ZeroPotential),
        );
        assert!(r.is_err());
    }

    #[test]
    fn free_gaussian_spreads_at_the_closed_form_rate() {
        let g = wide_grid(128);
        let psi0 = gaussian_product(g, 0.5);
        let mp = zero_model(0.2);
        let out = evolve_full(&psi0, &mp, 0.01, 100, 0).unwrap();
        let sigma2 = y_variance(out.final_state());
        assert!((sigma2 - 1.25).abs() < 1e-6, "sigma2 = {sigma2}");
    }

    #[test]
    fn norm_is_preserved_over_a_thousand_steps() {
        let g = wide_grid(64);
        let psi0 = gaussian_product(g, 0.7);
        let u = Arc::new(FnPotential1D::new(|x: f64| x * x / 2.0, |x: f64| x));
        let v = Arc::new(FnPotential2D::new(|x: f64, y: f64| y * y / 2.0 + 0.2 * x * y));
        let mp = ModelParams::new(1.0, 1.0, 0.1, u, v).unwrap();
        let out = evolve_full(&psi0, &mp, 1e-3, 1000, 0).unwrap();
        for n in &out.norms {
            assert!((n - 1.0).abs() < 1e-10, "norm drift {}", (n - 1.0).abs());
        }
    }

    #[test]
    fn y_eigenstate_keeps_a_static_modulus() {
        let g = wide_grid(128);
        // Plane wave in x (one box wavenumber) times the y ground state.
        let k = 2.0 * PI / 16.0;
        let mut psi0 = ComplexField2D::from_fn(g, |x, y| {
            Complex64::from_polar((-(y * y) / 2.0).exp(), k * x)
        });
        let n = norm_l2(&psi0);
        for v in psi0.values_mut() {
            *v /= n;
        }
        let v = Arc::new(FnPotential2D::new(|_x: f64, y: f64| y * y / 2.0));
        let mp = ModelParams::new(1.0, 1.0, 0.5, Arc::new(ZeroPotential), v).unwrap();
        let out = evolve_full(&psi0, &mp, 5e-5, 1000, 0).unwrap();
        let r0 = psi0.abs();
        let rt = out.final_state().abs();
        assert!(rt.max_abs_diff(&r0).unwrap() < 1e-8);
    }

    #[test]
    fn zero_dt_returns_the_input_bitwise() {
        let g = wide_grid(32);
        let psi0 = gaussian_product(g, 0.5);
        let mp = zero_model(0.3);
        let out = evolve_full(&psi0, &mp, 0.0, 1, 0).unwrap();
        assert_eq!(psi0.values(), out.final_state().values());
    }

    #[test]
    fn strang_halving_ratio_is_near_four() {
        let g = wide_grid(48);
        let psi0 = gaussian_product(g, 0.7);
        let u = Arc::new(FnPotential1D::new(|x: f64| x * x / 2.0, |x: f64| x));
        let v = Arc::new(FnPotential2D::new(|x: f64, y: f64| y * y / 2.0 + 0.2 * x * y));
        let mp = ModelParams::new(1.0, 1.0, 0.2, u, v).unwrap();
        let t_final = 0.2;
        let dt = 0.02;
        let run = |steps: usize| {
            evolve_full(&psi0, &mp, t_final / steps as f64, steps, 0)
                .unwrap()
                .final_state()
                .clone()
        };
        let coarse = run((t_final / dt) as usize);
        let half = run((t_final / dt) as usize * 2);
        let reference = run((t_final / dt) as usize * 8);
        let e1 = coarse.max_abs_diff(&reference).unwrap();
        let e2 = half.max_abs_diff(&reference).unwrap();
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let g = wide_grid(32);
        let mut psi0 = gaussian_product(g, 0.5);
        for v in psi0.values_mut() {
            *v *= 2.0;
        }
        assert!(matches!(
            evolve_full(&psi0, &zero_model(0.2), 1e-3, 1, 0),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn aliasing_potential_phase_raises_the_advisory() {
        let g = wide_grid(32);
        let psi0 = gaussian_product(g, 0.5);
        let u = Arc::new(FnPotential1D::new(|x: f64| x * x / 2.0, |x: f64| x));
        let mp =
            ModelParams::new(1.0, 1.0, 0.01, u, Arc::new(ZeroPotential)).unwrap();
        // dt max|U/eps| = 0.01 * 3200 = 32 > pi.
        let out = evolve_full(&psi0, &mp, 0.01, 1, 0).unwrap();
        assert!(out.phase_advisory);
        let calm = evolve_full(&psi0, &zero_model(0.2), 0.01, 1, 0).unwrap();
        assert!(!calm.phase_advisory);
    }

    #[test]
    fn snapshot_stride_collects_requested_times() {
        let g = wide_grid(32);
        let psi0 = gaussian_product(g, 0.5);
        let out = evolve_full(&psi0, &zero_model(0.2), 0.01, 10, 3).unwrap();
        let expect = [0.0, 0.03, 0.06, 0.09, 0.1];
        assert_eq!(out.times.len(), expect.len());
        for (a, b) in out.times.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_ground_state_energy_is_half() {
        let g = wide_grid(128);
        let mut psi = ComplexField2D::from_fn(g, |x, y| {
            Complex64::new((-(x * x) / 2.0).exp() * (-(y * y) / 2.0).exp(), 0.0)
        });
        let n = norm_l2(&psi);
        for v in psi.values_mut() {
            *v /= n;
        }
        // Decoupled y-oscillator; the x-part contributes eps/(2 m1) kinetic
        // energy, removed by sending m1 to a huge mass.
        let v = Arc::new(FnPotential2D::new(|_x: f64, y: f64| y * y / 2.0));
        let mp = ModelParams::new(1e12, 1.0, 0.5, Arc::new(ZeroPotential), v).unwrap();
        let e = energy(&psi, &mp).unwrap();
        assert!((e - 0.5).abs() < 1e-8, "e = {e}");
    }

    #[test]
    fn energy_is_constant_and_phase_invariant() {
        let g = wide_grid(64);
        let psi0 = gaussian_product(g, 0.7);
        let u = Arc::new(FnPotential1D::new(|x: f64| x * x / 2.0, |x: f64| x));
        let v = Arc::new(FnPotential2D::new(|x: f64, y: f64| y * y / 2.0 + 0.2 * x * y));
        let mp = ModelParams::new(1.0, 1.0, 0.2, u, v).unwrap();
        let e0 = energy(&psi0, &mp).unwrap();
        let out = evolve_full(&psi0, &mp, 5e-4, 400, 0).unwrap();
        let e1 = energy(out.final_state(), &mp).unwrap();
        assert!((e1 - e0).abs() / e0.abs() < 1e-6, "drift {}", (e1 - e0).abs());

        let rotated = ComplexField2D::from_values_unchecked(
            g,
            psi0.values().iter().map(|v| v * Complex64::from_polar(1.0, 0.9)).collect(),
        );
        let e2 = energy(&rotated, &mp).unwrap();
        assert!((e2 - e0).abs() < 1e-12);
    }

    #[test]
    fn probability_is_conserved_with_coupling() {
        let g = wide_grid(64);
        let psi0 = gaussian_product(g, 0.7);
        let u = Arc::new(FnPotential1D::new(|x: f64| x * x / 2.0, |x: f64| x));
        let v = Arc::new(FnPotential2D::new(|x: f64, y: f64| y * y / 2.0 + 0.2 * x * y));
        let mp = ModelParams::new(1.0, 1.0, 0.1, u, v).unwrap();
        let out = evolve_full(&psi0, &mp, 1e-3, 200, 0).unwrap();
        let p = total_probability(out.final_state());
        assert!((p - 1.0).abs() < 1e-10);
    }
}
