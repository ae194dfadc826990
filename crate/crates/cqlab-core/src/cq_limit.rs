//! Solvers for the small-mass-ratio limit system. The production route is
//! Lagrangian: a classical Hamiltonian flow in x, an action integral for the
//! classical phase, a family of independent 1D Schrödinger solves along the
//! flow, and assembly back to an Eulerian polar state. A direct Eulerian
//! finite-difference integrator of the same local system serves as an
//! independent oracle.

use crate::defaults;
use crate::error::{Error, Result};
use crate::full_qm::{ModelParams, Potential1D, Potential2D};
use crate::numerics::grid::{Grid1D, Grid2D, RealField1D, RealField2D};
use crate::numerics::interp::lagrange_uniform_weights;
use crate::numerics::quad::cumulative_hermite;
use crate::numerics::{derivative_line_nonperiodic, lagrange6_uniform, Pchip};
use crate::operators::AveragingKernel;
use crate::polar::PolarState;

/// Sampled trajectories of the classical Hamiltonian flow in x.
///
/// Trajectories launch from a uniform label axis that extends the Eulerian
/// axis by `pad` nodes per side, so the inverse map stays covered when the
/// flow contracts. F(0, x) = x and dF(0, x) = 1 exactly; the Jacobian is
/// formed by centered differences across launch labels.
#[derive(Debug, Clone)]
pub struct ClassicalFlow {
    /// Stored times, uniformly spaced from 0.
    pub t_grid: Vec<f64>,
    /// Launch labels, uniform with the Eulerian spacing.
    pub labels: Vec<f64>,
    /// Eulerian axis the flow serves.
    pub axis: Grid1D,
    /// Index of the first Eulerian node inside `labels`.
    pub pad: usize,
    /// Positions X, time-major: x[it][i].
    pub x: Vec<Vec<f64>>,
    /// Momenta P, time-major.
    pub p: Vec<Vec<f64>>,
    /// Jacobian dF, time-major.
    pub df: Vec<Vec<f64>>,
    /// Initial classical phase at each launch label.
    pub theta_a0: Vec<f64>,
    pub m1: f64,
}

impl ClassicalFlow {
    pub fn n_times(&self) -> usize {
        self.t_grid.len()
    }

    fn dt(&self) -> f64 {
        if self.t_grid.len() > 1 {
            self.t_grid[1] - self.t_grid[0]
        } else {
            0.0
        }
    }

    /// Index of a stored time, within a relative tolerance of the spacing.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        if dt == 0.0 {
            if t.abs() <= 1e-12 {
                return Ok(0);
            }
            return Err(Error::TimeNotStored { time: t });
        }
        let k = (t / dt).round();
        let idx = k as usize;
        if k >= 0.0 && idx < self.t_grid.len() && (t - self.t_grid[idx]).abs() <= 1e-9 * dt.max(1.0)
        {
            Ok(idx)
        } else {
            Err(Error::TimeNotStored { time: t })
        }
    }

    /// Energy p^2/(2 m1) + U(x) of one trajectory at one stored time.
    pub fn hamiltonian(&self, u: &dyn Potential1D, it: usize, label: usize) -> f64 {
        let x = self.x[it][label];
        let p = self.p[it][label];
        p * p / (2.0 * self.m1) + u.value(x)
    }
}

fn validate_t_grid(t_grid: &[f64]) -> Result<f64> {
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("time grid is empty".into()));
    }
    if t_grid[0].abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "time grid must start at 0, found {}",
            t_grid[0]
        )));
    }
    if t_grid.len() == 1 {
        return Ok(0.0);
    }
    let dt = t_grid[1] - t_grid[0];
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time spacing {dt} must be positive")));
    }
    for w in t_grid.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
            return Err(Error::InvalidParameter(
                "time grid must be uniformly spaced".into(),
            ));
        }
    }
    Ok(dt)
}

/// Uniformly spaced times 0, dt, ..., n_steps * dt.
pub fn uniform_times(dt: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|k| k as f64 * dt).collect()
}

/// Integrates the classical Hamiltonian flow with momentum p^2/(2 m1) + U
/// from every launch label, with initial momenta read off the initial
/// classical phase profile.
///
/// The label axis extends the profile's axis by `pad` nodes per side; the
/// initial phase and momentum are continued quadratically and linearly past
/// the edges, which is exact for the affine and quadratic launch profiles
/// used throughout. Velocity Verlet keeps the per-trajectory energy drift
/// bounded. Escape (a core trajectory leaving the axis by more than half a
/// span) is an error; padded trajectories may roam.
pub fn hamiltonian_flow(
    u: &dyn Potential1D,
    theta_a0: &RealField1D,
    m1: f64,
    t_grid: &[f64],
    pad: usize,
) -> Result<ClassicalFlow> {
    if !(m1 > 0.0 && m1.is_finite()) {
        return Err(Error::InvalidParameter(format!("m1 = {m1} must be positive")));
    }
    let dt = validate_t_grid(t_grid)?;
    let axis = *theta_a0.grid();
    let n_core = axis.n;
    let dx = axis.dx();

    let p0_core = derivative_line_nonperiodic(theta_a0.values(), dx, 1, 4);
    // One-sided second-order end slopes of the momentum profile drive the
    // quadratic continuation of the phase past the axis.
    let s_left = (-3.0 * p0_core[0] + 4.0 * p0_core[1] - p0_core[2]) / (2.0 * dx);
    let s_right = (3.0 * p0_core[n_core - 1] - 4.0 * p0_core[n_core - 2] + p0_core[n_core - 3])
        / (2.0 * dx);

    let n_lab = n_core + 2 * pad;
    let mut labels = Vec::with_capacity(n_lab);
    let mut theta0 = Vec::with_capacity(n_lab);
    let mut p0 = Vec::with_capacity(n_lab);
    for i in 0..n_lab {
        let xi = axis.min + (i as f64 - pad as f64) * dx;
        labels.push(xi);
        if i < pad {
            let d = xi - axis.min;
            theta0.push(theta_a0.values()[0] + p0_core[0] * d + 0.5 * s_left * d * d);
            p0.push(p0_core[0] + s_left * d);
        } else if i >= pad + n_core {
            let edge = axis.min + (n_core - 1) as f64 * dx;
            let d = xi - edge;
            theta0.push(
                theta_a0.values()[n_core - 1] + p0_core[n_core - 1] * d + 0.5 * s_right * d * d,
            );
            p0.push(p0_core[n_core - 1] + s_right * d);
        } else {
            theta0.push(theta_a0.values()[i - pad]);
            p0.push(p0_core[i - pad]);
        }
    }

    let span = axis.max - axis.min;
    let escape_lo = axis.min - 0.5 * span;
    let escape_hi = axis.max + 0.5 * span;

    let n_t = t_grid.len();
    let mut x = vec![labels.clone()];
    let mut p = vec![p0];
    x.reserve(n_t - 1);
    p.reserve(n_t - 1);
    for it in 1..n_t {
        let (prev_x, prev_p) = (&x[it - 1], &p[it - 1]);
        let mut nx = Vec::with_capacity(n_lab);
        let mut np = Vec::with_capacity(n_lab);
        for i in 0..n_lab {
            let p_half = prev_p[i] - 0.5 * dt * u.slope(prev_x[i]);
            let xi = prev_x[i] + dt * p_half / m1;
            let pi = p_half - 0.5 * dt * u.slope(xi);
            if !xi.is_finite() || !pi.is_finite() {
                return Err(Error::BlowUp {
                    time: t_grid[it],
                    what: "classical trajectory",
                });
            }
            if i >= pad && i < pad + n_core && (xi < escape_lo || xi > escape_hi) {
                return Err(Error::FlowEscaped {
                    time: t_grid[it],
                    label: i - pad,
                });
            }
            nx.push(xi);
            np.push(pi);
        }
        x.push(nx);
        p.push(np);
    }

    let mut df = Vec::with_capacity(n_t);
    df.push(vec![1.0; n_lab]);
    for row in x.iter().take(n_t).skip(1) {
        let mut d = Vec::with_capacity(n_lab);
        for i in 0..n_lab {
            let v = if i == 0 {
                (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * dx)
            } else if i == n_lab - 1 {
                (3.0 * row[n_lab - 1] - 4.0 * row[n_lab - 2] + row[n_lab - 3]) / (2.0 * dx)
            } else {
                (row[i + 1] - row[i - 1]) / (2.0 * dx)
            };
            d.push(v);
        }
        df.push(d);
    }

    Ok(ClassicalFlow {
        t_grid: t_grid.to_vec(),
        labels,
        axis,
        pad,
        x,
        p,
        df,
        theta_a0: theta0,
        m1,
    })
}

/// Earliest time at which the flow Jacobian sinks to the tolerance, linearly
/// interpolated between stored times; `None` if the flow stays clear.
pub fn check_caustic(flow: &ClassicalFlow, tol: f64) -> Option<f64> {
    let min_of = |it: usize| {
        flow.df[it]
            .iter()
            .fold(f64::INFINITY, |acc, &v| acc.min(v))
    };
    let mut prev = min_of(0);
    if prev <= tol {
        return Some(flow.t_grid[0]);
    }
    for it in 1..flow.n_times() {
        let cur = min_of(it);
        if cur <= tol {
            let t0 = flow.t_grid[it - 1];
            let t1 = flow.t_grid[it];
            let frac = (prev - tol) / (prev - cur);
            return Some(t0 + frac * (t1 - t0));
        }
        prev = cur;
    }
    None
}

/// Inverse G(t, x) of the Lagrangian map on the Eulerian axis at one stored
/// time index, with two Newton polish steps on top of a monotone
/// interpolation of the inverse relation.
fn invert_at(flow: &ClassicalFlow, it: usize) -> Result<Vec<f64>> {
    let t = flow.t_grid[it];
    let row = &flow.x[it];
    let dlab = flow.axis.dx();
    let n_lab = flow.labels.len();
    let core0 = flow.pad;
    let core1 = flow.pad + flow.axis.n;

    for i in core0..core1 - 1 {
        if row[i + 1] <= row[i] {
            return Err(Error::CausticFormed { time: t });
        }
    }
    let mut lo = core0;
    while lo > 0 && row[lo - 1] < row[lo] {
        lo -= 1;
    }
    let mut hi = core1 - 1;
    while hi + 1 < n_lab && row[hi + 1] > row[hi] {
        hi += 1;
    }

    let xs = &row[lo..=hi];
    let ys = &flow.labels[lo..=hi];
    let inv = Pchip::new(xs, ys)?;

    let f_at = |q: f64| lagrange6_uniform(flow.labels[0], dlab, row, q);
    let df_at = |q: f64| lagrange6_uniform(flow.labels[0], dlab, &flow.df[it], q);

    let mut g = Vec::with_capacity(flow.axis.n);
    for j in 0..flow.axis.n {
        let target = flow.axis.node(j);
        if target < xs[0] - 1e-9 || target > xs[xs.len() - 1] + 1e-9 {
            return Err(Error::FlowEscaped { time: t, label: j });
        }
        let mut q = inv.eval(target);
        for _ in 0..2 {
            let slope = df_at(q);
            if slope.abs() > 1e-12 {
                q -= (f_at(q) - target) / slope;
            }
        }
        q = q.clamp(flow.labels[0], flow.labels[n_lab - 1]);
        g.push(q);
    }
    Ok(g)
}

/// Inverse Lagrangian map G(t, .) on the Eulerian axis.
///
/// Fails with `CausticFormed` when the Jacobian at the stored time has sunk
/// to the caustic tolerance and with `TimeNotStored` when t is not a stored
/// flow time.
pub fn invert_flow(flow: &ClassicalFlow, t: f64, caustic_tol: f64) -> Result<RealField1D> {
    let it = flow.time_index(t)?;
    let min_df = flow.df[it]
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v));
    if min_df <= caustic_tol {
        return Err(Error::CausticFormed { time: t });
    }
    let g = invert_at(flow, it)?;
    Ok(RealField1D::from_values_unchecked(flow.axis, g))
}

/// Cumulative action along every trajectory: rows indexed like the flow
/// times, columns by label. The integrand p^2/(2 m1) - U(x) is accumulated
/// with a Hermite-corrected trapezoid using its analytic time derivative
/// -2 p U'(x)/m1.
fn action_rows(flow: &ClassicalFlow, u: &dyn Potential1D) -> Vec<Vec<f64>> {
    let n_t = flow.n_times();
    let n_lab = flow.labels.len();
    let dt = flow.dt();
    let mut rows = vec![vec![0.0; n_lab]; n_t];
    let mut f = vec![0.0; n_t];
    let mut dfdt = vec![0.0; n_t];
    for i in 0..n_lab {
        for it in 0..n_t {
            let (xv, pv) = (flow.x[it][i], flow.p[it][i]);
            f[it] = pv * pv / (2.0 * flow.m1) - u.value(xv);
            dfdt[it] = -2.0 * pv * u.slope(xv) / flow.m1;
        }
        let s = cumulative_hermite(dt, &f, &dfdt);
        for it in 0..n_t {
            rows[it][i] = flow.theta_a0[i] + s[it];
        }
    }
    rows
}

/// Classical phase on the Eulerian axis at every stored flow time, from the
/// characteristics action formula evaluated at the inverse flow.
pub fn theta_a_evolve(flow: &ClassicalFlow, u: &dyn Potential1D) -> Result<Vec<RealField1D>> {
    let rows = action_rows(flow, u);
    let dlab = flow.axis.dx();
    let mut out = Vec::with_capacity(flow.n_times());
    for it in 0..flow.n_times() {
        let g = invert_at(flow, it)?;
        let vals = g
            .iter()
            .map(|&q| lagrange6_uniform(flow.labels[0], dlab, &rows[it], q))
            .collect();
        out.push(RealField1D::from_values_unchecked(flow.axis, vals));
    }
    Ok(out)
}

/// One-dimensional quantum states carried along the classical flow, one per
/// launch label, sampled at snapshot times.
///
/// Each slice is held in log-polar form: the log-amplitude of the normalized
/// state and a real phase field. Phases are continuous real functions of y
/// with no branch ambiguity, so they stay meaningful at any amplitude depth.
#[derive(Debug, Clone)]
pub struct QuantumFamily {
    pub times: Vec<f64>,
    /// Index of each snapshot in the flow's stored times.
    pub time_indices: Vec<usize>,
    pub y_axis: Grid1D,
    pub labels: Vec<f64>,
    /// Per-label amplitude weights, frozen at launch.
    pub weights: Vec<f64>,
    /// Log-amplitude snapshots, log_amps[s][label][iy]; each slice holds
    /// ln of an L2(y)-normalized amplitude.
    pub log_amps: Vec<Vec<Vec<f64>>>,
    /// Phase snapshots with the same layout.
    pub phases: Vec<Vec<Vec<f64>>>,
}

/// In-flight state of the slice family, advanced one flow step at a time.
///
/// Each slice evolves its 1D Schrödinger dynamics in log-polar variables
/// (ln a, theta) with fourth-order finite differences and classic RK4, the
/// same discretization as the direct oracle. A complex representation loses
/// the tail phases: any absolute perturbation of order the edge amplitude
/// (spectral seam ringing, periodic images, stencil truncation on the raw
/// field) rotates the phase of the tiny tail values by order one, which a
/// max-abs phase comparison then sees. In log-polar form amplitude scale
/// drops out and near-Gaussian tails are low-degree polynomials that the
/// stencils differentiate exactly.
struct FamilyStepper<'a> {
    flow: &'a ClassicalFlow,
    v: &'a dyn Potential2D,
    m2: f64,
    y_axis: Grid1D,
    log_amps: Vec<Vec<f64>>,
    phases: Vec<Vec<f64>>,
    it: usize,
    k1: (Vec<f64>, Vec<f64>),
    k2: (Vec<f64>, Vec<f64>),
    k3: (Vec<f64>, Vec<f64>),
    k4: (Vec<f64>, Vec<f64>),
    tmp_s: Vec<f64>,
    tmp_th: Vec<f64>,
    v_row: Vec<f64>,
}

impl<'a> FamilyStepper<'a> {
    fn new(
        flow: &'a ClassicalFlow,
        v: &'a dyn Potential2D,
        m2: f64,
        y_axis: Grid1D,
        log_amps: Vec<Vec<f64>>,
        phases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if log_amps.len() != flow.labels.len() || phases.len() != flow.labels.len() {
            return Err(Error::GridMismatch {
                context: "one slice per flow label",
            });
        }
        let ny = y_axis.n;
        Ok(Self {
            flow,
            v,
            m2,
            y_axis,
            log_amps,
            phases,
            it: 0,
            k1: (vec![0.0; ny], vec![0.0; ny]),
            k2: (vec![0.0; ny], vec![0.0; ny]),
            k3: (vec![0.0; ny], vec![0.0; ny]),
            k4: (vec![0.0; ny], vec![0.0; ny]),
            tmp_s: vec![0.0; ny],
            tmp_th: vec![0.0; ny],
            v_row: vec![0.0; ny],
        })
    }

    /// Transport rhs of one slice at the classical position `x`:
    /// d(ln a)/dt = -(theta' (ln a)' + theta''/2) / m2,
    /// d theta/dt = ((ln a)'' + ((ln a)')^2 - (theta')^2) / (2 m2) - V(x, y).
    fn rhs(&mut self, x: f64, s: &[f64], th: &[f64], out_s: &mut [f64], out_th: &mut [f64]) {
        let dy = self.y_axis.dx();
        let ds = derivative_line_nonperiodic(s, dy, 1, 4);
        let d2s = derivative_line_nonperiodic(s, dy, 2, 4);
        let dth = derivative_line_nonperiodic(th, dy, 1, 4);
        let d2th = derivative_line_nonperiodic(th, dy, 2, 4);
        for iy in 0..self.y_axis.n {
            self.v_row[iy] = self.v.value(x, self.y_axis.node(iy));
        }
        for iy in 0..self.y_axis.n {
            out_s[iy] = -(dth[iy] * ds[iy] + 0.5 * d2th[iy]) / self.m2;
            out_th[iy] = (0.5 * (d2s[iy] + ds[iy] * ds[iy]) - 0.5 * dth[iy] * dth[iy]) / self.m2
                - self.v_row[iy];
        }
    }

    /// RK4 step of every slice from stored time `it` to `it + 1`. The
    /// classical position at the half step comes from the cubic Hermite
    /// interpolant of the stored endpoint positions and velocities.
    fn step(&mut self) -> Result<()> {
        let dt = self.flow.dt();
        let next = self.it + 1;
        let t = self.flow.t_grid[next];
        let ny = self.y_axis.n;
        let blow_s = defaults::BLOWUP_LIMIT.ln();
        for l in 0..self.log_amps.len() {
            let x0 = self.flow.x[self.it][l];
            let x1 = self.flow.x[next][l];
            let v0 = self.flow.p[self.it][l] / self.flow.m1;
            let v1 = self.flow.p[next][l] / self.flow.m1;
            let x_mid = 0.5 * (x0 + x1) + 0.125 * dt * (v0 - v1);

            let mut s = std::mem::take(&mut self.log_amps[l]);
            let mut th = std::mem::take(&mut self.phases[l]);
            let (mut k1, mut k2, mut k3, mut k4) = (
                std::mem::take(&mut self.k1),
                std::mem::take(&mut self.k2),
                std::mem::take(&mut self.k3),
                std::mem::take(&mut self.k4),
            );
            let (mut tmp_s, mut tmp_th) = (std::mem::take(&mut self.tmp_s), std::mem::take(&mut self.tmp_th));

            self.rhs(x0, &s, &th, &mut k1.0, &mut k1.1);
            stage(&s, &k1.0, 0.5 * dt, &mut tmp_s);
            stage(&th, &k1.1, 0.5 * dt, &mut tmp_th);
            self.rhs(x_mid, &tmp_s, &tmp_th, &mut k2.0, &mut k2.1);
            stage(&s, &k2.0, 0.5 * dt, &mut tmp_s);
            stage(&th, &k2.1, 0.5 * dt, &mut tmp_th);
            self.rhs(x_mid, &tmp_s, &tmp_th, &mut k3.0, &mut k3.1);
            stage(&s, &k3.0, dt, &mut tmp_s);
            stage(&th, &k3.1, dt, &mut tmp_th);
            self.rhs(x1, &tmp_s, &tmp_th, &mut k4.0, &mut k4.1);
            rk4_combine(&mut s, &k1.0, &k2.0, &k3.0, &k4.0, dt);
            rk4_combine(&mut th, &k1.1, &k2.1, &k3.1, &k4.1, dt);

            let mut bad = false;
            for iy in 0..ny {
                if !s[iy].is_finite() || !th[iy].is_finite() || s[iy] > blow_s || th[iy].abs() > defaults::BLOWUP_LIMIT {
                    bad = true;
                    break;
                }
            }
            self.log_amps[l] = s;
            self.phases[l] = th;
            self.k1 = k1;
            self.k2 = k2;
            self.k3 = k3;
            self.k4 = k4;
            self.tmp_s = tmp_s;
            self.tmp_th = tmp_th;
            if bad {
                return Err(Error::BlowUp {
                    time: t,
                    what: "quantum family slice",
                });
            }
        }
        self.it = next;
        Ok(())
    }
}

/// L2 norm of a slice given as log-amplitude samples.
fn log_slice_norm(log_amp: &[f64], dy: f64) -> f64 {
    (log_amp.iter().map(|&s| (2.0 * s).exp()).sum::<f64>() * dy).sqrt()
}

/// Evolves one independent 1D Schrödinger solve per flow label in log-polar
/// variables, with the coupling potential sampled at the transported
/// classical position.
///
/// Slices arrive as (log-amplitude, phase) pairs of an L2(y)-normalized
/// state; the per-label amplitude weights ride along unchanged. Snapshots
/// are stored every `snapshot_stride` flow steps (0 keeps endpoints only)
/// plus the final time.
///
/// The scheme is explicit, so the flow step must resolve the stencil
/// dispersion scale: roughly dt < m2 dy^2 / 3, tightened further when the
/// tail log-slope max |d(ln a)/dy| approaches 1/dy. Steps outside that
/// bound end in a blow-up error rather than silent garbage.
#[allow(clippy::too_many_arguments)]
pub fn evolve_quantum_family(
    log_amps0: Vec<Vec<f64>>,
    phases0: Vec<Vec<f64>>,
    weights: Vec<f64>,
    y_axis: Grid1D,
    v: &dyn Potential2D,
    flow: &ClassicalFlow,
    m2: f64,
    snapshot_stride: usize,
) -> Result<QuantumFamily> {
    if weights.len() != log_amps0.len() || phases0.len() != log_amps0.len() {
        return Err(Error::GridMismatch {
            context: "one weight and phase row per slice",
        });
    }
    let dy = y_axis.dx();
    for (s, th) in log_amps0.iter().zip(phases0.iter()) {
        if s.len() != y_axis.n || th.len() != y_axis.n {
            return Err(Error::GridMismatch {
                context: "slice length equals y axis",
            });
        }
        let defect = (log_slice_norm(s, dy) - 1.0).abs();
        if defect > defaults::NORM_TOL {
            return Err(Error::NotNormalized { defect });
        }
    }

    let mut stepper = FamilyStepper::new(flow, v, m2, y_axis, log_amps0, phases0)?;
    let n_steps = flow.n_times() - 1;
    let mut times = vec![flow.t_grid[0]];
    let mut time_indices = vec![0];
    let mut log_amps = vec![stepper.log_amps.clone()];
    let mut phases = vec![stepper.phases.clone()];
    for step in 1..=n_steps {
        stepper.step()?;
        if step == n_steps || (snapshot_stride > 0 && step % snapshot_stride == 0) {
            times.push(flow.t_grid[step]);
            time_indices.push(step);
            log_amps.push(stepper.log_amps.clone());
            phases.push(stepper.phases.clone());
        }
    }
    Ok(QuantumFamily {
        times,
        time_indices,
        y_axis,
        labels: flow.labels.clone(),
        weights,
        log_amps,
        phases,
    })
}

/// Limit trajectory: polar snapshots, the kernel average of the local
/// quantum phase at each snapshot, and the classical flow when the
/// Lagrangian route produced the solution.
#[derive(Debug, Clone)]
pub struct LimitSolution {
    pub times: Vec<f64>,
    pub snapshots: Vec<PolarState>,
    /// Kernel average of the local quantum phase per snapshot; the part of
    /// the slice phase that the complementary projector removes.
    pub a_parts: Vec<RealField1D>,
    pub flow: Option<ClassicalFlow>,
    pub caustic_time: Option<f64>,
}

/// Options shared by the Lagrangian pipeline.
#[derive(Debug, Clone, Copy)]
pub struct LagrangianOptions {
    pub dt: f64,
    pub n_steps: usize,
    /// Snapshot stride in steps; 0 keeps endpoints only.
    pub snapshot_stride: usize,
    /// Launch-label padding per side, as a fraction of the axis span.
    pub pad_fraction: f64,
    /// Amplitude floor for unwrapping and the assembled amplitude.
    pub r_min: f64,
    pub caustic_tol: f64,
}

impl LagrangianOptions {
    pub fn new(dt: f64, n_steps: usize, snapshot_stride: usize) -> Self {
        Self {
            dt,
            n_steps,
            snapshot_stride,
            pad_fraction: 0.5,
            r_min: defaults::R_MIN,
            caustic_tol: defaults::CAUSTIC_TOL,
        }
    }

    pub fn with_r_min(mut self, r_min: f64) -> Self {
        self.r_min = r_min;
        self
    }

    fn pad_nodes(&self, n: usize) -> usize {
        (self.pad_fraction * n as f64).ceil() as usize
    }
}

/// Assembles one Eulerian polar snapshot from the flow, the classical phase
/// profile, and the current slice family.
///
/// Weighted log-amplitudes and phases are interpolated across labels to the
/// inverse-flow positions, and the amplitude picks up the Jacobian factor
/// after exponentiation. Interpolating in log space keeps the amplitude
/// positive and is exact when the weighted tails are log-polynomial. The
/// returned profile is the kernel average of the local quantum phase.
#[allow(clippy::too_many_arguments)]
fn assemble_snapshot(
    flow: &ClassicalFlow,
    it: usize,
    theta_a: &RealField1D,
    log_amps: &[Vec<f64>],
    phases: &[Vec<f64>],
    weights: &[f64],
    grid: Grid2D,
    kernel: &AveragingKernel,
    r_min: f64,
    caustic_tol: f64,
) -> Result<(PolarState, RealField1D)> {
    let n_lab = flow.labels.len();
    let ny = grid.ny;
    let dlab = flow.axis.dx();
    let log_w: Vec<f64> = weights.iter().map(|&w| w.max(r_min).ln()).collect();

    let g = invert_at(flow, it)?;
    let t = flow.t_grid[it];
    let mut r_vals = vec![0.0; grid.len()];
    let mut tb_vals = vec![0.0; grid.len()];
    for ix in 0..grid.nx {
        let q = g[ix];
        // Width-8 stencils keep the interpolation error below the mass
        // conservation budget on production grids.
        let (jbase, jw) = lagrange_uniform_weights(flow.labels[0], dlab, n_lab, 8, q);
        let jac: f64 = jw
            .iter()
            .enumerate()
            .map(|(k, &wk)| wk * flow.df[it][jbase + k])
            .sum();
        if jac <= caustic_tol {
            return Err(Error::CausticFormed { time: t });
        }
        let log_scale = -0.5 * jac.ln();
        for iy in 0..ny {
            let mut la = 0.0;
            let mut ph = 0.0;
            for (k, &wk) in jw.iter().enumerate() {
                let l = jbase + k;
                la += wk * (log_w[l] + log_amps[l][iy]);
                ph += wk * phases[l][iy];
            }
            r_vals[grid.idx(ix, iy)] = (la + log_scale).exp().max(r_min);
            tb_vals[grid.idx(ix, iy)] = ph;
        }
    }
    let r = RealField2D::from_values_unchecked(grid, r_vals);
    let tb_full = RealField2D::from_values_unchecked(grid, tb_vals);
    let a_profile = kernel.average_profile(&tb_full)?;
    let mut tb = tb_full;
    for ix in 0..grid.nx {
        let m = a_profile.at(ix);
        for iy in 0..ny {
            let k = grid.idx(ix, iy);
            tb.values_mut()[k] -= m;
        }
    }
    Ok((
        PolarState {
            r,
            theta_a: theta_a.clone(),
            theta_b: tb,
            kernel: kernel.clone(),
        },
        a_profile,
    ))
}

/// Assembles polar snapshots at every family snapshot time.
pub fn assemble_limit_solution(
    flow: &ClassicalFlow,
    u: &dyn Potential1D,
    family: &QuantumFamily,
    kernel: &AveragingKernel,
    grid: Grid2D,
    r_min: f64,
) -> Result<LimitSolution> {
    let rows = action_rows(flow, u);
    let dlab = flow.axis.dx();
    let mut snapshots = Vec::with_capacity(family.times.len());
    let mut a_parts = Vec::with_capacity(family.times.len());
    for (s, &it) in family.time_indices.iter().enumerate() {
        let g = invert_at(flow, it)?;
        let theta_vals = g
            .iter()
            .map(|&q| lagrange6_uniform(flow.labels[0], dlab, &rows[it], q))
            .collect();
        let theta_a = RealField1D::from_values_unchecked(flow.axis, theta_vals);
        let (state, a_part) = assemble_snapshot(
            flow,
            it,
            &theta_a,
            &family.log_amps[s],
            &family.phases[s],
            &family.weights,
            grid,
            kernel,
            r_min,
            defaults::CAUSTIC_TOL,
        )?;
        snapshots.push(state);
        a_parts.push(a_part);
    }
    Ok(LimitSolution {
        times: family.times.clone(),
        snapshots,
        a_parts,
        flow: Some(flow.clone()),
        caustic_time: None,
    })
}

/// Builds slice initial data from a polar state: each x-row of the
/// amplitude is normalized into a log-polar slice, the norm becomes the
/// label weight, and rows beyond the axis continue the edge slice. The
/// floor only guards the logarithm at entry.
fn slices_from_state(
    state0: &PolarState,
    flow: &ClassicalFlow,
    r_min: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let grid = *state0.r.grid();
    let ny = grid.ny;
    let dy = grid.dy();
    let n_core = grid.nx;
    let pad = flow.pad;
    let n_lab = flow.labels.len();
    let mut core_s = Vec::with_capacity(n_core);
    let mut core_th = Vec::with_capacity(n_core);
    let mut core_log_w = Vec::with_capacity(n_core);
    for ix in 0..n_core {
        let mut w2 = 0.0;
        for iy in 0..ny {
            let r = state0.r.at(ix, iy);
            w2 += r * r * dy;
        }
        let log_w = w2.sqrt().max(r_min).ln();
        let mut s = Vec::with_capacity(ny);
        let mut th = Vec::with_capacity(ny);
        for iy in 0..ny {
            s.push(state0.r.at(ix, iy).max(r_min).ln() - log_w);
            th.push(state0.theta_b.at(ix, iy));
        }
        core_s.push(s);
        core_th.push(th);
        core_log_w.push(log_w);
    }
    // Pad labels reuse the edge slice shape, but the envelope weight must
    // keep decaying outside the box: continue ln w with the one-sided
    // quadratic through the last three core labels, the same continuation
    // the flow applies to the launch phase. Exact for Gaussian envelopes.
    let extrap = |f: [f64; 3], j: f64| -> f64 {
        f[0] + j * (-1.5 * f[0] + 2.0 * f[1] - 0.5 * f[2])
            + j * j * (0.5 * f[0] - f[1] + 0.5 * f[2])
    };
    let mut log_amps = Vec::with_capacity(n_lab);
    let mut phases = Vec::with_capacity(n_lab);
    let mut weights = Vec::with_capacity(n_lab);
    for i in 0..n_lab {
        let (ix, log_w) = if i < pad {
            let j = i as f64 - pad as f64;
            (0, extrap([core_log_w[0], core_log_w[1], core_log_w[2]], j))
        } else if i >= pad + n_core {
            let j = (i + 1 - pad - n_core) as f64;
            let f = [
                core_log_w[n_core - 1],
                core_log_w[n_core - 2],
                core_log_w[n_core - 3],
            ];
            (n_core - 1, extrap(f, -j))
        } else {
            (i - pad, core_log_w[i - pad])
        };
        log_amps.push(core_s[ix].clone());
        phases.push(core_th[ix].clone());
        weights.push(log_w.exp().max(r_min));
    }
    (log_amps, phases, weights)
}

fn caustic_guard(flow: &ClassicalFlow, tol: f64) -> Result<()> {
    if let Some(tc) = check_caustic(flow, tol) {
        return Err(Error::CausticFormed { time: tc });
    }
    Ok(())
}

/// Lagrangian limit solver: classical flow, action phase, slice family,
/// assembly at snapshot strides.
///
/// The initial polar state carries the small-parameter scaling of its
/// classical phase, exactly as `polar::decompose` produces it.
pub fn evolve_limit_lagrangian(
    state0: &PolarState,
    mp: &ModelParams,
    opts: &LagrangianOptions,
) -> Result<LimitSolution> {
    let mut solution = LimitSolution {
        times: Vec::new(),
        snapshots: Vec::new(),
        a_parts: Vec::new(),
        flow: None,
        caustic_time: None,
    };
    let flow = stream_limit_lagrangian(state0, mp, opts, |step, t, state, a_part| {
        let last = step == opts.n_steps;
        if step == 0 || last || (opts.snapshot_stride > 0 && step % opts.snapshot_stride == 0) {
            solution.times.push(t);
            solution.snapshots.push(state.clone());
            solution.a_parts.push(a_part.clone());
        }
        Ok(())
    })?;
    solution.flow = Some(flow);
    Ok(solution)
}

/// Streaming form of the Lagrangian solver: assembles the polar state at
/// every step and hands it to the sink. Used by the correction stepper,
/// which needs coefficients on its own fine time grid without storing a
/// dense trajectory.
pub fn stream_limit_lagrangian(
    state0: &PolarState,
    mp: &ModelParams,
    opts: &LagrangianOptions,
    mut sink: impl FnMut(usize, f64, &PolarState, &RealField1D) -> Result<()>,
) -> Result<ClassicalFlow> {
    let grid = *state0.r.grid();
    let t_grid = uniform_times(opts.dt, opts.n_steps);
    let pad = opts.pad_nodes(grid.nx);
    let flow = hamiltonian_flow(mp.u.as_ref(), &state0.theta_a, mp.m1, &t_grid, pad)?;
    caustic_guard(&flow, opts.caustic_tol)?;
    let rows = action_rows(&flow, mp.u.as_ref());
    let dlab = flow.axis.dx();
    let (log_amps, phases, weights) = slices_from_state(state0, &flow, opts.r_min);
    let mut stepper =
        FamilyStepper::new(&flow, mp.v.as_ref(), mp.m2, grid.y_axis(), log_amps, phases)?;

    for step in 0..=opts.n_steps {
        if step > 0 {
            stepper.step()?;
        }
        let g = invert_at(&flow, step)?;
        let theta_vals = g
            .iter()
            .map(|&q| lagrange6_uniform(flow.labels[0], dlab, &rows[step], q))
            .collect();
        let theta_a = RealField1D::from_values_unchecked(flow.axis, theta_vals);
        let (state, a_part) = assemble_snapshot(
            &flow,
            step,
            &theta_a,
            &stepper.log_amps,
            &stepper.phases,
            &weights,
            grid,
            &state0.kernel,
            opts.r_min,
            opts.caustic_tol,
        )?;
        sink(step, t_grid[step], &state, &a_part)?;
    }
    Ok(flow)
}

/// Options for the direct Eulerian oracle.
#[derive(Debug, Clone, Copy)]
pub struct DirectOptions {
    pub dt: f64,
    pub n_steps: usize,
    /// Snapshot stride in steps; 0 keeps endpoints only.
    pub snapshot_stride: usize,
    /// Amplitude floor: clamps the amplitude entering the logarithm and
    /// aborts the run when the evolved amplitude sinks below it.
    pub r_min: f64,
}

impl DirectOptions {
    pub fn new(dt: f64, n_steps: usize, snapshot_stride: usize) -> Self {
        Self {
            dt,
            n_steps,
            snapshot_stride,
            r_min: defaults::R_MIN,
        }
    }

    pub fn with_r_min(mut self, r_min: f64) -> Self {
        self.r_min = r_min;
        self
    }
}

struct DirectWork {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    line_x: Vec<f64>,
    u_vals: Vec<f64>,
    v_vals: Vec<f64>,
}

impl DirectWork {
    /// d/dx with one-sided closures, x-major gather and scatter.
    fn ddx(&mut self, src: &[f64], dst: &mut [f64]) {
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                self.line_x[ix] = src[ix * self.ny + iy];
            }
            let d = derivative_line_nonperiodic(&self.line_x, self.dx, 1, 4);
            for ix in 0..self.nx {
                dst[ix * self.ny + iy] = d[ix];
            }
        }
    }

    fn ddy(&self, src: &[f64], dst: &mut [f64], order: usize) {
        for ix in 0..self.nx {
            let row = &src[ix * self.ny..(ix + 1) * self.ny];
            let d = derivative_line_nonperiodic(row, self.dy, order, 4);
            dst[ix * self.ny..(ix + 1) * self.ny].copy_from_slice(&d);
        }
    }
}

/// Right-hand side of the local limit system in (ln R, theta_A, theta~_B).
///
/// The amplitude equation divided by R gives a transport equation for the
/// log-amplitude s = ln R, and the quantum-potential quotient becomes the
/// algebraic identity (d2R/dy2)/R = d2s/dy2 + (ds/dy)^2. On near-Gaussian
/// data s is a low-degree polynomial in y, which the stencils differentiate
/// exactly even at the one-sided closure rows; the raw-quotient form seeds a
/// violent tail instability from its truncation error there.
#[allow(clippy::too_many_arguments)]
fn direct_rhs(
    work: &mut DirectWork,
    m1: f64,
    m2: f64,
    s: &[f64],
    ta: &[f64],
    tb: &[f64],
    out_s: &mut [f64],
    out_ta: &mut [f64],
    out_tb: &mut [f64],
) {
    let (nx, ny) = (work.nx, work.ny);
    let dta = derivative_line_nonperiodic(ta, work.dx, 1, 4);
    let d2ta = derivative_line_nonperiodic(ta, work.dx, 2, 4);
    for ix in 0..nx {
        out_ta[ix] = -dta[ix] * dta[ix] / (2.0 * m1) - work.u_vals[ix];
    }

    let n = nx * ny;
    let mut ds_dx = vec![0.0; n];
    let mut dtb_dx = vec![0.0; n];
    work.ddx(s, &mut ds_dx);
    work.ddx(tb, &mut dtb_dx);
    let mut ds_dy = vec![0.0; n];
    let mut d2s_dy = vec![0.0; n];
    let mut dtb_dy = vec![0.0; n];
    let mut d2tb_dy = vec![0.0; n];
    work.ddy(s, &mut ds_dy, 1);
    work.ddy(s, &mut d2s_dy, 2);
    work.ddy(tb, &mut dtb_dy, 1);
    work.ddy(tb, &mut d2tb_dy, 2);

    for ix in 0..nx {
        let vx = dta[ix] / m1;
        let stretch_x = d2ta[ix] / (2.0 * m1);
        for iy in 0..ny {
            let k = ix * ny + iy;
            out_s[k] = -vx * ds_dx[k] - stretch_x
                - dtb_dy[k] * ds_dy[k] / m2
                - d2tb_dy[k] / (2.0 * m2);
            let qp = (d2s_dy[k] + ds_dy[k] * ds_dy[k]) / (2.0 * m2);
            out_tb[k] = -vx * dtb_dx[k] - dtb_dy[k] * dtb_dy[k] / (2.0 * m2) + qp
                - work.v_vals[k];
        }
    }
}

/// Direct Eulerian integrator of the local limit system, the independent
/// oracle for the Lagrangian route.
///
/// Classic RK4 on (ln R, theta_A, theta~_B) with fourth-order finite
/// differences and one-sided closures; the fields grow polynomially toward
/// the box edge, so periodic spectral derivatives do not apply. Snapshots
/// exponentiate back to R, report theta_B as the complementary projection
/// of theta~_B, and carry the kernel average alongside.
pub fn evolve_limit_direct(
    state0: &PolarState,
    mp: &ModelParams,
    kernel: &AveragingKernel,
    opts: &DirectOptions,
) -> Result<LimitSolution> {
    let grid = *state0.r.grid();
    let (nx, ny) = (grid.nx, grid.ny);
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {} must be positive", opts.dt)));
    }
    let mut work = DirectWork {
        nx,
        ny,
        dx: grid.dx(),
        dy: grid.dy(),
        line_x: vec![0.0; nx],
        u_vals: (0..nx).map(|ix| mp.u.value(grid.x(ix))).collect(),
        v_vals: {
            let mut v = Vec::with_capacity(nx * ny);
            for ix in 0..nx {
                for iy in 0..ny {
                    v.push(mp.v.value(grid.x(ix), grid.y(iy)));
                }
            }
            v
        },
    };

    // Log-amplitude state; the floor only guards the logarithm at entry.
    let mut s: Vec<f64> = state0
        .r
        .values()
        .iter()
        .map(|&v| v.max(opts.r_min).ln())
        .collect();
    let mut ta: Vec<f64> = state0.theta_a.values().to_vec();
    // The full local quantum phase: complementary part plus zero average.
    let mut tb: Vec<f64> = state0.theta_b.values().to_vec();

    let n = nx * ny;
    let mut k1 = (vec![0.0; n], vec![0.0; nx], vec![0.0; n]);
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp_s = vec![0.0; n];
    let mut tmp_ta = vec![0.0; nx];
    let mut tmp_tb = vec![0.0; n];

    let project = |tb_vals: &[f64], kern: &AveragingKernel| -> Result<(RealField2D, RealField1D)> {
        let field = RealField2D::from_values_unchecked(grid, tb_vals.to_vec());
        let a_profile = kern.average_profile(&field)?;
        let mut b = field;
        for ix in 0..nx {
            let m = a_profile.at(ix);
            for iy in 0..ny {
                b.values_mut()[ix * ny + iy] -= m;
            }
        }
        Ok((b, a_profile))
    };

    let snapshot = |s_vals: &[f64], ta_vals: &[f64], tb_vals: &[f64]| -> Result<(PolarState, RealField1D)> {
        let (b, a_profile) = project(tb_vals, kernel)?;
        let r_vals: Vec<f64> = s_vals.iter().map(|&v| v.exp()).collect();
        Ok((
            PolarState {
                r: RealField2D::from_values_unchecked(grid, r_vals),
                theta_a: RealField1D::from_values_unchecked(grid.x_axis(), ta_vals.to_vec()),
                theta_b: b,
                kernel: kernel.clone(),
            },
            a_profile,
        ))
    };

    let mut times = vec![0.0];
    let mut snapshots = Vec::new();
    let mut a_parts = Vec::new();
    let (s0, a0) = snapshot(&s, &ta, &tb)?;
    snapshots.push(s0);
    a_parts.push(a0);

    let floor_log = opts.r_min.ln();
    let dt = opts.dt;
    for step in 1..=opts.n_steps {
        let t = step as f64 * dt;
        direct_rhs(&mut work, mp.m1, mp.m2, &s, &ta, &tb, &mut k1.0, &mut k1.1, &mut k1.2);
        stage(&s, &k1.0, 0.5 * dt, &mut tmp_s);
        stage(&ta, &k1.1, 0.5 * dt, &mut tmp_ta);
        stage(&tb, &k1.2, 0.5 * dt, &mut tmp_tb);
        direct_rhs(&mut work, mp.m1, mp.m2, &tmp_s, &tmp_ta, &tmp_tb, &mut k2.0, &mut k2.1, &mut k2.2);
        stage(&s, &k2.0, 0.5 * dt, &mut tmp_s);
        stage(&ta, &k2.1, 0.5 * dt, &mut tmp_ta);
        stage(&tb, &k2.2, 0.5 * dt, &mut tmp_tb);
        direct_rhs(&mut work, mp.m1, mp.m2, &tmp_s, &tmp_ta, &tmp_tb, &mut k3.0, &mut k3.1, &mut k3.2);
        stage(&s, &k3.0, dt, &mut tmp_s);
        stage(&ta, &k3.1, dt, &mut tmp_ta);
        stage(&tb, &k3.2, dt, &mut tmp_tb);
        direct_rhs(&mut work, mp.m1, mp.m2, &tmp_s, &tmp_ta, &tmp_tb, &mut k4.0, &mut k4.1, &mut k4.2);

        rk4_combine(&mut s, &k1.0, &k2.0, &k3.0, &k4.0, dt);
        rk4_combine(&mut ta, &k1.1, &k2.1, &k3.1, &k4.1, dt);
        rk4_combine(&mut tb, &k1.2, &k2.2, &k3.2, &k4.2, dt);

        let mut min_s = f64::INFINITY;
        let mut max_s = f64::NEG_INFINITY;
        for &v in s.iter() {
            min_s = min_s.min(v);
            max_s = max_s.max(v);
        }
        let mut max_phase = 0.0f64;
        for &v in tb.iter().chain(ta.iter()) {
            max_phase = max_phase.max(v.abs());
        }
        let diverged = !min_s.is_finite()
            || !max_phase.is_finite()
            || max_s > defaults::BLOWUP_LIMIT.ln()
            || max_phase > defaults::BLOWUP_LIMIT;
        if diverged {
            return Err(Error::BlowUp {
                time: t,
                what: "direct limit state",
            });
        }
        if min_s < floor_log {
            return Err(Error::AmplitudeFloorBreached {
                time: t,
                min_r: min_s.exp(),
            });
        }

        if step == opts.n_steps || (opts.snapshot_stride > 0 && step % opts.snapshot_stride == 0) {
            times.push(t);
            let (snap, a) = snapshot(&s, &ta, &tb)?;
            snapshots.push(snap);
            a_parts.push(a);
        }
    }

    Ok(LimitSolution {
        times,
        snapshots,
        a_parts,
        flow: None,
        caustic_time: None,
    })
}

fn stage(base: &[f64], k: &[f64], h: f64, out: &mut [f64]) {
    for ((o, &b), &s) in out.iter_mut().zip(base.iter()).zip(k.iter()) {
        *o = b + h * s;
    }
}

fn rk4_combine(state: &mut [f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64], dt: f64) {
    let w = dt / 6.0;
    for i in 0..state.len() {
        state[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}
