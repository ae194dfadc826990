//! Quadrature: Riemann sums with uniform node weight dx (dy), plus the
//! derivative-corrected cumulative trapezoid used for action integrals.

use super::grid::{ComplexField2D, RealField1D, RealField2D};

/// Integral of a 1D field, weight dx per node.
pub fn integrate_1d(field: &RealField1D) -> f64 {
    field.values().iter().sum::<f64>() * field.grid().dx()
}

/// Integral over both axes, weight dx * dy per node.
pub fn integrate_xy(field: &RealField2D) -> f64 {
    field.values().iter().sum::<f64>() * field.grid().cell_area()
}

/// Marginal over y: per-x integral, weight dy.
pub fn integrate_y(field: &RealField2D) -> RealField1D {
    let g = field.grid();
    let dy = g.dy();
    let mut out = Vec::with_capacity(g.nx);
    for ix in 0..g.nx {
        let row = &field.values()[ix * g.ny..(ix + 1) * g.ny];
        out.push(row.iter().sum::<f64>() * dy);
    }
    RealField1D::from_values_unchecked(g.x_axis(), out)
}

/// Marginal over x: per-y integral, weight dx.
pub fn integrate_x(field: &RealField2D) -> RealField1D {
    let g = field.grid();
    let dx = g.dx();
    let mut out = vec![0.0; g.ny];
    for ix in 0..g.nx {
        let row = &field.values()[ix * g.ny..(ix + 1) * g.ny];
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    for o in out.iter_mut() {
        *o *= dx;
    }
    RealField1D::from_values_unchecked(g.y_axis(), out)
}

/// Total probability of a complex state, integral of |psi|^2.
pub fn total_probability(psi: &ComplexField2D) -> f64 {
    psi.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * psi.grid().cell_area()
}

/// L2 norm of a complex state.
pub fn norm_l2(psi: &ComplexField2D) -> f64 {
    total_probability(psi).sqrt()
}

/// Probability mass carried by the outermost `frame` node layers.
///
/// The periodic box stands in for the real line only while this is tiny.
pub fn boundary_mass(rho: &RealField2D, frame: usize) -> f64 {
    let g = rho.grid();
    let mut sum = 0.0;
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            let edge_x = ix < frame || ix >= g.nx - frame;
            let edge_y = iy < frame || iy >= g.ny - frame;
            if edge_x || edge_y {
                sum += rho.at(ix, iy);
            }
        }
    }
    sum * g.cell_area()
}

/// L1 distance between two 1D fields, weight dx.
pub fn l1_distance_1d(a: &RealField1D, b: &RealField1D) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(&p, &q)| (p - q).abs())
        .sum::<f64>()
        * a.grid().dx()
}

/// Cumulative integral of uniformly sampled `f` with known derivative `df`.
///
/// Trapezoid with the Euler-Maclaurin derivative correction, locally cubic,
/// global error O(dt^4). Returns S with S[0] = 0.
pub fn cumulative_hermite(dt: f64, f: &[f64], df: &[f64]) -> Vec<f64> {
    assert_eq!(f.len(), df.len());
    let mut s = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    s.push(0.0);
    for k in 1..f.len() {
        acc += 0.5 * dt * (f[k - 1] + f[k]) + dt * dt / 12.0 * (df[k - 1] - df[k]);
        s.push(acc);
    }
    s
}
