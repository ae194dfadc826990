//! Spatial derivatives: spectral on periodic axes, central finite
//! differences (order 2 or 4) with one-sided closures on non-periodic data.

use super::fft::spectral_derivative_line;
use super::grid::{Axis, ComplexField2D, RealField1D, RealField2D};
use crate::error::{Error, Result};
use num_complex::Complex64;

/// Differentiation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Fourier multiplier; exact for resolved modes, periodic axes only.
    Spectral,
    /// Second-order central differences.
    CentralDiff2,
    /// Fourth-order central differences.
    CentralDiff4,
}

/// Fornberg weights for the m-th derivative at `z` from nodes `xs`.
///
/// Returns `w[k][j]`, the weight of sample j in the k-th derivative,
/// for k = 0..=m. Nodes need not be uniform.
pub fn fornberg_weights(z: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    assert!(n > m, "need more nodes than the derivative order");
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Central stencil in grid-index units for the given derivative and accuracy.
fn central_stencil(deriv: usize, acc: usize) -> (&'static [f64], usize) {
    match (deriv, acc) {
        (1, 2) => (&[-0.5, 0.0, 0.5], 1),
        (2, 2) => (&[1.0, -2.0, 1.0], 1),
        (1, 4) => (&[1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0], 2),
        (2, 4) => (&[-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0], 2),
        _ => unreachable!("validated orders"),
    }
}

/// Finite-difference derivative of one uniformly sampled line.
///
/// With `wrap` the stencil is applied with periodic indexing; otherwise
/// boundary rows use one-sided Fornberg stencils of matching order.
pub(crate) fn fd_line(src: &[f64], dx: f64, deriv: usize, acc: usize, wrap: bool) -> Vec<f64> {
    let n = src.len();
    let (stencil, half) = central_stencil(deriv, acc);
    let scale = dx.powi(-(deriv as i32));
    let mut out = vec![0.0; n];
    if wrap {
        for i in 0..n {
            let mut s = 0.0;
            for (o, w) in stencil.iter().enumerate() {
                let j = (i + n + o - half) % n;
                s += w * src[j];
            }
            out[i] = s * scale;
        }
        return out;
    }
    for i in half..n - half {
        let mut s = 0.0;
        for (o, w) in stencil.iter().enumerate() {
            s += w * src[i + o - half];
        }
        out[i] = s * scale;
    }
    // One-sided closures keep the interior order at the ends.
    let width = match acc {
        2 => deriv + 2,
        _ => 6,
    };
    let width = width.min(n);
    let xs: Vec<f64> = (0..width).map(|j| j as f64).collect();
    for i in 0..half {
        let w = fornberg_weights(i as f64, &xs, deriv);
        out[i] = w[deriv].iter().zip(src).map(|(wj, v)| wj * v).sum::<f64>() * scale;
    }
    let tail = &src[n - width..];
    for i in n - half..n {
        let z = (i - (n - width)) as f64;
        let w = fornberg_weights(z, &xs, deriv);
        out[i] = w[deriv].iter().zip(tail).map(|(wj, v)| wj * v).sum::<f64>() * scale;
    }
    out
}

fn check_order(order: usize) -> Result<()> {
    if order == 1 || order == 2 {
        Ok(())
    } else {
        Err(Error::UnsupportedOrder(order))
    }
}

fn axis_info(grid: &super::grid::Grid2D, axis: Axis) -> (usize, usize, f64, f64, bool) {
    match axis {
        Axis::X => (grid.nx, grid.ny, grid.dx(), grid.x_max - grid.x_min, grid.periodic_x),
        Axis::Y => (grid.ny, grid.nx, grid.dy(), grid.y_max - grid.y_min, grid.periodic_y),
    }
}

/// Partial derivative of a real 2D field along one axis.
///
/// Fails if `order` is not 1 or 2, or if spectral mode is requested along a
/// non-periodic axis.
pub fn partial_derivative(
    field: &RealField2D,
    axis: Axis,
    order: usize,
    mode: DerivativeMode,
) -> Result<RealField2D> {
    check_order(order)?;
    let grid = *field.grid();
    let (n_along, n_across, dx, span, periodic) = axis_info(&grid, axis);
    let mut out = vec![0.0; grid.len()];
    match mode {
        DerivativeMode::Spectral => {
            if !periodic {
                return Err(Error::NonPeriodicSpectral {
                    axis: if axis == Axis::X { 'x' } else { 'y' },
                });
            }
            let mut line = vec![Complex64::new(0.0, 0.0); n_along];
            for t in 0..n_across {
                gather_real(field.values(), &mut line, axis, t, grid.ny);
                spectral_derivative_line(&mut line, span, order);
                scatter_real(&line, &mut out, axis, t, grid.ny);
            }
        }
        DerivativeMode::CentralDiff2 | DerivativeMode::CentralDiff4 => {
            let acc = if mode == DerivativeMode::CentralDiff2 { 2 } else { 4 };
            let mut line = vec![0.0; n_along];
            for t in 0..n_across {
                for i in 0..n_along {
                    line[i] = field.values()[flat(axis, i, t, grid.ny)];
                }
                let d = fd_line(&line, dx, order, acc, periodic);
                for i in 0..n_along {
                    out[flat(axis, i, t, grid.ny)] = d[i];
                }
            }
        }
    }
    Ok(RealField2D::from_values_unchecked(grid, out))
}

/// Partial derivative of a complex 2D field along one axis.
///
/// Fails under the same conditions as [`partial_derivative`].
pub fn partial_derivative_complex(
    field: &ComplexField2D,
    axis: Axis,
    order: usize,
    mode: DerivativeMode,
) -> Result<ComplexField2D> {
    check_order(order)?;
    let grid = *field.grid();
    let (n_along, n_across, dx, span, periodic) = axis_info(&grid, axis);
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    match mode {
        DerivativeMode::Spectral => {
            if !periodic {
                return Err(Error::NonPeriodicSpectral {
                    axis: if axis == Axis::X { 'x' } else { 'y' },
                });
            }
            let mut line = vec![Complex64::new(0.0, 0.0); n_along];
            for t in 0..n_across {
                for i in 0..n_along {
                    line[i] = field.values()[flat(axis, i, t, grid.ny)];
                }
                spectral_derivative_line(&mut line, span, order);
                for i in 0..n_along {
                    out[flat(axis, i, t, grid.ny)] = line[i];
                }
            }
        }
        DerivativeMode::CentralDiff2 | DerivativeMode::CentralDiff4 => {
            let acc = if mode == DerivativeMode::CentralDiff2 { 2 } else { 4 };
            let mut re = vec![0.0; n_along];
            let mut im = vec![0.0; n_along];
            for t in 0..n_across {
                for i in 0..n_along {
                    let v = field.values()[flat(axis, i, t, grid.ny)];
                    re[i] = v.re;
                    im[i] = v.im;
                }
                let dre = fd_line(&re, dx, order, acc, periodic);
                let dim = fd_line(&im, dx, order, acc, periodic);
                for i in 0..n_along {
                    out[flat(axis, i, t, grid.ny)] = Complex64::new(dre[i], dim[i]);
                }
            }
        }
    }
    Ok(ComplexField2D::from_values_unchecked(grid, out))
}

/// Derivative of a 1D field.
///
/// Fails like [`partial_derivative`].
pub fn derivative_1d(field: &RealField1D, order: usize, mode: DerivativeMode) -> Result<RealField1D> {
    check_order(order)?;
    let grid = *field.grid();
    match mode {
        DerivativeMode::Spectral => {
            if !grid.periodic {
                return Err(Error::NonPeriodicSpectral { axis: 'x' });
            }
            let mut line: Vec<Complex64> =
                field.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
            spectral_derivative_line(&mut line, grid.max - grid.min, order);
            Ok(RealField1D::from_values_unchecked(
                grid,
                line.iter().map(|v| v.re).collect(),
            ))
        }
        DerivativeMode::CentralDiff2 | DerivativeMode::CentralDiff4 => {
            let acc = if mode == DerivativeMode::CentralDiff2 { 2 } else { 4 };
            Ok(RealField1D::from_values_unchecked(
                grid,
                fd_line(field.values(), grid.dx(), order, acc, grid.periodic),
            ))
        }
    }
}

/// Derivative of raw line samples with one-sided closures (never wraps).
pub fn derivative_line_nonperiodic(values: &[f64], dx: f64, order: usize, acc: usize) -> Vec<f64> {
    fd_line(values, dx, order, acc, false)
}

/// Axis derivative with fourth-order one-sided closures, ignoring the
/// grid's periodicity flags.
///
/// For fields that decay toward the box edge or grow polynomially there,
/// like phases, where a wrap-around stencil would see an artificial jump
/// at the seam.
pub fn partial_derivative_nonperiodic(field: &RealField2D, axis: Axis, order: usize) -> RealField2D {
    let grid = *field.grid();
    let (n_along, n_across, dx, _, _) = axis_info(&grid, axis);
    let mut out = vec![0.0; grid.len()];
    let mut line = vec![0.0; n_along];
    for t in 0..n_across {
        for i in 0..n_along {
            line[i] = field.values()[flat(axis, i, t, grid.ny)];
        }
        let d = fd_line(&line, dx, order, 4, false);
        for i in 0..n_along {
            out[flat(axis, i, t, grid.ny)] = d[i];
        }
    }
    RealField2D::from_values_unchecked(grid, out)
}

/// Conservative divergence of a flux sampled on one uniform line.
///
/// Half-node fluxes are interpolated at fourth order and differenced, so
/// the node sum telescopes to the two boundary half-fluxes, which the
/// closed box sets to zero: the discrete total of the advected quantity is
/// conserved to round-off on any box. In the interior the scheme is
/// identical to the fourth-order central first derivative; only the two
/// rows at each end differ from it.
pub fn flux_divergence_line(flux: &[f64], dx: f64) -> Vec<f64> {
    let n = flux.len();
    assert!(n >= 4, "flux interpolation needs at least four nodes");
    // half[i] approximates the flux between nodes i - 1 and i; half[0] and
    // half[n] sit on the box faces and carry nothing.
    let mut half = vec![0.0; n + 1];
    half[1] = 0.3125 * flux[0] + 0.9375 * flux[1] - 0.3125 * flux[2] + 0.0625 * flux[3];
    half[n - 1] = 0.3125 * flux[n - 1] + 0.9375 * flux[n - 2] - 0.3125 * flux[n - 3]
        + 0.0625 * flux[n - 4];
    for i in 2..n - 1 {
        half[i] = (-flux[i - 2] + 7.0 * (flux[i - 1] + flux[i]) - flux[i + 1]) / 12.0;
    }
    (0..n).map(|i| (half[i + 1] - half[i]) / dx).collect()
}

/// Conservative axis divergence of a flux field on a closed box.
///
/// Applies [`flux_divergence_line`] along the chosen axis, ignoring the
/// grid's periodicity flags.
pub fn flux_divergence_nonperiodic(field: &RealField2D, axis: Axis) -> RealField2D {
    let grid = *field.grid();
    let (n_along, n_across, dx, _, _) = axis_info(&grid, axis);
    let mut out = vec![0.0; grid.len()];
    let mut line = vec![0.0; n_along];
    for t in 0..n_across {
        for i in 0..n_along {
            line[i] = field.values()[flat(axis, i, t, grid.ny)];
        }
        let d = flux_divergence_line(&line, dx);
        for i in 0..n_along {
            out[flat(axis, i, t, grid.ny)] = d[i];
        }
    }
    RealField2D::from_values_unchecked(grid, out)
}

#[inline]
fn flat(axis: Axis, along: usize, across: usize, ny: usize) -> usize {
    match axis {
        Axis::X => along * ny + across,
        Axis::Y => across * ny + along,
    }
}

fn gather_real(src: &[f64], line: &mut [Complex64], axis: Axis, across: usize, ny: usize) {
    for (i, v) in line.iter_mut().enumerate() {
        *v = Complex64::new(src[flat(axis, i, across, ny)], 0.0);
    }
}

fn scatter_real(line: &[Complex64], dst: &mut [f64], axis: Axis, across: usize, ny: usize) {
    for (i, v) in line.iter().enumerate() {
        dst[flat(axis, i, across, ny)] = v.re;
    }
}

/// Convenience grid used by tests below.
#[cfg(test)]
fn unit_axis(n: usize, periodic: bool) -> super::grid::Grid1D {
    super::grid::Grid1D::new(n, 0.0, 1.0, periodic).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grid::Grid2D;
    use std::f64::consts::PI;

    #[test]
    fn spectral_first_derivative_of_resolved_mode() {
        let g = Grid2D::new(64, 8, 0.0, 1.0, 0.0, 1.0).unwrap();
        let f = RealField2D::from_fn(g, |x, _| (2.0 * PI * x).sin());
        let d = partial_derivative(&f, Axis::X, 1, DerivativeMode::Spectral).unwrap();
        let exact = RealField2D::from_fn(g, |x, _| 2.0 * PI * (2.0 * PI * x).cos());
        assert!(d.max_abs_diff(&exact).unwrap() <= 1e-10);
    }

    #[test]
    fn spectral_second_derivative_of_resolved_mode() {
        let g = Grid2D::new(8, 64, 0.0, 1.0, 0.0, 1.0).unwrap();
        let f = RealField2D::from_fn(g, |_, y| (2.0 * PI * y).sin());
        let d = partial_derivative(&f, Axis::Y, 2, DerivativeMode::Spectral).unwrap();
        let w = 2.0 * PI;
        let exact = RealField2D::from_fn(g, |_, y| -w * w * (2.0 * PI * y).sin());
        assert!(d.max_abs_diff(&exact).unwrap() <= 1e-9);
    }

    #[test]
    fn constant_field_has_zero_derivative_in_all_modes() {
        let g = Grid2D::new(16, 16, -1.0, 1.0, -1.0, 1.0).unwrap();
        let f = RealField2D::from_fn(g, |_, _| 3.25);
        for mode in [DerivativeMode::Spectral, DerivativeMode::CentralDiff2, DerivativeMode::CentralDiff4] {
            for axis in [Axis::X, Axis::Y] {
                for order in [1, 2] {
                    let d = partial_derivative(&f, axis, order, mode).unwrap();
                    assert!(d.max_abs() <= 1e-12, "{mode:?} {axis:?} {order}");
                }
            }
        }
    }

    #[test]
    fn fd4_is_exact_on_cubics_without_wrap() {
        let v: Vec<f64> = (0..32).map(|i| {
            let x = i as f64 * 0.1;
            x * x * x - 2.0 * x * x + 0.5 * x - 1.0
        }).collect();
        let d1 = fd_line(&v, 0.1, 1, 4, false);
        let d2 = fd_line(&v, 0.1, 2, 4, false);
        for i in 0..32 {
            let x = i as f64 * 0.1;
            assert!((d1[i] - (3.0 * x * x - 4.0 * x + 0.5)).abs() < 1e-10, "i={i}");
            assert!((d2[i] - (6.0 * x - 4.0)).abs() < 1e-9, "i={i}");
        }
    }

    #[test]
    fn fd2_boundary_closure_is_second_order() {
        let f = |x: f64| (1.3 * x).exp();
        let err_at = |n: usize| {
            let dx = 1.0 / n as f64;
            let v: Vec<f64> = (0..n).map(|i| f(i as f64 * dx)).collect();
            let d = fd_line(&v, dx, 1, 2, false);
            (0..n).fold(0.0f64, |m, i| m.max((d[i] - 1.3 * f(i as f64 * dx)).abs()))
        };
        let ratio = err_at(64) / err_at(128);
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }

    #[test]
    fn spectral_on_non_periodic_axis_errors() {
        let mut g = Grid2D::new(16, 16, 0.0, 1.0, 0.0, 1.0).unwrap();
        g.periodic_x = false;
        let f = RealField2D::from_fn(g, |x, _| x);
        let r = partial_derivative(&f, Axis::X, 1, DerivativeMode::Spectral);
        assert!(matches!(r, Err(Error::NonPeriodicSpectral { axis: 'x' })));
    }

    #[test]
    fn two_first_derivatives_compose_to_second() {
        let n = 64;
        let g = crate::numerics::Grid1D::new(n, 0.0, 1.0, true).unwrap();
        let f = RealField1D::from_fn(g, |x| (2.0 * PI * x).sin() + 0.3 * (4.0 * PI * x).cos());
        let d1 = derivative_1d(&f, 1, DerivativeMode::Spectral).unwrap();
        let d11 = derivative_1d(&d1, 1, DerivativeMode::Spectral).unwrap();
        let d2 = derivative_1d(&f, 2, DerivativeMode::Spectral).unwrap();
        assert!(d11.max_abs_diff(&d2).unwrap() <= 1e-9);
    }

    #[test]
    fn one_dimensional_modes_agree_on_smooth_data() {
        let g = unit_axis(128, false);
        let f = RealField1D::from_fn(g, |x| (3.0 * x).sin());
        let d4 = derivative_1d(&f, 1, DerivativeMode::CentralDiff4).unwrap();
        let exact = RealField1D::from_fn(g, |x| 3.0 * (3.0 * x).cos());
        assert!(d4.max_abs_diff(&exact).unwrap() < 1e-6);
    }

    #[test]
    fn flux_divergence_telescopes_and_matches_the_central_stencil_inside() {
        let n = 48;
        let dx = 0.13;
        let flux: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 * dx;
                (-0.4 * (x - 2.9) * (x - 2.9)).exp() * (1.0 + 0.2 * (1.7 * x).sin())
            })
            .collect();
        let div = flux_divergence_line(&flux, dx);
        let total: f64 = div.iter().sum::<f64>() * dx;
        assert!(total.abs() < 1e-14, "telescoping defect {total:.3e}");
        let central = fd_line(&flux, dx, 1, 4, false);
        for i in 2..n - 2 {
            assert!((div[i] - central[i]).abs() < 1e-13, "interior row {i}");
        }
    }

    #[test]
    fn flux_divergence_converges_at_fourth_order_inside() {
        let f = |x: f64| (1.1 * x).sin() * (0.7 * x).exp();
        let df = |x: f64| 1.1 * (1.1 * x).cos() * (0.7 * x).exp() + 0.7 * f(x);
        let err_at = |n: usize| {
            let dx = 1.0 / n as f64;
            let v: Vec<f64> = (0..n).map(|i| f(i as f64 * dx)).collect();
            let d = flux_divergence_line(&v, dx);
            (2..n - 2).fold(0.0f64, |m, i| m.max((d[i] - df(i as f64 * dx)).abs()))
        };
        let ratio = err_at(64) / err_at(128);
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn flux_divergence_axes_match_the_line_operator() {
        let g = Grid2D::new(12, 10, -1.0, 1.0, -1.5, 1.5).unwrap();
        let f = RealField2D::from_fn(g, |x, y| (x + 0.3 * y).sin() + 0.1 * x * y);
        let dx_field = flux_divergence_nonperiodic(&f, Axis::X);
        let dy_field = flux_divergence_nonperiodic(&f, Axis::Y);
        for iy in 0..g.ny {
            let col: Vec<f64> = (0..g.nx).map(|ix| f.at(ix, iy)).collect();
            let d = flux_divergence_line(&col, g.dx());
            for ix in 0..g.nx {
                assert!((dx_field.at(ix, iy) - d[ix]).abs() < 1e-14);
            }
        }
        for ix in 0..g.nx {
            let row: Vec<f64> = (0..g.ny).map(|iy| f.at(ix, iy)).collect();
            let d = flux_divergence_line(&row, g.dy());
            for iy in 0..g.ny {
                assert!((dy_field.at(ix, iy) - d[iy]).abs() < 1e-14);
            }
        }
    }
}
