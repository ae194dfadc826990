//! Non-local polar representation of a two-particle state: continuous phase
//! unwrapping, the (R, theta_A, theta_B) split with its scaled averaged
//! phase, reconstruction, and the scale-independent position-measurement map.

use crate::defaults;
use crate::error::{Error, Result};
use crate::numerics::grid::{ComplexField2D, RealField1D, RealField2D};
use crate::numerics::quad::integrate_xy;
use crate::operators::AveragingKernel;
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};

/// The (R, theta_A, theta_B) triple with its averaging kernel.
///
/// Invariants: R at or above the amplitude floor, theta_A y-independent by
/// type, kernel average of theta_B at round-off level.
#[derive(Debug, Clone)]
pub struct PolarState {
    pub r: RealField2D,
    pub theta_a: RealField1D,
    pub theta_b: RealField2D,
    pub kernel: AveragingKernel,
}

/// Diagnostics from phase unwrapping.
#[derive(Debug, Clone, Default)]
pub struct UnwrapInfo {
    /// Smallest sample modulus encountered.
    pub min_abs: f64,
    /// Largest winding number around the x axis over high-amplitude rows.
    pub winding_x: i64,
    /// Largest winding number around the y axis over high-amplitude columns.
    pub winding_y: i64,
}

/// Wraps an angle difference into (-pi, pi].
#[inline]
fn wrap_angle(d: f64) -> f64 {
    let w = d - TAU * (d / TAU).round();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Continuous phase branch of a node-free state, with winding diagnostics.
///
/// The branch is anchored at the maximum-modulus node with its principal
/// argument, unwrapped along that node's y-column, then along x for every
/// row; paths never cross the periodic seam. Fails with `NodeDetected` if
/// any |psi| falls below `r_min`. Winding numbers are measured around each
/// periodic loop, skipping rows or columns whose amplitude never reaches the
/// winding floor; y-winding is reported here and rejected by
/// [`unwrap_phase`].
pub fn unwrap_phase_with_info(psi: &ComplexField2D, r_min: f64) -> Result<(RealField2D, UnwrapInfo)> {
    let g = *psi.grid();
    let v = psi.values();

    let mut min_abs = f64::INFINITY;
    let mut min_at = (0usize, 0usize);
    let mut max_abs = -1.0;
    let mut anchor = (0usize, 0usize);
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            let a = v[g.idx(ix, iy)].norm();
            if a < min_abs {
                min_abs = a;
                min_at = (ix, iy);
            }
            if a > max_abs {
                max_abs = a;
                anchor = (ix, iy);
            }
        }
    }
    if min_abs < r_min {
        return Err(Error::NodeDetected {
            min_abs,
            floor: r_min,
            ix: min_at.0,
            iy: min_at.1,
        });
    }

    let arg = |ix: usize, iy: usize| v[g.idx(ix, iy)].arg();
    let (ax, ay) = anchor;
    let mut theta = vec![0.0; g.len()];

    // Anchor column in y, both directions, no wrap at the seam.
    theta[g.idx(ax, ay)] = arg(ax, ay);
    for iy in ay + 1..g.ny {
        theta[g.idx(ax, iy)] =
            theta[g.idx(ax, iy - 1)] + wrap_angle(arg(ax, iy) - arg(ax, iy - 1));
    }
    for iy in (0..ay).rev() {
        theta[g.idx(ax, iy)] =
            theta[g.idx(ax, iy + 1)] + wrap_angle(arg(ax, iy) - arg(ax, iy + 1));
    }

    // Every row in x outward from the anchor column.
    for iy in 0..g.ny {
        for ix in ax + 1..g.nx {
            theta[g.idx(ix, iy)] =
                theta[g.idx(ix - 1, iy)] + wrap_angle(arg(ix, iy) - arg(ix - 1, iy));
        }
        for ix in (0..ax).rev() {
            theta[g.idx(ix, iy)] =
                theta[g.idx(ix + 1, iy)] + wrap_angle(arg(ix, iy) - arg(ix + 1, iy));
        }
    }

    let mut info = UnwrapInfo {
        min_abs,
        winding_x: 0,
        winding_y: 0,
    };
    for iy in 0..g.ny {
        let mut loud = true;
        let mut closure = 0.0;
        for ix in 0..g.nx {
            let nxt = (ix + 1) % g.nx;
            if v[g.idx(ix, iy)].norm() < defaults::WINDING_AMP_FLOOR {
                loud = false;
                break;
            }
            closure += wrap_angle(arg(nxt, iy) - arg(ix, iy));
        }
        if loud {
            let n = (closure / TAU).round() as i64;
            if n.abs() > info.winding_x.abs() {
                info.winding_x = n;
            }
        }
    }
    for ix in 0..g.nx {
        let mut loud = true;
        let mut closure = 0.0;
        for iy in 0..g.ny {
            let nxt = (iy + 1) % g.ny;
            if v[g.idx(ix, iy)].norm() < defaults::WINDING_AMP_FLOOR {
                loud = false;
                break;
            }
            closure += wrap_angle(arg(ix, nxt) - arg(ix, iy));
        }
        if loud {
            let n = (closure / TAU).round() as i64;
            if n.abs() > info.winding_y.abs() {
                info.winding_y = n;
            }
        }
    }

    Ok((RealField2D::from_values_unchecked(g, theta), info))
}

/// Continuous phase branch of a node-free state.
///
/// Fails with `NodeDetected` below the amplitude floor and with
/// `WindingDetected` if the phase winds around the y axis through
/// high-amplitude samples; an x-winding is representable (a linear phase
/// carries it) and is tolerated.
pub fn unwrap_phase(psi: &ComplexField2D, r_min: f64) -> Result<RealField2D> {
    let (theta, info) = unwrap_phase_with_info(psi, r_min)?;
    if info.winding_y != 0 {
        return Err(Error::WindingDetected {
            winding: info.winding_y,
            index: 0,
        });
    }
    Ok(theta)
}

/// Splits psi into the scaled polar triple under the given kernel.
///
/// theta_A collects epsilon times the kernel average of the unwrapped phase;
/// theta_B is the complementary part; R is the modulus. Fails like
/// [`unwrap_phase`] or when epsilon is not positive.
pub fn decompose(
    psi: &ComplexField2D,
    epsilon: f64,
    kernel: &AveragingKernel,
    r_min: f64,
) -> Result<PolarState> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be positive")));
    }
    let theta = unwrap_phase(psi, r_min)?;
    let profile = kernel.average_profile(&theta)?;
    let g = *psi.grid();
    let mut theta_a = Vec::with_capacity(g.nx);
    for ix in 0..g.nx {
        theta_a.push(epsilon * profile.at(ix));
    }
    let mut theta_b = Vec::with_capacity(g.len());
    for ix in 0..g.nx {
        let m = profile.at(ix);
        let row = &theta.values()[ix * g.ny..(ix + 1) * g.ny];
        theta_b.extend(row.iter().map(|&v| v - m));
    }
    Ok(PolarState {
        r: psi.abs(),
        theta_a: RealField1D::from_values_unchecked(g.x_axis(), theta_a),
        theta_b: RealField2D::from_values_unchecked(g, theta_b),
        kernel: kernel.clone(),
    })
}

/// Rebuilds psi = exp(i (theta_A / epsilon + theta_B)) R.
///
/// Fails when epsilon is not positive.
pub fn reconstruct(state: &PolarState, epsilon: f64) -> Result<ComplexField2D> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be positive")));
    }
    let g = *state.r.grid();
    let mut values = Vec::with_capacity(g.len());
    for ix in 0..g.nx {
        let pa = state.theta_a.at(ix) / epsilon;
        for iy in 0..g.ny {
            let phase = pa + state.theta_b.at(ix, iy);
            values.push(Complex64::from_polar(state.r.at(ix, iy), phase));
        }
    }
    Ok(ComplexField2D::from_values_unchecked(g, values))
}

/// Axis-aligned rectangle in (x, y).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

/// Union of axis-aligned rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub rects: Vec<Rect>,
}

impl Region {
    /// A y-interval spanning all x.
    pub fn y_interval(y_lo: f64, y_hi: f64) -> Self {
        Self {
            rects: vec![Rect {
                x_lo: f64::NEG_INFINITY,
                x_hi: f64::INFINITY,
                y_lo,
                y_hi,
            }],
        }
    }

    /// The whole plane.
    pub fn full() -> Self {
        Self::y_interval(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Node membership with inclusive bounds.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.rects.iter().any(|r| {
            x >= r.x_lo - 1e-12 && x <= r.x_hi + 1e-12 && y >= r.y_lo - 1e-12 && y <= r.y_hi + 1e-12
        })
    }
}

/// Outcome bookkeeping for a position measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    /// Probability mass inside the region before clamping.
    pub mass_kept: f64,
    /// Probability mass removed outside the region.
    pub mass_removed: f64,
    /// Amplitude written outside the region.
    pub clamp_floor: f64,
    /// Number of clamped nodes.
    pub nodes_outside: usize,
    /// Rescale factor applied when renormalizing (1 otherwise).
    pub scale: f64,
}

/// Restricts the amplitude to a region, leaving both phases untouched.
///
/// Outside the region R is clamped to `r_min` rather than zeroed so later
/// phase quotients stay defined; the clamp is recorded. With `renormalize`
/// the amplitude is rescaled to unit total probability. Fails if no grid
/// node lies inside the region.
pub fn measure_position(
    state: &PolarState,
    region: &Region,
    renormalize: bool,
    r_min: f64,
) -> Result<(PolarState, MeasurementRecord)> {
    let g = *state.r.grid();
    let mut inside_count = 0usize;
    let mut mass_kept = 0.0;
    let mut mass_removed = 0.0;
    let mut r = state.r.clone();
    for ix in 0..g.nx {
        let x = g.x(ix);
        for iy in 0..g.ny {
            let y = g.y(iy);
            let v = r.at(ix, iy);
            if region.contains(x, y) {
                inside_count += 1;
                mass_kept += v * v;
            } else {
                mass_removed += v * v;
                r.set(ix, iy, r_min);
            }
        }
    }
    if inside_count == 0 {
        return Err(Error::ZeroMeasureRegion);
    }
    let area = g.cell_area();
    mass_kept *= area;
    mass_removed *= area;
    let mut scale = 1.0;
    if renormalize {
        let total = integrate_xy(&r.map(|v| v * v));
        if total > 0.0 {
            scale = 1.0 / total.sqrt();
            for v in r.values_mut() {
                *v *= scale;
            }
            // Keep the floor invariant after rescaling.
            for v in r.values_mut() {
                if *v < r_min {
                    *v = r_min;
                }
            }
        }
    }
    let record = MeasurementRecord {
        mass_kept,
        mass_removed,
        clamp_floor: r_min,
        nodes_outside: g.len() - inside_count,
        scale,
    };
    Ok((
        PolarState {
            r,
            theta_a: state.theta_a.clone(),
            theta_b: state.theta_b.clone(),
            kernel: state.kernel.clone(),
        },
        record,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grid::Grid2D;
    use crate::numerics::quad::total_probability;

    fn grid() -> Grid2D {
        Grid2D::new(48, 48, -4.0, 4.0, -4.0, 4.0).unwrap()
    }

    fn gaussian(g: Grid2D) -> ComplexField2D {
        let mut psi = ComplexField2D::from_fn(g, |x, y| {
            Complex64::new((-(x * x + y * y) / 2.0).exp() + 1e-4, 0.0)
        });
        let n = crate::numerics::quad::norm_l2(&psi);
        for v in psi.values_mut() {
            *v /= n;
        }
        psi
    }

    #[test]
    fn real_positive_state_has_zero_phase() {
        let psi = gaussian(grid());
        let theta = unwrap_phase(&psi, 1e-8).unwrap();
        assert!(theta.max_abs() < 1e-14);
    }

    #[test]
    fn smooth_phase_is_recovered() {
        let g = grid();
        let phase = |_x: f64, y: f64| 0.8 * (0.5 * y).sin();
        let psi = ComplexField2D::from_fn(g, |x, y| {
            Complex64::from_polar((-(x * x + y * y) / 2.0).exp() + 1e-3, phase(x, y))
        });
        let theta = unwrap_phase(&psi, 1e-8).unwrap();
        let expected = RealField2D::from_fn(g, phase);
        assert!(theta.max_abs_diff(&expected).unwrap() < 1e-10);
    }

    #[test]
    fn interior_zero_is_a_node_error() {
        let g = grid();
        let mut psi = gaussian(g);
        let k = g.idx(24, 24);
        psi.values_mut()[k] = Complex64::new(0.0, 0.0);
        let r = unwrap_phase(&psi, 1e-8);
        assert!(matches!(r, Err(Error::NodeDetected { .. })));
    }

    #[test]
    fn reconstruction_matches_input_within_branch_drift() {
        let g = grid();
        let psi = ComplexField2D::from_fn(g, |x, y| {
            Complex64::from_polar(
                (-(x * x + y * y) / 2.0).exp() + 1e-3,
                0.4 * x + 0.3 * (y - 0.2 * x).cos(),
            )
        });
        let theta = unwrap_phase(&psi, 1e-8).unwrap();
        let mut max_err = 0.0f64;
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let rebuilt = Complex64::from_polar(psi.at(ix, iy).norm(), theta.at(ix, iy));
                max_err = max_err.max((rebuilt - psi.at(ix, iy)).norm());
            }
        }
        assert!(max_err < 1e-12);
    }

    #[test]
    fn plane_wave_in_x_goes_entirely_to_theta_a() {
        let g = grid();
        let k = 2.0 * PI / 8.0; // one full turn across the box
        let psi = ComplexField2D::from_fn(g, |x, y| {
            Complex64::from_polar((-(y * y) / 2.0).exp() + 1e-3, k * x)
        });
        let kernel = AveragingKernel::window_mean(g.y_axis(), -2.0, 2.0).unwrap();
        let eps = 0.1;
        let st = decompose(&psi, eps, &kernel, 1e-8).unwrap();
        for ix in 0..g.nx {
            assert!((st.theta_a.at(ix) - eps * k * g.x(ix)).abs() < 1e-10, "ix={ix}");
        }
        assert!(st.theta_b.max_abs() < 1e-10);
    }

    #[test]
    fn odd_y_phase_goes_entirely_to_theta_b() {
        let g = grid();
        let phase = |y: f64| 0.5 * (0.25 * PI * y).sin();
        let psi = ComplexField2D::from_fn(g, |x, y| {
            Complex64::from_polar((-(x * x + y * y) / 2.0).exp() + 1e-3, phase(y))
        });
        let kernel = AveragingKernel::window_mean(g.y_axis(), -2.0, 2.0).unwrap();
        let st = decompose(&psi, 0.2, &kernel, 1e-8).unwrap();
        assert!(st.theta_a.max_abs() < 1e-12);
        let expected = RealField2D::from_fn(g, |_, y| phase(y));
        assert!(st.theta_b.max_abs_diff(&expected).unwrap() < 1e-11);
    }

    #[test]
    fn mixed_phase_splits_by_window_mean() {
        let g = grid();
        let k = 2.0 * PI / 8.0;
        let gph = |y: f64| 0.3 * (0.25 * PI * y).cos();
        let psi = ComplexField2D::from_fn(g, |x, y| {
            Complex64::from_polar((-(x * x + y * y) / 2.0).exp() + 1e-3, k * x + gph(y))
        });
        let kernel = AveragingKernel::window_mean(g.y_axis(), -2.0, 2.0).unwrap();
        let eps = 0.05;
        let st = decompose(&psi, eps, &kernel, 1e-8).unwrap();
        let gfield = RealField2D::from_fn(g, |_, y| gph(y));
        let m = kernel.average_profile(&gfield).unwrap().at(0);
        for ix in 0..g.nx {
            assert!((st.theta_a.at(ix) - eps * (k * g.x(ix) + m)).abs() < 1e-10);
        }
        let expected_b = RealField2D::from_fn(g, |_, y| gph(y) - m);
        assert!(st.theta_b.max_abs_diff(&expected_b).unwrap() < 1e-10);
    }

    #[test]
    fn decompose_reconstruct_round_trip() {
        let g = grid();
        let psi = ComplexField2D::from_fn(g, |x, y| {
            Complex64::from_polar(
                (-(x * x + y * y) / 2.0).exp() + 1e-3,
                0.2 * x - 0.15 * y + 0.3 * (0.5 * x * y).cos().sin(),
            )
        });
        let kernel = AveragingKernel::window_mean(g.y_axis(), -2.0, 2.0).unwrap();
        for eps in [1.0, 0.1, 0.01] {
            let st = decompose(&psi, eps, &kernel, 1e-8).unwrap();
            let back = reconstruct(&st, eps).unwrap();
            assert!(back.max_abs_diff(&psi).unwrap() <= 1e-10, "eps={eps}");
            let ab = kernel.apply_a(&st.theta_b).unwrap();
            assert!(ab.max_abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_phases_reconstruct_to_real_amplitude() {
        let g = grid();
        let psi = gaussian(g);
        let kernel = AveragingKernel::point_eval(g.y_axis(), 0.0).unwrap();
        let st = decompose(&psi, 0.3, &kernel, 1e-8).unwrap();
        let back = reconstruct(&st, 0.3).unwrap();
        for v in back.values() {
            assert!(v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn measurement_halves_symmetric_state_and_keeps_phases() {
        let g = grid();
        let psi = gaussian(g);
        let kernel = AveragingKernel::window_mean(g.y_axis(), -2.0, 2.0).unwrap();
        let st = decompose(&psi, 0.1, &kernel, 1e-8).unwrap();
        let total_before = total_probability(&psi);

        let region = Region::y_interval(g.dy() / 2.0, f64::INFINITY);
        let (after, rec) = measure_position(&st, &region, false, 1e-8).unwrap();
        let mut expect = 0.0;
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                if g.y(iy) >= g.dy() / 2.0 - 1e-12 {
                    expect += st.r.at(ix, iy).powi(2);
                }
            }
        }
        expect *= g.cell_area();
        assert!((rec.mass_kept - expect).abs() < 1e-12);
        assert!((rec.mass_kept + rec.mass_removed - total_before).abs() < 1e-12);
        assert_eq!(after.theta_a.values(), st.theta_a.values());
        assert_eq!(after.theta_b.values(), st.theta_b.values());

        let full = Region::full();
        let (same, rec_full) = measure_position(&st, &full, false, 1e-8).unwrap();
        assert_eq!(rec_full.nodes_outside, 0);
        assert!(same.r.max_abs_diff(&st.r).unwrap() == 0.0);
    }

    #[test]
    fn empty_region_is_rejected() {
        let g = grid();
        let psi = gaussian(g);
        let kernel = AveragingKernel::window_mean(g.y_axis(), -2.0, 2.0).unwrap();
        let st = decompose(&psi, 0.1, &kernel, 1e-8).unwrap();
        let region = Region {
            rects: vec![Rect {
                x_lo: 100.0,
                x_hi: 101.0,
                y_lo: 0.0,
                y_hi: 1.0,
            }],
        };
        assert!(matches!(
            measure_position(&st, &region, false, 1e-8),
            Err(Error::ZeroMeasureRegion)
        ));
    }

    #[test]
    fn x_winding_is_tolerated_and_recorded() {
        let g = grid();
        let k = 2.0 * PI / 8.0;
        let psi = ComplexField2D::from_fn(g, |x, _| Complex64::from_polar(1.0, k * x));
        let (_, info) = unwrap_phase_with_info(&psi, 1e-8).unwrap();
        assert_eq!(info.winding_x, 1);
        assert_eq!(info.winding_y, 0);
        assert!(unwrap_phase(&psi, 1e-8).is_ok());
    }

    #[test]
    fn y_winding_is_rejected() {
        let g = grid();
        let k = 2.0 * PI / 8.0;
        let psi = ComplexField2D::from_fn(g, |_, y| Complex64::from_polar(1.0, k * y));
        let r = unwrap_phase(&psi, 1e-8);
        assert!(matches!(r, Err(Error::WindingDetected { winding: 1, .. })));
    }
}
