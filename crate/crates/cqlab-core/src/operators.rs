//! Projection algebra on the y coordinate: averaging operators, their
//! complements, scaled exponentials, and the kernel-change transformation.
//!
//! Every kernel resolves at construction to per-node weights w_j with unit
//! sum, so applying it is one weighted sum per x-row and the projector
//! identity holds to round-off.

use crate::error::{Error, Result};
use crate::numerics::grid::{Grid1D, RealField1D, RealField2D};

/// Which averaging rule a kernel implements.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelVariant {
    /// Arithmetic mean over the y-nodes inside [a, b].
    WindowMean { a: f64, b: f64 },
    /// Weighted mean with caller-supplied weight samples, renormalized once.
    General,
    /// Evaluation at the node nearest to `a`.
    PointEval { a: f64, snap_distance: f64 },
}

/// A y-averaging projection bound to a concrete axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragingKernel {
    axis: Grid1D,
    variant: KernelVariant,
    /// Nonzero weights as (node index, weight); weights sum to 1.
    weights: Vec<(usize, f64)>,
}

impl AveragingKernel {
    /// Arithmetic mean over the nodes with y in [a, b].
    ///
    /// Fails if a >= b, [a, b] leaves the axis span, or no node falls inside.
    pub fn window_mean(axis: Grid1D, a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidKernel(format!("window [{a}, {b}] is empty")));
        }
        if a < axis.min - 1e-12 || b > axis.max + 1e-12 {
            return Err(Error::InvalidKernel(format!(
                "window [{a}, {b}] outside the axis [{}, {}]",
                axis.min, axis.max
            )));
        }
        let mut idx = Vec::new();
        for j in 0..axis.n {
            let y = axis.node(j);
            if y >= a - 1e-12 && y <= b + 1e-12 {
                idx.push(j);
            }
        }
        if idx.is_empty() {
            return Err(Error::EmptyWindow { a, b });
        }
        let w = 1.0 / idx.len() as f64;
        Ok(Self {
            axis,
            variant: KernelVariant::WindowMean { a, b },
            weights: idx.into_iter().map(|j| (j, w)).collect(),
        })
    }

    /// Weighted mean with weight samples `alpha` on the axis nodes.
    ///
    /// Weights are renormalized once so the discrete unit-mass constraint is
    /// exact. Fails on length mismatch, non-finite samples, or nonpositive
    /// total mass.
    pub fn general(axis: Grid1D, alpha: &[f64]) -> Result<Self> {
        if alpha.len() != axis.n {
            return Err(Error::InvalidKernel(format!(
                "weight sample count {} does not match axis nodes {}",
                alpha.len(),
                axis.n
            )));
        }
        if !alpha.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidKernel("non-finite weight sample".into()));
        }
        let total: f64 = alpha.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidKernel(format!("weight mass {total} must be positive")));
        }
        let weights = alpha
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, &v)| (j, v / total))
            .collect();
        Ok(Self {
            axis,
            variant: KernelVariant::General,
            weights,
        })
    }

    /// Evaluation at the axis node nearest to `a`; the snap distance is kept.
    ///
    /// Fails if `a` lies outside the axis span.
    pub fn point_eval(axis: Grid1D, a: f64) -> Result<Self> {
        if a < axis.min - 1e-12 || a > axis.max + 1e-12 {
            return Err(Error::InvalidKernel(format!(
                "evaluation point {a} outside the axis [{}, {}]",
                axis.min, axis.max
            )));
        }
        let (index, snap_distance) = axis.nearest_node(a);
        Ok(Self {
            axis,
            variant: KernelVariant::PointEval { a, snap_distance },
            weights: vec![(index, 1.0)],
        })
    }

    pub fn axis(&self) -> &Grid1D {
        &self.axis
    }

    pub fn variant(&self) -> &KernelVariant {
        &self.variant
    }

    fn check_field(&self, field: &RealField2D, context: &'static str) -> Result<()> {
        if field.grid().y_axis() != self.axis {
            return Err(Error::GridMismatch { context });
        }
        Ok(())
    }

    /// Per-x averaged value, the y-independent content of the projection.
    pub fn average_profile(&self, field: &RealField2D) -> Result<RealField1D> {
        self.check_field(field, "AveragingKernel::average_profile")?;
        let g = field.grid();
        let mut out = Vec::with_capacity(g.nx);
        for ix in 0..g.nx {
            let row = &field.values()[ix * g.ny..(ix + 1) * g.ny];
            out.push(self.weights.iter().map(|&(j, w)| w * row[j]).sum());
        }
        Ok(RealField1D::from_values_unchecked(g.x_axis(), out))
    }

    /// Projection onto y-independent fields: constant along y per x-row.
    pub fn apply_a(&self, field: &RealField2D) -> Result<RealField2D> {
        let profile = self.average_profile(field)?;
        profile.broadcast_x(*field.grid())
    }

    /// Complementary projection, field minus its average.
    pub fn apply_b(&self, field: &RealField2D) -> Result<RealField2D> {
        let g = field.grid();
        let profile = self.average_profile(field)?;
        let mut values = Vec::with_capacity(g.len());
        for ix in 0..g.nx {
            let m = profile.at(ix);
            let row = &field.values()[ix * g.ny..(ix + 1) * g.ny];
            values.extend(row.iter().map(|&v| v - m));
        }
        Ok(RealField2D::from_values_unchecked(*g, values))
    }

    /// Scaled exponential exp(tau A) = e^tau A + B = 1 + (e^tau - 1) A.
    pub fn exp_scaled_a(&self, tau: f64, field: &RealField2D) -> Result<RealField2D> {
        if !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite tau {tau}")));
        }
        let g = field.grid();
        let profile = self.average_profile(field)?;
        let c = tau.exp() - 1.0;
        let mut values = Vec::with_capacity(g.len());
        for ix in 0..g.nx {
            let add = c * profile.at(ix);
            let row = &field.values()[ix * g.ny..(ix + 1) * g.ny];
            values.extend(row.iter().map(|&v| v + add));
        }
        Ok(RealField2D::from_values_unchecked(*g, values))
    }
}

/// Kernel-change map T = 1 + A_from - A_to.
///
/// Fails if the kernels live on different axes or the field mismatches.
pub fn transform_t(
    from: &AveragingKernel,
    to: &AveragingKernel,
    field: &RealField2D,
) -> Result<RealField2D> {
    if from.axis != to.axis {
        return Err(Error::GridMismatch { context: "transform_t kernels" });
    }
    let g = field.grid();
    let pf = from.average_profile(field)?;
    let pt = to.average_profile(field)?;
    let mut values = Vec::with_capacity(g.len());
    for ix in 0..g.nx {
        let add = pf.at(ix) - pt.at(ix);
        let row = &field.values()[ix * g.ny..(ix + 1) * g.ny];
        values.extend(row.iter().map(|&v| v + add));
    }
    Ok(RealField2D::from_values_unchecked(*g, values))
}

/// Inverse of [`transform_t`]: 1 + A_to - A_from.
pub fn inverse_transform_t(
    from: &AveragingKernel,
    to: &AveragingKernel,
    field: &RealField2D,
) -> Result<RealField2D> {
    transform_t(to, from, field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grid::Grid2D;

    fn grid() -> Grid2D {
        Grid2D::new(16, 64, -1.0, 1.0, -2.0, 2.0).unwrap()
    }

    fn window(g: &Grid2D) -> AveragingKernel {
        AveragingKernel::window_mean(g.y_axis(), -1.0, 1.0).unwrap()
    }

    #[test]
    fn constant_field_is_fixed_by_a() {
        let g = grid();
        let f = RealField2D::from_fn(g, |_, _| 4.2);
        let a = window(&g).apply_a(&f).unwrap();
        assert!(a.max_abs_diff(&f).unwrap() < 1e-13);
    }

    #[test]
    fn odd_profile_averages_to_zero_on_symmetric_window() {
        let g = grid();
        // Window [-1, 1] holds a node set symmetric about 0, so odd profiles
        // average to zero and affine profiles keep only their constant part.
        let odd = RealField2D::from_fn(g, |_, y| 2.0 * y);
        let a = window(&g).apply_a(&odd).unwrap();
        assert!(a.max_abs() < 1e-13);

        let affine = RealField2D::from_fn(g, |_, y| 2.0 * y - 1.0);
        let b = window(&g).apply_a(&affine).unwrap();
        let expected = RealField2D::from_fn(g, |_, _| -1.0);
        assert!(b.max_abs_diff(&expected).unwrap() < 1e-13);
    }

    #[test]
    fn product_field_averages_factor_wise() {
        let g = grid();
        let k = window(&g);
        let f = RealField2D::from_fn(g, |x, y| (1.3 * x).sin() * (0.7 * y).cos());
        let gm = {
            let gy = RealField2D::from_fn(g, |_, y| (0.7 * y).cos());
            k.average_profile(&gy).unwrap().at(0)
        };
        let a = k.apply_a(&f).unwrap();
        let expected = RealField2D::from_fn(g, |x, _| (1.3 * x).sin() * gm);
        assert!(a.max_abs_diff(&expected).unwrap() < 1e-13);
    }

    #[test]
    fn b_annihilates_y_independent_fields() {
        let g = grid();
        let f = RealField2D::from_fn(g, |x, _| x * x - 0.5);
        let b = window(&g).apply_b(&f).unwrap();
        assert!(b.max_abs() < 1e-14);
    }

    #[test]
    fn b_is_idempotent() {
        let g = grid();
        let k = window(&g);
        let f = RealField2D::from_fn(g, |x, y| (x + 0.2 * y).sin() + y * y);
        let b1 = k.apply_b(&f).unwrap();
        let b2 = k.apply_b(&b1).unwrap();
        assert!(b2.max_abs_diff(&b1).unwrap() < 1e-13);
    }

    #[test]
    fn exp_scaled_a_special_cases() {
        let g = grid();
        let k = window(&g);
        let f = RealField2D::from_fn(g, |x, y| x.cos() + 0.3 * y);
        let id = k.exp_scaled_a(0.0, &f).unwrap();
        assert!(id.max_abs_diff(&f).unwrap() < 1e-15);

        let c = RealField2D::from_fn(g, |_, _| 2.0);
        let e = k.exp_scaled_a(1.0, &c).unwrap();
        let expected = RealField2D::from_fn(g, |_, _| 2.0 * 1f64.exp());
        assert!(e.max_abs_diff(&expected).unwrap() < 1e-14);

        let mean_free = k.apply_b(&f).unwrap();
        let same = k.exp_scaled_a(-2.5, &mean_free).unwrap();
        assert!(same.max_abs_diff(&mean_free).unwrap() < 1e-13);
    }

    #[test]
    fn exp_scaled_a_composes_additively() {
        let g = grid();
        let k = window(&g);
        let f = RealField2D::from_fn(g, |x, y| (x * y).sin() + 0.1 * y * y);
        let a = k.exp_scaled_a(0.7, &k.exp_scaled_a(-0.3, &f).unwrap()).unwrap();
        let b = k.exp_scaled_a(0.4, &f).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() <= 1e-12);
    }

    #[test]
    fn transform_t_identity_cases() {
        let g = grid();
        let k1 = window(&g);
        let k2 = AveragingKernel::point_eval(g.y_axis(), 0.0).unwrap();
        let f = RealField2D::from_fn(g, |x, y| x + y * y);
        let same_kernel = transform_t(&k1, &k1, &f).unwrap();
        assert!(same_kernel.max_abs_diff(&f).unwrap() < 1e-15);

        let y_indep = RealField2D::from_fn(g, |x, _| x * x);
        let t = transform_t(&k1, &k2, &y_indep).unwrap();
        assert!(t.max_abs_diff(&y_indep).unwrap() < 1e-14);
    }

    #[test]
    fn transform_t_window_to_point_on_pure_y_profile() {
        let g = grid();
        let k1 = window(&g);
        let k2 = AveragingKernel::point_eval(g.y_axis(), 0.0).unwrap();
        let f = RealField2D::from_fn(g, |_, y| y * y + 0.5 * y);
        let mean = k1.average_profile(&f).unwrap().at(0);
        let at0 = 0.0;
        let t = transform_t(&k1, &k2, &f).unwrap();
        let expected = RealField2D::from_fn(g, |_, y| y * y + 0.5 * y + mean - at0);
        assert!(t.max_abs_diff(&expected).unwrap() < 1e-13);
    }

    #[test]
    fn inverse_transform_t_round_trips() {
        let g = grid();
        let k1 = window(&g);
        let k2 = AveragingKernel::general(
            g.y_axis(),
            &(0..64).map(|j| (-((j as f64 - 32.0) / 10.0).powi(2)).exp()).collect::<Vec<_>>(),
        )
        .unwrap();
        let f = RealField2D::from_fn(g, |x, y| (x - y).cos() + x * y * y);
        let t = transform_t(&k1, &k2, &f).unwrap();
        let back = inverse_transform_t(&k1, &k2, &t).unwrap();
        assert!(back.max_abs_diff(&f).unwrap() <= 1e-13);

        let swapped = inverse_transform_t(&k2, &k1, &f).unwrap();
        let forward = transform_t(&k1, &k2, &f).unwrap();
        assert!(swapped.max_abs_diff(&forward).unwrap() < 1e-15);
    }

    #[test]
    fn empty_window_is_rejected() {
        let g = grid();
        let r = AveragingKernel::window_mean(g.y_axis(), 0.01, 0.02);
        assert!(matches!(r, Err(Error::EmptyWindow { .. })));
    }

    #[test]
    fn window_outside_domain_is_rejected() {
        let g = grid();
        assert!(AveragingKernel::window_mean(g.y_axis(), -3.0, 0.0).is_err());
        assert!(AveragingKernel::window_mean(g.y_axis(), 0.0, 2.5).is_err());
    }

    #[test]
    fn point_eval_snaps_and_records_distance() {
        let g = grid();
        let k = AveragingKernel::point_eval(g.y_axis(), 0.4 * g.dy() + g.y(5)).unwrap();
        match k.variant() {
            KernelVariant::PointEval { snap_distance, .. } => {
                assert!((snap_distance - 0.4 * g.dy()).abs() < 1e-12);
            }
            _ => panic!("wrong variant"),
        }
        let f = RealField2D::from_fn(g, |x, y| x + y);
        let a = k.apply_a(&f).unwrap();
        let expected = RealField2D::from_fn(g, |x, _| x + g.y(5));
        assert!(a.max_abs_diff(&expected).unwrap() < 1e-14);
    }

    #[test]
    fn general_weights_are_renormalized_exactly() {
        let g = grid();
        let alpha: Vec<f64> = (0..64).map(|j| 1.0 + (j as f64 * 0.21).sin().abs()).collect();
        let k = AveragingKernel::general(g.y_axis(), &alpha).unwrap();
        let ones = RealField2D::from_fn(g, |_, _| 1.0);
        let a = k.apply_a(&ones).unwrap();
        assert!(a.max_abs_diff(&ones).unwrap() < 1e-13);
    }
}
