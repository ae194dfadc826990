//! Named numerical tolerances and floors with their rationale.
//!
//! Every constant here is a contract value: solvers and diagnostics read these
//! defaults unless a config overrides them.

/// Amplitude floor below which phase and quotient terms are undefined.
///
/// Phase equations divide by R; below this floor the quotient is dominated by
/// round-off (double precision noise ~1e-16 over amplitude 1e-8 is 1e-8 rad).
pub const R_MIN: f64 = 1e-8;

/// Jacobian floor that declares a caustic.
///
/// Monotone interpolation of the inverse map degrades before dF reaches zero,
/// so the validity horizon is called at a small positive threshold.
pub const CAUSTIC_TOL: f64 = 1e-3;

/// Largest tolerable probability mass in the outermost two-node frame.
///
/// The periodic box stands in for the real line only while the state is
/// negligible at the seam.
pub const BOUNDARY_MASS_TOL: f64 = 1e-12;

/// Amplitude mask for comparisons of phase-like fields.
///
/// Where R is below this value the reconstructed wave is below 1e-6 in
/// modulus and its phase carries no observable content.
pub const PHASE_MASK_FLOOR: f64 = 1e-6;

/// Lower edge of the smooth amplitude taper applied to stiff quotients.
pub const TAPER_LO: f64 = 1e-7;

/// Upper edge of the smooth amplitude taper applied to stiff quotients.
///
/// Between `TAPER_LO` and `TAPER_HI` the taper rises smoothly from 0 to 1 in
/// log-amplitude; above `TAPER_HI` the dynamics is exact. The band sits well
/// below `PHASE_MASK_FLOOR` so tapering never touches compared regions.
pub const TAPER_HI: f64 = 1e-5;

/// Maximum absolute field value before an evolution is declared blown up.
pub const BLOWUP_LIMIT: f64 = 1e8;

/// Relative tolerance accepted for "normalized" input states.
pub const NORM_TOL: f64 = 1e-8;

/// Rows or columns whose amplitude never exceeds this floor are skipped by
/// the winding diagnostic; phase winding through vanishing amplitude is noise.
pub const WINDING_AMP_FLOOR: f64 = 1e-6;

/// Smooth taper in log-amplitude: 0 below `lo`, 1 above `hi`.
///
/// Uses the cubic smoothstep in log10(r), so the transition has a continuous
/// first derivative, which RK4 stepping of tapered sources relies on.
pub fn amplitude_taper(r: f64, lo: f64, hi: f64) -> f64 {
    if r <= lo {
        return 0.0;
    }
    if r >= hi {
        return 1.0;
    }
    let s = (r.log10() - lo.log10()) / (hi.log10() - lo.log10());
    s * s * (3.0 - 2.0 * s)
}
