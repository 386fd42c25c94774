use rayon::prelude::*;
use serde::Serialize;

use super::fit::log_log_fit;
use crate::error::{Error, Result};
use crate::hamiltonian::PotentialSpec;
use crate::lattice::WaveState;

/// Smallest admissible softening, in units of the largest grid spacing.
pub const MIN_SOFTENING_SPACINGS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub s: f64,
    /// `‖|∇V_s| φ‖`.
    pub a: f64,
    /// `|⟨φ, −∂_jV_s φ⟩|`.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub charge: f64,
    pub center: Vec<f64>,
    pub axis: usize,
    /// `|φ|` at the grid node nearest the center, for a normalized `φ`.
    pub phi_at_center: f64,
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of `log A` against `log s`.
    pub beta: f64,
    pub beta_stderr: f64,
    /// Slopes between consecutive softenings.
    pub local_exponents: Vec<f64>,
    /// `|B(s_{k+1}) − B(s_k)|`.
    pub b_differences: Vec<f64>,
    /// Successive differences of `B` strictly decrease.
    pub b_cauchy: bool,
    /// Extrapolated `s → 0` limit of `B` from the last three points, or the
    /// last value when the differences do not contract geometrically.
    pub b_limit: f64,
    pub a_diverges: bool,
}

/// Operator norm versus force form of a regularized 3D Coulomb gradient as
/// the softening shrinks.
pub fn singularity_scaling(
    phi: &WaveState,
    charge: f64,
    center: &[f64],
    s_list: &[f64],
    axis: usize,
) -> Result<ScalingReport> {
    let lat = phi.lattice().clone();
    if lat.dims() != 3 {
        return Err(Error::InvalidPotential(format!(
            "singularity scaling needs a 3-dimensional lattice, got {}",
            lat.dims()
        )));
    }
    if axis >= 3 || center.len() != 3 {
        return Err(Error::InvalidPotential("axis or center out of range".into()));
    }
    if s_list.len() < 2 {
        return Err(Error::TooFewResolutions(format!(
            "{} softenings, need at least 2",
            s_list.len()
        )));
    }
    if s_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidPotential("softenings must be strictly descending".into()));
    }
    let min = MIN_SOFTENING_SPACINGS * lat.max_spacing();
    if let Some(&s) = s_list.iter().find(|s| **s < min * (1.0 - 1e-12)) {
        return Err(Error::Unresolvable {
            what: "softening",
            value: s,
            min,
        });
    }
    let n2 = phi.norm_sqr();
    if !(n2 > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let density: Vec<f64> = phi.amplitudes().iter().map(|z| z.norm_sqr() / n2).collect();
    let w = lat.weight();

    let points: Vec<ScalingPoint> = s_list
        .par_iter()
        .map(|&s| {
            let spec = PotentialSpec::RegularizedCoulomb3d {
                softening: s,
                charge,
                center: center.to_vec(),
            };
            let fields = lat.position_field(|x| (spec.gradient_magnitude(x), spec.gradient(x, axis)));
            let (mut a, mut b) = (0.0, 0.0);
            for ((g, d), rho) in fields.iter().zip(&density) {
                a += g * g * rho;
                b -= d * rho;
            }
            ScalingPoint {
                s,
                a: (w * a).sqrt(),
                b: (w * b).abs(),
            }
        })
        .collect();

    let s: Vec<f64> = points.iter().map(|p| p.s).collect();
    let a: Vec<f64> = points.iter().map(|p| p.a).collect();
    let fit = log_log_fit(&s, &a)
        .ok_or_else(|| Error::InvalidState("operator norms are zero; nothing to fit".into()))?;
    let local_exponents = points
        .windows(2)
        .map(|w| (w[1].a / w[0].a).ln() / (w[1].s / w[0].s).ln())
        .collect();
    let b_differences: Vec<f64> = points.windows(2).map(|w| (w[1].b - w[0].b).abs()).collect();
    let b_cauchy = b_differences.windows(2).all(|d| d[1] < d[0]);
    let b_limit = extrapolate(&points);

    let nearest: Vec<usize> = (0..3)
        .map(|j| {
            let x = lat.positions(j);
            (0..x.len())
                .min_by(|&p, &q| (x[p] - center[j]).abs().total_cmp(&(x[q] - center[j]).abs()))
                .unwrap_or(0)
        })
        .collect();
    let phi_at_center = phi.amplitudes()[lat.flat_index(&nearest)].norm() / n2.sqrt();

    Ok(ScalingReport {
        charge,
        center: center.to_vec(),
        axis,
        phi_at_center,
        a_diverges: fit.slope < 0.0 && a.windows(2).all(|w| w[1] > w[0]),
        beta: fit.slope,
        beta_stderr: fit.slope_stderr,
        local_exponents,
        b_differences,
        b_cauchy,
        b_limit,
        points,
    })
}

/// Aitken-style limit from the last three `B` values.
fn extrapolate(points: &[ScalingPoint]) -> f64 {
    let n = points.len();
    let last = points[n - 1].b;
    if n < 3 {
        return last;
    }
    let (b0, b1, b2) = (points[n - 3].b, points[n - 2].b, last);
    let (d1, d2) = (b1 - b0, b2 - b1);
    let ratio = d2 / d1;
    if d1 == 0.0 || !(ratio.abs() < 1.0) {
        return last;
    }
    b2 + d2 * ratio / (1.0 - ratio)
}
