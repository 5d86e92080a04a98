//! Reduction of coincidence curves to visibilities, loss and Bell values.
//!
//! Fringes are fitted as `C(θ₁) = A + B·sin²(θ₁ − θ₀)`. Written out this is
//! `a₀ + a₁cos2θ₁ + a₂sin2θ₁` with `a₀ = A + B/2`, `a₁ = −(B/2)cos2θ₀` and
//! `a₂ = −(B/2)sin2θ₀`, so the fit is a weighted linear solve. Weights are
//! Poisson, `1/max(count, 1)`, and all quoted errors are 1σ values propagated
//! from the fit covariance.

use nalgebra::{Matrix3, Vector3};

use crate::engine::CoincidenceCurve;
use crate::{Error, Result};

/// Below this relative amplitude the fringe phase is undefined.
const DEGENERATE_REL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit {
    /// `A`, counts.
    pub offset: f64,
    /// `B ≥ 0`, counts.
    pub amplitude: f64,
    /// `θ₀` in `[0°, 180°)`: the fringe minimum.
    pub phase_deg: f64,
    /// Covariance of `(A, B, θ₀)`; the phase entries are in degrees.
    pub covariance: [[f64; 3]; 3],
    /// Mean of the fitted fringe over θ₁, `A + B/2`, and its 1σ error.
    pub mean: f64,
    pub mean_sigma: f64,
    /// `Σ w·(y − ŷ)²`.
    pub weighted_rss: f64,
    pub num_points: usize,
    /// Set when `B` is indistinguishable from zero and θ₀ means nothing.
    pub degenerate_phase: bool,
}

impl FringeFit {
    pub fn sigma_offset(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn sigma_amplitude(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn sigma_phase_deg(&self) -> f64 {
        self.covariance[2][2].sqrt()
    }

    pub fn value_at(&self, theta1_deg: f64) -> f64 {
        self.offset + self.amplitude * (theta1_deg - self.phase_deg).to_radians().sin().powi(2)
    }
}

pub fn fit_fringe(curve: &CoincidenceCurve) -> Result<FringeFit> {
    let points: Vec<(f64, f64)> = curve
        .points
        .iter()
        .map(|p| (p.theta1_deg, p.coincidences as f64))
        .collect();
    fit_fringe_points(&points)
}

/// Fits `(θ₁ in degrees, count)` samples.
pub fn fit_fringe_points(points: &[(f64, f64)]) -> Result<FringeFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0.rem_euclid(180.0)).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if distinct.len() < 4 {
        return Err(Error::Fit(format!(
            "need at least 4 distinct θ₁ values, got {}",
            distinct.len()
        )));
    }
    if points.iter().all(|p| p.1 == 0.0) {
        return Err(Error::Fit("all counts are zero, there is no fringe".into()));
    }

    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for &(theta, y) in points {
        let (s, c) = (2.0 * theta.to_radians()).sin_cos();
        let x = Vector3::new(1.0, c, s);
        let w = 1.0 / y.max(1.0);
        normal += x * x.transpose() * w;
        rhs += x * (w * y);
    }
    let cov_a = normal
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular normal equations".into()))?;
    let a = cov_a * rhs;
    let (a0, a1, a2) = (a[0], a[1], a[2]);

    let weighted_rss = points
        .iter()
        .map(|&(theta, y)| {
            let (s, c) = (2.0 * theta.to_radians()).sin_cos();
            let r = y - (a0 + a1 * c + a2 * s);
            r * r / y.max(1.0)
        })
        .sum();

    let r = a1.hypot(a2);
    let degenerate_phase = r <= DEGENERATE_REL * a0.abs().max(f64::MIN_POSITIVE);
    let (phase_deg, jac) = if degenerate_phase {
        (
            0.0,
            Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        )
    } else {
        let theta0 = 0.5 * (-a2).atan2(-a1);
        let deg = theta0.to_degrees().rem_euclid(180.0);
        let to_deg = 180.0 / std::f64::consts::PI;
        let r2 = r * r;
        // rows: ∂(A, B, θ₀)/∂(a₀, a₁, a₂)
        let jac = Matrix3::new(
            1.0,
            -a1 / r,
            -a2 / r,
            0.0,
            2.0 * a1 / r,
            2.0 * a2 / r,
            0.0,
            -a2 / (2.0 * r2) * to_deg,
            a1 / (2.0 * r2) * to_deg,
        );
        (if deg >= 180.0 { 0.0 } else { deg }, jac)
    };
    let cov = jac * cov_a * jac.transpose();
    let mut covariance = [[0.0; 3]; 3];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cov[(i, j)];
        }
    }

    Ok(FringeFit {
        offset: a0 - r,
        amplitude: 2.0 * r,
        phase_deg,
        covariance,
        mean: a0,
        mean_sigma: cov_a[(0, 0)].sqrt(),
        weighted_rss,
        num_points: points.len(),
        degenerate_phase,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityResult {
    pub v: f64,
    pub sigma: f64,
}

/// `V = B/(B + 2A)`, i.e. `(max − min)/(max + min)` of the fitted fringe.
pub fn visibility(fit: &FringeFit) -> Result<VisibilityResult> {
    if fit.degenerate_phase {
        return Err(Error::Fit("degenerate fringe has no visibility".into()));
    }
    let (a, b) = (fit.offset, fit.amplitude);
    let den = b + 2.0 * a;
    if den <= 0.0 {
        return Err(Error::Fit(format!("fringe maximum {den} is not positive")));
    }
    let dv_da = -2.0 * b / (den * den);
    let dv_db = 2.0 * a / (den * den);
    let c = &fit.covariance;
    let var = dv_da * dv_da * c[0][0] + dv_db * dv_db * c[1][1] + 2.0 * dv_da * dv_db * c[0][1];
    Ok(VisibilityResult {
        v: b / den,
        sigma: var.max(0.0).sqrt(),
    })
}

/// Average coincidence rate after `cycles` round trips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub cycles: u32,
    pub rate: f64,
    /// 1σ error of `rate`. Zero on every point means an unweighted fit with
    /// the error taken from the scatter.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossFit {
    /// Fractional loss per cycle, `1 − e^{slope}`.
    pub loss: f64,
    pub sigma: f64,
    pub slope: f64,
    pub slope_sigma: f64,
    pub intercept: f64,
}

/// Straight-line fit of `ln(rate)` against `n`.
pub fn fit_loss(points: &[RatePoint]) -> Result<LossFit> {
    let mut ns: Vec<u32> = points.iter().map(|p| p.cycles).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 3 {
        return Err(Error::Fit(format!(
            "loss fit needs at least 3 distinct n, got {}",
            ns.len()
        )));
    }
    if let Some(p) = points
        .iter()
        .find(|p| !(p.rate > 0.0 && p.rate.is_finite()))
    {
        return Err(Error::Fit(format!(
            "rate at n = {} is {}, must be positive",
            p.cycles, p.rate
        )));
    }
    let weighted = points.iter().all(|p| p.sigma > 0.0);
    if !weighted && points.iter().any(|p| p.sigma != 0.0) {
        return Err(Error::Fit("give either all rate errors or none".into()));
    }

    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| {
            let w = if weighted {
                (p.rate / p.sigma).powi(2)
            } else {
                1.0
            };
            (p.cycles as f64, p.rate.ln(), w)
        })
        .collect();
    let sw: f64 = data.iter().map(|d| d.2).sum();
    let xbar = data.iter().map(|d| d.2 * d.0).sum::<f64>() / sw;
    let ybar = data.iter().map(|d| d.2 * d.1).sum::<f64>() / sw;
    let sxx: f64 = data.iter().map(|d| d.2 * (d.0 - xbar).powi(2)).sum();
    let sxy: f64 = data.iter().map(|d| d.2 * (d.0 - xbar) * (d.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let slope_var = if weighted {
        1.0 / sxx
    } else {
        let rss: f64 = data
            .iter()
            .map(|d| (d.1 - intercept - slope * d.0).powi(2))
            .sum();
        rss / (data.len() as f64 - 2.0) / sxx
    };
    let slope_sigma = slope_var.sqrt();
    Ok(LossFit {
        loss: 1.0 - slope.exp(),
        sigma: slope.exp() * slope_sigma,
        slope,
        slope_sigma,
        intercept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellResult {
    pub s: f64,
    pub sigma: f64,
    pub violated: bool,
}

impl BellResult {
    /// Distance of `S` above the classical bound in units of `σ_S`.
    pub fn significance(&self) -> f64 {
        (self.s - 2.0) / self.sigma
    }
}

/// `S = √2·(V_hv + V_diag)` for a singlet-like state with white noise.
pub fn chsh_from_visibilities(v_hv: &VisibilityResult, v_diag: &VisibilityResult) -> BellResult {
    let s = std::f64::consts::SQRT_2 * (v_hv.v + v_diag.v);
    BellResult {
        s,
        sigma: std::f64::consts::SQRT_2 * v_hv.sigma.hypot(v_diag.sigma),
        violated: s > 2.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeShift {
    pub deg: f64,
    pub sigma_deg: f64,
}

/// `(θ₀_after − θ₀_before) mod 180°`.
pub fn fringe_shift(before: &FringeFit, after: &FringeFit) -> Result<FringeShift> {
    if before.degenerate_phase || after.degenerate_phase {
        return Err(Error::Fit("fringe shift of a degenerate fit".into()));
    }
    let mut deg = (after.phase_deg - before.phase_deg).rem_euclid(180.0);
    if deg >= 180.0 {
        deg = 0.0;
    }
    Ok(FringeShift {
        deg,
        sigma_deg: before.sigma_phase_deg().hypot(after.sigma_phase_deg()),
    })
}

/// Correlation coefficient `E = (N₊₊ + N₋₋ − N₊₋ − N₋₊)/ΣN` and its Poisson
/// error, from counts ordered `[++, +−, −+, −−]`.
pub fn correlation(counts: [u64; 4]) -> Result<(f64, f64)> {
    let same = (counts[0] + counts[3]) as f64;
    let diff = (counts[1] + counts[2]) as f64;
    let total = same + diff;
    if total == 0.0 {
        return Err(Error::Fit("correlation from zero counts".into()));
    }
    let e = (same - diff) / total;
    let sigma = (4.0 * same * diff / total.powi(3)).sqrt();
    Ok((e, sigma))
}

/// Direct CHSH estimate `|E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)|` from the
/// four setting pairs, given in the order `(a,b), (a,b′), (a′,b), (a′,b′)`.
pub fn chsh_direct(settings: [[u64; 4]; 4]) -> Result<BellResult> {
    let mut es = [(0.0, 0.0); 4];
    for (slot, counts) in es.iter_mut().zip(settings) {
        *slot = correlation(counts)?;
    }
    let s = (es[0].0 - es[1].0 + es[2].0 + es[3].0).abs();
    let sigma = es.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
    Ok(BellResult {
        s,
        sigma,
        violated: s > 2.0,
    })
}
