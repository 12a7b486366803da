//! Independent checks: brute-force maximization, log-log slope fitting,
//! regret-bound factors and the randomized hard semi-bandit instance.
//!
//! Nothing here calls into the KKT enumeration, so these routines can be used
//! to cross-check [`crate::solver`].

use log::warn;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::full_bandit::DesignSet;
use crate::linalg;
use crate::model::{mean_cov_value, Domain, Instance, WeightVector};
use crate::solver::{self, MaximizeOptions};

/// Upper limit on the number of lattice points [`grid_maximize`] will visit.
pub const MAX_GRID_POINTS: u128 = 100_000_000;

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Exhaustive maximum of `value_fn` over the simplex lattice with spacing
/// `step`, optionally restricted to points whose entries are 0 or at least `c`.
pub fn grid_maximize<F>(value_fn: F, d: usize, step: f64, c: Option<f64>) -> Result<(WeightVector, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let n = (1.0 / step).round();
    if !(step > 0.0) || (n * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("1/step must be an integer, got step {step}")));
    }
    let n = n as usize;
    let points = binomial((n + d - 1) as u128, (d - 1) as u128);
    if points > MAX_GRID_POINTS {
        return Err(Error::GridTooLarge {
            points,
            limit: MAX_GRID_POINTS,
        });
    }
    // smallest admissible positive count of steps
    let min_units = match c {
        Some(c) => ((c - 1e-12) / step).ceil().max(1.0) as usize,
        None => 1,
    };
    let mut counts = vec![0usize; d];
    let mut w = vec![0.0; d];
    let mut best: Option<(Vec<f64>, f64)> = None;
    visit(0, n, min_units, &mut counts, &mut |counts| {
        for (wi, &k) in w.iter_mut().zip(counts) {
            *wi = k as f64 / n as f64;
        }
        let v = value_fn(&w);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((w.clone(), v));
        }
    });
    let (w, v) = best.ok_or_else(|| Error::InvalidArgument("no admissible lattice point".into()))?;
    Ok((WeightVector::new(w)?, v))
}

fn visit(
    idx: usize,
    remaining: usize,
    min_units: usize,
    counts: &mut [usize],
    f: &mut impl FnMut(&[usize]),
) {
    let d = counts.len();
    if idx == d - 1 {
        if remaining == 0 || remaining >= min_units {
            counts[idx] = remaining;
            f(counts);
        }
        return;
    }
    for k in 0..=remaining {
        if k != 0 && k < min_units {
            continue;
        }
        counts[idx] = k;
        visit(idx + 1, remaining - k, min_units, counts, f);
    }
}

/// Least-squares fit of `ln R(t) = intercept + slope · ln t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub t_range: (usize, usize),
}

/// Fits the log-log slope of a mean regret curve on `t ∈ [t_lo, t_hi]`.
///
/// `trace_mean[t - 1]` is the regret after `t` steps. Nonpositive values are
/// skipped with a warning.
pub fn fit_regret_slope(trace_mean: &[f64], t_lo: usize, t_hi: usize) -> Result<SlopeEstimate> {
    if t_lo < 1 || t_hi > trace_mean.len() || t_lo >= t_hi {
        return Err(Error::InvalidArgument(format!(
            "bad range [{t_lo}, {t_hi}] for a trace of length {}",
            trace_mean.len()
        )));
    }
    let points: Vec<(f64, f64)> = (t_lo..=t_hi).map(|t| (t as f64, trace_mean[t - 1])).collect();
    let mut est = fit_loglog(&points)?;
    est.t_range = (t_lo, t_hi);
    Ok(est)
}

/// Log-log least squares on arbitrary `(t, regret)` points.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<SlopeEstimate> {
    let mut skipped = 0usize;
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(t, r) in points {
        if r > 0.0 && t > 0.0 {
            xs.push(t.ln());
            ys.push(r.ln());
        } else {
            skipped += 1;
        }
    }
    if skipped > 0 {
        warn!("slope fit: skipped {skipped} nonpositive regret values");
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two positive points to fit".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all points share one t".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    let lo = points.first().map(|p| p.0 as usize).unwrap_or(0);
    let hi = points.last().map(|p| p.0 as usize).unwrap_or(0);
    Ok(SlopeEstimate {
        slope,
        intercept,
        r_squared,
        t_range: (lo, hi),
    })
}

/// Problem-dependent quantities appearing in the regret bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundFactors {
    /// `max_i Σ*_ii`
    pub sigma_max: f64,
    /// `w*ᵀ Σ* w*`
    pub optimal_risk: f64,
    /// `θ*_max − θ*_min`
    pub theta_range: f64,
    /// `Σ_ij max(Σ*_ij, 0)`
    pub sigma_plus: f64,
    pub lambda: f64,
    /// `(λ + 1)(ln(1 + 1/λ) + 1)`
    pub l_lambda: f64,
    /// `f(w*) − min_{w ∈ Δ_d} f(w)`
    pub delta_max: f64,
    /// `max_i Σ_j |C⁺_ij|`, when a design set is given.
    pub c_pinv_norm: Option<f64>,
    /// `max_w √(wᵀB⁺Σ*_πB⁺ᵀw) + ρ‖C⁺‖`, when a design set is given.
    pub z_factor: Option<f64>,
}

pub fn l_lambda(lambda: f64) -> f64 {
    (lambda + 1.0) * ((1.0 + 1.0 / lambda).ln() + 1.0)
}

pub fn sigma_plus_norm(sigma: &DMatrix<f64>) -> f64 {
    sigma.iter().map(|&x| x.max(0.0)).sum()
}

pub fn bound_factors(instance: &Instance, lambda: f64, design: Option<&DesignSet>) -> Result<BoundFactors> {
    let d = instance.d();
    let sigma = instance.sigma();
    let theta = instance.theta().as_slice();
    let rho = instance.rho();
    let (w_opt, f_opt) = solver::solve_mean_cov_qp(theta, sigma, rho)?;
    // f is concave, so its minimum over the simplex sits at a vertex
    let f_min = (0..d)
        .map(|i| mean_cov_value(theta, sigma, rho, WeightVector::vertex(d, i).as_slice()))
        .fold(f64::INFINITY, f64::min);
    let theta_max = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let theta_min = theta.iter().copied().fold(f64::INFINITY, f64::min);

    let (c_pinv_norm, z_factor) = match design {
        None => (None, None),
        Some(design) => {
            if design.d() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: design.d(),
                });
            }
            let c_norm = design.c_pinv_norm();
            let sigma_pi = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                design.d_tilde(),
                design
                    .actions()
                    .iter()
                    .map(|v| linalg::quad_form(sigma, v.as_slice())),
            ));
            let m = design.b_pinv() * sigma_pi * design.b_pinv().transpose();
            let value = |w: &[f64]| linalg::quad_form(&m, w).max(0.0).sqrt();
            let grad = |w: &[f64], g: &mut [f64]| {
                let q = linalg::quad_form(&m, w).max(0.0).sqrt();
                for i in 0..w.len() {
                    let mut s = 0.0;
                    for j in 0..w.len() {
                        s += m[(i, j)] * w[j];
                    }
                    g[i] = if q > 0.0 { s / q } else { 0.0 };
                }
            };
            let (_, best) =
                solver::maximize_generic(d, value, grad, Domain::Full, &MaximizeOptions::default())?;
            (Some(c_norm), Some(best + rho * c_norm))
        }
    };

    Ok(BoundFactors {
        sigma_max: (0..d).map(|i| sigma[(i, i)]).fold(f64::NEG_INFINITY, f64::max),
        optimal_risk: linalg::quad_form(sigma, w_opt.as_slice()),
        theta_range: theta_max - theta_min,
        sigma_plus: sigma_plus_norm(sigma),
        lambda,
        l_lambda: l_lambda(lambda),
        delta_max: f_opt - f_min,
        c_pinv_norm,
        z_factor,
    })
}

/// Randomized two-level instance used to show the semi-bandit lower bound.
#[derive(Debug, Clone)]
pub struct HardInstance {
    pub instance: Instance,
    /// Arm carrying the `+ε` bump, or `None` for the uniform instance (`ε = 0`).
    pub boosted_arm: Option<usize>,
}

/// Risk weight under which the linear term dominates: `ε / (2(1 − c))`.
pub fn hard_sb_rho(epsilon: f64, c: f64) -> f64 {
    epsilon / (2.0 * (1.0 - c))
}

/// Gap schedule `ε = a₀·√(d / (T·m))` with `m = ⌊1/c⌋`.
pub fn hard_sb_epsilon(a0: f64, d: usize, horizon: usize, c: f64) -> f64 {
    let m = (1.0 / c).floor();
    a0 * (d as f64 / (horizon as f64 * m)).sqrt()
}

/// Draws `J` uniformly from the arms and returns the instance with mean
/// `1/2 + ε` on arm `J`, `1/2` elsewhere, and identity covariance.
///
/// `rho` defaults to [`hard_sb_rho`]; for `ε = 0` there is no arm to favor and
/// a `rho` must be supplied.
pub fn generate_hard_sb_instance(
    d: usize,
    c: f64,
    epsilon: f64,
    seed: u64,
    rho: Option<f64>,
) -> Result<HardInstance> {
    if d < 4 {
        return Err(Error::InvalidArgument(format!("need d >= 4, got {d}")));
    }
    if !(c >= 2.0 / d as f64 - 1e-12 && c <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "need 2/d <= c <= 1/2, got c = {c} with d = {d}"
        )));
    }
    if !(0.0..=0.5).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("need 0 <= eps <= 1/2, got {epsilon}")));
    }
    let rho = match rho {
        Some(r) => r,
        None if epsilon > 0.0 => hard_sb_rho(epsilon, c),
        None => {
            return Err(Error::InvalidArgument(
                "eps = 0 gives the uniform instance; pass rho explicitly".into(),
            ))
        }
    };
    let mut theta = vec![0.5; d];
    let boosted_arm = if epsilon > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = rng.random_range(0..d);
        theta[j] += epsilon;
        Some(j)
    } else {
        None
    };
    let instance = Instance::new(theta, DMatrix::identity(d, d), rho, Some(c))?;
    Ok(HardInstance {
        instance,
        boosted_arm,
    })
}
