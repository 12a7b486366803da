//! Maximizers of mean-covariance objectives over the probability simplex.
//!
//! The concave case `max_{w ∈ Δ_d} wᵀθ − ρ·wᵀΣw` with positive-definite `Σ` is
//! solved exactly from its KKT conditions: for a candidate support `S` the
//! stationarity equations restricted to `S` are linear, so
//!
//! ```text
//! w_S = a + (1 − 1ᵀa) / (1ᵀb) · b,   a = Σ_S⁻¹θ_S / 2ρ,   b = Σ_S⁻¹1
//! v   = 2ρ (1 − 1ᵀa) / (1ᵀb),       u = 2ρΣw − θ − v·1
//! ```
//!
//! and `S` is accepted when `w_S ≻ 0` and `u ⪰ 0` off the support. Exactly one
//! support passes for positive-definite `Σ`. Supports are tried by increasing
//! size, lexicographically within a size.
//!
//! Non-concave objectives (indefinite covariance estimates, optimistic indices
//! with a norm bonus) go through [`maximize_generic`], a multi-start projected
//! gradient ascent.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{mean_cov_value, Domain, WeightVector};

/// Largest dimension for exhaustive support enumeration.
pub const MAX_EXACT_DIM: usize = 20;
/// Eigenvalue floor used when clipping a covariance estimate to PSD.
pub const PSD_FLOOR: f64 = 1e-9;
/// Dual feasibility tolerance `u ⪰ −DUAL_TOL`.
pub const DUAL_TOL: f64 = 1e-9;

/// KKT certificate for a simplex-constrained mean-covariance maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub support: Vec<usize>,
    pub w: WeightVector,
    /// Multiplier of the equality constraint `1ᵀw = 1`.
    pub dual_v: f64,
    /// Multipliers of `w ⪰ 0`; zero on the support.
    pub dual_u: Vec<f64>,
}

impl KktSolution {
    /// `max_i |2ρΣw − θ − u − v·1|_i`.
    pub fn stationarity_residual(&self, theta: &[f64], sigma: &DMatrix<f64>, rho: f64) -> f64 {
        let w = DVector::from_column_slice(self.w.as_slice());
        let sw = sigma * w;
        (0..theta.len())
            .map(|i| (2.0 * rho * sw[i] - theta[i] - self.dual_u[i] - self.dual_v).abs())
            .fold(0.0, f64::max)
    }

    pub fn complementary_slackness(&self) -> f64 {
        self.w
            .as_slice()
            .iter()
            .zip(&self.dual_u)
            .map(|(w, u)| (w * u).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_dual_u(&self) -> f64 {
        self.dual_u.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Non-empty subsets of `0..d`, by increasing size then lexicographically.
#[derive(Debug, Clone)]
pub struct Supports {
    d: usize,
    current: Vec<usize>,
}

impl Supports {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            current: Vec::new(),
        }
    }
}

impl Iterator for Supports {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let d = self.d;
        if d == 0 {
            return None;
        }
        if self.current.is_empty() {
            self.current = vec![0];
            return Some(self.current.clone());
        }
        let k = self.current.len();
        // advance to the next k-combination
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.current[i] < d - k + i {
                self.current[i] += 1;
                for j in (i + 1)..k {
                    self.current[j] = self.current[j - 1] + 1;
                }
                return Some(self.current.clone());
            }
        }
        if k == d {
            return None;
        }
        self.current = (0..=k).collect();
        Some(self.current.clone())
    }
}

/// Solves the KKT system on `support` without checking feasibility.
///
/// Returns `None` when `Σ_S` is not positive definite.
pub fn kkt_candidate(
    theta: &[f64],
    sigma: &DMatrix<f64>,
    rho: f64,
    support: &[usize],
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let d = theta.len();
    let k = support.len();
    let mut w = vec![0.0; d];
    let v;
    if k == 1 {
        // w = e_i; v from stationarity at i.
        let i = support[0];
        w[i] = 1.0;
        v = 2.0 * rho * sigma[(i, i)] - theta[i];
    } else {
        let sub = DMatrix::from_fn(k, k, |a, b| sigma[(support[a], support[b])]);
        let chol = sub.cholesky()?;
        let theta_s = DVector::from_fn(k, |a, _| theta[support[a]] / (2.0 * rho));
        let a = chol.solve(&theta_s);
        let b = chol.solve(&DVector::from_element(k, 1.0));
        let sum_b = b.sum();
        if !(sum_b.abs() > 0.0) {
            return None;
        }
        let scale = (1.0 - a.sum()) / sum_b;
        for (idx, &i) in support.iter().enumerate() {
            w[i] = a[idx] + scale * b[idx];
        }
        v = 2.0 * rho * scale;
    }
    let mut u = vec![0.0; d];
    let mut in_support = vec![false; d];
    for &i in support {
        in_support[i] = true;
    }
    for i in 0..d {
        if in_support[i] {
            continue;
        }
        let mut sw = 0.0;
        for &j in support {
            sw += sigma[(i, j)] * w[j];
        }
        u[i] = 2.0 * rho * sw - theta[i] - v;
    }
    Some((w, v, u))
}

fn feasible_candidate(
    theta: &[f64],
    sigma: &DMatrix<f64>,
    rho: f64,
    support: &[usize],
) -> Option<KktSolution> {
    let (w, v, u) = kkt_candidate(theta, sigma, rho, support)?;
    if support.iter().any(|&i| !(w[i] > 0.0)) {
        return None;
    }
    if u.iter().any(|&x| x < -DUAL_TOL) {
        return None;
    }
    let w = WeightVector::new(w).ok()?;
    Some(KktSolution {
        support: support.to_vec(),
        w,
        dual_v: v,
        dual_u: u,
    })
}

/// Every support passing the KKT feasibility test, in enumeration order.
pub fn feasible_supports(theta: &[f64], sigma: &DMatrix<f64>, rho: f64) -> Result<Vec<KktSolution>> {
    check_exact_dim(theta.len())?;
    Ok(Supports::new(theta.len())
        .filter_map(|s| feasible_candidate(theta, sigma, rho, &s))
        .collect())
}

/// First feasible KKT support, trying `hint` before the enumeration order.
pub fn kkt_solve(
    theta: &[f64],
    sigma: &DMatrix<f64>,
    rho: f64,
    hint: Option<&[usize]>,
) -> Result<Option<KktSolution>> {
    check_exact_dim(theta.len())?;
    if let Some(h) = hint {
        if let Some(sol) = feasible_candidate(theta, sigma, rho, h) {
            return Ok(Some(sol));
        }
    }
    Ok(Supports::new(theta.len()).find_map(|s| feasible_candidate(theta, sigma, rho, &s)))
}

fn check_exact_dim(d: usize) -> Result<()> {
    if d > MAX_EXACT_DIM {
        return Err(Error::TooManySupports {
            d,
            max: MAX_EXACT_DIM,
        });
    }
    if d == 0 {
        return Err(Error::InvalidArgument("empty parameter vector".into()));
    }
    Ok(())
}

fn check_qp_args(theta: &[f64], sigma: &DMatrix<f64>, rho: f64) -> Result<()> {
    let d = theta.len();
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: sigma.nrows(),
        });
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be > 0, got {rho}")));
    }
    Ok(())
}

/// Warm-startable solver for `max_{w ∈ Δ_d} wᵀθ − ρ·wᵀΣw`.
///
/// Remembers the last accepted support and tests it first. For
/// positive-definite `Σ` the feasible support is unique, so a passing hint is
/// the optimum.
#[derive(Debug, Clone, Default)]
pub struct MeanCovSolver {
    last_support: Option<Vec<usize>>,
}

impl MeanCovSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(
        &mut self,
        theta: &[f64],
        sigma: &DMatrix<f64>,
        rho: f64,
    ) -> Result<(WeightVector, f64)> {
        check_qp_args(theta, sigma, rho)?;
        let sym = linalg::symmetrize(sigma);
        let (clipped, was_clipped) = linalg::psd_clip(&sym, PSD_FLOOR);
        let kkt = kkt_solve(theta, &clipped, rho, self.last_support.as_deref())?;
        if let Some(sol) = &kkt {
            self.last_support = Some(sol.support.clone());
        }
        let value = |w: &[f64]| mean_cov_value(theta, &sym, rho, w);
        if !was_clipped {
            if let Some(sol) = kkt {
                let v = value(sol.w.as_slice());
                return Ok((sol.w, v));
            }
        }
        // Singular or indefinite input, or numerically no feasible support:
        // polish on the original objective, seeded with the clipped solution.
        let mut opts = MaximizeOptions::default();
        if let Some(sol) = &kkt {
            opts.extra_starts.push(sol.w.as_slice().to_vec());
        }
        let grad = |w: &[f64], g: &mut [f64]| {
            let n = w.len();
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += sym[(i, j)] * w[j];
                }
                g[i] = theta[i] - 2.0 * rho * s;
            }
        };
        let (w, v) = maximize_generic(theta.len(), value, grad, Domain::Full, &opts)?;
        if let Some(sol) = kkt {
            let kv = value(sol.w.as_slice());
            if kv >= v {
                return Ok((sol.w, kv));
            }
        }
        Ok((w, v))
    }
}

/// Maximizer of `wᵀθ − ρ·wᵀΣw` over `Δ_d` and its value.
///
/// Positive-definite `Σ` is solved exactly by support enumeration. Otherwise
/// `Σ` is clipped to PSD for the KKT solve and the result is refined by
/// [`maximize_generic`] on the unclipped objective.
pub fn solve_mean_cov_qp(theta: &[f64], sigma: &DMatrix<f64>, rho: f64) -> Result<(WeightVector, f64)> {
    MeanCovSolver::new().solve(theta, sigma, rho)
}

/// Maximizer of `wᵀθ − ρ·wᵀΣw` over the restricted simplex `Δ^c_d`.
///
/// Each support `S` with `|S|·c ≤ 1` spans the face `{w_S ⪰ c·1, 1ᵀw_S = 1}`.
/// Writing `w_S = c·1 + s·p` with `s = 1 − |S|c` and `p ∈ Δ_|S|` turns the face
/// problem into an unrestricted one with mean `θ_S − 2ρcΣ_S1` and risk weight
/// `ρs`, which [`solve_mean_cov_qp`] solves exactly.
pub fn solve_restricted_qp(
    theta: &[f64],
    sigma: &DMatrix<f64>,
    rho: f64,
    c: f64,
) -> Result<(WeightVector, f64)> {
    check_qp_args(theta, sigma, rho)?;
    if !(c > 0.0 && c <= 0.5) {
        return Err(Error::InvalidArgument(format!("c must lie in (0, 1/2], got {c}")));
    }
    let d = theta.len();
    check_exact_dim(d)?;
    let sym = linalg::symmetrize(sigma);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for support in Supports::new(d) {
        let k = support.len();
        let slack = 1.0 - k as f64 * c;
        if slack < -1e-12 {
            continue;
        }
        let mut w = vec![0.0; d];
        if slack <= 1e-12 {
            for &i in &support {
                w[i] = 1.0 / k as f64;
            }
        } else {
            let sub = DMatrix::from_fn(k, k, |a, b| sym[(support[a], support[b])]);
            let row_sums: Vec<f64> = (0..k).map(|a| sub.row(a).sum()).collect();
            let shifted: Vec<f64> = (0..k)
                .map(|a| theta[support[a]] - 2.0 * rho * c * row_sums[a])
                .collect();
            let (p, _) = if k == 1 {
                (WeightVector::vertex(1, 0), 0.0)
            } else {
                solve_mean_cov_qp(&shifted, &sub, rho * slack)?
            };
            for (a, &i) in support.iter().enumerate() {
                w[i] = c + slack * p[a];
            }
        }
        let v = mean_cov_value(theta, &sym, rho, &w);
        if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
            best = Some((w, v));
        }
    }
    let (w, v) = best.expect("c <= 1/2 always admits a single-arm support");
    Ok((WeightVector::new(w)?, v))
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> WeightVector {
    let mut out = vec![0.0; v.len()];
    project_scaled_simplex(v, 1.0, &mut out);
    WeightVector::new(out).expect("projection lies on the simplex")
}

/// Projects `v` onto `{x ⪰ 0, 1ᵀx = radius}` by the sort-and-threshold rule.
pub fn project_scaled_simplex(v: &[f64], radius: f64, out: &mut [f64]) {
    let mut sorted = Vec::with_capacity(v.len());
    project_scaled_simplex_into(v, radius, out, &mut sorted);
}

fn project_scaled_simplex_into(v: &[f64], radius: f64, out: &mut [f64], sorted: &mut Vec<f64>) {
    let n = v.len();
    sorted.clear();
    sorted.extend_from_slice(v);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &x) in sorted.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - radius) / (j + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    for i in 0..n {
        out[i] = (v[i] - tau).max(0.0);
    }
    // exact unit mass despite round-off
    let s: f64 = out.iter().sum();
    if s > 0.0 && s != radius {
        out.iter_mut().for_each(|x| *x *= radius / s);
    }
}

/// Tuning for [`maximize_generic`].
#[derive(Debug, Clone)]
pub struct MaximizeOptions {
    /// Minimum number of starts per face. The face centroid and all face
    /// vertices are always used; random interior points fill up the rest.
    pub n_starts: usize,
    pub max_iters: usize,
    /// Stop a run once an accepted step improves the value by less than this.
    pub tol: f64,
    /// Seed of the random starts.
    pub seed: u64,
    /// Additional starting points (full-length vectors). Each one is used on
    /// the face matching its support, if that face is feasible.
    pub extra_starts: Vec<Vec<f64>>,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_iters: 500,
            tol: 1e-10,
            seed: 0,
            extra_starts: Vec::new(),
        }
    }
}

// Base step multiplier after an accepted step; failures halve it.
const STEP_GROWTH: f64 = 1.5;

struct Face<'a> {
    support: &'a [usize],
    lower: f64,
    slack: f64,
}

#[derive(Default)]
struct Scratch {
    input: Vec<f64>,
    output: Vec<f64>,
    sorted: Vec<f64>,
}

impl Face<'_> {
    fn project(&self, x: &mut [f64], scratch: &mut Scratch) {
        let Scratch {
            input: scratch_in,
            output: scratch_out,
            sorted,
        } = scratch;
        scratch_in.clear();
        scratch_in.extend(self.support.iter().map(|&i| x[i] - self.lower));
        scratch_out.resize(self.support.len(), 0.0);
        project_scaled_simplex_into(scratch_in, self.slack, scratch_out, sorted);
        for (a, &i) in self.support.iter().enumerate() {
            x[i] = self.lower + scratch_out[a];
        }
    }
}

/// Multi-start projected gradient ascent over `domain` in dimension `d`.
///
/// `value_fn` and `gradient_fn` receive full-length vectors. Over the
/// restricted simplex every feasible support face is searched separately.
/// Each run steps `x ← P(x + η_k ∇f(x))` with `η_k = η/√k`; `η` starts at 1
/// and is halved whenever a step fails to increase the value, then grows by
/// a factor 1.5 after each successful step. The best point
/// seen over all runs is returned, so the result is never worse than any start.
pub fn maximize_generic<F, G>(
    d: usize,
    value_fn: F,
    gradient_fn: G,
    domain: Domain,
    opts: &MaximizeOptions,
) -> Result<(WeightVector, f64)>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let lower = match domain {
        Domain::Full => 0.0,
        Domain::Restricted(c) => {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::InvalidArgument(format!("invalid minimum weight {c}")));
            }
            c
        }
    };
    let full_support: Vec<usize> = (0..d).collect();
    let faces: Vec<Vec<usize>> = match domain {
        Domain::Full => vec![full_support],
        Domain::Restricted(c) => Supports::new(d)
            .filter(|s| s.len() as f64 * c <= 1.0 + 1e-12)
            .collect(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut search = Search {
        value_fn: &value_fn,
        gradient_fn: &gradient_fn,
        opts,
        best: None,
        x: vec![0.0; d],
        y: vec![0.0; d],
        grad: vec![0.0; d],
        scratch: Scratch::default(),
    };
    for support in &faces {
        let k = support.len();
        let slack = (1.0 - k as f64 * lower).max(0.0);
        let face = Face {
            support,
            lower,
            slack,
        };
        let mut start = vec![0.0; d];
        // centroid
        for &i in support.iter() {
            start[i] = 1.0 / k as f64;
        }
        search.run(&face, &start)?;
        if slack <= 1e-12 || k == 1 {
            continue;
        }
        let mut used = 1;
        for &v in support.iter() {
            start.iter_mut().for_each(|x| *x = 0.0);
            for &i in support.iter() {
                start[i] = lower;
            }
            start[v] += slack;
            search.run(&face, &start)?;
            used += 1;
        }
        for extra in &opts.extra_starts {
            if extra.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: extra.len(),
                });
            }
            let matches = (0..d).all(|i| (extra[i] > 0.0) == support.contains(&i));
            if matches || matches!(domain, Domain::Full) {
                start.copy_from_slice(extra);
                face.project(&mut start, &mut search.scratch);
                search.run(&face, &start)?;
            }
        }
        while used < opts.n_starts {
            start.iter_mut().for_each(|x| *x = 0.0);
            let mut total = 0.0;
            for &i in support.iter() {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                start[i] = -u.ln();
                total += start[i];
            }
            for &i in support.iter() {
                start[i] = lower + slack * start[i] / total;
            }
            search.run(&face, &start)?;
            used += 1;
        }
    }
    let (w, v) = search.best.expect("at least one face is searched");
    Ok((WeightVector::new(w)?, v))
}

struct Search<'a, F, G> {
    value_fn: &'a F,
    gradient_fn: &'a G,
    opts: &'a MaximizeOptions,
    best: Option<(Vec<f64>, f64)>,
    x: Vec<f64>,
    y: Vec<f64>,
    grad: Vec<f64>,
    scratch: Scratch,
}

impl<F, G> Search<'_, F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    fn offer(&mut self, x: &[f64], v: f64) {
        if self.best.as_ref().is_none_or(|(_, b)| v > *b) {
            self.best = Some((x.to_vec(), v));
        }
    }

    fn run(&mut self, face: &Face<'_>, start: &[f64]) -> Result<()> {
        self.x.copy_from_slice(start);
        let mut fx = checked_value(self.value_fn, &self.x)?;
        self.offer(start, fx);
        if face.slack <= 1e-12 || face.support.len() == 1 {
            return Ok(());
        }
        let mut base = 1.0;
        let mut k = 1usize;
        while k <= self.opts.max_iters {
            (self.gradient_fn)(&self.x, &mut self.grad);
            let eta = base / (k as f64).sqrt();
            self.y.copy_from_slice(&self.x);
            for &i in face.support {
                self.y[i] += eta * self.grad[i];
            }
            face.project(&mut self.y, &mut self.scratch);
            let moved = face
                .support
                .iter()
                .map(|&i| (self.y[i] - self.x[i]).abs())
                .fold(0.0, f64::max);
            if moved < 1e-15 {
                break;
            }
            let fy = checked_value(self.value_fn, &self.y)?;
            if fy > fx {
                let gain = fy - fx;
                std::mem::swap(&mut self.x, &mut self.y);
                fx = fy;
                k += 1;
                if gain < self.opts.tol {
                    break;
                }
                base *= STEP_GROWTH;
            } else {
                base *= 0.5;
                if base < 1e-12 {
                    break;
                }
            }
        }
        let x = std::mem::take(&mut self.x);
        self.offer(&x, fx);
        self.x = x;
        Ok(())
    }
}

fn checked_value<F: Fn(&[f64]) -> f64>(value_fn: &F, x: &[f64]) -> Result<f64> {
    let v = value_fn(x);
    if !v.is_finite() {
        return Err(Error::NonFinite { point: x.to_vec() });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn five_arm_sigma() -> DMatrix<f64> {
        DMatrix::from_fn(5, 5, |i, j| if i == j { 1.0 } else { -0.05 })
    }

    #[test]
    fn support_order() {
        let all: Vec<Vec<usize>> = Supports::new(3).collect();
        assert_eq!(
            all,
            vec![
                vec![0],
                vec![1],
                vec![2],
                vec![0, 1],
                vec![0, 2],
                vec![1, 2],
                vec![0, 1, 2]
            ]
        );
        assert_eq!(Supports::new(6).count(), 63);
    }

    #[test]
    fn projection_cases() {
        let w = project_to_simplex(&[0.5, 0.5, 0.5]);
        assert!(close(w.as_slice(), &[1.0 / 3.0; 3], 1e-15));
        assert_eq!(project_to_simplex(&[2.0, 0.0, 0.0]).as_slice(), &[1.0, 0.0, 0.0]);
        assert!(close(project_to_simplex(&[0.3, 0.2]).as_slice(), &[0.55, 0.45], 1e-15));
        let p = project_to_simplex(&[0.1, 0.6, 0.3]);
        assert!(close(p.as_slice(), &[0.1, 0.6, 0.3], 1e-15));
    }

    #[test]
    fn synthetic_optimum() {
        let theta = [0.2, 0.3, 0.2, 0.2, 0.2];
        let (w, v) = solve_mean_cov_qp(&theta, &five_arm_sigma(), 0.1).unwrap();
        let expected: Vec<f64> = [11.0, 61.0, 11.0, 11.0, 11.0].iter().map(|x| x / 105.0).collect();
        assert!(close(w.as_slice(), &expected, 1e-12));
        assert!((v - 0.22304761904761905).abs() < 1e-12);

        let (w, v) = solve_mean_cov_qp(&theta, &five_arm_sigma(), 10.0).unwrap();
        assert!((v - (-1.379809523809524)).abs() < 1e-12);
        assert!(w[1] > w[0] && (w[0] - w[4]).abs() < 1e-12);
    }

    #[test]
    fn low_risk_picks_vertex() {
        let sigma = DMatrix::identity(2, 2);
        let (w, v) = solve_mean_cov_qp(&[1.0, 0.0], &sigma, 0.25).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.0]);
        assert!((v - 0.75).abs() < 1e-15);
    }

    #[test]
    fn kkt_certificate_on_synthetic() {
        let theta = [0.2, 0.3, 0.2, 0.2, 0.2];
        let sols = feasible_supports(&theta, &five_arm_sigma(), 0.1).unwrap();
        assert_eq!(sols.len(), 1);
        let s = &sols[0];
        assert_eq!(s.support, vec![0, 1, 2, 3, 4]);
        assert!(s.stationarity_residual(&theta, &five_arm_sigma(), 0.1) <= 1e-9);
        assert!(s.complementary_slackness() <= 1e-9);
        assert!(s.min_dual_u() >= -1e-9);
    }

    #[test]
    fn warm_start_keeps_answer() {
        let theta = [0.2, 0.3, 0.2, 0.2, 0.2];
        let mut solver = MeanCovSolver::new();
        let (a, _) = solver.solve(&theta, &five_arm_sigma(), 0.1).unwrap();
        let (b, _) = solver.solve(&[0.3, 0.2, 0.2, 0.2, 0.2], &five_arm_sigma(), 0.1).unwrap();
        let (c, _) = solve_mean_cov_qp(&[0.3, 0.2, 0.2, 0.2, 0.2], &five_arm_sigma(), 0.1).unwrap();
        assert!(a[1] > a[0]);
        assert!(close(b.as_slice(), c.as_slice(), 1e-12));
    }

    #[test]
    fn indefinite_input_is_polished() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let (w, v) = solve_mean_cov_qp(&[0.0, 0.0], &sigma, 1.0).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 1.0]);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn too_many_arms_for_enumeration() {
        let d = MAX_EXACT_DIM + 1;
        let err = kkt_solve(&vec![0.0; d], &DMatrix::identity(d, d), 1.0, None).unwrap_err();
        assert!(matches!(err, Error::TooManySupports { .. }));
    }

    #[test]
    fn restricted_half_is_a_finite_set() {
        // c = 1/2: only vertices and half-half pairs are feasible.
        let theta = [0.3, 0.2, 0.1];
        let sigma = DMatrix::identity(3, 3);
        let (w, v) = solve_restricted_qp(&theta, &sigma, 0.5, 0.5).unwrap();
        // pairs give 0.25 − 0.25; the vertex e1 gives 0.3 − 0.5
        assert!(close(w.as_slice(), &[0.5, 0.5, 0.0], 1e-15));
        assert!((v - 0.0).abs() < 1e-15);
    }

    #[test]
    fn restricted_with_tiny_c_matches_full() {
        let theta = [0.2, 0.3, 0.2, 0.2, 0.2];
        let (wf, vf) = solve_mean_cov_qp(&theta, &five_arm_sigma(), 0.1).unwrap();
        let (wr, vr) = solve_restricted_qp(&theta, &five_arm_sigma(), 0.1, 1e-9).unwrap();
        assert!((vf - vr).abs() <= 1e-6);
        assert!(close(wf.as_slice(), wr.as_slice(), 1e-6));
    }

    #[test]
    fn restricted_linear_objective() {
        let sigma = DMatrix::identity(3, 3) * 1e-6;
        let (w, _) = solve_restricted_qp(&[1.0, 0.0, 0.0], &sigma, 1.0, 0.2).unwrap();
        assert!(close(w.as_slice(), &[1.0, 0.0, 0.0], 1e-9));
        let (w, _) = solve_restricted_qp(&[1.0, 0.9, 0.0], &DMatrix::identity(3, 3), 1.0, 0.2).unwrap();
        assert!(w.in_domain(Domain::Restricted(0.2)));
        assert!(w[2] == 0.0);
    }

    #[test]
    fn generic_matches_exact_solver() {
        let theta = [0.2, 0.3, 0.2, 0.2, 0.2];
        let sigma = five_arm_sigma();
        for rho in [0.1, 1.0, 10.0] {
            let (_, exact) = solve_mean_cov_qp(&theta, &sigma, rho).unwrap();
            let value = |w: &[f64]| mean_cov_value(&theta, &sigma, rho, w);
            let grad = |w: &[f64], g: &mut [f64]| {
                let sw = &sigma * DVector::from_column_slice(w);
                for i in 0..5 {
                    g[i] = theta[i] - 2.0 * rho * sw[i];
                }
            };
            let (_, v) = maximize_generic(5, value, grad, Domain::Full, &MaximizeOptions::default()).unwrap();
            assert!(exact - v <= 1e-4, "rho={rho}: {exact} vs {v}");
        }
    }

    #[test]
    fn generic_on_constant_returns_a_start() {
        let (w, v) = maximize_generic(
            3,
            |_| 1.5,
            |_, g| g.iter_mut().for_each(|x| *x = 0.0),
            Domain::Full,
            &MaximizeOptions::default(),
        )
        .unwrap();
        assert_eq!(v, 1.5);
        assert!(close(w.as_slice(), &[1.0 / 3.0; 3], 1e-15));
    }

    #[test]
    fn generic_rejects_non_finite_values() {
        let err = maximize_generic(
            2,
            |w| if w[0] > 0.9 { f64::NAN } else { w[0] },
            |_, g| {
                g[0] = 1.0;
                g[1] = -1.0;
            },
            Domain::Full,
            &MaximizeOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn generic_restricted_stays_in_domain() {
        let (w, _) = maximize_generic(
            4,
            |w| w[0] - 3.0 * w[1] * w[1],
            |w, g| {
                g.iter_mut().for_each(|x| *x = 0.0);
                g[0] = 1.0;
                g[1] = -6.0 * w[1];
            },
            Domain::Restricted(0.3),
            &MaximizeOptions::default(),
        )
        .unwrap();
        assert!(w.in_domain(Domain::Restricted(0.3)));
        assert_eq!(w.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
    }
}
