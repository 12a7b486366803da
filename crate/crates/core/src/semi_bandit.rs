//! Semi-bandit learners over the restricted simplex: MC-UCB and the
//! MC-UCB-Γ and OLS-UCB-C baselines.
//!
//! All three share the bookkeeping of pair counts `N_ij`, per-arm means and
//! pairwise covariance estimates, and a scripted initialization of `d²` pulls
//! (each `e_i`, then the half-half vector for every ordered pair `i ≠ j`).
//! Afterwards each step maximizes an optimistic index
//!
//! ```text
//! wᵀθ̂ + E_t(w) − ρ·wᵀΣ̲_t w,
//! E_t(w)² = 2β·(Σ_i λΣ̄_ii w_i² / N_ii + Σ_ij w_i w_j A_ij / (N_ii N_jj))
//! ```
//!
//! where `Σ̲ = Σ̂ − g` and `Σ̄ = Σ̂ + g` are the covariance bands and `A` sums
//! the upper band over past steps, masked to each step's support.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Domain, Feedback, WeightVector};
use crate::policy::{feedback_mismatch, Algorithm, Policy};
use crate::solver::{maximize_generic, MaximizeOptions};

/// Constant under the second radical of the covariance radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusConstants {
    /// 48
    #[default]
    Main,
    /// 61
    Appendix,
}

impl RadiusConstants {
    pub fn second(&self) -> f64 {
        match self {
            RadiusConstants::Main => 48.0,
            RadiusConstants::Appendix => 61.0,
        }
    }
}

impl std::str::FromStr for RadiusConstants {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" => Ok(RadiusConstants::Main),
            "appendix" => Ok(RadiusConstants::Appendix),
            other => Err(Error::InvalidArgument(format!(
                "radius constants must be `main` or `appendix`, got `{other}`"
            ))),
        }
    }
}

/// Confidence radius `g_ij(t)` of the covariance estimate `Σ̂_ij`.
pub fn covariance_radius(
    t: usize,
    n_ij: usize,
    n_ii: usize,
    n_jj: usize,
    constants: RadiusConstants,
) -> Result<f64> {
    if t < 2 {
        return Err(Error::InvalidArgument(format!("radius needs t >= 2, got {t}")));
    }
    if n_ij == 0 || n_ii == 0 || n_jj == 0 {
        return Err(Error::InvalidArgument("radius needs positive counts".into()));
    }
    Ok(radius_unchecked((t as f64).ln(), n_ij as f64, n_ii as f64, n_jj as f64, constants.second()))
}

fn radius_unchecked(ln_t: f64, n_ij: f64, n_ii: f64, n_jj: f64, second: f64) -> f64 {
    let r = 3.0 * ln_t / n_ij;
    let ln2 = ln_t * ln_t;
    16.0 * r.max(r.sqrt()) + (second * ln2 / (n_ij * n_ii)).sqrt() + (36.0 * ln2 / (n_ij * n_jj)).sqrt()
}

/// `β(δ_t)` with `δ_t = 1/(t ln²t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beta {
    pub value: f64,
    /// Set when `ln ln t` was negative and replaced by 0 (`t < e`).
    pub clamped: bool,
}

pub fn beta_confidence(t: usize, d: usize, lambda: f64) -> Result<Beta> {
    if t < 2 {
        return Err(Error::InvalidArgument(format!("beta needs t >= 2, got {t}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
    }
    let ln_t = (t as f64).ln();
    let lnln = ln_t.ln();
    let clamped = lnln < 0.0;
    let value = (t as f64 * ln_t * ln_t).ln()
        + d as f64 * lnln.max(0.0)
        + 0.5 * d as f64 * (1.0 + std::f64::consts::E / lambda).ln();
    Ok(Beta { value, clamped })
}

/// Covariance bands at step `t`, row-major `d×d`.
#[derive(Debug, Clone)]
pub struct ConfidenceBands {
    pub d: usize,
    pub t: usize,
    pub radius: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub beta: Beta,
}

/// Pair counts, per-arm means and the pairwise covariance estimate.
#[derive(Debug, Clone)]
pub struct SemiBanditState {
    d: usize,
    t: usize,
    // all d×d, row-major
    counts: Vec<usize>,
    // Σ θ_i θ_j over steps observing both i and j
    cross: Vec<f64>,
    // Σ θ_i over steps observing both i and j
    partial: Vec<f64>,
    sums: Vec<f64>,
    mean: Vec<f64>,
    cov: Vec<f64>,
}

impl SemiBanditState {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            t: 0,
            counts: vec![0; d * d],
            cross: vec![0.0; d * d],
            partial: vec![0.0; d * d],
            sums: vec![0.0; d],
            mean: vec![0.0; d],
            cov: vec![0.0; d * d],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn count(&self, i: usize, j: usize) -> usize {
        self.counts[i * self.d + j]
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `Σ̂_ij`, zero for pairs never observed together.
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.d + j]
    }

    pub fn update(&mut self, observed: &[(usize, f64)]) -> Result<()> {
        let d = self.d;
        for &(i, x) in observed {
            if i >= d || !x.is_finite() {
                return Err(Error::InvalidArgument(format!("bad observation ({i}, {x})")));
            }
        }
        self.t += 1;
        for &(i, xi) in observed {
            self.sums[i] += xi;
            for &(j, xj) in observed {
                let k = i * d + j;
                self.counts[k] += 1;
                self.cross[k] += xi * xj;
                self.partial[k] += xi;
            }
        }
        for &(i, _) in observed {
            self.mean[i] = self.sums[i] / self.counts[i * d + i] as f64;
        }
        // Every pair touching an updated mean changes.
        let mut touched = vec![false; d];
        for &(i, _) in observed {
            touched[i] = true;
        }
        for i in 0..d {
            for j in i..d {
                if touched[i] || touched[j] {
                    let v = self.pair_cov(i, j);
                    self.cov[i * d + j] = v;
                    self.cov[j * d + i] = v;
                }
            }
        }
        Ok(())
    }

    /// `(1/N_ij) Σ J_ij (θ_i − θ̂_i)(θ_j − θ̂_j)` with the current means.
    fn pair_cov(&self, i: usize, j: usize) -> f64 {
        let d = self.d;
        let n = self.counts[i * d + j];
        if n == 0 {
            return 0.0;
        }
        let (mi, mj) = (self.mean[i], self.mean[j]);
        let n = n as f64;
        (self.cross[i * d + j] - mj * self.partial[i * d + j] - mi * self.partial[j * d + i]
            + n * mi * mj)
            / n
    }

    /// Bands for step `t = self.t() + 1`. Needs every pair observed.
    pub fn bands(&self, lambda: f64, constants: RadiusConstants) -> Result<ConfidenceBands> {
        let d = self.d;
        let t = self.t + 1;
        let beta = beta_confidence(t, d, lambda)?;
        let ln_t = (t as f64).ln();
        let mut radius = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let nij = self.count(i, j);
                if nij == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "pair ({i}, {j}) unobserved; initialization incomplete"
                    )));
                }
                radius[i * d + j] = radius_unchecked(
                    ln_t,
                    nij as f64,
                    self.count(i, i) as f64,
                    self.count(j, j) as f64,
                    constants.second(),
                );
            }
        }
        let lower = self.cov.iter().zip(&radius).map(|(c, g)| c - g).collect();
        let upper = self.cov.iter().zip(&radius).map(|(c, g)| c + g).collect();
        Ok(ConfidenceBands {
            d,
            t,
            radius,
            lower,
            upper,
            beta,
        })
    }
}

/// `wᵀθ + √(max(wᵀMw, 0)) − ρ·wᵀRw` with its gradient; matrices row-major.
#[derive(Debug, Clone)]
pub struct OptimisticIndex {
    theta: Vec<f64>,
    width: Vec<f64>,
    // ρR
    risk: Vec<f64>,
}

impl OptimisticIndex {
    pub fn new(theta: Vec<f64>, width: Vec<f64>, risk: Vec<f64>, rho: f64) -> Result<Self> {
        let d = theta.len();
        for m in [&width, &risk] {
            if m.len() != d * d {
                return Err(Error::DimensionMismatch {
                    expected: d * d,
                    got: m.len(),
                });
            }
        }
        let risk = risk.into_iter().map(|r| rho * r).collect();
        Ok(Self { theta, width, risk })
    }

    pub fn d(&self) -> usize {
        self.theta.len()
    }

    /// `M`
    pub fn width_matrix(&self) -> &[f64] {
        &self.width
    }

    // (wᵀMw, wᵀ(ρR)w), optionally storing Mw and ρRw.
    fn forms(&self, w: &[f64], mut products: Option<(&mut [f64], &mut [f64])>) -> (f64, f64) {
        let d = self.theta.len();
        assert!(w.len() == d);
        let (mut q, mut r) = (0.0, 0.0);
        for i in 0..d {
            let mrow = &self.width[i * d..(i + 1) * d];
            let rrow = &self.risk[i * d..(i + 1) * d];
            let (mut a, mut b) = (0.0, 0.0);
            for j in 0..d {
                a += mrow[j] * w[j];
                b += rrow[j] * w[j];
            }
            q += w[i] * a;
            r += w[i] * b;
            if let Some((mw, rw)) = products.as_mut() {
                mw[i] = a;
                rw[i] = b;
            }
        }
        (q, r)
    }

    /// `E(w)`
    pub fn width_at(&self, w: &[f64]) -> f64 {
        self.forms(w, None).0.max(0.0).sqrt()
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let lin: f64 = self.theta.iter().zip(w).map(|(a, b)| a * b).sum();
        let (q, r) = self.forms(w, None);
        lin + q.max(0.0).sqrt() - r
    }

    pub fn gradient(&self, w: &[f64], g: &mut [f64]) {
        let d = self.theta.len();
        let mut stack = [0.0; 16];
        let mut heap = Vec::new();
        let rw: &mut [f64] = if d <= stack.len() {
            &mut stack[..d]
        } else {
            heap.resize(d, 0.0);
            &mut heap
        };
        let (q, _) = self.forms(w, Some((&mut *g, &mut *rw)));
        let e = q.max(0.0).sqrt();
        let inv = if e > 1e-300 { 1.0 / e } else { 0.0 };
        for i in 0..d {
            g[i] = self.theta[i] + g[i] * inv - 2.0 * rw[i];
        }
    }
}

/// How the confidence width and the risk term are formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UcbVariant {
    /// Width from the upper covariance band, risk from the lower band.
    McUcb,
    /// Width with every covariance entry replaced by the constant Γ.
    Gamma(f64),
    /// Width as in MC-UCB, no risk term.
    OlsUcbC,
}

/// Tuning shared by the three variants. The default search runs one
/// projected-gradient ascent per face from its centroid, from each face
/// vertex, and from the previous action.
#[derive(Debug, Clone)]
pub struct UcbConfig {
    pub rho: f64,
    pub c: f64,
    pub lambda: f64,
    pub constants: RadiusConstants,
    pub search: MaximizeOptions,
}

impl UcbConfig {
    pub fn new(rho: f64, c: f64) -> Self {
        Self {
            rho,
            c,
            lambda: 1.0,
            constants: RadiusConstants::Main,
            search: MaximizeOptions {
                n_starts: 1,
                ..MaximizeOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct McUcb {
    variant: UcbVariant,
    config: UcbConfig,
    state: SemiBanditState,
    init: Vec<WeightVector>,
    // Σ_{s<t} of the band Σ̄_s masked to supp(w_s); None until the first
    // optimistic step, which seeds it with Σ̄ ∘ N for the scripted pulls.
    masked_upper: Option<Vec<f64>>,
    last_upper: Option<Vec<f64>>,
    last_bands: Option<ConfidenceBands>,
    last_action: Option<WeightVector>,
}

impl McUcb {
    pub fn new(d: usize, variant: UcbVariant, config: UcbConfig) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument(format!("need d >= 2, got {d}")));
        }
        if !(config.c > 0.0 && config.c <= 0.5) {
            return Err(Error::InvalidArgument(format!("c must lie in (0, 1/2], got {}", config.c)));
        }
        if !(config.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {}", config.lambda)));
        }
        if let UcbVariant::Gamma(g) = variant {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {g}")));
            }
        }
        Ok(Self {
            variant,
            config,
            state: SemiBanditState::new(d),
            init: initialization_actions(d),
            masked_upper: None,
            last_upper: None,
            last_bands: None,
            last_action: None,
        })
    }

    pub fn state(&self) -> &SemiBanditState {
        &self.state
    }

    pub fn variant(&self) -> UcbVariant {
        self.variant
    }

    /// Bands used by the most recent optimistic step.
    pub fn last_bands(&self) -> Option<&ConfidenceBands> {
        self.last_bands.as_ref()
    }

    /// Running masked sum of upper bands, row-major.
    pub fn masked_upper(&self) -> Option<&[f64]> {
        self.masked_upper.as_deref()
    }

    /// The optimistic index for step `t = state.t() + 1`.
    pub fn index(&mut self) -> Result<OptimisticIndex> {
        let d = self.state.d;
        let bands = self.state.bands(self.config.lambda, self.config.constants)?;
        let masked = self.masked_upper.get_or_insert_with(|| {
            (0..d * d)
                .map(|k| bands.upper[k] * self.state.counts[k] as f64)
                .collect()
        });
        let two_beta = 2.0 * bands.beta.value;
        let lambda = self.config.lambda;
        let n = |i: usize| self.state.counts[i * d + i] as f64;
        let mut width = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let k = i * d + j;
                let (diag, acc) = match self.variant {
                    UcbVariant::Gamma(gamma) => (gamma, gamma * self.state.counts[k] as f64),
                    _ => (bands.upper[i * d + i], masked[k]),
                };
                let mut v = acc / (n(i) * n(j));
                if i == j {
                    v += lambda * diag / n(i);
                }
                width[k] = two_beta * v;
            }
        }
        let (rho, risk) = match self.variant {
            UcbVariant::OlsUcbC => (0.0, vec![0.0; d * d]),
            _ => (self.config.rho, bands.lower.clone()),
        };
        self.last_upper = Some(bands.upper.clone());
        self.last_bands = Some(bands);
        OptimisticIndex::new(self.state.mean.clone(), width, risk, rho)
    }
}

/// `e_1, …, e_d`, then the half-half vector of every ordered pair `(i, j)`,
/// `i ≠ j`: `d²` actions.
pub fn initialization_actions(d: usize) -> Vec<WeightVector> {
    let mut out: Vec<WeightVector> = (0..d).map(|i| WeightVector::vertex(d, i)).collect();
    for i in 0..d {
        for j in 0..d {
            if i != j {
                out.push(WeightVector::pair(d, i, j));
            }
        }
    }
    out
}

impl Policy for McUcb {
    fn algorithm(&self) -> Algorithm {
        match self.variant {
            UcbVariant::McUcb => Algorithm::McUcb,
            UcbVariant::Gamma(_) => Algorithm::McUcbGamma,
            UcbVariant::OlsUcbC => Algorithm::OlsUcbC,
        }
    }

    fn choose(&mut self) -> Result<WeightVector> {
        let t = self.state.t;
        if t < self.init.len() {
            return Ok(self.init[t].clone());
        }
        let index = self.index()?;
        let mut opts = self.config.search.clone();
        if let Some(prev) = &self.last_action {
            opts.extra_starts.push(prev.as_slice().to_vec());
        }
        opts.seed = opts.seed.wrapping_add(t as u64);
        let (w, _) = maximize_generic(
            index.d(),
            |w| index.value(w),
            |w, g| index.gradient(w, g),
            Domain::Restricted(self.config.c),
            &opts,
        )?;
        self.last_action = Some(w.clone());
        Ok(w)
    }

    fn observe(&mut self, action: &WeightVector, feedback: &Feedback) -> Result<()> {
        let observed = match feedback {
            Feedback::Semi(obs) => obs,
            other => return Err(feedback_mismatch(self.algorithm(), other)),
        };
        if let (Some(masked), Some(upper)) = (self.masked_upper.as_mut(), self.last_upper.take()) {
            let d = self.state.d;
            let support = action.support();
            for &i in &support {
                for &j in &support {
                    masked[i * d + j] += upper[i * d + j];
                }
            }
        }
        self.state.update(observed)
    }
}
