//! Cascade recursion `F_k = (1/t_k) log E exp(t_k F_{k+1})` evaluated numerically, used as an
//! independent oracle for the closed forms of `Y^b` and `Γ₂`, and the functionals `𝒜_M` at
//! `M ∈ {1, 2}`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{gamma2_closed_form, LevelChain, SphericalModelSpec};
use crate::lattice::{logdet_and_inverse, plus_diag, Mat};
use crate::optimize::minimize_b;
use crate::profiles::PanchenkoProfile;
use crate::quad::GaussHermite;
use crate::rng::stream;

/// Largest tensor grid the quadrature accepts, in leaf evaluations.
pub const LEAF_BUDGET: f64 = 2e8;
/// Default Gauss–Hermite nodes per Gaussian dimension.
pub const DEFAULT_GH_NODES: usize = 40;
/// Default total Monte Carlo sample budget.
pub const DEFAULT_MC_SAMPLES: usize = 200_000;
/// Independent replicates behind a Monte Carlo standard error.
pub const MC_REPLICATES: usize = 8;

/// Cascade of independent centered Gaussian increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecursionSpec {
    /// Weights `t_0 < … < t_{r−1}`.
    pub t: Vec<f64>,
    /// Per level `k = 0..=r`, coordinate variances of the increment `z^k`.
    pub z_var: Vec<Vec<f64>>,
}

impl RecursionSpec {
    /// Number of log-exp levels `r`.
    pub fn r(&self) -> usize {
        self.t.len()
    }

    /// Dimension of each increment.
    pub fn dim(&self) -> usize {
        self.z_var.first().map_or(0, Vec::len)
    }

    /// Checks ordering of `t`, nonnegative variances and consistent shapes.
    pub fn check(&self) -> Result<()> {
        let r = self.r();
        if self.z_var.len() != r + 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} variance levels, got {}",
                r + 1,
                self.z_var.len()
            )));
        }
        let dim = self.dim();
        if self
            .z_var
            .iter()
            .any(|v| v.len() != dim || v.iter().any(|s| !(*s >= 0.0) || !s.is_finite()))
        {
            return Err(Error::InvalidInput(
                "variances must be finite, nonnegative and of equal length".into(),
            ));
        }
        if self.t.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) || self.t.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::InvalidInput(
                "t must be nondecreasing in (0,1]".into(),
            ));
        }
        Ok(())
    }
}

/// Numerical method for [`evaluate_recursion`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GaussHermite { nodes: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

/// Recursion value with its error estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionValue {
    pub value: f64,
    /// Node-halving difference (quadrature) or standard error (Monte Carlo).
    pub error: f64,
    pub leaves: f64,
}

fn log_sum_exp(terms: &[(f64, f64)], t: f64) -> f64 {
    // terms: (log weight, value); returns (1/t) log Σ w e^{t v}
    let mx = terms
        .iter()
        .map(|(lw, v)| lw + t * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = terms.iter().map(|(lw, v)| (lw + t * v - mx).exp()).sum();
    (mx + s.ln()) / t
}

/// Tensor grid for one level: points (increments) and log weights.
fn level_grid(var: &[f64], gh: &GaussHermite) -> Vec<(Vec<f64>, f64)> {
    let mut grid = vec![(vec![], 0.0)];
    for &v in var {
        let mut next = Vec::with_capacity(grid.len() * gh.nodes.len());
        for (p, lw) in &grid {
            if v == 0.0 {
                let mut q = p.clone();
                q.push(0.0);
                next.push((q, *lw));
            } else {
                for (x, w) in gh.nodes.iter().zip(&gh.weights) {
                    let mut q = p.clone();
                    q.push(v.sqrt() * x);
                    next.push((q, lw + w.ln()));
                }
            }
        }
        grid = next;
    }
    grid
}

/// Number of leaf evaluations a tensor grid with `nodes` per active dimension needs.
pub fn tensor_leaves(spec: &RecursionSpec, nodes: usize) -> f64 {
    spec.z_var
        .iter()
        .flatten()
        .filter(|v| **v > 0.0)
        .fold(1.0, |acc, _| acc * nodes as f64)
}

/// Streaming `log Σ exp(a_i)`.
#[derive(Clone, Copy)]
struct OnlineLse {
    max: f64,
    sum: f64,
}

impl OnlineLse {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn push(&mut self, a: f64) {
        if a > self.max {
            self.sum = self.sum * (self.max - a).exp() + 1.0;
            self.max = a;
        } else {
            self.sum += (a - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Flattened tensor grid of one level: `points[i*dim..(i+1)*dim]` with log weights.
struct FlatGrid {
    points: Vec<f64>,
    log_w: Vec<f64>,
}

fn flat_grid(var: &[f64], gh: &GaussHermite) -> FlatGrid {
    let grid = level_grid(var, gh);
    FlatGrid {
        points: grid.iter().flat_map(|(p, _)| p.iter().copied()).collect(),
        log_w: grid.iter().map(|g| g.1).collect(),
    }
}

struct GhContext<'a, F> {
    r: usize,
    dim: usize,
    t: &'a [f64],
    grids: Vec<FlatGrid>,
    leaf: &'a F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> GhContext<'_, F> {
    /// `F_k` at accumulated input `scratch[0]`, using `scratch[1..]` as work space.
    fn level(&self, k: usize, scratch: &mut [Vec<f64>]) -> f64 {
        if k == self.r {
            return (self.leaf)(&scratch[0]);
        }
        let g = &self.grids[k + 1];
        let t = self.t[k];
        let (head, tail) = scratch.split_at_mut(1);
        let y = &head[0];
        let mut lse = OnlineLse::new();
        for (i, lw) in g.log_w.iter().enumerate() {
            let z = &g.points[i * self.dim..(i + 1) * self.dim];
            for ((o, a), b) in tail[0].iter_mut().zip(y).zip(z) {
                *o = a + b;
            }
            lse.push(lw + t * self.level(k + 1, tail));
        }
        lse.value() / t
    }

    /// Same as [`Self::level`] but fanning the first nontrivial level out over threads.
    fn level_par(&self, k: usize, y: &[f64]) -> f64 {
        if k == self.r {
            return (self.leaf)(y);
        }
        let g = &self.grids[k + 1];
        let t = self.t[k];
        let child = |i: usize| -> f64 {
            let z = &g.points[i * self.dim..(i + 1) * self.dim];
            let yy: Vec<f64> = y.iter().zip(z).map(|(a, b)| a + b).collect();
            if g.log_w.len() > 1 {
                let mut scratch = vec![vec![0.0; self.dim]; self.r - k];
                scratch[0] = yy;
                self.level(k + 1, &mut scratch)
            } else {
                self.level_par(k + 1, &yy)
            }
        };
        let vals: Vec<f64> = (0..g.log_w.len()).into_par_iter().map(child).collect();
        let mut lse = OnlineLse::new();
        for (lw, v) in g.log_w.iter().zip(&vals) {
            lse.push(lw + t * v);
        }
        lse.value() / t
    }
}

fn gh_value<F>(spec: &RecursionSpec, leaf: &F, nodes: usize) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let gh = GaussHermite::new(nodes);
    let ctx = GhContext {
        r: spec.r(),
        dim: spec.dim(),
        t: &spec.t,
        grids: spec.z_var.iter().map(|v| flat_grid(v, &gh)).collect(),
        leaf,
    };
    let root = &ctx.grids[0];
    let vals: Vec<f64> = (0..root.log_w.len())
        .into_par_iter()
        .map(|i| ctx.level_par(0, &root.points[i * ctx.dim..(i + 1) * ctx.dim]))
        .collect();
    root.log_w
        .iter()
        .zip(&vals)
        .map(|(lw, v)| lw.exp() * v)
        .sum()
}

fn mc_value<F>(spec: &RecursionSpec, leaf: &F, per_level: usize, seed: u64, replicate: u64) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let r = spec.r();
    let dim = spec.dim();
    // Antithetic pairs: each draw z is used together with −z.
    let draw = |k: usize, path: u64| -> Vec<Vec<f64>> {
        let mut rng = stream(
            seed,
            "recursion",
            replicate.wrapping_mul(1 << 40) ^ (path << 4) ^ k as u64,
        );
        let half = per_level.div_ceil(2);
        let mut out = Vec::with_capacity(2 * half);
        for _ in 0..half {
            let z: Vec<f64> = (0..dim)
                .map(|x| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    spec.z_var[k][x].sqrt() * g
                })
                .collect();
            out.push(z.iter().map(|v| -v).collect());
            out.push(z);
        }
        out
    };
    fn level<F: Fn(&[f64]) -> f64 + Sync>(
        k: usize,
        y: &[f64],
        path: u64,
        r: usize,
        t: &[f64],
        draw: &(dyn Fn(usize, u64) -> Vec<Vec<f64>> + Sync),
        leaf: &F,
    ) -> f64 {
        if k == r {
            return leaf(y);
        }
        let zs = draw(k + 1, path);
        let lw = -(zs.len() as f64).ln();
        let terms: Vec<(f64, f64)> = zs
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let yy: Vec<f64> = y.iter().zip(z).map(|(a, b)| a + b).collect();
                (
                    lw,
                    level(
                        k + 1,
                        &yy,
                        path.wrapping_mul(1_000_003).wrapping_add(i as u64 + 1),
                        r,
                        t,
                        draw,
                        leaf,
                    ),
                )
            })
            .collect();
        log_sum_exp(&terms, t[k])
    }
    let roots = draw(0, 0);
    let vals: Vec<f64> = roots
        .par_iter()
        .enumerate()
        .map(|(i, z)| level(0, z, i as u64 + 1, r, &spec.t, &draw, leaf))
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// `E_{z⁰} F_0(z⁰)` for the cascade `F_k = (1/t_k) log E exp(t_k F_{k+1})` with leaf `F_r(z⁰+…+z^r)`.
pub fn evaluate_recursion<F>(
    spec: &RecursionSpec,
    leaf: &F,
    method: Method,
) -> Result<RecursionValue>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    spec.check()?;
    match method {
        Method::GaussHermite { nodes } => {
            if nodes < 2 {
                return Err(Error::InvalidInput("at least two nodes".into()));
            }
            let leaves = tensor_leaves(spec, nodes);
            let coarse = nodes.div_ceil(2);
            let total = leaves + tensor_leaves(spec, coarse);
            if total > LEAF_BUDGET {
                return Err(Error::BudgetExceeded {
                    required: total,
                    budget: LEAF_BUDGET,
                });
            }
            let fine = gh_value(spec, leaf, nodes);
            let rough = gh_value(spec, leaf, coarse);
            Ok(RecursionValue {
                value: fine,
                error: (fine - rough).abs(),
                leaves: total,
            })
        }
        Method::MonteCarlo { samples, seed } => {
            let per_rep = (samples / MC_REPLICATES).max(2) as f64;
            let per_level = (per_rep.powf(1.0 / (spec.r() + 1) as f64).floor() as usize).max(2);
            let vals: Vec<f64> = (0..MC_REPLICATES as u64)
                .map(|rep| mc_value(spec, leaf, per_level, seed, rep))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var =
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            Ok(RecursionValue {
                value: mean,
                error: (var / vals.len() as f64).sqrt(),
                leaves: (per_level as f64).powi(spec.r() as i32 + 1) * MC_REPLICATES as f64,
            })
        }
    }
}

/// Largest node count not above `max_nodes` whose grid (plus the halved grid) fits the budget.
pub fn nodes_within_budget(spec: &RecursionSpec, max_nodes: usize) -> Option<usize> {
    (2..=max_nodes)
        .rev()
        .find(|&n| tensor_leaves(spec, n) + tensor_leaves(spec, n.div_ceil(2)) <= LEAF_BUDGET)
}

/// Quadrature with the most nodes the budget allows; Monte Carlo when even two nodes do not fit.
pub fn auto_method(spec: &RecursionSpec, max_nodes: usize, seed: u64) -> Method {
    match nodes_within_budget(spec, max_nodes) {
        Some(nodes) => Method::GaussHermite { nodes },
        None => Method::MonteCarlo {
            samples: DEFAULT_MC_SAMPLES,
            seed,
        },
    }
}

/// Cascade for a Panchenko profile with per-site level variances `f(q^k) − f(q^{k−1})`,
/// root variance `f(0)`, each site repeated `copies` times.
pub fn cascade_spec<G: Fn(usize, f64) -> f64>(
    p: &PanchenkoProfile,
    copies: usize,
    f: G,
) -> RecursionSpec {
    let r = p.r();
    let n = p.n_sites();
    let mut z_var = vec![vec![]; r + 1];
    for x in 0..n {
        for _ in 0..copies {
            z_var[0].push(f(x, 0.0).max(0.0));
            for k in 1..=r {
                z_var[k].push((f(x, p.q[x][k]) - f(x, p.q[x][k - 1])).max(0.0));
            }
        }
    }
    RecursionSpec {
        t: p.t[..r].to_vec(),
        z_var,
    }
}

/// `Y^b(v)` by the recursion: Gaussian leaf `log ∫ exp(⟨y,u⟩ − ½⟨u,(D+b)u⟩) du`, divided by `|Ω|`.
pub fn y_b_recursion(
    spec: &SphericalModelSpec,
    p: &PanchenkoProfile,
    b: &[f64],
    v: &[f64],
    method: Method,
) -> Result<RecursionValue> {
    p.check()?;
    let n = spec.n();
    if b.len() != n || v.len() != n || p.n_sites() != n {
        return Err(Error::InvalidInput("site counts differ".into()));
    }
    let a = plus_diag(&spec.d, b);
    let (logdet, inv) = logdet_and_inverse(&a)?;
    let c0 = 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet;
    let leaf = |z: &[f64]| {
        let y: Vec<f64> = (0..n).map(|x| v[x] + z[x]).collect();
        let mut q = 0.0;
        for x in 0..n {
            for w in 0..n {
                q += y[x] * inv[(x, w)] * y[w];
            }
        }
        c0 + 0.5 * q
    };
    let rs = cascade_spec(p, 1, |x, q| spec.xi[x].d1(q));
    let out = evaluate_recursion(&rs, &leaf, method)?;
    let nf = n as f64;
    Ok(RecursionValue {
        value: out.value / nf,
        error: out.error / nf,
        leaves: out.leaves,
    })
}

/// `Γ^M₂` by the recursion: leaf `√M Σ y`, increments of `θ_x`, divided by `|Ω| M`.
pub fn gamma2_recursion(
    spec: &SphericalModelSpec,
    p: &PanchenkoProfile,
    m: usize,
    method: Method,
) -> Result<RecursionValue> {
    p.check()?;
    let n = spec.n();
    let rs = cascade_spec(p, 1, |x, q| spec.xi[x].theta(q));
    let sm = (m as f64).sqrt();
    let leaf = |z: &[f64]| sm * z.iter().sum::<f64>();
    let out = evaluate_recursion(&rs, &leaf, method)?;
    let s = (n * m) as f64;
    Ok(RecursionValue {
        value: out.value / s,
        error: out.error / s,
        leaves: out.leaves,
    })
}

/// Log of the spherical integral over `S_M^Ω` for `M ∈ {1, 2}`.
struct SphereLeaf {
    m: usize,
    d: Mat,
    h: Vec<f64>,
    /// Trapezoid points per circle for `M = 2`.
    points: usize,
}

impl SphereLeaf {
    fn eval(&self, y: &[f64]) -> f64 {
        let n = self.h.len();
        match self.m {
            1 => {
                // Counting measure on {−1, +1} per site.
                let mut terms = Vec::with_capacity(1 << n);
                for mask in 0..(1usize << n) {
                    let s: Vec<f64> = (0..n)
                        .map(|x| if mask >> x & 1 == 1 { 1.0 } else { -1.0 })
                        .collect();
                    let mut e = 0.0;
                    for x in 0..n {
                        e += (y[x] + self.h[x]) * s[x];
                        for w in 0..n {
                            e -= 0.5 * self.d[(x, w)] * s[x] * s[w];
                        }
                    }
                    terms.push((0.0, e));
                }
                log_sum_exp(&terms, 1.0)
            }
            _ => {
                // Arc length on the circle of radius √2, periodic trapezoid in the angle.
                let p = self.points;
                let rad = std::f64::consts::SQRT_2;
                let step = 2.0 * std::f64::consts::PI / p as f64;
                let lw = n as f64 * (rad * step).ln();
                let total = p.pow(n as u32);
                let mut terms = Vec::with_capacity(total);
                let mut u = vec![[0.0f64; 2]; n];
                for idx in 0..total {
                    let mut k = idx;
                    for ux in u.iter_mut() {
                        let a = (k % p) as f64 * step;
                        k /= p;
                        *ux = [rad * a.cos(), rad * a.sin()];
                    }
                    let mut e = 0.0;
                    for x in 0..n {
                        e +=
                            y[2 * x] * u[x][0] + y[2 * x + 1] * u[x][1] + rad * self.h[x] * u[x][0];
                        for w in 0..n {
                            e -= 0.5 * self.d[(x, w)] * (u[x][0] * u[w][0] + u[x][1] * u[w][1]);
                        }
                    }
                    terms.push((lw, e));
                }
                log_sum_exp(&terms, 1.0)
            }
        }
    }
}

/// `Γ^M₁` for `M ∈ {1, 2}`: exact sum (`M = 1`) or refined trapezoid (`M = 2`) at the leaves,
/// cascade expectation by [`evaluate_recursion`].
pub fn gamma1_small_m(
    spec: &SphericalModelSpec,
    p: &PanchenkoProfile,
    m: usize,
    method: Method,
) -> Result<RecursionValue> {
    p.check()?;
    let n = spec.n();
    if !(m == 1 || m == 2) {
        return Err(Error::InvalidInput("M must be 1 or 2".into()));
    }
    if n > 3 || p.n_sites() != n {
        return Err(Error::InvalidInput(
            "at most three sites, matching the profile".into(),
        ));
    }
    let rs = cascade_spec(p, m, |x, q| spec.xi[x].d1(q));
    let mut leaf = SphereLeaf {
        m,
        d: spec.d.clone(),
        h: spec.h.clone(),
        points: 16,
    };
    if m == 2 {
        // Refine on a probe input of three standard deviations per coordinate.
        let sd: Vec<f64> = (0..rs.dim())
            .map(|i| 3.0 * rs.z_var.iter().map(|v| v[i]).sum::<f64>().sqrt())
            .collect();
        let mut prev = leaf.eval(&sd);
        loop {
            leaf.points *= 2;
            let cur = leaf.eval(&sd);
            if (cur - prev).abs() <= 1e-13 * cur.abs().max(1.0) {
                break;
            }
            if leaf.points >= 1024 {
                return Err(Error::NoConvergence {
                    iterations: leaf.points,
                    residual: (cur - prev).abs(),
                });
            }
            prev = cur;
        }
    }
    let out = evaluate_recursion(&rs, &|y: &[f64]| leaf.eval(y), method)?;
    let s = (n * m) as f64;
    Ok(RecursionValue {
        value: out.value / s,
        error: out.error / s,
        leaves: out.leaves,
    })
}

/// `𝒜₁`, `𝒜₂` and the `M → ∞` value `inf_b W(b) − Γ₂` on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmTrend {
    pub a1: f64,
    pub a1_error: f64,
    pub a2: f64,
    pub a2_error: f64,
    pub gamma2: f64,
    pub a_limit: f64,
}

/// Evaluates the `𝒜_M` trend table.
pub fn a_m_trend(
    spec: &SphericalModelSpec,
    p: &PanchenkoProfile,
    max_nodes: usize,
    seed: u64,
) -> Result<AmTrend> {
    let g2 = gamma2_closed_form(spec, p)?;
    let run = |m: usize| {
        let rs = cascade_spec(p, m, |x, q| spec.xi[x].d1(q));
        gamma1_small_m(spec, p, m, auto_method(&rs, max_nodes, seed))
    };
    let g1 = run(1)?;
    let g2m = run(2)?;
    let lim = minimize_b(spec, &LevelChain::from_panchenko(p), None)?
        .eval
        .report
        .value;
    Ok(AmTrend {
        a1: g1.value - g2,
        a1_error: g1.error,
        a2: g2m.value - g2,
        a2_error: g2m.error,
        gamma2: g2,
        a_limit: lim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::MixingFunction;

    #[test]
    fn linear_leaf_mgf() {
        let spec = RecursionSpec {
            t: vec![1.0],
            z_var: vec![vec![0.0], vec![0.7]],
        };
        let v = evaluate_recursion(&spec, &|z: &[f64]| z[0], Method::GaussHermite { nodes: 10 })
            .unwrap();
        assert!((v.value - 0.35).abs() < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let spec = RecursionSpec {
            t: vec![0.5; 3],
            z_var: vec![vec![1.0; 4]; 4],
        };
        let err = evaluate_recursion(&spec, &|_: &[f64]| 0.0, Method::GaussHermite { nodes: 40 })
            .unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn two_point_mass() {
        let spec =
            SphericalModelSpec::new(Mat::zeros(1, 1), vec![MixingFunction::zero()], vec![0.0])
                .unwrap();
        let p = PanchenkoProfile {
            t: vec![0.5, 1.0],
            q: vec![vec![0.0, 1.0]],
        };
        let g = gamma1_small_m(&spec, &p, 1, Method::GaussHermite { nodes: 4 }).unwrap();
        assert!((g.value - 2f64.ln()).abs() < 1e-14);
    }
}
