//! Variational solves: the convex inf over `b`, minimization over RSB
//! locations at fixed weights, the full inf over profiles, the outer sup over
//! `q` for the Euclidean model, and stationarity certificates.

use std::cell::RefCell;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{
    a_chain, b_discrete, mapped_offset, mapped_spherical_spec, reparameterize_beta, AEval,
    EuclideanModelSpec, LevelChain, SphericalModelSpec,
};
use crate::kdual::{solve_k, DEFAULT_TOL};
use crate::lattice::{cholesky, inverse_pd, plus_diag, Mat, Vector};
use crate::profiles::{delta_of, delta_sequence, ContinuumProfile, TalagrandProfile, ETA};
use crate::quad::GaussLegendre;
use crate::rng::stream;

/// Stop when the best value improves by less than this over [`STALL_WINDOW`] iterations.
pub const STALL_TOL: f64 = 1e-10;
/// Window for [`STALL_TOL`].
pub const STALL_WINDOW: usize = 5;
/// Default number of multistart points.
pub const DEFAULT_MULTISTART: usize = 32;
/// Default box parameter `m` for the sup over `q`.
pub const DEFAULT_Q_BOX: f64 = 0.05;

/// Position of a coordinate relative to its constraints at a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KktFlag {
    Interior,
    Lower,
    Upper,
    /// Tied to a neighbouring level.
    Chain,
}

/// Stationarity certificate at a computed minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Certificate {
    pub value: f64,
    pub residual_cs1: f64,
    pub residual_csb: f64,
    pub gap_ab: f64,
    /// Largest reduced-gradient entry over free blocks.
    pub stationarity: f64,
    /// Largest violation of the multiplier signs on active constraints.
    pub kkt_violation: f64,
    pub kkt_flags: Vec<Vec<KktFlag>>,
}

// ------------------------------------------------------------- minimize over b

/// Outcome of the convex solve over `b`.
#[derive(Debug, Clone)]
pub struct BSolve {
    pub b: Vec<f64>,
    pub eval: AEval,
    /// `2|Ω| ‖∇_b 𝒜‖∞`, the residual of the critical equation.
    pub residual: f64,
    pub iterations: usize,
    /// Set when the strict-convexity preconditions are not met.
    pub best_effort: bool,
}

fn preconditions_hold(spec: &SphericalModelSpec, chain: &LevelChain) -> bool {
    let d = chain.d_sequence(&spec.xi);
    let d0min = d[0].iter().copied().fold(f64::INFINITY, f64::min);
    spec.xi.iter().all(|f| f.d2(1.0) != 0.0)
        && (d0min > 0.0 || spec.xi.iter().all(|f| f.d1(0.0) != 0.0))
}

/// Minimizes the strictly convex map `b ↦ 𝒜(chain, b)` by damped Newton.
pub fn minimize_b(
    spec: &SphericalModelSpec,
    chain: &LevelChain,
    warm: Option<&[f64]>,
) -> Result<BSolve> {
    let n = spec.n();
    let two_n = 2.0 * n as f64;
    let d0 = chain.d_sequence(&spec.xi).swap_remove(0);
    let start: Vec<f64> = d0.iter().map(|v| v + 1.0).collect();
    let mut b = match warm {
        Some(w) if w.len() == n && a_chain(spec, chain, w).is_ok() => w.to_vec(),
        _ => start,
    };
    let mut ev = a_chain(spec, chain, &b)?;
    let best_effort = !preconditions_hold(spec, chain);
    let mut polished = false;
    for it in 0..200 {
        let res = ev.grad_b.iter().map(|g| g.abs()).fold(0.0, f64::max) * two_n;
        let done = res <= 1e-12;
        if done && polished {
            return Ok(BSolve {
                b,
                eval: ev,
                residual: res,
                iterations: it,
                best_effort,
            });
        }
        let g = Vector::from_column_slice(&ev.grad_b);
        let step = match cholesky(&ev.hess_b) {
            Ok(ch) => -ch.solve(&g),
            Err(_) => -&g,
        };
        let slope = g.dot(&step);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = (0..n).map(|x| b[x] + alpha * step[x]).collect();
            if let Ok(e) = a_chain(spec, chain, &trial) {
                let tres = e.grad_b.iter().map(|g| g.abs()).fold(0.0, f64::max) * two_n;
                if e.report.value <= ev.report.value + 1e-4 * alpha * slope || tres < res {
                    accepted = Some((trial, e));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((t, e)) => {
                b = t;
                ev = e;
            }
            None if res <= 1e-9 => {
                return Ok(BSolve {
                    b,
                    eval: ev,
                    residual: res,
                    iterations: it,
                    best_effort,
                })
            }
            None => {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: res,
                })
            }
        }
        if done {
            polished = true;
        }
    }
    let res = ev.grad_b.iter().map(|g| g.abs()).fold(0.0, f64::max) * two_n;
    if res <= 1e-9 {
        Ok(BSolve {
            b,
            eval: ev,
            residual: res,
            iterations: 200,
            best_effort,
        })
    } else {
        Err(Error::NoConvergence {
            iterations: 200,
            residual: res,
        })
    }
}

// --------------------------------------------------- projected minimization

/// Locations per site, each an ordered sequence in `[lo, hi]`.
pub type Locations = Vec<Vec<f64>>;

/// Euclidean projection onto `{lo ≤ v_1 ≤ … ≤ v_k ≤ hi}` (pool-adjacent-violators, then clipping).
pub fn project_isotonic(v: &mut [f64], lo: f64, hi: f64) {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v.iter() {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let c = c1 + c2;
            *blocks.last_mut().unwrap() = ((m1 * c1 as f64 + m2 * c2 as f64) / c as f64, c);
        }
    }
    let mut i = 0;
    for (m, c) in blocks {
        for slot in &mut v[i..i + c] {
            *slot = m.clamp(lo, hi);
        }
        i += c;
    }
}

fn project(x: &mut Locations, lo: f64, hi: f64) {
    for row in x.iter_mut() {
        project_isotonic(row, lo, hi);
    }
}

fn sup_norm(a: &Locations) -> f64 {
    a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max)
}

fn dot(a: &Locations, b: &Locations) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| x * y)
        .sum()
}

fn axpy(x: &Locations, a: f64, d: &Locations) -> Locations {
    x.iter()
        .zip(d)
        .map(|(r, s)| r.iter().zip(s).map(|(u, v)| u + a * v).collect())
        .collect()
}

fn sub(a: &Locations, b: &Locations) -> Locations {
    axpy(a, -1.0, b)
}

/// Result of a projected minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedResult {
    pub x: Locations,
    pub value: f64,
    pub grad: Locations,
    pub iterations: usize,
    pub stationarity: f64,
    pub kkt_violation: f64,
    pub flags: Vec<Vec<KktFlag>>,
}

/// Nonmonotone spectral projected gradient over ordered boxes.
pub fn spg<F>(f: &F, x0: &Locations, lo: f64, hi: f64, max_iter: usize) -> Result<ProjectedResult>
where
    F: Fn(&Locations) -> Result<(f64, Locations)>,
{
    let mut x = x0.clone();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    let mut history = vec![fx];
    let mut best = vec![fx];
    let pg = |x: &Locations, g: &Locations| {
        let mut t = axpy(x, -1.0, g);
        project(&mut t, lo, hi);
        sup_norm(&sub(&t, x))
    };
    let mut alpha = 1.0 / pg(&x, &g).max(1e-10);
    alpha = alpha.clamp(1e-10, 1e10);
    let mut it = 0;
    while it < max_iter {
        if pg(&x, &g) < 1e-12 {
            break;
        }
        if best.len() > STALL_WINDOW
            && best[best.len() - 1 - STALL_WINDOW] - best[best.len() - 1] < STALL_TOL
        {
            break;
        }
        let mut target = axpy(&x, -alpha, &g);
        project(&mut target, lo, hi);
        let d = sub(&target, &x);
        let gd = dot(&g, &d);
        let fmax = history
            .iter()
            .rev()
            .take(10)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let xt = axpy(&x, lambda, &d);
            if let Ok((ft, gt)) = f(&xt) {
                if ft.is_finite() && ft <= fmax + 1e-4 * lambda * gd {
                    accepted = Some((xt, ft, gt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        it += 1;
        let Some((xt, ft, gt)) = accepted else { break };
        let s = sub(&xt, &x);
        let y = sub(&gt, &g);
        let sty = dot(&s, &y);
        alpha = if sty > 0.0 {
            (dot(&s, &s) / sty).clamp(1e-10, 1e10)
        } else {
            1e10_f64.min(alpha * 10.0)
        };
        x = xt;
        fx = ft;
        g = gt;
        history.push(fx);
        best.push(best.last().unwrap().min(fx));
    }
    Ok(ProjectedResult {
        x,
        value: fx,
        grad: g,
        iterations: it,
        stationarity: f64::NAN,
        kkt_violation: f64::NAN,
        flags: vec![],
    })
}

#[derive(Debug, Clone)]
struct Block {
    site: usize,
    start: usize,
    end: usize,
    fixed: Option<f64>,
}

fn identify_blocks(x: &Locations, lo: f64, hi: f64, tol: f64) -> Vec<Block> {
    let mut out = vec![];
    for (site, row) in x.iter().enumerate() {
        let mut i = 0;
        while i < row.len() {
            let mut j = i + 1;
            while j < row.len() && (row[j] - row[j - 1]).abs() <= tol {
                j += 1;
            }
            let mean = row[i..j].iter().sum::<f64>() / (j - i) as f64;
            let fixed = if mean - lo <= tol {
                Some(lo)
            } else if hi - mean <= tol {
                Some(hi)
            } else {
                None
            };
            out.push(Block {
                site,
                start: i,
                end: j,
                fixed,
            });
            i = j;
        }
    }
    out
}

fn apply_blocks(blocks: &[Block], z: &[f64], shape: &Locations) -> Locations {
    let mut x = shape.clone();
    let mut k = 0;
    for b in blocks {
        let v = match b.fixed {
            Some(v) => v,
            None => {
                k += 1;
                z[k - 1]
            }
        };
        for slot in &mut x[b.site][b.start..b.end] {
            *slot = v;
        }
    }
    x
}

fn free_values(blocks: &[Block], x: &Locations) -> Vec<f64> {
    blocks
        .iter()
        .filter(|b| b.fixed.is_none())
        .map(|b| x[b.site][b.start..b.end].iter().sum::<f64>() / (b.end - b.start) as f64)
        .collect()
}

fn reduced(blocks: &[Block], g: &Locations) -> Vec<f64> {
    blocks
        .iter()
        .filter(|b| b.fixed.is_none())
        .map(|b| g[b.site][b.start..b.end].iter().sum())
        .collect()
}

/// Multiplier-sign violations and per-coordinate flags for a block structure.
fn kkt_report(
    blocks: &[Block],
    g: &Locations,
    lo: f64,
    hi: f64,
) -> (f64, Vec<Vec<KktFlag>>, Option<(usize, usize)>) {
    let mut flags: Vec<Vec<KktFlag>> = g.iter().map(|r| vec![KktFlag::Interior; r.len()]).collect();
    let mut worst = 0.0f64;
    let mut split = None;
    for (bi, b) in blocks.iter().enumerate() {
        let gs = &g[b.site][b.start..b.end];
        let len = b.end - b.start;
        for k in b.start..b.end {
            flags[b.site][k] = match b.fixed {
                Some(v) if v == lo => KktFlag::Lower,
                Some(_) => KktFlag::Upper,
                None if len > 1 => KktFlag::Chain,
                None => KktFlag::Interior,
            };
        }
        // Moving a prefix down or a suffix up must not decrease the objective.
        let total: f64 = gs.iter().sum();
        let mut prefix = 0.0;
        for t in 0..len {
            prefix += gs[t];
            let suffix = total - prefix + gs[t];
            let down_ok = b.fixed != Some(lo) || t + 1 < len;
            let v_down = if down_ok && !(b.fixed == Some(lo)) {
                prefix.max(0.0)
            } else {
                0.0
            };
            let v_up = if b.fixed != Some(hi) || t > 0 {
                (-suffix).max(0.0)
            } else {
                0.0
            };
            let v_up = if b.fixed == Some(hi) && t == 0 {
                0.0
            } else {
                v_up
            };
            let v = v_down.max(v_up);
            if v > worst {
                worst = v;
                split = Some((bi, t));
            }
        }
    }
    (worst, flags, split)
}

/// Newton iteration on the face identified at `x`, with chains merged into blocks.
pub fn newton_polish<F>(f: &F, start: &ProjectedResult, lo: f64, hi: f64) -> Result<ProjectedResult>
where
    F: Fn(&Locations) -> Result<(f64, Locations)>,
{
    let mut cur = start.clone();
    let mut tol = 1e-7;
    for _face in 0..8 {
        let blocks = identify_blocks(&cur.x, lo, hi, tol);
        let mut z = free_values(&blocks, &cur.x);
        let mut x = apply_blocks(&blocks, &z, &cur.x);
        let Ok((mut fx, mut g)) = f(&x) else { break };
        let grad_of = |z: &[f64]| -> Option<Vec<f64>> {
            let xt = apply_blocks(&blocks, z, &cur.x);
            f(&xt).ok().map(|(_, g)| reduced(&blocks, &g))
        };
        let mut rg = reduced(&blocks, &g);
        for _ in 0..40 {
            let norm = rg.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if norm < 1e-14 || z.is_empty() {
                break;
            }
            let k = z.len();
            let mut h = Mat::zeros(k, k);
            let mut ok = true;
            for c in 0..k {
                let step = 1e-6 * z[c].abs().max(1e-3);
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[c] += step;
                zm[c] -= step;
                match (grad_of(&zp), grad_of(&zm)) {
                    (Some(gp), Some(gm)) => {
                        for rr in 0..k {
                            h[(rr, c)] = (gp[rr] - gm[rr]) / (2.0 * step);
                        }
                    }
                    _ => ok = false,
                }
            }
            if !ok {
                break;
            }
            let h = (&h + h.transpose()) * 0.5;
            let gv = Vector::from_column_slice(&rg);
            let dir = match cholesky(&h) {
                Ok(ch) => -ch.solve(&gv),
                Err(_) => {
                    let shift = crate::lattice::min_eigenvalue(&h).abs() + 1e-8;
                    match cholesky(&plus_diag(&h, &vec![shift; k])) {
                        Ok(ch) => -ch.solve(&gv),
                        Err(_) => break,
                    }
                }
            };
            let mut lambda = 1.0f64;
            let mut improved = false;
            for _ in 0..30 {
                let zt: Vec<f64> = (0..k).map(|c| z[c] + lambda * dir[c]).collect();
                let xt = apply_blocks(&blocks, &zt, &cur.x);
                let feasible = xt.iter().all(|row| {
                    row.windows(2).all(|w| w[0] <= w[1] + 1e-15)
                        && row.iter().all(|v| *v >= lo && *v <= hi)
                });
                if feasible {
                    if let Ok((ft, gt)) = f(&xt) {
                        let rt = reduced(&blocks, &gt);
                        let nt = rt.iter().map(|v| v.abs()).fold(0.0, f64::max);
                        if nt < norm || ft < fx - 1e-15 {
                            z = zt;
                            x = xt;
                            fx = ft;
                            g = gt;
                            rg = rt;
                            improved = true;
                            break;
                        }
                    }
                }
                lambda *= 0.5;
            }
            if !improved {
                break;
            }
        }
        let (viol, flags, split) = kkt_report(&blocks, &g, lo, hi);
        let stat = rg.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let candidate = ProjectedResult {
            x,
            value: fx,
            grad: g,
            iterations: cur.iterations,
            stationarity: stat,
            kkt_violation: viol,
            flags,
        };
        let better = candidate.value <= cur.value + 1e-12 || !cur.stationarity.is_finite();
        if better {
            cur = candidate;
        }
        if viol <= 1e-9 || split.is_none() {
            break;
        }
        // A violated multiplier: rerun the projected gradient from here and tighten identification.
        let again = spg(f, &cur.x, lo, hi, 2000)?;
        if again.value < cur.value {
            cur = ProjectedResult {
                stationarity: f64::NAN,
                ..again
            };
        }
        tol *= 0.1;
    }
    Ok(cur)
}

/// Projected gradient followed by the face-wise Newton polish.
pub fn minimize_projected<F>(f: &F, x0: &Locations, lo: f64, hi: f64) -> Result<ProjectedResult>
where
    F: Fn(&Locations) -> Result<(f64, Locations)>,
{
    let first = spg(f, x0, lo, hi, 5000)?;
    let mut res = newton_polish(f, &first, lo, hi)?;
    // Face-wise steps can leave tied levels a rounding error apart.
    let mut x = res.x.clone();
    project(&mut x, lo, hi);
    if x != res.x {
        let (value, grad) = f(&x)?;
        res = ProjectedResult {
            x,
            value,
            grad,
            ..res
        };
    }
    Ok(res)
}

// ------------------------------------------------------- objectives and solves

/// Which functional `minimize_s` targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// `ℬ(s, m)`.
    B,
    /// `inf_b 𝒜(s, m, b)`.
    A,
}

/// Talagrand profile from weights `m_1..m_{r−1}` and locations `s¹..s^r`.
pub fn talagrand_from(m_inner: &[f64], s: &Locations) -> TalagrandProfile {
    let mut m = vec![0.0];
    m.extend_from_slice(m_inner);
    m.push(1.0);
    let s = s
        .iter()
        .map(|row| {
            let mut v = vec![0.0];
            v.extend_from_slice(row);
            v.push(1.0);
            v
        })
        .collect();
    TalagrandProfile { m, s }
}

fn chain_from_talagrand_parts(m_inner: &[f64], s: &Locations) -> LevelChain {
    let mut w = m_inner.to_vec();
    w.push(1.0);
    let p = s
        .iter()
        .map(|row| {
            let mut v = row.clone();
            v.push(1.0);
            v
        })
        .collect();
    LevelChain { w, p }
}

/// Objective `s ↦ ℬ(s, m)` with its analytic gradient.
pub fn b_objective<'a>(
    spec: &'a SphericalModelSpec,
    m_inner: &'a [f64],
) -> impl Fn(&Locations) -> Result<(f64, Locations)> + 'a {
    move |s: &Locations| {
        let p = talagrand_from(m_inner, s);
        let r = b_discrete(spec, &p)?;
        Ok((r.report.value, r.grad_s))
    }
}

/// Objective `p ↦ inf_b 𝒜(chain(p), b)` with gradient by the envelope identity; warm-started in `b`.
pub struct AObjective<'a> {
    spec: &'a SphericalModelSpec,
    weights: Vec<f64>,
    /// Panchenko chains pin `p⁰ = 0`; Talagrand chains leave it free.
    pinned_bottom: bool,
    warm: RefCell<Option<Vec<f64>>>,
}

impl<'a> AObjective<'a> {
    /// Talagrand form: free locations `s¹..s^r`.
    pub fn talagrand(spec: &'a SphericalModelSpec, m_inner: &[f64]) -> Self {
        let mut w = m_inner.to_vec();
        w.push(1.0);
        Self {
            spec,
            weights: w,
            pinned_bottom: false,
            warm: RefCell::new(None),
        }
    }

    /// Panchenko form: weights `t_0..t_{r−1}`, free locations `q¹..q^{r−1}`.
    pub fn panchenko(spec: &'a SphericalModelSpec, t: &[f64]) -> Self {
        Self {
            spec,
            weights: t.to_vec(),
            pinned_bottom: true,
            warm: RefCell::new(None),
        }
    }

    /// Level chain for free locations `x`.
    pub fn chain(&self, x: &Locations) -> LevelChain {
        let p = x
            .iter()
            .map(|row| {
                let mut v = if self.pinned_bottom {
                    vec![0.0]
                } else {
                    vec![]
                };
                v.extend_from_slice(row);
                v.push(1.0);
                v
            })
            .collect();
        LevelChain {
            w: self.weights.clone(),
            p,
        }
    }

    /// Value and gradient at `x`, with the minimizing `b`.
    pub fn eval_full(&self, x: &Locations) -> Result<(f64, Locations, BSolve)> {
        let chain = self.chain(x);
        let warm = self.warm.borrow().clone();
        let sol = minimize_b(self.spec, &chain, warm.as_deref())?;
        *self.warm.borrow_mut() = Some(sol.b.clone());
        let off = usize::from(self.pinned_bottom);
        let g = sol
            .eval
            .grad_p
            .iter()
            .map(|row| row[off..].to_vec())
            .collect();
        Ok((sol.eval.report.value, g, sol))
    }

    /// Value and gradient at `x`.
    pub fn eval(&self, x: &Locations) -> Result<(f64, Locations)> {
        self.eval_full(x).map(|(v, g, _)| (v, g))
    }
}

/// Certificate of a Talagrand profile: critical-equation residuals and `|𝒜 − ℬ|` at the optimal `b`.
pub fn certify_talagrand(spec: &SphericalModelSpec, p: &TalagrandProfile) -> Result<Certificate> {
    let r = p.r();
    let n = spec.n();
    let bd = b_discrete(spec, p)?;
    let mut cs1 = 0.0f64;
    for l in 1..r {
        for x in 0..n {
            let lhs = p.m[l] * (spec.xi[x].d1(p.s[x][l + 1]) - spec.xi[x].d1(p.s[x][l]));
            let rhs = bd.points[l].k[x] - bd.points[l - 1].k[x];
            cs1 = cs1.max((lhs - rhs).abs());
        }
    }
    let chain = LevelChain::from_talagrand(p);
    let sol = minimize_b(spec, &chain, None)?;
    let d = chain.d_sequence(&spec.xi);
    let neg: Vec<f64> = d[r - 1].iter().map(|v| -v).collect();
    let g = inverse_pd(&plus_diag(&plus_diag(&spec.d, &sol.b), &neg))?;
    let csb = (0..n)
        .map(|x| (g[(x, x)] - (1.0 - p.s[x][r])).abs())
        .fold(0.0, f64::max);
    Ok(Certificate {
        value: bd.report.value,
        residual_cs1: cs1,
        residual_csb: csb,
        gap_ab: (sol.eval.report.value - bd.report.value).abs(),
        ..Default::default()
    })
}

/// Minimizer over locations at fixed weights.
#[derive(Debug, Clone)]
pub struct SSolve {
    pub profile: TalagrandProfile,
    pub value: f64,
    pub b: Option<Vec<f64>>,
    pub certificate: Certificate,
    pub iterations: usize,
}

/// Minimizes `ℬ` or `inf_b 𝒜` over Talagrand locations at fixed `m`.
pub fn minimize_s(
    spec: &SphericalModelSpec,
    m_inner: &[f64],
    target: Target,
    start: Option<&Locations>,
) -> Result<SSolve> {
    let r = m_inner.len() + 1;
    let n = spec.n();
    // Without a start, spread levels over three heights: a single start can land on a
    // degenerate critical point (for example every level at 0 with zero gradient).
    let starts: Vec<Locations> = match start {
        Some(s) => vec![s.clone()],
        None => [0.5, 0.2, 0.8]
            .iter()
            .map(|top| vec![(1..=r).map(|k| top * k as f64 / r as f64).collect(); n])
            .collect(),
    };
    let hi = 1.0 - ETA;
    let solve = |x0: &Locations| match target {
        Target::B => minimize_projected(&b_objective(spec, m_inner), x0, 0.0, hi),
        Target::A => {
            let obj = AObjective::talagrand(spec, m_inner);
            minimize_projected(&|x: &Locations| obj.eval(x), x0, 0.0, hi)
        }
    };
    let mut res: Option<ProjectedResult> = None;
    for x0 in &starts {
        let cand = solve(x0)?;
        if res
            .as_ref()
            .is_none_or(|best| cand.value < best.value - 1e-13)
        {
            res = Some(cand);
        }
    }
    let res = res.expect("at least one start");
    let profile = talagrand_from(m_inner, &res.x);
    let mut cert = certify_talagrand(spec, &profile)?;
    let b = match target {
        Target::A => {
            let sol = minimize_b(spec, &chain_from_talagrand_parts(m_inner, &res.x), None)?;
            cert.value = sol.eval.report.value;
            Some(sol.b)
        }
        Target::B => None,
    };
    cert.stationarity = res.stationarity;
    cert.kkt_violation = res.kkt_violation;
    cert.kkt_flags = res.flags.clone();
    Ok(SSolve {
        profile,
        value: res.value,
        b,
        certificate: cert,
        iterations: res.iterations,
    })
}

// ------------------------------------------------------------ full minimization

/// Parameterization used by [`minimize_full`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Form {
    /// Talagrand `(m, s)` with `r` levels, minimizing `ℬ`.
    TalagrandB,
    /// Talagrand `(m, s)` with `r` levels, minimizing `inf_b 𝒜`.
    TalagrandA,
    /// Panchenko `(t, q)` with `r` levels, minimizing `inf_b 𝒜`; weights range over the closed simplex.
    PanchenkoA,
}

/// Result of the full minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullSolve {
    pub value: f64,
    /// Free weights (`m_1..m_{r−1}` or `t_0..t_{r−1}`).
    pub weights: Vec<f64>,
    /// Free locations per site.
    pub locations: Locations,
    pub b: Option<Vec<f64>>,
    pub certificate: Option<Certificate>,
    /// Best value reached from each start, in start order.
    pub start_values: Vec<f64>,
    /// Spread between the two best starts.
    pub disagreement: f64,
}

fn weight_bounds(form: Form) -> (f64, f64, f64) {
    match form {
        Form::TalagrandA | Form::TalagrandB => (1e-6, 1.0 - 1e-6, 1e-9),
        Form::PanchenkoA => (0.0, 1.0, 0.0),
    }
}

fn project_weights(w: &mut [f64], form: Form) {
    let (lo, hi, gap) = weight_bounds(form);
    project_isotonic(w, lo, hi);
    let k = w.len();
    for i in 1..k {
        w[i] = w[i].max(w[i - 1] + gap);
    }
    for i in (0..k).rev() {
        let cap = hi - gap * (k - 1 - i) as f64;
        w[i] = w[i].min(cap);
        if i + 1 < k {
            w[i] = w[i].min(w[i + 1] - gap);
        }
    }
}

fn location_bounds(form: Form) -> (f64, f64) {
    match form {
        Form::TalagrandA | Form::TalagrandB => (0.0, 1.0 - ETA),
        Form::PanchenkoA => (0.0, 1.0),
    }
}

fn inner_solve(
    spec: &SphericalModelSpec,
    form: Form,
    w: &[f64],
    x0: &Locations,
) -> Result<(f64, ProjectedResult)> {
    let (lo, hi) = location_bounds(form);
    let res = match form {
        Form::TalagrandB => minimize_projected(&b_objective(spec, w), x0, lo, hi)?,
        Form::TalagrandA => {
            let obj = AObjective::talagrand(spec, w);
            minimize_projected(&|x: &Locations| obj.eval(x), x0, lo, hi)?
        }
        Form::PanchenkoA => {
            let obj = AObjective::panchenko(spec, w);
            if x0.first().is_none_or(|r| r.is_empty()) {
                let (v, g) = obj.eval(x0)?;
                ProjectedResult {
                    x: x0.clone(),
                    value: v,
                    grad: g,
                    iterations: 0,
                    stationarity: 0.0,
                    kkt_violation: 0.0,
                    flags: vec![vec![]; x0.len()],
                }
            } else {
                minimize_projected(&|x: &Locations| obj.eval(x), x0, lo, hi)?
            }
        }
    };
    Ok((res.value, res))
}

/// Outer minimization over weights from one start.
fn solve_from(
    spec: &SphericalModelSpec,
    form: Form,
    w0: Vec<f64>,
    x0: Locations,
) -> Result<(f64, Vec<f64>, Locations)> {
    let cache = RefCell::new(x0);
    let value = |w: &[f64]| -> Result<f64> {
        let start = cache.borrow().clone();
        let (v, res) = inner_solve(spec, form, w, &start)?;
        *cache.borrow_mut() = res.x;
        Ok(v)
    };
    let mut w = w0;
    project_weights(&mut w, form);
    let mut fw = value(&w)?;
    if w.is_empty() {
        let x = cache.borrow().clone();
        return Ok((fw, w, x));
    }
    let mut best_x = cache.borrow().clone();
    let grad = |w: &[f64], fw: f64| -> Result<Vec<f64>> {
        let (lo, hi, _) = weight_bounds(form);
        (0..w.len())
            .map(|i| {
                let h = 1e-5;
                let up = (w[i] + h).min(hi);
                let dn = (w[i] - h).max(lo);
                let mut wp = w.to_vec();
                wp[i] = up;
                let mut wm = w.to_vec();
                wm[i] = dn;
                let fp = if up > w[i] { value(&wp)? } else { fw };
                let fm = if dn < w[i] { value(&wm)? } else { fw };
                Ok((fp - fm) / (up - dn))
            })
            .collect()
    };
    let mut g = grad(&w, fw)?;
    *cache.borrow_mut() = best_x.clone();
    let mut alpha = 0.1;
    let mut history = vec![fw];
    for _ in 0..200 {
        let n = history.len();
        if n > STALL_WINDOW && history[n - 1 - STALL_WINDOW] - history[n - 1] < STALL_TOL {
            break;
        }
        let mut target: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
        project_weights(&mut target, form);
        let d: Vec<f64> = target.iter().zip(&w).map(|(a, b)| a - b).collect();
        if d.iter().all(|v| v.abs() < 1e-12) {
            break;
        }
        let gd: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let wt: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + lambda * b).collect();
            *cache.borrow_mut() = best_x.clone();
            if let Ok(ft) = value(&wt) {
                if ft <= fw + 1e-4 * lambda * gd {
                    accepted = Some((wt, ft, cache.borrow().clone()));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((wt, ft, xt)) = accepted else { break };
        best_x = xt;
        let s: Vec<f64> = wt.iter().zip(&w).map(|(a, b)| a - b).collect();
        *cache.borrow_mut() = best_x.clone();
        let gt = grad(&wt, ft)?;
        *cache.borrow_mut() = best_x.clone();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sty: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sts: f64 = s.iter().map(|a| a * a).sum();
        alpha = if sty > 0.0 {
            (sts / sty).clamp(1e-6, 1e3)
        } else {
            (alpha * 4.0).min(1e3)
        };
        w = wt;
        fw = ft;
        g = gt;
        history.push(fw);
    }
    Ok((fw, w, best_x))
}

/// Latin-hypercube samples in `[0,1]^dim`.
pub fn latin_hypercube(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, "lhs", 0);
    let mut cols: Vec<Vec<f64>> = (0..dim)
        .map(|_| {
            let mut perm: Vec<usize> = (0..count).collect();
            perm.shuffle(&mut rng);
            perm.into_iter()
                .map(|k| (k as f64 + rng.random::<f64>()) / count as f64)
                .collect()
        })
        .collect();
    (0..count)
        .map(|i| cols.iter_mut().map(|c| c[i]).collect())
        .collect()
}

fn increments_to_sorted(u: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let total: f64 = u.iter().sum::<f64>() + 1.0;
    let mut acc = 0.0;
    u.iter()
        .map(|v| {
            acc += v;
            lo + (hi - lo) * acc / total
        })
        .collect()
}

/// Infimum over profiles with `r` levels by multistart.
pub fn minimize_full(
    spec: &SphericalModelSpec,
    r: usize,
    form: Form,
    multistart: usize,
    seed: u64,
) -> Result<FullSolve> {
    if r < 1 {
        return Err(Error::InvalidInput("r must be at least 1".into()));
    }
    let n = spec.n();
    let (nw, nloc) = match form {
        Form::TalagrandA | Form::TalagrandB => (r - 1, r),
        Form::PanchenkoA => (r, r - 1),
    };
    let starts = multistart.max(1);
    let samples = latin_hypercube(starts, nw + 1 + n * (nloc + 1), seed);
    let results: Vec<Result<(f64, Vec<f64>, Locations)>> = samples
        .par_iter()
        .map(|u| {
            let (lo, hi, _) = weight_bounds(form);
            let w0 = increments_to_sorted(&u[..nw], lo, hi);
            let (llo, lhi) = location_bounds(form);
            let x0: Locations = (0..n)
                .map(|x| {
                    let off = nw + 1 + x * (nloc + 1);
                    increments_to_sorted(&u[off..off + nloc], llo, lhi * 0.95)
                })
                .collect();
            solve_from(spec, form, w0, x0)
        })
        .collect();
    let mut ok: Vec<(usize, f64, Vec<f64>, Locations)> = vec![];
    let mut last_err = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((v, w, x)) => ok.push((i, v, w, x)),
            Err(e) => last_err = Some(e),
        }
    }
    if ok.is_empty() {
        return Err(last_err.unwrap_or(Error::NoConvergence {
            iterations: 0,
            residual: f64::NAN,
        }));
    }
    let mut start_values = vec![f64::NAN; starts];
    for (i, v, _, _) in &ok {
        start_values[*i] = *v;
    }
    ok.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let disagreement = if ok.len() > 1 { ok[1].1 - ok[0].1 } else { 0.0 };
    let (_, value, weights, locations) = ok.swap_remove(0);
    let (certificate, b) = match form {
        Form::TalagrandA | Form::TalagrandB => {
            let p = talagrand_from(&weights, &locations);
            let c = certify_talagrand(spec, &p).ok();
            let b = if form == Form::TalagrandA {
                Some(
                    minimize_b(
                        spec,
                        &chain_from_talagrand_parts(&weights, &locations),
                        None,
                    )?
                    .b,
                )
            } else {
                None
            };
            (c, b)
        }
        Form::PanchenkoA => {
            let obj = AObjective::panchenko(spec, &weights);
            (None, Some(obj.eval_full(&locations)?.2.b))
        }
    };
    Ok(FullSolve {
        value,
        weights,
        locations,
        b,
        certificate,
        start_values,
        disagreement,
    })
}

// --------------------------------------------------------------- sup over q

/// Outcome of the outer sup over `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupResult {
    pub q: Vec<f64>,
    pub value: f64,
    /// `(constant q, value)` on the coarse grid.
    pub table: Vec<(f64, f64)>,
    pub inner: FullSolve,
}

/// `inf` over unit profiles of the mapped problem at caps `q`, plus the constant offset.
pub fn inner_value(
    spec: &EuclideanModelSpec,
    q: &[f64],
    r: usize,
    multistart: usize,
    seed: u64,
) -> Result<(f64, FullSolve)> {
    let unit = reparameterize_beta(spec);
    let sph = mapped_spherical_spec(&unit, q)?;
    let sol = minimize_full(&sph, r, Form::TalagrandB, multistart, seed)?;
    Ok((sol.value + mapped_offset(&unit, q), sol))
}

fn golden_max<F: Fn(f64) -> Result<f64>>(
    f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc > fd { (c, fc) } else { (d, fd) })
}

/// `sup_q inf 𝒫` over `q ∈ [m, 1/m]^Ω`: log-grid over constant `q`, then coordinate ascent in `log q`.
pub fn sup_over_q(
    spec: &EuclideanModelSpec,
    box_m: f64,
    r: usize,
    grid: usize,
    multistart: usize,
    seed: u64,
) -> Result<SupResult> {
    spec.validate()?;
    if !(box_m > 0.0 && box_m < 1.0) || grid < 3 {
        return Err(Error::InvalidInput(
            "box parameter must lie in (0,1) and grid ≥ 3".into(),
        ));
    }
    let n = spec.lattice.n_sites();
    let (lo, hi) = (box_m.ln(), (1.0 / box_m).ln());
    let eval = |q: &[f64]| inner_value(spec, q, r, multistart, seed).map(|v| v.0);
    let table: Vec<(f64, f64)> = (0..grid)
        .into_par_iter()
        .map(|i| {
            let lq = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
            let q = lq.exp();
            eval(&vec![q; n]).map(|v| (q, v))
        })
        .collect::<Result<_>>()?;
    let best = (0..grid)
        .max_by(|a, b| table[*a].1.total_cmp(&table[*b].1))
        .unwrap();
    let step = (hi - lo) / (grid - 1) as f64;
    let a = (table[best].0.ln() - step).max(lo);
    let b = (table[best].0.ln() + step).min(hi);
    let (lq, mut value) = golden_max(|lq| eval(&vec![lq.exp(); n]), a, b, 1e-7)?;
    let mut q = vec![lq.exp(); n];
    if n > 1 {
        for _sweep in 0..3 {
            let before = value;
            for x in 0..n {
                let center = q[x].ln();
                let f = |l: f64| {
                    let mut qq = q.clone();
                    qq[x] = l.exp();
                    eval(&qq)
                };
                let (l, v) = golden_max(f, (center - 0.1).max(lo), (center + 0.1).min(hi), 1e-7)?;
                if v > value {
                    value = v;
                    q[x] = l.exp();
                }
            }
            if value - before < STALL_TOL {
                break;
            }
        }
    }
    let (value, inner) = inner_value(spec, &q, r, multistart, seed)?;
    Ok(SupResult {
        q,
        value,
        table,
        inner,
    })
}

// ---------------------------------------------------------------- boundary gap

/// `𝒢_x(q_M) = Σ_y ∫₀^{q_M} ∇_yK_x(δ(u)) Φ′_y(u) du + ξ′_x(Φ_x(q_M)) − Σ_w ∇_wK_x(δ(0)) [(D+K(δ(0)))⁻¹h]_w²`.
pub fn boundary_gap(
    spec: &SphericalModelSpec,
    c: &ContinuumProfile,
    q_m: f64,
    nodes: usize,
) -> Result<Vec<f64>> {
    let n = spec.n();
    let gl = GaussLegendre::new(nodes);
    let mut out = vec![0.0; n];
    for i in 0..c.knots.len() - 1 {
        let (a, b) = (c.knots[i], c.knots[i + 1].min(q_m));
        if b <= a {
            continue;
        }
        let slope = c.slope(i);
        for (u, w) in gl.mapped(a, b) {
            let j = solve_k(&spec.d, &delta_of(c, u), DEFAULT_TOL)?.grad_k()?;
            for x in 0..n {
                out[x] += w * (0..n).map(|y| j[(x, y)] * slope[y]).sum::<f64>();
            }
        }
    }
    let at = c.phi_at(q_m);
    let base = solve_k(&spec.d, &delta_of(c, 0.0), DEFAULT_TOL)?;
    let j0 = base.grad_k()?;
    let rh: Vec<f64> = (0..n)
        .map(|x| (0..n).map(|y| base.resolvent[(x, y)] * spec.h[y]).sum())
        .collect();
    for x in 0..n {
        out[x] += spec.xi[x].d1(at[x]) - (0..n).map(|w| j0[(x, w)] * rh[w] * rh[w]).sum::<f64>();
    }
    Ok(out)
}

/// `δ` sequence helper re-exported for certificates.
pub fn deltas(p: &TalagrandProfile) -> Vec<Vec<f64>> {
    delta_sequence(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::MixingFunction;

    #[test]
    fn isotonic_projection() {
        let mut v = [0.5, 0.2, 0.9, -0.1];
        project_isotonic(&mut v, 0.0, 0.8);
        assert_eq!(v, [0.35, 0.35, 0.4, 0.4]);
        let mut w = [0.1, 0.2, 0.3];
        project_isotonic(&mut w, 0.0, 1.0);
        assert_eq!(w, [0.1, 0.2, 0.3]);
    }

    #[test]
    fn b_star_zero_xi_one_site() {
        let spec =
            SphericalModelSpec::new(Mat::zeros(1, 1), vec![MixingFunction::zero()], vec![0.0])
                .unwrap();
        let chain = LevelChain {
            w: vec![1.0],
            p: vec![vec![0.0, 1.0]],
        };
        let sol = minimize_b(&spec, &chain, None).unwrap();
        assert!((sol.b[0] - 1.0).abs() < 1e-10);
        assert!(sol.best_effort);
    }

    #[test]
    fn b_star_rs_one_site() {
        let spec = SphericalModelSpec::new(
            Mat::zeros(1, 1),
            vec![MixingFunction::new(vec![0.0, 0.0, 1.0]).unwrap()],
            vec![0.0],
        )
        .unwrap();
        let chain = LevelChain {
            w: vec![1.0],
            p: vec![vec![0.0, 1.0]],
        };
        let sol = minimize_b(&spec, &chain, None).unwrap();
        assert!((sol.b[0] - 3.0).abs() < 1e-10);
        assert!(sol.residual < 1e-10);
    }
}
