//! The functionals `ℬ`, `𝒜`, `𝒫`, `Y^b`, `W` and `Γ₂`: discrete closed forms,
//! continuum quadrature forms, and the spherical↔Euclidean mapping.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kdual::{solve_k, DualPoint, DEFAULT_TOL};
use crate::lattice::{
    build_periodic_laplacian, cholesky, inverse_pd, logdet_and_inverse, plus_diag, CouplingMatrix,
    LatticeSpec, Mat,
};
use crate::mixing::{spherical_restriction_auto, CorrelationFunction, MixingFunction};
use crate::profiles::{
    d_of, delta_of, delta_sequence, ContinuumProfile, PanchenkoProfile, ProfileDomain,
    TalagrandProfile,
};
use crate::quad::GaussLegendre;

/// Default Gauss–Legendre nodes per segment.
pub const DEFAULT_NODES: usize = 32;
/// Tail tolerance for spherical restrictions inside the mapped route.
pub const RESTRICTION_TOL: f64 = 1e-14;

/// Spherical model: coupling `D`, per-site mixing `ξ_x` and field `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalModelSpec {
    pub d: Mat,
    pub xi: Vec<MixingFunction>,
    pub h: Vec<f64>,
}

impl SphericalModelSpec {
    /// Validates shapes, `D` and the mixing functions.
    pub fn new(d: Mat, xi: Vec<MixingFunction>, h: Vec<f64>) -> Result<Self> {
        let c = CouplingMatrix::from_matrix(d)?;
        if xi.len() != c.n() || h.len() != c.n() {
            return Err(Error::InvalidInput(format!(
                "need {} mixing functions and field entries, got {} and {}",
                c.n(),
                xi.len(),
                h.len()
            )));
        }
        for f in &xi {
            f.validate()?;
        }
        Ok(Self {
            d: c.matrix().clone(),
            xi,
            h,
        })
    }

    /// Number of sites.
    pub fn n(&self) -> usize {
        self.h.len()
    }

    /// The same model with every `ξ_x` scaled by `c`.
    pub fn with_xi_scaled(&self, c: f64) -> Self {
        Self {
            xi: self.xi.iter().map(|f| f.scaled(c)).collect(),
            ..self.clone()
        }
    }
}

/// Euclidean elastic manifold at inverse temperature `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EuclideanModelSpec {
    pub lattice: LatticeSpec,
    pub b: CorrelationFunction,
    pub h: f64,
    pub beta: f64,
}

impl EuclideanModelSpec {
    /// Rejects invalid lattice, correlation or temperature.
    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        self.b.validate()?;
        if !(self.beta > 0.0 && self.beta.is_finite()) || !self.h.is_finite() {
            return Err(Error::InvalidInput(
                "beta must be positive and h finite".into(),
            ));
        }
        Ok(())
    }
}

/// `(h, μ, t, B) ↦ (βh, βμ, βt, β²B)` at `β = 1`.
pub fn reparameterize_beta(spec: &EuclideanModelSpec) -> EuclideanModelSpec {
    let b = spec.beta;
    EuclideanModelSpec {
        lattice: LatticeSpec {
            mu: spec.lattice.mu * b,
            t: spec.lattice.t * b,
            ..spec.lattice
        },
        b: spec.b.scaled(b * b),
        h: spec.h * b,
        beta: 1.0,
    }
}

/// A functional value with its additive terms and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvaluationReport {
    pub value: f64,
    pub terms: BTreeMap<String, f64>,
    pub residuals: BTreeMap<String, f64>,
    pub domain_flags: Vec<String>,
}

impl EvaluationReport {
    fn from_terms(terms: Vec<(&str, f64)>) -> Self {
        let value = terms.iter().map(|(_, v)| v).sum();
        Self {
            value,
            terms: terms.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            ..Default::default()
        }
    }

    fn residual(mut self, name: &str, v: f64) -> Self {
        self.residuals.insert(name.to_string(), v);
        self
    }
}

fn quadratic_form(m: &Mat, h: &[f64]) -> f64 {
    let n = h.len();
    (0..n)
        .map(|x| (0..n).map(|y| m[(x, y)] * h[x] * h[y]).sum::<f64>())
        .sum()
}

fn mat_vec(m: &Mat, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|x| (0..v.len()).map(|y| m[(x, y)] * v[y]).sum())
        .collect()
}

fn check_sites(spec: &SphericalModelSpec, n: usize) -> Result<()> {
    if n != spec.n() {
        return Err(Error::InvalidInput(format!(
            "profile has {n} sites, model has {}",
            spec.n()
        )));
    }
    Ok(())
}

fn domain_err(e: Error, what: &str) -> Error {
    match e {
        Error::NotPositiveDefinite { .. } => {
            Error::DomainViolation(format!("{what} is not positive definite"))
        }
        other => other,
    }
}

// ---------------------------------------------------------------- ℬ (discrete)

/// Value and location gradient of the discrete `ℬ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BDiscrete {
    pub report: EvaluationReport,
    /// `∂ℬ/∂s^j_x`, indexed `[x][j − 1]` for `j = 1..r`.
    pub grad_s: Vec<Vec<f64>>,
    /// Dual points at `δ¹..δ^r`.
    pub points: Vec<DualPoint>,
}

/// Discrete `ℬ(s, m)` with its gradient in the locations.
pub fn b_discrete(spec: &SphericalModelSpec, p: &TalagrandProfile) -> Result<BDiscrete> {
    check_sites(spec, p.n_sites())?;
    p.check()?;
    let n = spec.n();
    let nf = n as f64;
    let r = p.r();
    let delta = delta_sequence(p);
    let points: Vec<DualPoint> = (0..r)
        .map(|l| solve_k(&spec.d, &delta[l], DEFAULT_TOL))
        .collect::<Result<_>>()?;
    let inv_m = |k: usize| if k == 0 { 0.0 } else { 1.0 / p.m[k] };
    let c: Vec<f64> = (1..=r).map(|l| inv_m(l) - inv_m(l - 1)).collect();

    let lambda_term: f64 = (0..r).map(|l| c[l] * points[l].lambda()).sum::<f64>() * 0.5;
    let p1 = &points[0];
    let ks1: f64 = (0..n).map(|x| p1.k[x] * p.s[x][1]).sum::<f64>() / (2.0 * nf);
    let xi_term: f64 = (0..n)
        .map(|x| {
            (1..=r)
                .map(|k| p.m[k] * (spec.xi[x].value(p.s[x][k + 1]) - spec.xi[x].value(p.s[x][k])))
                .sum::<f64>()
        })
        .sum::<f64>()
        / (2.0 * nf);
    let field = quadratic_form(&p1.resolvent, &spec.h) / (2.0 * nf);
    let mut report = EvaluationReport::from_terms(vec![
        ("entropy", 0.5 * (2.0 * PI).ln()),
        ("lambda", lambda_term),
        ("k_s1", ks1),
        ("xi", xi_term),
        ("field", field),
    ]);
    let max_res = points.iter().map(|q| q.residual).fold(0.0, f64::max);
    report.residuals.insert("duality".into(), max_res);

    let j1 = p1.grad_k()?;
    let rh = mat_vec(&p1.resolvent, &spec.h);
    let coef: Vec<f64> = (0..n)
        .map(|x| {
            (0..n)
                .map(|y| (p.s[y][1] - rh[y] * rh[y]) * j1[(y, x)])
                .sum()
        })
        .collect();
    let mut grad_s = vec![vec![0.0; r]; n];
    for x in 0..n {
        for j in 1..=r {
            let dd = |l: usize| -> f64 {
                if l < j {
                    p.m[j - 1] - p.m[j]
                } else if l == j {
                    -p.m[j]
                } else {
                    0.0
                }
            };
            let mut g: f64 = (1..=j).map(|l| c[l - 1] * points[l - 1].k[x] * dd(l)).sum();
            if j == 1 {
                g += p1.k[x];
            }
            g += coef[x] * dd(1);
            g += (p.m[j - 1] - p.m[j]) * spec.xi[x].d1(p.s[x][j]);
            grad_s[x][j - 1] = g / (2.0 * nf);
        }
    }
    Ok(BDiscrete {
        report,
        grad_s,
        points,
    })
}

/// Discrete `ℬ`.
pub fn eval_b_discrete(
    spec: &SphericalModelSpec,
    p: &TalagrandProfile,
) -> Result<EvaluationReport> {
    Ok(b_discrete(spec, p)?.report)
}

// -------------------------------------------------------------- ℬ (continuum)

/// Segments of the knot partition clipped to `[lo, hi]`, with their segment index.
fn clipped_segments(c: &ContinuumProfile, lo: f64, hi: f64) -> Vec<(usize, f64, f64)> {
    (0..c.knots.len() - 1)
        .filter_map(|i| {
            let a = c.knots[i].max(lo);
            let b = c.knots[i + 1].min(hi);
            (b > a).then_some((i, a, b))
        })
        .collect()
}

fn b_continuum_value(
    spec: &SphericalModelSpec,
    c: &ContinuumProfile,
    gl: &GaussLegendre,
) -> Result<Vec<(String, f64)>> {
    let n = spec.n();
    let nf = n as f64;
    let qs = c.q_star;
    let top = solve_k(&spec.d, &delta_of(c, qs), DEFAULT_TOL)?;
    let mut k_int = 0.0;
    for (i, a, b) in clipped_segments(c, 0.0, qs) {
        let slope = c.slope(i);
        for (u, w) in gl.mapped(a, b) {
            let pt = solve_k(&spec.d, &delta_of(c, u), DEFAULT_TOL)?;
            k_int += w * (0..n).map(|x| pt.k[x] * slope[x]).sum::<f64>();
        }
    }
    let mut xi_int = 0.0;
    for (i, a, b) in clipped_segments(c, 0.0, c.q_t()) {
        let f = c.segment_cdf(i);
        if f == 0.0 {
            continue;
        }
        let slope = c.slope(i);
        for (u, w) in gl.mapped(a, b) {
            let ph = c.phi_at(u);
            xi_int += w * f * (0..n).map(|x| spec.xi[x].d1(ph[x]) * slope[x]).sum::<f64>();
        }
    }
    let base = solve_k(&spec.d, &delta_of(c, 0.0), DEFAULT_TOL)?;
    let field = quadratic_form(&base.resolvent, &spec.h);
    Ok(vec![
        ("entropy".into(), 0.5 * (2.0 * PI).ln()),
        ("lambda".into(), 0.5 * top.lambda()),
        ("k_integral".into(), k_int / (2.0 * nf)),
        ("xi".into(), xi_int / (2.0 * nf)),
        ("field".into(), field / (2.0 * nf)),
    ])
}

fn report_with_doubling<F>(nodes: usize, f: F) -> Result<EvaluationReport>
where
    F: Fn(&GaussLegendre) -> Result<Vec<(String, f64)>>,
{
    let coarse = f(&GaussLegendre::new(nodes))?;
    let fine = f(&GaussLegendre::new(2 * nodes))?;
    let value: f64 = coarse.iter().map(|(_, v)| v).sum();
    let fine_value: f64 = fine.iter().map(|(_, v)| v).sum();
    let mut report = EvaluationReport {
        value,
        terms: coarse.into_iter().collect(),
        ..Default::default()
    };
    report
        .residuals
        .insert("quadrature".into(), (value - fine_value).abs());
    Ok(report)
}

/// Continuum `ℬ(ζ, Φ)` by piecewise Gauss–Legendre quadrature.
pub fn eval_b_continuum(
    spec: &SphericalModelSpec,
    c: &ContinuumProfile,
    nodes: usize,
) -> Result<EvaluationReport> {
    check_sites(spec, c.n_sites())?;
    if c.domain != ProfileDomain::Y {
        return Err(Error::DomainViolation("ℬ requires a profile in 𝒴".into()));
    }
    c.check()?;
    report_with_doubling(nodes, |gl| b_continuum_value(spec, c, gl))
}

// ----------------------------------------------------------------- 𝒜 (chain)

/// Level chain shared by the Talagrand and Panchenko forms of `𝒜`:
/// locations `p⁰ ≤ … ≤ p^K = 1` per site and weights `w_0..w_{K−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelChain {
    pub w: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

impl LevelChain {
    /// Chain of a Talagrand profile: `p^j = s^{j+1}`, `w_j = m_{j+1}`.
    pub fn from_talagrand(p: &TalagrandProfile) -> Self {
        Self {
            w: p.m[1..].to_vec(),
            p: p.s.iter().map(|row| row[1..].to_vec()).collect(),
        }
    }

    /// Chain of a Panchenko profile: `p^j = q^j`, `w_j = t_j`.
    pub fn from_panchenko(p: &PanchenkoProfile) -> Self {
        let r = p.r();
        Self {
            w: p.t[..r].to_vec(),
            p: p.q.clone(),
        }
    }

    /// Number of levels `K`.
    pub fn levels(&self) -> usize {
        self.w.len()
    }

    /// `d^j_x = Σ_{k≥j} w_k (ξ′(p^{k+1}) − ξ′(p^k))` for `j = 0..K`.
    pub fn d_sequence(&self, xi: &[MixingFunction]) -> Vec<Vec<f64>> {
        let kk = self.levels();
        let n = self.p.len();
        let mut out = vec![vec![0.0; n]; kk + 1];
        for j in (0..kk).rev() {
            for x in 0..n {
                out[j][x] = out[j + 1][x]
                    + self.w[j] * (xi[x].d1(self.p[x][j + 1]) - xi[x].d1(self.p[x][j]));
            }
        }
        out
    }
}

/// Value and derivatives of `𝒜` on a level chain.
#[derive(Debug, Clone, PartialEq)]
pub struct AEval {
    pub report: EvaluationReport,
    /// `∂𝒜/∂b`.
    pub grad_b: Vec<f64>,
    /// `∂²𝒜/∂b²`.
    pub hess_b: Mat,
    /// `∂𝒜/∂p^j_x`, indexed `[x][j]`, `j = 0..K−1`.
    pub grad_p: Vec<Vec<f64>>,
    /// `(D + b − d⁰)⁻¹`.
    pub resolvent: Mat,
    /// `(D + b − d^j)⁻¹` for `j = 0..K`.
    pub inverses: Vec<Mat>,
}

/// `(1/w) log(det G / det(G − w E))`, stable as `w → 0`.
fn level_term(g_upper: &Mat, e: &[f64], w: f64) -> Result<f64> {
    let ch = cholesky(g_upper).map_err(|e| domain_err(e, "D + b − d"))?;
    let n = e.len();
    let mut root = Mat::zeros(n, n);
    for x in 0..n {
        root[(x, x)] = e[x].max(0.0).sqrt();
    }
    let m = ch
        .l()
        .solve_lower_triangular(&root)
        .expect("triangular factor is invertible");
    let s = &m * m.transpose();
    let ev = s.symmetric_eigenvalues();
    let mut acc = 0.0;
    for lam in ev.iter() {
        let wl = w * lam;
        if wl >= 1.0 {
            return Err(Error::DomainViolation(
                "D + b − d is not positive definite".into(),
            ));
        }
        acc += if w == 0.0 { *lam } else { -(-wl).ln_1p() / w };
    }
    Ok(acc)
}

/// Evaluates `𝒜` on a level chain at `b`.
pub fn a_chain(spec: &SphericalModelSpec, chain: &LevelChain, b: &[f64]) -> Result<AEval> {
    let n = spec.n();
    let nf = n as f64;
    let kk = chain.levels();
    if chain.p.len() != n || b.len() != n {
        return Err(Error::InvalidInput(
            "chain and b must cover every site".into(),
        ));
    }
    let xi = &spec.xi;
    let d = chain.d_sequence(xi);
    let dplusb = plus_diag(&spec.d, b);
    let mut inverses = Vec::with_capacity(kk + 1);
    let mut logdet_top = 0.0;
    for j in 0..=kk {
        let neg: Vec<f64> = d[j].iter().map(|v| -v).collect();
        let g = plus_diag(&dplusb, &neg);
        let (ld, inv) = logdet_and_inverse(&g).map_err(|e| domain_err(e, "D + b − d"))?;
        if j == kk {
            logdet_top = ld;
        }
        inverses.push(inv);
    }
    let e: Vec<Vec<f64>> = (0..kk)
        .map(|k| {
            (0..n)
                .map(|x| xi[x].d1(chain.p[x][k + 1]) - xi[x].d1(chain.p[x][k]))
                .collect()
        })
        .collect();
    let mut levels = 0.0;
    for k in 0..kk {
        let neg: Vec<f64> = d[k + 1].iter().map(|v| -v).collect();
        levels += level_term(&plus_diag(&dplusb, &neg), &e[k], chain.w[k])?;
    }
    let theta: f64 = (0..n)
        .map(|x| {
            (0..kk)
                .map(|k| chain.w[k] * (xi[x].theta(chain.p[x][k + 1]) - xi[x].theta(chain.p[x][k])))
                .sum::<f64>()
        })
        .sum();
    let r = &inverses[0];
    let mut hmat = Mat::from_fn(n, n, |x, y| spec.h[x] * spec.h[y]);
    for x in 0..n {
        hmat[(x, x)] += xi[x].d1(chain.p[x][0]);
    }
    let trace = (r * &hmat).trace();
    let bsum: f64 = b.iter().sum();
    let two_n = 2.0 * nf;
    let report = EvaluationReport::from_terms(vec![
        ("entropy", 0.5 * (2.0 * PI).ln()),
        ("logdet", -logdet_top / two_n),
        ("levels", levels / two_n),
        ("b", bsum / two_n),
        ("theta", -theta / two_n),
        ("resolvent", trace / two_n),
    ]);

    let rhr = r * &hmat * r;
    let cmat: Vec<Mat> = (0..kk)
        .map(|k| {
            let mut left = inverses[k].clone();
            for x in 0..n {
                for y in 0..n {
                    left[(x, y)] *= e[k][y];
                }
            }
            left * &inverses[k + 1]
        })
        .collect();
    let top = &inverses[kk];
    let grad_b: Vec<f64> = (0..n)
        .map(|x| {
            (-top[(x, x)] - cmat.iter().map(|c| c[(x, x)]).sum::<f64>() + 1.0 - rhr[(x, x)]) / two_n
        })
        .collect();
    let mut hess_b = Mat::from_fn(n, n, |x, y| {
        top[(x, y)] * top[(x, y)] + 2.0 * r[(x, y)] * rhr[(x, y)]
    });
    for k in 0..kk {
        let c = &cmat[k];
        for x in 0..n {
            for y in 0..n {
                hess_b[(x, y)] +=
                    inverses[k][(x, y)] * c[(y, x)] + c[(x, y)] * inverses[k + 1][(x, y)];
            }
        }
    }
    let hess_b = (&hess_b + hess_b.transpose()) * (0.5 / two_n);
    let mut grad_p = vec![vec![0.0; kk]; n];
    for x in 0..n {
        let mut csum = 0.0;
        for j in 0..kk {
            let prev = if j == 0 { 0.0 } else { chain.w[j - 1] };
            let pj = chain.p[x][j];
            grad_p[x][j] = (prev - chain.w[j]) * xi[x].d2(pj) * (csum + rhr[(x, x)] - pj) / two_n;
            csum += cmat[j][(x, x)];
        }
    }
    Ok(AEval {
        report,
        grad_b,
        hess_b,
        grad_p,
        resolvent: r.clone(),
        inverses,
    })
}

/// Discrete Talagrand-form `𝒜(s, m, b)`.
pub fn eval_a_discrete_talagrand(
    spec: &SphericalModelSpec,
    p: &TalagrandProfile,
    b: &[f64],
) -> Result<EvaluationReport> {
    check_sites(spec, p.n_sites())?;
    let mut v = p.validate();
    v.retain(|s| !s.contains("1 − η"));
    if !v.is_empty() {
        return Err(Error::DomainViolation(v.join("; ")));
    }
    Ok(a_chain(spec, &LevelChain::from_talagrand(p), b)?.report)
}

/// Discrete Panchenko-form `𝒜 = W(b) − Γ₂`.
pub fn eval_a_discrete_panchenko(
    spec: &SphericalModelSpec,
    p: &PanchenkoProfile,
    b: &[f64],
) -> Result<EvaluationReport> {
    check_sites(spec, p.n_sites())?;
    p.check()?;
    Ok(a_chain(spec, &LevelChain::from_panchenko(p), b)?.report)
}

// -------------------------------------------------------------- 𝒜 (continuum)

fn a_continuum_value(
    spec: &SphericalModelSpec,
    c: &ContinuumProfile,
    b: &[f64],
    gl: &GaussLegendre,
) -> Result<Vec<(String, f64)>> {
    let n = spec.n();
    let nf = n as f64;
    let xi = &spec.xi;
    let dplusb = plus_diag(&spec.d, b);
    let resolvent_at = |s: f64| -> Result<Mat> {
        let neg: Vec<f64> = d_of(c, xi, s, gl).iter().map(|v| -v).collect();
        inverse_pd(&plus_diag(&dplusb, &neg)).map_err(|e| domain_err(e, "D + b − d(s)"))
    };
    let mut res_int = 0.0;
    let mut theta_int = 0.0;
    for (i, a, bb) in clipped_segments(c, 0.0, c.q_t()) {
        let slope = c.slope(i);
        let f = c.segment_cdf(i);
        for (u, w) in gl.mapped(a, bb) {
            let ph = c.phi_at(u);
            let g = resolvent_at(u)?;
            for x in 0..n {
                let k = xi[x].d2(ph[x]) * slope[x];
                res_int += w * g[(x, x)] * k;
                theta_int += w * f * ph[x] * k;
            }
        }
    }
    let (ld, _) = logdet_and_inverse(&dplusb).map_err(|e| domain_err(e, "D + b"))?;
    let r0 = resolvent_at(0.0)?;
    let mut trace = quadratic_form(&r0, &spec.h);
    for x in 0..n {
        trace += r0[(x, x)] * xi[x].d1(0.0);
    }
    let two_n = 2.0 * nf;
    Ok(vec![
        ("entropy".into(), 0.5 * (2.0 * PI).ln()),
        ("resolvent_integral".into(), res_int / two_n),
        ("logdet".into(), -ld / two_n),
        ("b".into(), b.iter().sum::<f64>() / two_n),
        ("theta".into(), -theta_int / two_n),
        ("resolvent".into(), trace / two_n),
    ])
}

/// Continuum `𝒜(ζ, Φ, b)` by nested Gauss–Legendre quadrature.
pub fn eval_a_continuum(
    spec: &SphericalModelSpec,
    c: &ContinuumProfile,
    b: &[f64],
    nodes: usize,
) -> Result<EvaluationReport> {
    check_sites(spec, c.n_sites())?;
    if b.len() != spec.n() {
        return Err(Error::InvalidInput("b must cover every site".into()));
    }
    report_with_doubling(nodes, |gl| a_continuum_value(spec, c, b, gl))
}

// ---------------------------------------------------------- Y^b, W, Γ₂

/// `Y^b(v)` in closed form.
pub fn y_b_closed_form(
    spec: &SphericalModelSpec,
    p: &PanchenkoProfile,
    b: &[f64],
    v: &[f64],
) -> Result<f64> {
    check_sites(spec, p.n_sites())?;
    p.check()?;
    let with_v = SphericalModelSpec {
        h: v.to_vec(),
        ..spec.clone()
    };
    let ev = a_chain(&with_v, &LevelChain::from_panchenko(p), b)?;
    let t = &ev.report.terms;
    Ok(t["entropy"] + t["logdet"] + t["levels"] + t["resolvent"])
}

/// `W(b) = Y^b(h) + mean(b)/2`.
pub fn w_of_b(spec: &SphericalModelSpec, p: &PanchenkoProfile, b: &[f64]) -> Result<f64> {
    let y = y_b_closed_form(spec, p, b, &spec.h)?;
    Ok(y + b.iter().sum::<f64>() / (2.0 * b.len() as f64))
}

/// `Γ₂ = (1/2|Ω|) Σ_x Σ_k t_k (θ_x(q^{k+1}) − θ_x(q^k))`.
pub fn gamma2_closed_form(spec: &SphericalModelSpec, p: &PanchenkoProfile) -> Result<f64> {
    check_sites(spec, p.n_sites())?;
    p.check()?;
    let r = p.r();
    let s: f64 = (0..p.n_sites())
        .map(|x| {
            (0..r)
                .map(|k| p.t[k] * (spec.xi[x].theta(p.q[x][k + 1]) - spec.xi[x].theta(p.q[x][k])))
                .sum::<f64>()
        })
        .sum();
    Ok(s / (2.0 * p.n_sites() as f64))
}

// ------------------------------------------------------------------------ 𝒫

/// Evaluation route for `𝒫`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// The defining integral, evaluated at the given `β`.
    Direct,
    /// Through the spherical restriction at `β = 1`.
    Mapped,
}

/// Spherical model with `D_q = −t·diag(√q)·Δ·diag(√q)`, `ξ_x = B_{q(x)}` and zero field.
pub fn mapped_spherical_spec(spec: &EuclideanModelSpec, q: &[f64]) -> Result<SphericalModelSpec> {
    let n = spec.lattice.n_sites();
    if q.len() != n || q.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput(
            "q must be a positive vector over the lattice".into(),
        ));
    }
    let lap = build_periodic_laplacian(&spec.lattice);
    let d = Mat::from_fn(n, n, |x, y| {
        -spec.lattice.t * q[x].sqrt() * lap[(x, y)] * q[y].sqrt()
    });
    let xi = q
        .iter()
        .map(|qx| spherical_restriction_auto(&spec.b, *qx, RESTRICTION_TOL).map(|r| r.xi))
        .collect::<Result<Vec<_>>>()?;
    SphericalModelSpec::new(d, xi, vec![0.0; n])
}

/// Constant `h²/(2μ) + (1/2|Ω|) Σ_x (−μ q(x) + log q(x))` of the mapped route at `β = 1`.
pub fn mapped_offset(spec: &EuclideanModelSpec, q: &[f64]) -> f64 {
    let mu = spec.lattice.mu;
    let n = q.len() as f64;
    spec.h * spec.h / (2.0 * mu) + q.iter().map(|qx| -mu * qx + qx.ln()).sum::<f64>() / (2.0 * n)
}

fn check_profile_caps(q: &[f64], c: &ContinuumProfile) -> Result<()> {
    if c.q_vec.len() != q.len()
        || c.q_vec
            .iter()
            .zip(q)
            .any(|(a, b)| (a - b).abs() > 1e-12 * b.max(1.0))
    {
        return Err(Error::InvalidInput("profile caps must equal q".into()));
    }
    if c.domain != ProfileDomain::Y {
        return Err(Error::DomainViolation(
            "𝒫 requires a profile in 𝒴(q)".into(),
        ));
    }
    c.check()
}

fn p_direct_value(
    spec: &EuclideanModelSpec,
    q: &[f64],
    c: &ContinuumProfile,
    gl: &GaussLegendre,
) -> Result<Vec<(String, f64)>> {
    let beta = spec.beta;
    let mu = spec.lattice.mu;
    let n = q.len();
    let nf = n as f64;
    let stiff = build_periodic_laplacian(&spec.lattice) * (-spec.lattice.t);
    let scaled = |s: f64| -> Vec<f64> { delta_of(c, s).iter().map(|v| beta * v).collect() };
    let top = solve_k(&stiff, &scaled(c.q_star), DEFAULT_TOL)?;
    let mut k_int = 0.0;
    for (i, a, b) in clipped_segments(c, 0.0, c.q_star) {
        let slope = c.slope(i);
        for (u, w) in gl.mapped(a, b) {
            let pt = solve_k(&stiff, &scaled(u), DEFAULT_TOL)?;
            k_int += w * beta * (0..n).map(|x| pt.k[x] * slope[x]).sum::<f64>();
        }
    }
    let mut b_int = 0.0;
    for (i, a, b) in clipped_segments(c, 0.0, c.q_t()) {
        let f = c.segment_cdf(i);
        if f == 0.0 {
            continue;
        }
        let slope = c.slope(i);
        for (u, w) in gl.mapped(a, b) {
            let ph = c.phi_at(u);
            b_int += w
                * f
                * (0..n)
                    .map(|x| spec.b.eval(2.0 * (q[x] - ph[x]), 1) * slope[x])
                    .sum::<f64>();
        }
    }
    let mass: f64 = q.iter().map(|v| -beta * mu * v).sum();
    Ok(vec![
        ("entropy".into(), 0.5 * (2.0 * PI / beta).ln()),
        ("field".into(), 0.5 * beta * spec.h * spec.h / mu),
        ("lambda".into(), 0.5 * top.lambda()),
        ("mass".into(), mass / (2.0 * nf)),
        ("k_integral".into(), k_int / (2.0 * nf)),
        ("disorder".into(), -2.0 * beta * beta * b_int / (2.0 * nf)),
    ])
}

/// `𝒫_{β,q}(ζ, Φ)` by the requested route.
pub fn eval_p(
    spec: &EuclideanModelSpec,
    q: &[f64],
    c: &ContinuumProfile,
    route: Route,
    nodes: usize,
) -> Result<EvaluationReport> {
    spec.validate()?;
    check_profile_caps(q, c)?;
    match route {
        Route::Direct => report_with_doubling(nodes, |gl| p_direct_value(spec, q, c, gl)),
        Route::Mapped => {
            let unit = reparameterize_beta(spec);
            let sph = mapped_spherical_spec(&unit, q)?;
            let cu = c.normalized();
            let inner = match cu.to_talagrand() {
                Some(tp) if (cu.q_star - cu.last_atom()).abs() < 1e-15 => {
                    eval_b_discrete(&sph, &tp)?.residual("quadrature", 0.0)
                }
                _ => eval_b_continuum(&sph, &cu, nodes)?,
            };
            let mut report = inner.clone();
            report.terms = inner
                .terms
                .into_iter()
                .map(|(k, v)| (format!("b_{k}"), v))
                .collect();
            report
                .terms
                .insert("offset".into(), mapped_offset(&unit, q));
            report.value = report.terms.values().sum();
            Ok(report)
        }
    }
}
