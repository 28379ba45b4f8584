//! Finite replica-symmetry-breaking order parameters in Talagrand, Panchenko
//! and continuum form, their conversions, and the derived `δ` and `d` sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixing::MixingFunction;
use crate::quad::GaussLegendre;

/// Margin separating `𝒴` profiles (`s^r < 1 − η`) from `𝒴⁰` profiles.
pub const ETA: f64 = 1e-8;

/// `(m, s)`: `0 = m_0 < … < m_r = 1` and per site `0 = s⁰ ≤ s¹ ≤ … ≤ s^r ≤ s^{r+1} = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TalagrandProfile {
    /// `m_0..m_r` (length `r + 1`).
    pub m: Vec<f64>,
    /// Per site `s⁰..s^{r+1}` (length `r + 2`).
    pub s: Vec<Vec<f64>>,
}

/// `(t, q)`: `0 < t_0 < … < t_r = 1` and per site `0 = q⁰ ≤ … ≤ q^r = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanchenkoProfile {
    /// `t_0..t_r` (length `r + 1`); `t_{−1} = 0` is implicit.
    pub t: Vec<f64>,
    /// Per site `q⁰..q^r` (length `r + 1`).
    pub q: Vec<Vec<f64>>,
}

/// Which domain a continuum profile belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileDomain {
    /// Full mass strictly below the cap: valid for `ℬ` and `𝒫`.
    Y,
    /// Atoms allowed at the cap: valid for `𝒜` only.
    Y0,
}

/// `(ζ, Φ)` with atomic `ζ` and piecewise-linear `Φ_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumProfile {
    /// Strictly increasing interpolation nodes from 0 to `q_t`.
    pub knots: Vec<f64>,
    /// Mass of `ζ` at each knot.
    pub masses: Vec<f64>,
    /// Per site, `Φ_x` at each knot.
    pub phi: Vec<Vec<f64>>,
    /// Per-site caps `q(x)`.
    pub q_vec: Vec<f64>,
    pub q_star: f64,
    pub domain: ProfileDomain,
}

fn check_increasing(v: &[f64], strict: bool, what: &str, out: &mut Vec<String>) {
    for (i, w) in v.windows(2).enumerate() {
        let bad = if strict { w[1] <= w[0] } else { w[1] < w[0] };
        if bad {
            out.push(format!(
                "{what}: entries {i} and {} out of order ({} vs {})",
                i + 1,
                w[0],
                w[1]
            ));
        }
    }
}

impl TalagrandProfile {
    /// Number of levels `r`.
    pub fn r(&self) -> usize {
        self.m.len().saturating_sub(1)
    }

    /// Number of sites.
    pub fn n_sites(&self) -> usize {
        self.s.len()
    }

    /// Builds a profile from interior weights `m_1..m_{r−1}` and per-site `s¹..s^r`.
    pub fn from_interior(m_inner: &[f64], s_inner: &[Vec<f64>]) -> Result<Self> {
        let mut m = vec![0.0];
        m.extend_from_slice(m_inner);
        m.push(1.0);
        let s = s_inner
            .iter()
            .map(|row| {
                let mut v = vec![0.0];
                v.extend_from_slice(row);
                v.push(1.0);
                v
            })
            .collect();
        let p = Self { m, s };
        p.check()?;
        Ok(p)
    }

    /// Returns an error listing every violation.
    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::DomainViolation(v.join("; ")))
        }
    }

    /// All violated invariants for a `𝒴` profile; empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = vec![];
        let r = self.r();
        if r < 1 {
            out.push("m: need at least two entries (r ≥ 1)".into());
            return out;
        }
        if self.m[0] != 0.0 || self.m[r] != 1.0 {
            out.push("m: endpoints must be m_0 = 0 and m_r = 1".into());
        }
        check_increasing(&self.m, true, "m ordering", &mut out);
        if self.s.is_empty() {
            out.push("s: no sites".into());
        }
        for (x, row) in self.s.iter().enumerate() {
            if row.len() != r + 2 {
                out.push(format!(
                    "s[{x}]: length {} but r + 2 = {}",
                    row.len(),
                    r + 2
                ));
                continue;
            }
            if row.iter().any(|v| !v.is_finite()) {
                out.push(format!("s[{x}]: non-finite entry"));
            }
            if row[0] != 0.0 || row[r + 1] != 1.0 {
                out.push(format!("s[{x}]: endpoints must be s⁰ = 0 and s^(r+1) = 1"));
            }
            check_increasing(row, false, &format!("s[{x}] ordering"), &mut out);
            if row[r] > 1.0 - ETA {
                out.push(format!("s[{x}]: s^r = {} violates s^r ≤ 1 − η", row[r]));
            }
        }
        out
    }

    /// Level-averaged locations `s̄^k`, `k = 0..r+1`.
    pub fn averaged(&self) -> Vec<f64> {
        let n = self.n_sites() as f64;
        (0..self.r() + 2)
            .map(|k| self.s.iter().map(|row| row[k]).sum::<f64>() / n)
            .collect()
    }
}

impl PanchenkoProfile {
    /// Number of levels `r`.
    pub fn r(&self) -> usize {
        self.t.len().saturating_sub(1)
    }

    /// Number of sites.
    pub fn n_sites(&self) -> usize {
        self.q.len()
    }

    /// Returns an error listing every violation.
    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::DomainViolation(v.join("; ")))
        }
    }

    /// All violated invariants; empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = vec![];
        let r = self.r();
        if self.t.is_empty() {
            out.push("t: empty".into());
            return out;
        }
        if !(self.t[0] > 0.0) || self.t[r] != 1.0 {
            out.push("t: need t_0 > 0 and t_r = 1".into());
        }
        check_increasing(&self.t, true, "t ordering", &mut out);
        if self.q.is_empty() {
            out.push("q: no sites".into());
        }
        for (x, row) in self.q.iter().enumerate() {
            if row.len() != r + 1 {
                out.push(format!(
                    "q[{x}]: length {} but r + 1 = {}",
                    row.len(),
                    r + 1
                ));
                continue;
            }
            if row[0] != 0.0 || row[r] != 1.0 {
                out.push(format!("q[{x}]: endpoints must be q⁰ = 0 and q^r = 1"));
            }
            check_increasing(row, false, &format!("q[{x}] ordering"), &mut out);
        }
        out
    }

    /// Level-averaged locations `q̄^k`.
    pub fn averaged(&self) -> Vec<f64> {
        let n = self.n_sites() as f64;
        (0..=self.r())
            .map(|k| self.q.iter().map(|row| row[k]).sum::<f64>() / n)
            .collect()
    }
}

impl ContinuumProfile {
    /// Number of sites.
    pub fn n_sites(&self) -> usize {
        self.phi.len()
    }

    /// `q_t`, the mean cap.
    pub fn q_t(&self) -> f64 {
        *self.knots.last().expect("nonempty knots")
    }

    /// `ζ([0, s])`.
    pub fn zeta_cdf(&self, s: f64) -> f64 {
        self.knots
            .iter()
            .zip(&self.masses)
            .filter(|(k, _)| **k <= s)
            .map(|(_, m)| m)
            .sum()
    }

    /// Largest knot carrying positive mass.
    pub fn last_atom(&self) -> f64 {
        self.knots
            .iter()
            .zip(&self.masses)
            .filter(|(_, m)| **m > 0.0)
            .map(|(k, _)| *k)
            .fold(0.0, f64::max)
    }

    /// Index of the segment `[knots[i], knots[i+1]]` holding `s`.
    fn segment(&self, s: f64) -> usize {
        let n = self.knots.len();
        match self.knots.iter().rposition(|k| *k <= s) {
            Some(i) if i + 1 < n => i,
            Some(_) => n - 2,
            None => 0,
        }
    }

    /// `Φ_x(s)` for every site.
    pub fn phi_at(&self, s: f64) -> Vec<f64> {
        let i = self.segment(s);
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        let w = ((s - a) / (b - a)).clamp(0.0, 1.0);
        self.phi
            .iter()
            .map(|row| row[i] + w * (row[i + 1] - row[i]))
            .collect()
    }

    /// `Φ′_x` on segment `i` for every site.
    pub fn slope(&self, i: usize) -> Vec<f64> {
        let h = self.knots[i + 1] - self.knots[i];
        self.phi
            .iter()
            .map(|row| (row[i + 1] - row[i]) / h)
            .collect()
    }

    /// `ζ([0, u])` for `u` inside segment `i`.
    pub fn segment_cdf(&self, i: usize) -> f64 {
        self.masses[..=i].iter().sum()
    }

    /// All violated invariants; empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = vec![];
        let nk = self.knots.len();
        if nk < 2 {
            out.push("knots: need at least two".into());
            return out;
        }
        if self.knots[0] != 0.0 {
            out.push("knots: first knot must be 0".into());
        }
        check_increasing(&self.knots, true, "knots ordering", &mut out);
        if self.masses.len() != nk {
            out.push("masses: length must match knots".into());
            return out;
        }
        if self.masses.iter().any(|m| !(*m >= 0.0)) {
            out.push("masses: must be nonnegative".into());
        }
        let total: f64 = self.masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            out.push(format!("masses: sum to {total}, expected 1"));
        }
        if self.q_vec.len() != self.phi.len() || self.phi.is_empty() {
            out.push("q_vec: one cap per site required".into());
            return out;
        }
        let n = self.phi.len() as f64;
        let qt = self.q_vec.iter().sum::<f64>() / n;
        if (qt - self.q_t()).abs() > 1e-12 * qt.max(1.0) {
            out.push(format!(
                "knots: last knot {} must equal mean cap {qt}",
                self.q_t()
            ));
        }
        for (x, row) in self.phi.iter().enumerate() {
            if row.len() != nk {
                out.push(format!("phi[{x}]: length must match knots"));
                continue;
            }
            check_increasing(row, false, &format!("phi[{x}] ordering"), &mut out);
            if row[0] < 0.0 {
                out.push(format!("phi[{x}]: Φ(0) must be nonnegative"));
            }
            if (row[nk - 1] - self.q_vec[x]).abs() > 1e-12 * self.q_vec[x].max(1.0) {
                out.push(format!("phi[{x}]: Φ(q_t) must equal q(x)"));
            }
        }
        let res = self.averaging_residual();
        if res > 1e-12 {
            out.push(format!("averaging constraint residual {res:.3e}"));
        }
        if self.domain == ProfileDomain::Y {
            if self.q_star < self.last_atom() || self.q_star > self.q_t() {
                out.push(format!(
                    "q_star = {} must lie in [last atom, q_t]",
                    self.q_star
                ));
            }
            let at = self.phi_at(self.q_star);
            for (x, v) in at.iter().enumerate() {
                if *v > self.q_vec[x] - ETA * self.q_vec[x] {
                    out.push(format!(
                        "phi[{x}]: Φ(q_star) = {v} must stay below q(x) − η"
                    ));
                }
            }
        }
        out
    }

    /// Returns an error listing every violation.
    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::DomainViolation(v.join("; ")))
        }
    }

    /// `max_k |(1/|Ω|) Σ_x Φ_x(s_k)/q(x) − s_k/q_t|` over the knots.
    pub fn averaging_residual(&self) -> f64 {
        let n = self.phi.len() as f64;
        let qt = self.q_t();
        (0..self.knots.len())
            .map(|k| {
                let avg = self
                    .phi
                    .iter()
                    .zip(&self.q_vec)
                    .map(|(row, q)| row[k] / q)
                    .sum::<f64>()
                    / n;
                (avg - self.knots[k] / qt).abs()
            })
            .fold(0.0, f64::max)
    }

    /// The same profile with a different `q_*`.
    pub fn with_q_star(&self, q_star: f64) -> Self {
        Self {
            q_star,
            ..self.clone()
        }
    }

    /// Inserts an interpolation knot at `s` without changing `Φ` or `ζ`.
    pub fn with_knot(&self, s: f64) -> Self {
        if self.knots.contains(&s) || s <= 0.0 || s >= self.q_t() {
            return self.clone();
        }
        let i = self.segment(s);
        let vals = self.phi_at(s);
        let mut c = self.clone();
        c.knots.insert(i + 1, s);
        c.masses.insert(i + 1, 0.0);
        for (row, v) in c.phi.iter_mut().zip(vals) {
            row.insert(i + 1, v);
        }
        c
    }

    /// Unit-cap profile `Φ̃_x(s) = Φ_x(q_t s)/q(x)` on `[0, 1]`.
    pub fn normalized(&self) -> Self {
        let qt = self.q_t();
        Self {
            knots: self.knots.iter().map(|k| k / qt).collect(),
            masses: self.masses.clone(),
            phi: self
                .phi
                .iter()
                .zip(&self.q_vec)
                .map(|(row, q)| row.iter().map(|v| v / q).collect())
                .collect(),
            q_vec: vec![1.0; self.phi.len()],
            q_star: self.q_star / qt,
            domain: self.domain,
        }
    }

    /// Profile over caps `q` from a unit-cap profile.
    pub fn scaled_to(&self, q: &[f64]) -> Self {
        let n = q.len() as f64;
        let qt = q.iter().sum::<f64>() / n;
        Self {
            knots: self.knots.iter().map(|k| k * qt).collect(),
            masses: self.masses.clone(),
            phi: self
                .phi
                .iter()
                .zip(q)
                .map(|(row, qx)| row.iter().map(|v| v * qx).collect())
                .collect(),
            q_vec: q.to_vec(),
            q_star: self.q_star * qt,
            domain: self.domain,
        }
    }

    /// Talagrand form when every interior knot carries mass, `Φ(0) = 0` and `q_* ` is the last knot below `q_t`.
    pub fn to_talagrand(&self) -> Option<TalagrandProfile> {
        if self.q_vec.iter().any(|q| *q != 1.0) || self.phi.iter().any(|row| row[0] != 0.0) {
            return None;
        }
        let nk = self.knots.len();
        if self.masses[nk - 1] != 0.0 {
            return None;
        }
        let atom_idx: Vec<usize> = (0..nk - 1).filter(|&i| self.masses[i] > 0.0).collect();
        let expected: Vec<usize> = if self.masses[0] > 0.0 {
            (0..nk - 1).collect()
        } else {
            (1..nk - 1).collect()
        };
        if atom_idx != expected {
            return None;
        }
        let mut m = vec![0.0];
        let mut acc = 0.0;
        for &i in &atom_idx {
            acc += self.masses[i];
            m.push(acc);
        }
        *m.last_mut().unwrap() = 1.0;
        let s = self
            .phi
            .iter()
            .map(|row| {
                let mut v = vec![0.0];
                v.extend(atom_idx.iter().map(|&i| row[i]));
                v.push(1.0);
                v
            })
            .collect();
        let p = TalagrandProfile { m, s };
        p.validate().is_empty().then_some(p)
    }
}

/// Continuum form of a Talagrand profile; atoms at coinciding averaged locations are merged.
pub fn talagrand_to_continuum(p: &TalagrandProfile) -> Result<ContinuumProfile> {
    p.check()?;
    let r = p.r();
    let avg = p.averaged();
    let mut knots = vec![0.0];
    let mut masses = vec![0.0];
    let mut cols = vec![0usize];
    for k in 1..=r {
        let mass = p.m[k] - p.m[k - 1];
        if avg[k] == *knots.last().unwrap() {
            *masses.last_mut().unwrap() += mass;
        } else {
            knots.push(avg[k]);
            masses.push(mass);
            cols.push(k);
        }
    }
    let q_star = *knots.last().unwrap();
    knots.push(1.0);
    masses.push(0.0);
    cols.push(r + 1);
    let phi =
        p.s.iter()
            .map(|row| cols.iter().map(|&k| row[k]).collect())
            .collect();
    Ok(ContinuumProfile {
        knots,
        masses,
        phi,
        q_vec: vec![1.0; p.n_sites()],
        q_star,
        domain: ProfileDomain::Y,
    })
}

/// Continuum form of a Panchenko profile, flagged `𝒴⁰`.
pub fn panchenko_to_continuum(p: &PanchenkoProfile) -> Result<ContinuumProfile> {
    p.check()?;
    let r = p.r();
    let avg = p.averaged();
    let mut knots = vec![0.0];
    let mut masses = vec![p.t[0]];
    let mut cols = vec![0usize];
    for k in 1..=r {
        let mass = p.t[k] - p.t[k - 1];
        if avg[k] == *knots.last().unwrap() {
            *masses.last_mut().unwrap() += mass;
        } else {
            knots.push(avg[k]);
            masses.push(mass);
            cols.push(k);
        }
    }
    let phi =
        p.q.iter()
            .map(|row| cols.iter().map(|&k| row[k]).collect())
            .collect();
    Ok(ContinuumProfile {
        knots,
        masses,
        phi,
        q_vec: vec![1.0; p.n_sites()],
        q_star: 1.0,
        domain: ProfileDomain::Y0,
    })
}

/// `δ^l_x = Σ_{k=l}^{r} m_k (s^{k+1}_x − s^k_x)` for `l = 1..r+1`; entry `l − 1` holds `δ^l`.
pub fn delta_sequence(p: &TalagrandProfile) -> Vec<Vec<f64>> {
    let r = p.r();
    let mut out = vec![vec![0.0; p.n_sites()]; r + 1];
    for l in (1..=r).rev() {
        for (x, row) in p.s.iter().enumerate() {
            out[l - 1][x] = out[l][x] + p.m[l] * (row[l + 1] - row[l]);
        }
    }
    out
}

/// `d^l_x = Σ_{k=l}^{r} m_k (ξ′_x(s^{k+1}) − ξ′_x(s^k))`, entry `l − 1` holds `d^l`, `l = 1..r+1`.
pub fn d_sequence_talagrand(p: &TalagrandProfile, xi: &[MixingFunction]) -> Vec<Vec<f64>> {
    let r = p.r();
    let mut out = vec![vec![0.0; p.n_sites()]; r + 1];
    for l in (1..=r).rev() {
        for (x, row) in p.s.iter().enumerate() {
            out[l - 1][x] = out[l][x] + p.m[l] * (xi[x].d1(row[l + 1]) - xi[x].d1(row[l]));
        }
    }
    out
}

/// `d^l_x = Σ_{k=l}^{r−1} t_k (ξ′_x(q^{k+1}) − ξ′_x(q^k))`, entry `l` holds `d^l`, `l = 0..r`.
pub fn d_sequence_panchenko(p: &PanchenkoProfile, xi: &[MixingFunction]) -> Vec<Vec<f64>> {
    let r = p.r();
    let mut out = vec![vec![0.0; p.n_sites()]; r + 1];
    for l in (0..r).rev() {
        for (x, row) in p.q.iter().enumerate() {
            out[l][x] = out[l + 1][x] + p.t[l] * (xi[x].d1(row[l + 1]) - xi[x].d1(row[l]));
        }
    }
    out
}

/// `δ_x(s) = ∫_s^{q_t} ζ([0,u]) Φ′_x(u) du`, exact on the piecewise-linear profile.
pub fn delta_of(c: &ContinuumProfile, s: f64) -> Vec<f64> {
    let mut out = vec![0.0; c.n_sites()];
    let at = c.phi_at(s);
    for i in 0..c.knots.len() - 1 {
        let (a, b) = (c.knots[i], c.knots[i + 1]);
        if b <= s {
            continue;
        }
        let f = c.segment_cdf(i);
        for (x, row) in c.phi.iter().enumerate() {
            let start = if a < s { at[x] } else { row[i] };
            out[x] += f * (row[i + 1] - start);
        }
    }
    out
}

/// `d_x(s) = ∫_s^{q_t} ζ([0,u]) ξ″_x(Φ_x(u)) Φ′_x(u) du` by Gauss–Legendre per segment.
pub fn d_of(c: &ContinuumProfile, xi: &[MixingFunction], s: f64, gl: &GaussLegendre) -> Vec<f64> {
    let mut out = vec![0.0; c.n_sites()];
    for i in 0..c.knots.len() - 1 {
        let (a, b) = (c.knots[i].max(s), c.knots[i + 1]);
        if b <= a {
            continue;
        }
        let f = c.segment_cdf(i);
        if f == 0.0 {
            continue;
        }
        let slope = c.slope(i);
        for (u, w) in gl.mapped(a, b) {
            let ph = c.phi_at(u);
            for x in 0..out.len() {
                out[x] += w * f * xi[x].d2(ph[x]) * slope[x];
            }
        }
    }
    out
}
