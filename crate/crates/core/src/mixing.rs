//! Mixing functions ξ, correlation functions B, the θ correction and the
//! restriction of B to spheres of squared radius q.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ξ(r) = Σ_p β_p² r^p` with nonnegative coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingFunction {
    pub coeffs: Vec<f64>,
}

impl MixingFunction {
    /// Validates nonnegative finite coefficients.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        let f = Self { coeffs };
        f.validate()?;
        Ok(f)
    }

    /// Rejects negative or non-finite coefficients.
    pub fn validate(&self) -> Result<()> {
        if let Some((p, c)) = self
            .coeffs
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c >= 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "mixing coefficient {p} must be nonnegative, got {c}"
            )));
        }
        Ok(())
    }

    /// The identically zero mixing function.
    pub fn zero() -> Self {
        Self { coeffs: vec![] }
    }

    /// `ξ`, `ξ′` or `ξ″` at `r`.
    pub fn eval(&self, r: f64, order: u8) -> f64 {
        let mut acc = 0.0;
        for (p, &c) in self.coeffs.iter().enumerate().rev() {
            let k = match order {
                0 => 1.0,
                1 => p as f64,
                _ => (p * p.saturating_sub(1)) as f64,
            };
            let e = p as i32 - order as i32;
            if k != 0.0 && c != 0.0 {
                acc += c * k * r.powi(e.max(0));
            }
        }
        acc
    }

    /// `ξ(r)`.
    pub fn value(&self, r: f64) -> f64 {
        self.eval(r, 0)
    }

    /// `ξ′(r)`.
    pub fn d1(&self, r: f64) -> f64 {
        self.eval(r, 1)
    }

    /// `ξ″(r)`.
    pub fn d2(&self, r: f64) -> f64 {
        self.eval(r, 2)
    }

    /// `θ(r) = rξ′(r) − ξ(r) + ξ(0)`, so that `θ(0) = 0` and `θ′(r) = rξ″(r)`.
    pub fn theta(&self, r: f64) -> f64 {
        r * self.d1(r) - self.value(r) + self.value(0.0)
    }

    /// Coefficients scaled by `c ≥ 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
        }
    }
}

/// `B(x) = c₀ + Σ w e^{−λ² x}` with `c₀ ≥ 0`, `w, λ > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationFunction {
    pub c0: f64,
    /// `(w, λ)` pairs.
    pub atoms: Vec<(f64, f64)>,
}

impl CorrelationFunction {
    /// Validates the atom list.
    pub fn new(c0: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        let f = Self { c0, atoms };
        f.validate()?;
        Ok(f)
    }

    /// Rejects negative `c₀` and non-positive weights or rates.
    pub fn validate(&self) -> Result<()> {
        if !(self.c0.is_finite() && self.c0 >= 0.0) {
            return Err(Error::InvalidInput("c0 must be nonnegative".into()));
        }
        for (i, (w, l)) in self.atoms.iter().enumerate() {
            if !(w.is_finite() && *w > 0.0 && l.is_finite() && *l > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "atom {i} must have positive weight and rate"
                )));
            }
        }
        Ok(())
    }

    /// `B(x)` or `B′(x)`.
    pub fn eval(&self, x: f64, order: u8) -> f64 {
        let s: f64 = self
            .atoms
            .iter()
            .map(|(w, l)| {
                let l2 = l * l;
                let e = w * (-l2 * x).exp();
                if order == 0 {
                    e
                } else {
                    -l2 * e
                }
            })
            .sum();
        if order == 0 {
            self.c0 + s
        } else {
            s
        }
    }

    /// `β²B`: every weight and `c₀` scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            c0: self.c0 * c,
            atoms: self.atoms.iter().map(|(w, l)| (w * c, *l)).collect(),
        }
    }
}

/// Coefficients of `B_q(r) = B(2q(1−r))` up to degree `P`, with a tail certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    pub xi: MixingFunction,
    /// Upper bound on `Σ_{p>P} β_p²`.
    pub tail_bound: f64,
}

/// Expands `B_q` as a mixing function; fails when the tail bound exceeds `tol`.
pub fn spherical_restriction(
    b: &CorrelationFunction,
    q: f64,
    degree: usize,
    tol: f64,
) -> Result<Restriction> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidInput("q must be positive".into()));
    }
    let mut coeffs = vec![0.0; degree + 1];
    coeffs[0] = b.c0;
    let mut tail = 0.0;
    for (w, l) in &b.atoms {
        let a = 2.0 * q * l * l;
        let mut log_term = -a;
        for (p, c) in coeffs.iter_mut().enumerate() {
            if p > 0 {
                log_term += a.ln() - (p as f64).ln();
            }
            *c += w * log_term.exp();
        }
        // Lagrange remainder of the exponential series: e^{-a} Σ_{p>P} a^p/p! ≤ a^{P+1}/(P+1)!
        let log_rem = (degree as f64 + 1.0) * a.ln() - ln_factorial(degree + 1);
        tail += w * log_rem.exp().min(1.0);
    }
    if tail > tol {
        return Err(Error::TruncationInsufficient { bound: tail, tol });
    }
    Ok(Restriction {
        xi: MixingFunction { coeffs },
        tail_bound: tail,
    })
}

/// Restriction with the smallest degree in `[P, 400]` meeting `tol`.
pub fn spherical_restriction_auto(
    b: &CorrelationFunction,
    q: f64,
    tol: f64,
) -> Result<Restriction> {
    let mut degree = 40;
    loop {
        match spherical_restriction(b, q, degree, tol) {
            Ok(r) => return Ok(r),
            Err(Error::TruncationInsufficient { .. }) if degree < 400 => degree += 20,
            Err(e) => return Err(e),
        }
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `(1/2|Ω|) Σ_{x,p} |β⁰_p(x)² − β¹_p(x)²|`.
pub fn continuity_bound(xi0: &[MixingFunction], xi1: &[MixingFunction]) -> Result<f64> {
    if xi0.len() != xi1.len() || xi0.is_empty() {
        return Err(Error::InvalidInput(
            "mixing lists must share a nonempty site set".into(),
        ));
    }
    let mut s = 0.0;
    for (a, b) in xi0.iter().zip(xi1) {
        let n = a.coeffs.len().max(b.coeffs.len());
        for p in 0..n {
            let ca = a.coeffs.get(p).copied().unwrap_or(0.0);
            let cb = b.coeffs.get(p).copied().unwrap_or(0.0);
            s += (ca - cb).abs();
        }
    }
    Ok(s / (2.0 * xi0.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xi_examples() {
        let x2 = MixingFunction::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(x2.d1(0.5), 1.0);
        let f = MixingFunction::new(vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(f.value(1.0), 2.0);
        assert_eq!(x2.d2(0.3), 2.0);
    }

    #[test]
    fn theta_examples() {
        let x2 = MixingFunction::new(vec![0.0, 0.0, 1.0]).unwrap();
        for r in [0.0, 0.3, 0.9] {
            assert!((x2.theta(r) - r * r).abs() < 1e-15);
        }
        let f = MixingFunction::new(vec![0.2, 0.1, 0.5, 0.25]).unwrap();
        assert_eq!(f.theta(0.0), 0.0);
    }

    #[test]
    fn b_examples() {
        let b = CorrelationFunction::new(0.0, vec![(1.0, 1.0)]).unwrap();
        assert_eq!(b.eval(0.0, 0), 1.0);
        assert_eq!(b.eval(0.0, 1), -1.0);
        let b = CorrelationFunction::new(0.3, vec![(0.5, 2.0), (0.25, 0.5)]).unwrap();
        assert_eq!(b.eval(0.0, 0), 0.3 + 0.5 + 0.25);
    }

    #[test]
    fn restriction_examples() {
        let b = CorrelationFunction::new(0.0, vec![(1.0, 1.0)]).unwrap();
        let r = spherical_restriction(&b, 0.5, 40, 1e-12).unwrap();
        let mut fact = 1.0;
        for p in 0..=40 {
            if p > 0 {
                fact *= p as f64;
            }
            assert!((r.xi.coeffs[p] - (-1f64).exp() / fact).abs() < 1e-15);
        }
        let b = CorrelationFunction::new(2.0, vec![]).unwrap();
        let r = spherical_restriction(&b, 3.0, 10, 1e-12).unwrap();
        assert_eq!(r.xi.coeffs[0], 2.0);
        assert!(r.xi.coeffs[1..].iter().all(|c| *c == 0.0));
        let big = CorrelationFunction::new(0.0, vec![(1.0, 5.0)]).unwrap();
        assert!(matches!(
            spherical_restriction(&big, 4.0, 10, 1e-10),
            Err(Error::TruncationInsufficient { .. })
        ));
    }

    #[test]
    fn continuity_bound_examples() {
        let a = MixingFunction::new(vec![0.0, 0.0, 1.0]).unwrap();
        let b = MixingFunction::new(vec![0.0, 0.0, 2.0]).unwrap();
        assert_eq!(
            continuity_bound(std::slice::from_ref(&a), std::slice::from_ref(&a)).unwrap(),
            0.0
        );
        assert_eq!(
            continuity_bound(std::slice::from_ref(&a), &[b]).unwrap(),
            0.5
        );
        let c = MixingFunction::new(vec![0.0, 0.4, 1.0]).unwrap();
        assert!((continuity_bound(&[a.clone(), a.clone()], &[c, a]).unwrap() - 0.1).abs() < 1e-15);
    }
}
