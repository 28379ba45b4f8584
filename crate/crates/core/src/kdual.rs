//! The dual pair `(K^D, Λ^D)`: `K^D(u)` solves `[(D + diag K)⁻¹]_xx = u_x`
//! and `Λ^D(u) = (Σ_x K_x u_x − log det(D + K)) / |Ω|`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{cholesky, logdet_and_inverse, min_eigenvalue, plus_diag, Mat, Vector};
use crate::rng::stream;

/// Lower end of the guarded domain for `u`.
pub const U_MIN: f64 = 1e-8;
/// Upper end of the guarded domain for `u`.
pub const U_MAX: f64 = 1e6;
/// Default Newton tolerance on the diagonal residual.
pub const DEFAULT_TOL: f64 = 1e-11;

const MAX_STEPS: usize = 200;
const MAX_HALVINGS: usize = 60;
const ARMIJO: f64 = 1e-4;

/// A solved point `u ↦ K^D(u)` with its cached resolvent.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub u: Vector,
    pub k: Vector,
    /// `(D + diag K)⁻¹`.
    pub resolvent: Mat,
    /// `log det(D + diag K)`.
    pub logdet: f64,
    /// `max_x |[(D+K)⁻¹]_xx − u_x|`.
    pub residual: f64,
    /// Newton steps taken.
    pub iterations: usize,
}

impl DualPoint {
    /// `Λ^D(u)`.
    pub fn lambda(&self) -> f64 {
        let n = self.u.len() as f64;
        (self.k.dot(&self.u) - self.logdet) / n
    }

    /// `∇K^D(u) = −((D+K)⁻¹ ⊙ (D+K)⁻¹)⁻¹`.
    pub fn grad_k(&self) -> Result<Mat> {
        let sq = self.resolvent.component_mul(&self.resolvent);
        let inv = cholesky(&sq)?.inverse();
        Ok(-(&inv + inv.transpose()) * 0.5)
    }
}

struct Eval {
    logdet: f64,
    inv: Mat,
    residual: Vector,
}

fn evaluate(d: &Mat, k: &Vector, u: &Vector) -> Option<Eval> {
    let (logdet, inv) = logdet_and_inverse(&plus_diag(d, k.as_slice())).ok()?;
    let residual = inv.diagonal() - u;
    Some(Eval {
        logdet,
        inv,
        residual,
    })
}

fn potential(e: &Eval, k: &Vector, u: &Vector) -> f64 {
    k.dot(u) - e.logdet
}

fn newton_direction(e: &Eval) -> Result<Vector> {
    let sq = e.inv.component_mul(&e.inv);
    Ok(cholesky(&sq)?.solve(&e.residual))
}

fn initial_guess(d: &Mat, u: &Vector) -> Vector {
    let mut k = Vector::from_iterator(u.len(), (0..u.len()).map(|x| 1.0 / u[x] - d[(x, x)]));
    let lmin = min_eigenvalue(&plus_diag(d, k.as_slice()));
    if lmin < 1e-8 {
        k.add_scalar_mut(1e-8 - lmin + 1e-8 * lmin.abs().max(1.0));
    }
    k
}

/// Validates `u` against positivity and the guarded domain.
pub fn check_domain(d: &Mat, u: &[f64]) -> Result<()> {
    if d.nrows() != u.len() || d.ncols() != u.len() || u.is_empty() {
        return Err(Error::InvalidInput(format!(
            "u has length {} but D is {}x{}",
            u.len(),
            d.nrows(),
            d.ncols()
        )));
    }
    if let Some((x, v)) = u
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::InvalidInput(format!(
            "u[{x}] = {v} must be positive"
        )));
    }
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u.iter().copied().fold(0.0, f64::max);
    if lo < U_MIN || hi > U_MAX {
        let uv = Vector::from_column_slice(u);
        let k0 = initial_guess(d, &uv);
        let residual = evaluate(d, &k0, &uv)
            .map(|e| e.residual.amax())
            .unwrap_or(f64::INFINITY);
        return Err(Error::OutOfGuard {
            message: format!("u must lie in [{U_MIN:e}, {U_MAX:e}], got range [{lo:e}, {hi:e}]"),
            residual,
        });
    }
    Ok(())
}

/// Solves `[(D + diag K)⁻¹]_xx = u_x` by damped Newton iteration.
///
/// Steps are damped by backtracking on the convex potential
/// `φ(K) = Σ K_x u_x − log det(D + K)`, whose gradient is minus the residual.
pub fn solve_k(d: &Mat, u: &[f64], tol: f64) -> Result<DualPoint> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    check_domain(d, u)?;
    let u = Vector::from_column_slice(u);
    let mut k = initial_guess(d, &u);
    let mut cur = evaluate(d, &k, &u).ok_or_else(|| Error::NotPositiveDefinite {
        context: "initial K".into(),
    })?;
    let floor = tol.max(8.0 * f64::EPSILON * u.amax());
    let mut iterations = 0;
    let mut polished = false;
    loop {
        let res = cur.residual.amax();
        let converged = res <= floor;
        if converged && polished {
            break;
        }
        if iterations >= MAX_STEPS {
            if converged {
                break;
            }
            return Err(Error::NoConvergence {
                iterations,
                residual: res,
            });
        }
        let dir = newton_direction(&cur)?;
        let slope = -cur.residual.dot(&dir);
        let phi0 = potential(&cur, &k, &u);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &k + &dir * alpha;
            if let Some(e) = evaluate(d, &trial, &u) {
                let armijo = potential(&e, &trial, &u) <= phi0 + ARMIJO * alpha * slope;
                if armijo || e.residual.amax() < res {
                    accepted = Some((trial, e));
                    break;
                }
            }
            alpha *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((trial, e)) => {
                k = trial;
                cur = e;
            }
            None if converged => break,
            None => {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: res,
                })
            }
        }
        if converged {
            polished = true;
        }
    }
    let residual = cur.residual.amax();
    Ok(DualPoint {
        u,
        k,
        resolvent: cur.inv,
        logdet: cur.logdet,
        residual,
        iterations,
    })
}

/// `Λ^D(u)`.
pub fn lambda(d: &Mat, u: &[f64]) -> Result<f64> {
    Ok(solve_k(d, u, DEFAULT_TOL)?.lambda())
}

/// `∇K^D` at a solved point.
pub fn grad_k(point: &DualPoint) -> Result<Mat> {
    point.grad_k()
}

/// Outcome of a boundary sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReport {
    /// Largest `ε` with `∇_xK_x ≤ −ε u_x⁻²` and `|∇_xK_y| ≤ ε⁻¹` (`x ≠ y`) at every sample.
    pub epsilon: f64,
    /// Smallest value of `−∇_xK_x u_x²`.
    pub diagonal_ratio: f64,
    /// Largest off-diagonal `|∇_xK_y|`.
    pub off_diagonal_max: f64,
    pub samples: usize,
}

/// `ε` certified over an explicit list of points.
pub fn boundary_epsilon(d: &Mat, points: &[Vec<f64>]) -> Result<BoundaryReport> {
    let mut diag_ratio = f64::INFINITY;
    let mut off = 0.0f64;
    for u in points {
        let p = solve_k(d, u, DEFAULT_TOL)?;
        let j = p.grad_k()?;
        for x in 0..u.len() {
            diag_ratio = diag_ratio.min(-j[(x, x)] * u[x] * u[x]);
            for y in 0..u.len() {
                if x != y {
                    off = off.max(j[(x, y)].abs());
                }
            }
        }
    }
    let epsilon = if off > 0.0 {
        diag_ratio.min(1.0 / off)
    } else {
        diag_ratio
    };
    Ok(BoundaryReport {
        epsilon,
        diagonal_ratio: diag_ratio,
        off_diagonal_max: off,
        samples: points.len(),
    })
}

/// Samples `u` uniformly in `(0, K_box)^Ω` (floored at `10⁻⁶ K_box`) and certifies `ε`.
pub fn boundary_diagnostics(
    d: &Mat,
    k_box: f64,
    samples: usize,
    seed: u64,
) -> Result<BoundaryReport> {
    if !(k_box > 0.0) || samples == 0 {
        return Err(Error::InvalidInput(
            "K_box and samples must be positive".into(),
        ));
    }
    let n = d.nrows();
    let points: Vec<Vec<f64>> = (0..samples as u64)
        .map(|i| {
            let mut rng = stream(seed, "boundary", i);
            (0..n)
                .map(|_| k_box * rng.random::<f64>().max(1e-6))
                .collect()
        })
        .collect();
    boundary_epsilon(d, &points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_closed_form() {
        let p = solve_k(&Mat::zeros(2, 2), &[0.5, 0.25], DEFAULT_TOL).unwrap();
        assert!((p.k[0] - 2.0).abs() < 1e-12 && (p.k[1] - 4.0).abs() < 1e-12);
        let l = lambda(&Mat::zeros(3, 3), &[1.0, 1.0, 1.0]).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_site_closed_form() {
        let d = Mat::from_element(1, 1, 1.0);
        let p = solve_k(&d, &[0.5], DEFAULT_TOL).unwrap();
        assert!((p.k[0] - 1.0).abs() < 1e-12);
        assert!((p.lambda() - (0.5 + 0.5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn zero_coupling_gradient_is_diagonal() {
        let p = solve_k(&Mat::zeros(2, 2), &[0.5, 2.0], DEFAULT_TOL).unwrap();
        let j = p.grad_k().unwrap();
        assert!((j[(0, 0)] + 4.0).abs() < 1e-10 && (j[(1, 1)] + 0.25).abs() < 1e-10);
        assert!(j[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn guard_rejects_extreme_u() {
        let d = Mat::zeros(1, 1);
        assert!(matches!(
            solve_k(&d, &[1e-9], DEFAULT_TOL),
            Err(Error::OutOfGuard { .. })
        ));
        assert!(matches!(
            solve_k(&d, &[0.0], DEFAULT_TOL),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn zero_coupling_epsilon_is_one() {
        let r = boundary_diagnostics(&Mat::zeros(2, 2), 5.0, 20, 1).unwrap();
        assert!((r.epsilon - 1.0).abs() < 1e-9);
    }
}
