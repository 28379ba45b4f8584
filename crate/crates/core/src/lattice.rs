//! Site sets, periodic Laplacians, coupling matrices and the dense
//! positive-definite kernel used by the other modules.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix used for all site-indexed operators.
pub type Mat = DMatrix<f64>;
/// Dense real vector indexed by sites.
pub type Vector = DVector<f64>;

/// Ordered set of distinct site labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteSet {
    labels: Vec<String>,
}

impl SiteSet {
    /// Builds a site set, rejecting empty or duplicated labels.
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("site set must be nonempty".into()));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::InvalidInput("site labels must be distinct".into()));
        }
        Ok(Self { labels })
    }

    /// Sites labelled `0..n`.
    pub fn indexed(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()).collect())
    }

    /// Sites of the periodic lattice `[[1,L]]^d` in lexicographic order.
    pub fn lattice(l: usize, d: usize) -> Self {
        let n = l.pow(d as u32);
        let labels = (0..n)
            .map(|i| {
                let c = lattice_coords(i, l, d);
                format!(
                    "({})",
                    c.iter()
                        .map(|v| (v + 1).to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                )
            })
            .collect();
        Self { labels }
    }

    /// Number of sites.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false; a site set has at least one site.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Labels in iteration order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Periodic lattice parameters: side length, internal dimension, mass and interaction strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    #[serde(rename = "L")]
    pub l: usize,
    pub d: usize,
    pub mu: f64,
    pub t: f64,
}

impl LatticeSpec {
    /// Checks `L ≥ 1`, `μ > 0`, `t > 0`.
    pub fn validate(&self) -> Result<()> {
        if self.l < 1 {
            return Err(Error::InvalidInput("L must be at least 1".into()));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidInput("mu must be positive".into()));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidInput("t must be positive".into()));
        }
        Ok(())
    }

    /// Number of lattice sites `L^d`.
    pub fn n_sites(&self) -> usize {
        self.l.pow(self.d as u32)
    }
}

/// Symmetric positive semi-definite site coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    sites: SiteSet,
    entries: Mat,
}

impl CouplingMatrix {
    /// Validates symmetry (1e-12) and semi-definiteness (λ_min ≥ −1e-10·‖D‖).
    pub fn new(sites: SiteSet, entries: Mat) -> Result<Self> {
        let n = sites.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "coupling must be {n}x{n}, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "coupling entries must be finite".into(),
            ));
        }
        let scale = entries.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "coupling not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        let lmin = min_eigenvalue(&sym);
        if lmin < -1e-10 * scale {
            return Err(Error::InvalidInput(format!(
                "coupling not positive semi-definite (smallest eigenvalue {lmin:.3e})"
            )));
        }
        Ok(Self {
            sites,
            entries: sym,
        })
    }

    /// Coupling over sites `0..n` from a dense matrix.
    pub fn from_matrix(entries: Mat) -> Result<Self> {
        let sites = SiteSet::indexed(entries.nrows())?;
        Self::new(sites, entries)
    }

    /// The zero coupling on `n` sites.
    pub fn zeros(n: usize) -> Result<Self> {
        Self::from_matrix(Mat::zeros(n, n))
    }

    /// Site set.
    pub fn sites(&self) -> &SiteSet {
        &self.sites
    }

    /// Dense entries.
    pub fn matrix(&self) -> &Mat {
        &self.entries
    }

    /// Number of sites.
    pub fn n(&self) -> usize {
        self.sites.len()
    }
}

fn lattice_coords(mut i: usize, l: usize, d: usize) -> Vec<usize> {
    let mut c = vec![0; d];
    for slot in c.iter_mut() {
        *slot = i % l;
        i /= l;
    }
    c
}

fn lattice_index(c: &[usize], l: usize) -> usize {
    c.iter().rev().fold(0, |acc, &v| acc * l + v)
}

/// Periodic graph Laplacian of `[[1,L]]^d`, negative semi-definite.
///
/// Every site has `2d` neighbours counted with multiplicity, so for `L = 2`
/// both wrap directions land on the same neighbour and the off-diagonal entry is 2;
/// for `L = 1` every neighbour is the site itself and Δ = 0.
pub fn build_periodic_laplacian(lat: &LatticeSpec) -> Mat {
    let n = lat.n_sites();
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        let c = lattice_coords(i, lat.l, lat.d);
        for axis in 0..lat.d {
            for step in [1, lat.l - 1] {
                let mut nb = c.clone();
                nb[axis] = (nb[axis] + step) % lat.l;
                let j = lattice_index(&nb, lat.l);
                m[(i, j)] += 1.0;
                m[(i, i)] -= 1.0;
            }
        }
    }
    m
}

/// Elastic coupling `μI − tΔ`.
pub fn build_coupling(lat: &LatticeSpec) -> Result<CouplingMatrix> {
    lat.validate()?;
    let n = lat.n_sites();
    let m = Mat::identity(n, n) * lat.mu - build_periodic_laplacian(lat) * lat.t;
    CouplingMatrix::new(SiteSet::lattice(lat.l, lat.d), m)
}

/// `−tΔ`, the positive semi-definite part of the elastic coupling.
pub fn build_stiffness(lat: &LatticeSpec) -> Result<CouplingMatrix> {
    lat.validate()?;
    CouplingMatrix::new(
        SiteSet::lattice(lat.l, lat.d),
        build_periodic_laplacian(lat) * (-lat.t),
    )
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(m: &Mat) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    nalgebra::Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        context: format!("{}x{} factorization", m.nrows(), m.ncols()),
    })
}

/// Log-determinant through a Cholesky factorization.
pub fn logdet_pd(m: &Mat) -> Result<f64> {
    let ch = cholesky(m)?;
    let l = ch.l_dirty();
    Ok(2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn inverse_pd(m: &Mat) -> Result<Mat> {
    let inv = cholesky(m)?.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Log-determinant and inverse from a single factorization.
pub fn logdet_and_inverse(m: &Mat) -> Result<(f64, Mat)> {
    let ch = cholesky(m)?;
    let l = ch.l_dirty();
    let ld = 2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    let inv = ch.inverse();
    Ok((ld, (&inv + inv.transpose()) * 0.5))
}

/// Diagonal of `M⁻¹` for positive definite `M`.
pub fn inverse_diagonal(m: &Mat) -> Result<Vector> {
    let inv = inverse_pd(m)?;
    Ok(inv.diagonal())
}

/// `D + diag(v)`.
pub fn plus_diag(d: &Mat, v: &[f64]) -> Mat {
    let mut m = d.clone();
    for (i, x) in v.iter().enumerate() {
        m[(i, i)] += x;
    }
    m
}

/// True when `M` admits a Cholesky factorization.
pub fn is_pd(m: &Mat) -> bool {
    nalgebra::Cholesky::new(m.clone()).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_small_cases() {
        let l3 = build_periodic_laplacian(&LatticeSpec {
            l: 3,
            d: 1,
            mu: 1.0,
            t: 1.0,
        });
        assert_eq!(
            l3,
            Mat::from_row_slice(3, 3, &[-2., 1., 1., 1., -2., 1., 1., 1., -2.])
        );
        let l1 = build_periodic_laplacian(&LatticeSpec {
            l: 1,
            d: 3,
            mu: 1.0,
            t: 1.0,
        });
        assert_eq!(l1, Mat::zeros(1, 1));
        let l2 = build_periodic_laplacian(&LatticeSpec {
            l: 2,
            d: 1,
            mu: 1.0,
            t: 1.0,
        });
        assert_eq!(l2, Mat::from_row_slice(2, 2, &[-2., 2., 2., -2.]));
    }

    #[test]
    fn laplacian_spectrum_l3() {
        let l3 = build_periodic_laplacian(&LatticeSpec {
            l: 3,
            d: 1,
            mu: 1.0,
            t: 1.0,
        });
        let mut ev: Vec<f64> = (-l3).symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip([0.0, 3.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn coupling_examples() {
        let c = build_coupling(&LatticeSpec {
            l: 3,
            d: 1,
            mu: 1.0,
            t: 0.5,
        })
        .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 2.0 } else { -0.5 };
                assert_eq!(c.matrix()[(i, j)], want);
            }
        }
        let c1 = build_coupling(&LatticeSpec {
            l: 1,
            d: 1,
            mu: 2.0,
            t: 7.0,
        })
        .unwrap();
        assert_eq!(c1.matrix()[(0, 0)], 2.0);
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet_pd(&Mat::identity(3, 3)).unwrap(), 0.0);
        assert!(
            (logdet_pd(&Mat::from_diagonal_element(2, 2, 2.0)).unwrap() - 2.0 * 2f64.ln()).abs()
                < 1e-15
        );
        let m = Mat::from_row_slice(2, 2, &[2., 1., 1., 2.]);
        assert!((logdet_pd(&m).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!(matches!(
            logdet_pd(&Mat::from_row_slice(2, 2, &[1., 2., 2., 1.])),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn inverse_diagonal_examples() {
        let d = inverse_diagonal(&Mat::from_row_slice(2, 2, &[2., 0., 0., 4.])).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 0.25).abs() < 1e-15);
        let d = inverse_diagonal(&Mat::from_row_slice(2, 2, &[2., 1., 1., 2.])).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15 && (d[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_rejects_bad_input() {
        assert!(
            CouplingMatrix::from_matrix(Mat::from_row_slice(2, 2, &[1., 0.5, 0.4, 1.])).is_err()
        );
        assert!(CouplingMatrix::from_matrix(Mat::from_row_slice(2, 2, &[1., 2., 2., 1.])).is_err());
        assert!(SiteSet::new(vec!["a".into(), "a".into()]).is_err());
    }
}
