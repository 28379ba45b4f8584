//! Desk-scale samplers for the Gaussian Hamiltonians, covariance checks, the exact shift
//! identity for the field, finite-`N` quadrature of the partition function and the annealed
//! limit.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{reparameterize_beta, EuclideanModelSpec};
use crate::lattice::{build_periodic_laplacian, logdet_pd, min_eigenvalue, LatticeSpec, Mat};
use crate::mixing::{CorrelationFunction, MixingFunction};
use crate::quad::GaussLegendre;
use crate::rng::stream;

/// Largest number of tensor entries a spherical realization may hold.
pub const TENSOR_BUDGET: usize = 20_000_000;
/// Largest grid the partition-function quadrature accepts.
pub const GRID_BUDGET: f64 = 2e8;
/// Default random features per atom.
pub const DEFAULT_FEATURES: usize = 4096;

/// `H(σ) = Σ_p √c_p N^{−(p−1)/2} Σ J_{i₁…i_p} σ_{i₁}…σ_{i_p}` plus a constant `√(c₀N)·g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalField {
    pub n: usize,
    pub coeffs: Vec<f64>,
    /// `tensors[p−1]` is the flattened order-`p` tensor.
    pub tensors: Vec<Vec<f64>>,
    pub constant: f64,
}

/// `V(u) = Σ_f a_f cos(ω_f·u + φ_f) + √(c₀N)·g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuclideanField {
    pub n: usize,
    /// Row-major `features × n`.
    pub omegas: Vec<f64>,
    pub phases: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub constant: f64,
}

/// A sampled field together with its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldRealization {
    Spherical { seed: u64, field: SphericalField },
    Euclidean { seed: u64, field: EuclideanField },
}

impl FieldRealization {
    /// Evaluates the field at `u`.
    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            Self::Spherical { field, .. } => field.eval(u),
            Self::Euclidean { field, .. } => field.eval(u),
        }
    }
}

impl SphericalField {
    /// Draws the tensors from `rng`.
    pub fn draw<R: Rng>(xi: &MixingFunction, n: usize, rng: &mut R) -> Result<Self> {
        xi.validate()?;
        let deg = xi.coeffs.len().saturating_sub(1);
        if n == 0 || n > 64 || deg > 4 {
            return Err(Error::InvalidInput(
                "spherical sampler needs 1 ≤ N ≤ 64 and degree ≤ 4".into(),
            ));
        }
        let entries: usize = (1..=deg).map(|p| n.pow(p as u32)).sum();
        if entries > TENSOR_BUDGET {
            return Err(Error::BudgetExceeded {
                required: entries as f64,
                budget: TENSOR_BUDGET as f64,
            });
        }
        let g: f64 = StandardNormal.sample(rng);
        let constant = (xi.coeffs[0] * n as f64).sqrt() * g;
        let tensors = (1..=deg)
            .map(|p| {
                if xi.coeffs[p] == 0.0 {
                    vec![]
                } else {
                    (0..n.pow(p as u32))
                        .map(|_| StandardNormal.sample(rng))
                        .collect()
                }
            })
            .collect();
        Ok(Self {
            n,
            coeffs: xi.coeffs.clone(),
            tensors,
            constant,
        })
    }

    /// `H(σ)`.
    pub fn eval(&self, sigma: &[f64]) -> f64 {
        let n = self.n;
        let mut total = self.constant;
        for (idx, t) in self.tensors.iter().enumerate() {
            if t.is_empty() {
                continue;
            }
            let p = idx + 1;
            let mut v = t.clone();
            for _ in 0..p {
                v = v
                    .chunks(n)
                    .map(|row| row.iter().zip(sigma).map(|(a, b)| a * b).sum())
                    .collect();
            }
            total += self.coeffs[p].sqrt() * (n as f64).powf(-((p - 1) as f64) / 2.0) * v[0];
        }
        total
    }
}

impl EuclideanField {
    /// Draws `features` random features per atom from `rng`.
    pub fn draw<R: Rng>(
        b: &CorrelationFunction,
        n: usize,
        features: usize,
        rng: &mut R,
    ) -> Result<Self> {
        b.validate()?;
        if n == 0 || n > 64 || features == 0 {
            return Err(Error::InvalidInput(
                "Euclidean sampler needs 1 ≤ N ≤ 64 and at least one feature".into(),
            ));
        }
        let nf = n as f64;
        let mut omegas = Vec::with_capacity(b.atoms.len() * features * n);
        let mut phases = Vec::with_capacity(b.atoms.len() * features);
        let mut amplitudes = Vec::with_capacity(b.atoms.len() * features);
        for &(w, lambda) in &b.atoms {
            let normal = Normal::new(0.0, (2.0 * lambda * lambda / nf).sqrt())
                .map_err(|e| Error::InvalidInput(e.to_string()))?;
            let amp = (2.0 * w * nf / features as f64).sqrt();
            for _ in 0..features {
                omegas.extend((0..n).map(|_| normal.sample(rng)));
                phases.push(rng.random::<f64>() * 2.0 * PI);
                amplitudes.push(amp);
            }
        }
        let g: f64 = StandardNormal.sample(rng);
        Ok(Self {
            n,
            omegas,
            phases,
            amplitudes,
            constant: (b.c0 * nf).sqrt() * g,
        })
    }

    /// `V(u)`.
    pub fn eval(&self, u: &[f64]) -> f64 {
        let n = self.n;
        self.constant
            + self
                .amplitudes
                .iter()
                .zip(&self.phases)
                .zip(self.omegas.chunks(n))
                .map(|((a, ph), om)| {
                    a * (om.iter().zip(u).map(|(o, x)| o * x).sum::<f64>() + ph).cos()
                })
                .sum::<f64>()
    }
}

/// Samples a spherical Hamiltonian with covariance `N ξ((σ,τ)_N)`.
pub fn sample_spherical_h(xi: &MixingFunction, n: usize, seed: u64) -> Result<FieldRealization> {
    let mut rng = stream(seed, "spherical-field", 0);
    Ok(FieldRealization::Spherical {
        seed,
        field: SphericalField::draw(xi, n, &mut rng)?,
    })
}

/// Samples a Euclidean field with covariance `N B(‖u−v‖²_N)`.
pub fn sample_euclidean_v(
    b: &CorrelationFunction,
    n: usize,
    features: usize,
    seed: u64,
) -> Result<FieldRealization> {
    let mut rng = stream(seed, "euclidean-field", 0);
    Ok(FieldRealization::Euclidean {
        seed,
        field: EuclideanField::draw(b, n, features, &mut rng)?,
    })
}

/// Empirical second moment against its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub label: String,
    pub mean: f64,
    pub standard_error: f64,
    pub target: f64,
    /// `|mean − target| / standard_error`.
    pub z: f64,
}

fn moment<F: Fn(u64) -> f64 + Sync + Send>(
    label: &str,
    samples: usize,
    target: f64,
    f: F,
) -> CovarianceReport {
    let vals: Vec<f64> = (0..samples as u64).into_par_iter().map(f).collect();
    let m = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / m;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let se = (var / m).sqrt();
    CovarianceReport {
        label: label.into(),
        mean,
        standard_error: se,
        target,
        z: (mean - target).abs() / se.max(1e-300),
    }
}

/// `E H(σ)H(τ)` at overlap `R` and `E H(σ)²`, over independent realizations.
pub fn spherical_covariance(
    xi: &MixingFunction,
    n: usize,
    overlap: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<CovarianceReport>> {
    if n < 2 || !(-1.0..=1.0).contains(&overlap) || samples < 2 {
        return Err(Error::InvalidInput(
            "need N ≥ 2, |R| ≤ 1 and at least two samples".into(),
        ));
    }
    SphericalField::draw(xi, n, &mut stream(seed, "probe", 0))?;
    let nf = n as f64;
    let mut sigma = vec![0.0; n];
    sigma[0] = nf.sqrt();
    let mut tau = vec![0.0; n];
    tau[0] = nf.sqrt() * overlap;
    tau[1] = nf.sqrt() * (1.0 - overlap * overlap).sqrt();
    let draw = |i: u64| {
        SphericalField::draw(xi, n, &mut stream(seed, "spherical-cov", i)).expect("validated")
    };
    Ok(vec![
        moment("cross", samples, nf * xi.value(overlap), |i| {
            let f = draw(i);
            f.eval(&sigma) * f.eval(&tau)
        }),
        moment("variance", samples, nf * xi.value(1.0), |i| {
            draw(i).eval(&sigma).powi(2)
        }),
    ])
}

/// `E V(u)V(v)` at `‖u−v‖²_N = dist2` along two directions, over independent realizations.
pub fn euclidean_covariance(
    b: &CorrelationFunction,
    n: usize,
    dist2: f64,
    features: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<CovarianceReport>> {
    if n < 2 || !(dist2 >= 0.0) || samples < 2 {
        return Err(Error::InvalidInput(
            "need N ≥ 2, a nonnegative distance and at least two samples".into(),
        ));
    }
    EuclideanField::draw(b, n, 1, &mut stream(seed, "probe", 0))?;
    let nf = n as f64;
    let len = (nf * dist2).sqrt();
    let u = vec![0.0; n];
    let mut v = vec![0.0; n];
    v[0] = len;
    // Second pair: shifted base point, diagonal direction.
    let mut u2 = vec![0.0; n];
    u2[1] = 0.7;
    let mut v2 = u2.clone();
    v2[0] += len / 2f64.sqrt();
    v2[1] += len / 2f64.sqrt();
    let target = nf * b.eval(dist2, 0);
    let draw = |i: u64| {
        EuclideanField::draw(b, n, features, &mut stream(seed, "euclidean-cov", i))
            .expect("validated")
    };
    Ok(vec![
        moment("axis", samples, target, |i| {
            let f = draw(i);
            f.eval(&u) * f.eval(&v)
        }),
        moment("diagonal", samples, target, |i| {
            let f = draw(i);
            f.eval(&u2) * f.eval(&v2)
        }),
    ])
}

/// Outcome of the shift-identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HShiftReport {
    pub max_error: f64,
    /// `1e−9 · N |Ω|`.
    pub bound: f64,
    /// Largest deviation of the cross term from `√N h Σ_x u₁(x)` and from linearity.
    pub linearity_residual: f64,
    pub points: usize,
}

/// `½ Σ_{x,y} S_xy (u(x), u(y))` for configurations stored site-major.
fn quadratic(s: &Mat, u: &[f64], n: usize) -> f64 {
    let sites = s.nrows();
    let mut acc = 0.0;
    for x in 0..sites {
        for y in 0..sites {
            let dot: f64 = u[x * n..(x + 1) * n]
                .iter()
                .zip(&u[y * n..(y + 1) * n])
                .map(|(a, b)| a * b)
                .sum();
            acc += s[(x, y)] * dot;
        }
    }
    0.5 * acc
}

/// `𝓗_{N,h}(u) = ½ Σ S_xy (u(x),u(y)) + Σ_x V_x(u(x)) + √N h Σ_x u₁(x)`.
pub fn hamiltonian(s: &Mat, fields: &[EuclideanField], h: f64, u: &[f64]) -> f64 {
    let n = fields[0].n;
    let nf = n as f64;
    quadratic(s, u, n)
        + fields
            .iter()
            .enumerate()
            .map(|(x, f)| f.eval(&u[x * n..(x + 1) * n]))
            .sum::<f64>()
        + nf.sqrt() * h * (0..fields.len()).map(|x| u[x * n]).sum::<f64>()
}

/// Checks `H̃(u + √N(h/μ)e₁) = N|Ω|h²/(2μ) + 𝓗_{N,h}(u)` with `H̃` built from the translated fields.
pub fn h_shift_identity_check(
    lat: &LatticeSpec,
    fields: &[EuclideanField],
    h: f64,
    points: usize,
    seed: u64,
) -> Result<HShiftReport> {
    lat.validate()?;
    let sites = lat.n_sites();
    if fields.len() != sites || fields.iter().any(|f| f.n != fields[0].n) {
        return Err(Error::InvalidInput(
            "one field per site, all of equal dimension".into(),
        ));
    }
    let n = fields[0].n;
    let nf = n as f64;
    let mu = lat.mu;
    let s = Mat::identity(sites, sites) * mu - build_periodic_laplacian(lat) * lat.t;
    let shift = |h: f64| nf.sqrt() * h / mu;
    let c = shift(h);
    let tilde = |u: &[f64]| -> f64 {
        quadratic(&s, u, n)
            + fields
                .iter()
                .enumerate()
                .map(|(x, f)| {
                    let mut v = u[x * n..(x + 1) * n].to_vec();
                    v[0] -= c;
                    f.eval(&v)
                })
                .sum::<f64>()
    };
    let mut rng = stream(seed, "h-shift", 0);
    let mut max_error = 0.0f64;
    let mut lin = 0.0f64;
    for _ in 0..points {
        let u: Vec<f64> = (0..sites * n)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                2.0 * g
            })
            .collect();
        let mut shifted = u.clone();
        for x in 0..sites {
            shifted[x * n] += c;
        }
        let lhs = tilde(&shifted);
        let rhs = nf * sites as f64 * h * h / (2.0 * mu) + hamiltonian(&s, fields, h, &u);
        max_error = max_error.max((lhs - rhs).abs());
        // Cross term of the quadratic at three field strengths; a quadratic fit must be linear.
        let cross = |hh: f64| {
            let cc = shift(hh);
            let mut w = u.clone();
            let mut e = vec![0.0; sites * n];
            for x in 0..sites {
                w[x * n] += cc;
                e[x * n] = cc;
            }
            quadratic(&s, &w, n) - quadratic(&s, &u, n) - quadratic(&s, &e, n)
        };
        let (f1, f2, f3) = (cross(h), cross(2.0 * h), cross(3.0 * h));
        let curvature = (f3 - 2.0 * f2 + f1) / 2.0;
        let slope = f2 - f1 - 3.0 * curvature;
        let intercept = f1 - slope - curvature;
        let expect = nf.sqrt() * h * (0..sites).map(|x| u[x * n]).sum::<f64>();
        lin = lin
            .max(curvature.abs())
            .max(intercept.abs())
            .max((slope - expect).abs());
    }
    Ok(HShiftReport {
        max_error,
        bound: 1e-9 * nf * sites as f64,
        linearity_residual: lin,
        points,
    })
}

/// `lim (N|Ω|)⁻¹ log E Z = ½B(0) + ½log 2π − (1/2|Ω|) log det(μI − tΔ) + h²/(2μ)` at `β = 1`.
pub fn annealed_limit(spec: &EuclideanModelSpec) -> Result<f64> {
    spec.validate()?;
    let s = reparameterize_beta(spec);
    let n = s.lattice.n_sites() as f64;
    let stiff = Mat::identity(n as usize, n as usize) * s.lattice.mu
        - build_periodic_laplacian(&s.lattice) * s.lattice.t;
    Ok(
        0.5 * s.b.eval(0.0, 0) + 0.5 * (2.0 * PI).ln() - logdet_pd(&stiff)? / (2.0 * n)
            + s.h * s.h / (2.0 * s.lattice.mu),
    )
}

/// Polar grid on `ℝ^N` (`N ∈ {2, 3}`): points and log weights including the Jacobian.
fn polar_grid(n: usize, rho_max: f64, nodes: usize) -> Vec<(Vec<f64>, f64)> {
    let radial: Vec<(f64, f64)> = GaussLegendre::new(nodes).mapped(0.0, rho_max).collect();
    let phis: Vec<f64> = (0..nodes)
        .map(|k| 2.0 * PI * k as f64 / nodes as f64)
        .collect();
    let dphi = 2.0 * PI / nodes as f64;
    let mut dirs: Vec<(Vec<f64>, f64)> = vec![];
    if n == 2 {
        for &p in &phis {
            dirs.push((vec![p.cos(), p.sin()], dphi));
        }
    } else {
        for (ct, w) in GaussLegendre::new(nodes.div_ceil(2)).mapped(-1.0, 1.0) {
            let st = (1.0 - ct * ct).sqrt();
            for &p in &phis {
                dirs.push((vec![ct, st * p.cos(), st * p.sin()], w * dphi));
            }
        }
    }
    let mut out = Vec::with_capacity(radial.len() * dirs.len());
    for (rho, wr) in &radial {
        for (d, wd) in &dirs {
            out.push((
                d.iter().map(|c| rho * c).collect(),
                (wr * wd * rho.powi(n as i32 - 1)).ln(),
            ));
        }
    }
    out
}

/// `log Z` by tensorized polar quadrature over `(ℝ^N)^Ω`, with optional fields (`None` for zero disorder).
pub fn log_partition_quadrature(
    stiff: &Mat,
    h: f64,
    fields: Option<&[EuclideanField]>,
    n: usize,
    nodes: usize,
) -> Result<f64> {
    let sites = stiff.nrows();
    if !(n == 2 || n == 3) {
        return Err(Error::InvalidInput("quadrature supports N ∈ {2, 3}".into()));
    }
    if sites > 2 {
        return Err(Error::InvalidInput(
            "quadrature supports at most two sites".into(),
        ));
    }
    let lmin = min_eigenvalue(stiff);
    if !(lmin > 0.0) {
        return Err(Error::NotPositiveDefinite {
            context: "stiffness".into(),
        });
    }
    let nf = n as f64;
    let var_scale = 1.0 / lmin;
    let rho_max =
        nf.sqrt() * h.abs() * var_scale + ((nf + 90.0) * var_scale).sqrt() + 4.0 * var_scale.sqrt();
    let grid = polar_grid(n, rho_max, nodes);
    let count = (grid.len() as f64).powi(sites as i32);
    if count > GRID_BUDGET {
        return Err(Error::BudgetExceeded {
            required: count,
            budget: GRID_BUDGET,
        });
    }
    // Per-site terms: log weight − ½S_xx|u|² − V_x(u) − √N h u₁.
    let local: Vec<Vec<f64>> = (0..sites)
        .map(|x| {
            grid.iter()
                .map(|(p, lw)| {
                    let sq: f64 = p.iter().map(|v| v * v).sum();
                    let v = fields.map_or(0.0, |f| f[x].eval(p));
                    lw - 0.5 * stiff[(x, x)] * sq - v - nf.sqrt() * h * p[0]
                })
                .collect()
        })
        .collect();
    let lse = |vals: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = vals.collect();
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + v.iter().map(|a| (a - m).exp()).sum::<f64>().ln()
    };
    if sites == 1 {
        return Ok(lse(&mut local[0].iter().copied()));
    }
    let s01 = stiff[(0, 1)];
    let rows: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let a = &grid[i].0;
            let mut it = (0..grid.len()).map(|j| {
                let dot: f64 = a.iter().zip(&grid[j].0).map(|(p, q)| p * q).sum();
                local[0][i] + local[1][j] - s01 * dot
            });
            lse(&mut it)
        })
        .collect();
    Ok(lse(&mut rows.into_iter()))
}

/// Finite-`N` estimate of `E f_N` over independent draws (demonstration only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyDemo {
    pub n: usize,
    pub mean: f64,
    pub standard_error: f64,
    pub per_draw: Vec<f64>,
    pub annealed: f64,
}

/// `E (N|Ω|)⁻¹ log Z_N` by polar quadrature, averaged over `draws` field realizations.
pub fn free_energy_quadrature(
    spec: &EuclideanModelSpec,
    n: usize,
    draws: usize,
    nodes: usize,
    features: usize,
    seed: u64,
) -> Result<FreeEnergyDemo> {
    spec.validate()?;
    if draws < 2 {
        return Err(Error::InvalidInput("at least two draws".into()));
    }
    let s = reparameterize_beta(spec);
    let sites = s.lattice.n_sites();
    let stiff = Mat::identity(sites, sites) * s.lattice.mu
        - build_periodic_laplacian(&s.lattice) * s.lattice.t;
    let per_draw: Vec<f64> = (0..draws as u64)
        .map(|d| {
            let fields: Vec<EuclideanField> = (0..sites as u64)
                .map(|x| {
                    EuclideanField::draw(
                        &s.b,
                        n,
                        features,
                        &mut stream(seed, "free-energy", d * 1024 + x),
                    )
                })
                .collect::<Result<_>>()?;
            Ok(
                log_partition_quadrature(&stiff, s.h, Some(&fields), n, nodes)?
                    / (n * sites) as f64,
            )
        })
        .collect::<Result<_>>()?;
    let m = draws as f64;
    let mean = per_draw.iter().sum::<f64>() / m;
    let var = per_draw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(FreeEnergyDemo {
        n,
        mean,
        standard_error: (var / m).sqrt(),
        per_draw,
        annealed: annealed_limit(spec)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_spherical_field_is_a_dot_product() {
        let xi = MixingFunction::new(vec![0.0, 2.0]).unwrap();
        let FieldRealization::Spherical { field, .. } = sample_spherical_h(&xi, 5, 3).unwrap()
        else {
            panic!()
        };
        let s = [1.0, -1.0, 0.5, 0.0, 2.0];
        let direct: f64 = field.tensors[0]
            .iter()
            .zip(&s)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * 2f64.sqrt();
        assert!((field.eval(&s) - direct).abs() < 1e-12);
    }

    #[test]
    fn constant_only_field() {
        let b = CorrelationFunction::new(0.7, vec![]).unwrap();
        let f = sample_euclidean_v(&b, 4, 16, 9).unwrap();
        assert_eq!(f.eval(&[0.0; 4]), f.eval(&[1.0, -2.0, 3.0, 0.5]));
    }

    #[test]
    fn annealed_scalar_gaussian() {
        let spec = EuclideanModelSpec {
            lattice: LatticeSpec {
                l: 1,
                d: 1,
                mu: 2.0,
                t: 1.0,
            },
            b: CorrelationFunction::new(0.0, vec![]).unwrap(),
            h: 0.0,
            beta: 1.0,
        };
        assert!((annealed_limit(&spec).unwrap() - 0.5 * (2.0 * PI / 2.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_realization() {
        let xi = MixingFunction::new(vec![0.1, 0.3, 0.5]).unwrap();
        assert_eq!(
            sample_spherical_h(&xi, 6, 4).unwrap(),
            sample_spherical_h(&xi, 6, 4).unwrap()
        );
    }
}
