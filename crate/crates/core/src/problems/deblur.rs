use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CompositeProblem, SmoothObjective};
use crate::error::{Error, Result};
use crate::linalg::{SymMatrix, Vector};

/// Grayscale deblurring instance description. Images are stored row-major,
/// pixel `(i, j)` at index `i * width + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageProblemSpec {
    pub height: usize,
    pub width: usize,
    /// Symmetric 1-D taps applied along both axes (odd length, sum 1).
    pub kernel: Vec<f64>,
    pub noise_sigma: f64,
    pub mu: f64,
    pub rho: f64,
    /// Defaults to `‖A‖ + 5`.
    pub lipschitz_override: Option<f64>,
    pub hessian_lipschitz: f64,
}

impl ImageProblemSpec {
    /// 9-tap Gaussian blur with σ = 1.5, μ = 0.001, ρ = 0.1, `L_H` = 10 and
    /// noise level 0.01.
    pub fn standard(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            kernel: gaussian_taps(9, 1.5),
            noise_sigma: 0.01,
            mu: 0.001,
            rho: 0.1,
            lipschitz_override: None,
            hessian_lipschitz: 10.0,
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument("image must be non-empty".into()));
        }
        let k = &self.kernel;
        if k.len() % 2 == 0 || k.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("blur kernel must have odd length and finite taps".into()));
        }
        if (k.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("blur kernel taps must sum to 1".into()));
        }
        if (0..k.len()).any(|i| k[i] != k[k.len() - 1 - i]) {
            return Err(Error::InvalidArgument("blur kernel must be symmetric".into()));
        }
        if !(self.mu > 0.0 && self.rho > 0.0) {
            return Err(Error::InvalidArgument("mu and rho must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("noise sigma must be nonnegative".into()));
        }
        Ok(())
    }

    /// `‖A‖` from the frequency response of the separable periodic blur.
    pub fn blur_norm(&self) -> f64 {
        axis_gain(&self.kernel, self.height) * axis_gain(&self.kernel, self.width)
    }
}

pub fn gaussian_taps(len: usize, sigma: f64) -> Vec<f64> {
    let c = (len / 2) as f64;
    let raw: Vec<f64> = (0..len)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let mut taps: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // Exact mirror symmetry regardless of rounding in the normalization.
    for i in 0..len / 2 {
        taps[len - 1 - i] = taps[i];
    }
    taps
}

fn axis_gain(kernel: &[f64], n: usize) -> f64 {
    let c = (kernel.len() / 2) as isize;
    (0..n)
        .map(|p| {
            kernel
                .iter()
                .enumerate()
                .map(|(t, k)| {
                    let phase = 2.0 * std::f64::consts::PI * (p as f64) * ((t as isize - c) as f64) / n as f64;
                    k * phase.cos()
                })
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

struct Operators {
    height: usize,
    width: usize,
    kernel: Vec<f64>,
}

impl Operators {
    fn blur(&self, x: &Vector) -> Vector {
        let (h, w) = (self.height, self.width);
        let c = (self.kernel.len() / 2) as isize;
        let mut tmp = Vector::zeros(h * w);
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (t, k) in self.kernel.iter().enumerate() {
                    let jj = (j as isize + t as isize - c).rem_euclid(w as isize) as usize;
                    acc += k * x[i * w + jj];
                }
                tmp[i * w + j] = acc;
            }
        }
        let mut out = Vector::zeros(h * w);
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (t, k) in self.kernel.iter().enumerate() {
                    let ii = (i as isize + t as isize - c).rem_euclid(h as isize) as usize;
                    acc += k * tmp[ii * w + j];
                }
                out[i * w + j] = acc;
            }
        }
        out
    }

    /// Periodic forward differences `(horizontal, vertical)`.
    fn diff(&self, x: &Vector) -> (Vector, Vector) {
        let (h, w) = (self.height, self.width);
        let mut dh = Vector::zeros(h * w);
        let mut dv = Vector::zeros(h * w);
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                dh[p] = x[i * w + (j + 1) % w] - x[p];
                dv[p] = x[((i + 1) % h) * w + j] - x[p];
            }
        }
        (dh, dv)
    }

    fn diff_adjoint(&self, dh: &Vector, dv: &Vector) -> Vector {
        let (h, w) = (self.height, self.width);
        let mut out = Vector::zeros(h * w);
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                let left = i * w + (j + w - 1) % w;
                let up = ((i + h - 1) % h) * w + j;
                out[p] = dh[left] - dh[p] + dv[up] - dv[p];
            }
        }
        out
    }

    fn dense<F: Fn(&Vector) -> Vector>(&self, apply: F) -> SymMatrix {
        let n = self.height * self.width;
        let mut m = DMatrix::zeros(n, n);
        let mut e = Vector::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            m.set_column(j, &apply(&e));
            e[j] = 0.0;
        }
        SymMatrix::from_upper(m)
    }
}

/// `f(x) = ½‖Ax − b‖² + (μ/2) log(ρ + ‖Kx‖²)`.
struct Deblur {
    ops: Operators,
    b: Vector,
    mu: f64,
    rho: f64,
    ata: OnceLock<SymMatrix>,
    ktk: OnceLock<SymMatrix>,
}

impl Deblur {
    fn parts(&self, x: &Vector) -> (Vector, Vector, f64) {
        let res = self.ops.blur(x) - &self.b;
        let (dh, dv) = self.ops.diff(x);
        let q = dh.norm_squared() + dv.norm_squared();
        let p = self.ops.diff_adjoint(&dh, &dv);
        (res, p, q)
    }
}

impl SmoothObjective for Deblur {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        let res = self.ops.blur(x) - &self.b;
        let (dh, dv) = self.ops.diff(x);
        let q = dh.norm_squared() + dv.norm_squared();
        0.5 * res.norm_squared() + 0.5 * self.mu * (self.rho + q).ln()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        self.value_and_gradient(x).1
    }

    fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        let (res, p, q) = self.parts(x);
        let value = 0.5 * res.norm_squared() + 0.5 * self.mu * (self.rho + q).ln();
        // The blur is symmetric, so Aᵀ = A.
        let grad = self.ops.blur(&res) + p * (self.mu / (self.rho + q));
        (value, grad)
    }

    fn hessian(&self, x: &Vector) -> Option<SymMatrix> {
        let ata = self.ata.get_or_init(|| self.ops.dense(|v| self.ops.blur(&self.ops.blur(v))));
        let ktk = self.ktk.get_or_init(|| {
            self.ops.dense(|v| {
                let (dh, dv) = self.ops.diff(v);
                self.ops.diff_adjoint(&dh, &dv)
            })
        });
        let (_, p, q) = self.parts(x);
        let denom = self.rho + q;
        let c1 = self.mu / denom;
        let c2 = 2.0 * self.mu / (denom * denom);
        let n = self.dim();
        let mut h = ata.as_matrix() + ktk.as_matrix() * c1;
        for j in 0..n {
            let cj = c2 * p[j];
            for i in 0..=j {
                h[(i, j)] -= p[i] * cj;
            }
        }
        Some(SymMatrix::from_upper(h))
    }
}

pub fn make_deblur(spec: &ImageProblemSpec, b: Vector) -> Result<CompositeProblem> {
    spec.validate()?;
    if b.len() != spec.pixels() {
        return Err(Error::DimensionMismatch {
            expected: spec.pixels(),
            found: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observed image"));
    }
    let lipschitz = spec.lipschitz_override.unwrap_or(spec.blur_norm() + 5.0);
    let obj = Deblur {
        ops: Operators {
            height: spec.height,
            width: spec.width,
            kernel: spec.kernel.clone(),
        },
        b,
        mu: spec.mu,
        rho: spec.rho,
        ata: OnceLock::new(),
        ktk: OnceLock::new(),
    };
    CompositeProblem::new("deblur", Arc::new(obj), lipschitz, spec.hessian_lipschitz)
}

/// `A·clean + N(0, σ²)` noise, clipped to `[0, 1]`.
pub fn synthesize_blurred(spec: &ImageProblemSpec, clean: &Vector, seed: u64) -> Result<Vector> {
    spec.validate()?;
    if clean.len() != spec.pixels() {
        return Err(Error::DimensionMismatch {
            expected: spec.pixels(),
            found: clean.len(),
        });
    }
    let ops = Operators {
        height: spec.height,
        width: spec.width,
        kernel: spec.kernel.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blurred = ops.blur(clean);
    Ok(blurred.map(|v| {
        let z: f64 = StandardNormal.sample(&mut rng);
        (v + spec.noise_sigma * z).clamp(0.0, 1.0)
    }))
}

/// Deterministic piecewise-constant test image with values in `[0, 1]`:
/// a dim background, a bright rectangle, a mid-gray disk and a small white
/// disk overlapping it.
pub fn phantom(height: usize, width: usize) -> Vector {
    Vector::from_fn(height * width, |p, _| {
        let (i, j) = (p / width, p % width);
        let y = (i as f64 + 0.5) / height as f64;
        let x = (j as f64 + 0.5) / width as f64;
        let mut v = 0.1;
        if (0.15..0.45).contains(&x) && (0.2..0.8).contains(&y) {
            v = 0.8;
        }
        if (x - 0.68).powi(2) + (y - 0.55).powi(2) < 0.22f64.powi(2) {
            v = 0.5;
        }
        if (x - 0.72).powi(2) + (y - 0.6).powi(2) < 0.08f64.powi(2) {
            v = 1.0;
        }
        v
    })
}
