//! Admissible curvature functions on the positive cone.
//!
//! Every shipped function is symmetric, monotone, concave, homogeneous of
//! degree one and normalized so that `f(1, ..., 1) = 1`. `F(A) = f(λ(A))`
//! extends each of them to symmetric matrices with spectrum in the cone.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CurvatureError;
use crate::linalg::sym_eigen;

/// Relative eigenvalue gap below which `F^{ij}` uses the symmetric limit.
pub const REPEATED_EIGENVALUE_GAP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CurvatureSpec {
    /// `H_k^{1/k}` with `H_k` the normalized elementary symmetric mean.
    PowerMean { n: usize, k: usize },
    /// `(H_n / H_l)^{1/(n-l)}`.
    Quotient { n: usize, l: usize },
    /// `θ H_n^{1/n} + (1 - θ) inner`.
    Blend { theta: f64, inner: Box<CurvatureSpec> },
    /// `1 / inner(κ_1^{-1}, ..., κ_n^{-1})`.
    Dual(Box<CurvatureSpec>),
}

/// Value and gradient of `f` at a point of the positive cone.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureEval {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// `F(A)` together with `F^{ij}(A) = ∂F/∂a_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEval {
    pub value: f64,
    pub eigenvalues: Vec<f64>,
    pub gradient: Vec<f64>,
    pub derivative: DMatrix<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Elementary symmetric polynomials `e_0..=e_n` by the product recursion
/// `e_k ← e_k + λ_j e_{k-1}`, which only adds positive terms on the cone.
fn elementary(values: impl Iterator<Item = f64>, n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (count, x) in values.enumerate() {
        for k in (1..=(count + 1).min(n)).rev() {
            e[k] += x * e[k - 1];
        }
    }
    e
}

/// Normalized `H_k(λ)` and its gradient.
pub fn normalized_symmetric(k: usize, lambda: &[f64]) -> (f64, Vec<f64>) {
    let n = lambda.len();
    if k == 0 {
        return (1.0, vec![0.0; n]);
    }
    let c = binomial(n, k);
    let e = elementary(lambda.iter().copied(), n);
    let grad = (0..n)
        .map(|i| {
            let rest = elementary(
                lambda
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &x)| x),
                n,
            );
            rest[k - 1] / c
        })
        .collect();
    (e[k] / c, grad)
}

impl CurvatureSpec {
    pub fn mean(n: usize) -> Self {
        CurvatureSpec::PowerMean { n, k: 1 }
    }

    pub fn gauss(n: usize) -> Self {
        CurvatureSpec::PowerMean { n, k: n }
    }

    pub fn dim(&self) -> usize {
        match self {
            CurvatureSpec::PowerMean { n, .. } | CurvatureSpec::Quotient { n, .. } => *n,
            CurvatureSpec::Blend { inner, .. } | CurvatureSpec::Dual(inner) => inner.dim(),
        }
    }

    /// True for `H_n^{1/n}`, for which the θ-ladder is skipped.
    pub fn is_gauss(&self) -> bool {
        matches!(self, CurvatureSpec::PowerMean { n, k } if n == k)
    }

    pub fn blend(self, theta: f64) -> Self {
        CurvatureSpec::Blend {
            theta,
            inner: Box::new(self),
        }
    }

    pub fn dual(self) -> Self {
        CurvatureSpec::Dual(Box::new(self))
    }

    /// Checks index ranges and blend weights.
    pub fn validate(&self) -> Result<(), CurvatureError> {
        match self {
            CurvatureSpec::PowerMean { n, k } if *n >= 1 && (1..=*n).contains(k) => Ok(()),
            CurvatureSpec::Quotient { n, l } if *n >= 1 && *l < *n => Ok(()),
            CurvatureSpec::Blend { theta, inner } if (0.0..=1.0).contains(theta) => {
                inner.validate()
            }
            CurvatureSpec::Dual(inner) => inner.validate(),
            other => Err(CurvatureError::Parse(other.to_string())),
        }
    }

    /// Closed form of the dual where one exists: `(H_n/H_l)^{1/(n-l)}` dualizes
    /// to `H_{n-l}^{1/(n-l)}`, and `H_n^{1/n}` is self-dual.
    pub fn closed_form_dual(&self) -> Option<CurvatureSpec> {
        match self {
            CurvatureSpec::Quotient { n, l } => Some(CurvatureSpec::PowerMean { n: *n, k: n - l }),
            CurvatureSpec::PowerMean { n, k } if n == k => Some(self.clone()),
            CurvatureSpec::PowerMean { n, k: 1 } => Some(CurvatureSpec::Quotient { n: *n, l: n - 1 }),
            CurvatureSpec::Dual(inner) => Some((**inner).clone()),
            _ => None,
        }
    }

    /// Evaluates `f(κ)` and its gradient.
    pub fn eval(&self, kappa: &[f64]) -> Result<CurvatureEval, CurvatureError> {
        let n = self.dim();
        if kappa.len() != n {
            return Err(CurvatureError::Dimension {
                spec: n,
                arg: kappa.len(),
            });
        }
        if !kappa.iter().all(|&k| k > 0.0 && k.is_finite()) {
            return Err(CurvatureError::OutsideCone(kappa.to_vec()));
        }
        Ok(self.eval_unchecked(kappa))
    }

    fn eval_unchecked(&self, kappa: &[f64]) -> CurvatureEval {
        match self {
            CurvatureSpec::PowerMean { k, .. } => {
                let (h, dh) = normalized_symmetric(*k, kappa);
                if *k == 1 {
                    return CurvatureEval {
                        value: h,
                        gradient: dh,
                    };
                }
                let kf = *k as f64;
                let value = h.powf(1.0 / kf);
                let scale = value / (kf * h);
                CurvatureEval {
                    value,
                    gradient: dh.iter().map(|d| d * scale).collect(),
                }
            }
            CurvatureSpec::Quotient { n, l } => {
                let (hn, dn) = normalized_symmetric(*n, kappa);
                let (hl, dl) = normalized_symmetric(*l, kappa);
                let p = (n - l) as f64;
                let value = if n - l == 1 { hn / hl } else { (hn / hl).powf(1.0 / p) };
                let gradient = dn
                    .iter()
                    .zip(&dl)
                    .map(|(a, b)| value / p * (a / hn - b / hl))
                    .collect();
                CurvatureEval { value, gradient }
            }
            CurvatureSpec::Blend { theta, inner } => {
                let n = kappa.len();
                let g = CurvatureSpec::gauss(n).eval_unchecked(kappa);
                let f = inner.eval_unchecked(kappa);
                CurvatureEval {
                    value: theta * g.value + (1.0 - theta) * f.value,
                    gradient: g
                        .gradient
                        .iter()
                        .zip(&f.gradient)
                        .map(|(a, b)| theta * a + (1.0 - theta) * b)
                        .collect(),
                }
            }
            CurvatureSpec::Dual(inner) => {
                let inv: Vec<f64> = kappa.iter().map(|k| 1.0 / k).collect();
                let f = inner.eval_unchecked(&inv);
                let value = 1.0 / f.value;
                let gradient = f
                    .gradient
                    .iter()
                    .zip(kappa)
                    .map(|(g, k)| g / (f.value * f.value * k * k))
                    .collect();
                CurvatureEval { value, gradient }
            }
        }
    }

    pub fn value(&self, kappa: &[f64]) -> Result<f64, CurvatureError> {
        Ok(self.eval(kappa)?.value)
    }

    /// `F(A)` and `F^{ij}(A) = Q diag(f_i) Qᵀ`. Clusters of eigenvalues closer
    /// than `REPEATED_EIGENVALUE_GAP·‖A‖` share their averaged `f_i`, which is
    /// the symmetric limit of the formula.
    pub fn matrix_derivative(&self, a: &DMatrix<f64>) -> Result<MatrixEval, CurvatureError> {
        let eig = sym_eigen(a)?;
        let ev = self.eval(&eig.values)?;
        let n = eig.values.len();
        let norm = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut weights = ev.gradient.clone();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && eig.values[end] - eig.values[end - 1] < REPEATED_EIGENVALUE_GAP * norm {
                end += 1;
            }
            if end - start > 1 {
                let avg = weights[start..end].iter().sum::<f64>() / (end - start) as f64;
                weights[start..end].iter_mut().for_each(|w| *w = avg);
            }
            start = end;
        }
        let mut derivative = DMatrix::zeros(n, n);
        for (i, w) in weights.iter().enumerate() {
            let q = eig.vectors.column(i);
            derivative += *w * &q * q.transpose();
        }
        Ok(MatrixEval {
            value: ev.value,
            eigenvalues: eig.values,
            gradient: ev.gradient,
            derivative,
        })
    }

    /// Randomized check of the structure conditions: positive gradient,
    /// homogeneity, midpoint concavity and decay towards the cone boundary.
    pub fn structure_check(&self, samples: usize, seed: u64) -> StructureReport {
        let n = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut violations = Vec::new();
        let mut vanishes_on_boundary = n > 1;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect()
        };
        for _ in 0..samples {
            let k = draw(&mut rng);
            let m = draw(&mut rng);
            let t = 10f64.powf(rng.gen_range(-2.0..2.0));
            let fk = self.eval_unchecked(&k);
            if fk.gradient.iter().any(|g| *g <= 0.0) {
                violations.push(Violation::new("positive_gradient", &k, fk.gradient.iter().cloned().fold(f64::INFINITY, f64::min)));
            }
            let scaled: Vec<f64> = k.iter().map(|x| t * x).collect();
            let fs = self.eval_unchecked(&scaled).value;
            if (fs - t * fk.value).abs() > 1e-10 * (t * fk.value).abs().max(1.0) {
                violations.push(Violation::new("homogeneity", &k, fs - t * fk.value));
            }
            let mid: Vec<f64> = k.iter().zip(&m).map(|(a, b)| 0.5 * (a + b)).collect();
            let fm = self.eval_unchecked(&m).value;
            let fmid = self.eval_unchecked(&mid).value;
            let gap = fmid - 0.5 * (fk.value + fm);
            if gap < -1e-12 * fmid.abs().max(1.0) {
                violations.push(Violation::new("concavity", &mid, gap));
            }
            // shrink one coordinate towards the boundary of the cone
            let mut edge = k.clone();
            let idx = rng.gen_range(0..n);
            edge[idx] = 1e-12;
            let fe = self.eval_unchecked(&edge).value;
            let scale = edge.iter().cloned().fold(0.0, f64::max);
            if fe > 1e-3 * scale {
                vanishes_on_boundary = false;
            }
        }
        StructureReport {
            samples,
            violations,
            vanishes_on_boundary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub property: &'static str,
    pub point: Vec<f64>,
    pub value: f64,
}

impl Violation {
    fn new(property: &'static str, point: &[f64], value: f64) -> Self {
        Self {
            property,
            point: point.to_vec(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub samples: usize,
    pub violations: Vec<Violation>,
    /// Whether `f → 0` was observed as one coordinate tends to zero. Linear
    /// members such as `H_1` do not vanish there; this is reported rather
    /// than counted as a violation.
    pub vanishes_on_boundary: bool,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for CurvatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurvatureSpec::PowerMean { k: 1, .. } => write!(f, "mean"),
            CurvatureSpec::PowerMean { n, k } if n == k => write!(f, "gauss"),
            CurvatureSpec::PowerMean { k, .. } => write!(f, "power_mean:{k}"),
            CurvatureSpec::Quotient { n, l } => write!(f, "quotient:{n},{l}"),
            CurvatureSpec::Blend { theta, inner } => write!(f, "blend:{theta},{inner}"),
            CurvatureSpec::Dual(inner) => write!(f, "dual:{inner}"),
        }
    }
}

/// Parses a curvature spec string for dimension `n`.
///
/// Accepted forms: `mean`, `gauss`, `power_mean:k`, `quotient:n,l`,
/// `blend:θ,inner`, `dual:inner`.
pub fn parse_spec(text: &str, n: usize) -> Result<CurvatureSpec, CurvatureError> {
    let bad = || CurvatureError::Parse(text.to_string());
    let text = text.trim();
    let (head, rest) = match text.split_once(':') {
        Some((h, r)) => (h.trim(), Some(r.trim())),
        None => (text, None),
    };
    let spec = match (head, rest) {
        ("mean", None) => CurvatureSpec::mean(n),
        ("gauss", None) => CurvatureSpec::gauss(n),
        ("power_mean", Some(r)) => CurvatureSpec::PowerMean {
            n,
            k: r.parse().map_err(|_| bad())?,
        },
        ("quotient", Some(r)) => {
            let (a, b) = r.split_once(',').ok_or_else(bad)?;
            let qn: usize = a.trim().parse().map_err(|_| bad())?;
            if qn != n {
                return Err(CurvatureError::Dimension { spec: qn, arg: n });
            }
            CurvatureSpec::Quotient {
                n,
                l: b.trim().parse().map_err(|_| bad())?,
            }
        }
        ("blend", Some(r)) => {
            let (a, b) = r.split_once(',').ok_or_else(bad)?;
            let theta: f64 = a.trim().parse().map_err(|_| bad())?;
            parse_spec(b, n)?.blend(theta)
        }
        ("dual", Some(r)) => parse_spec(r, n)?.dual(),
        _ => return Err(bad()),
    };
    spec.validate().map_err(|_| bad())?;
    Ok(spec)
}

impl FromStr for CurvatureSpec {
    type Err = CurvatureError;

    /// Parses with `n = 2`; use [`parse_spec`] for other dimensions.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_spec(s, 2)
    }
}
