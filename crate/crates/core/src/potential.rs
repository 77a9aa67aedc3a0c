//! Mirror maps: separable strictly convex potentials, their gradients,
//! gradient inverses and Bregman divergences.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::DenseVector;

/// Default `q = 10` used to approximate the ℓ∞ norm.
pub const LINF_Q: f64 = 10.0;
/// Default ε for the `ℓ1+ε` potential.
pub const L1_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialSpec {
    /// `ψ(w) = ½‖w‖²`
    SquaredL2,
    /// `ψ(w) = (1/q) Σ |w[k]|^q`, `q > 1`
    QNorm(f64),
    /// `ψ(w) = Σ w[k] log w[k]` on the positive orthant.
    NegativeEntropy,
}

/// A Bregman divergence value, clamped at zero against rounding.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BregmanValue(f64);

impl BregmanValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl PotentialSpec {
    pub fn q_norm(q: f64) -> Result<Self> {
        if q > 1.0 && q.is_finite() {
            Ok(Self::QNorm(q))
        } else {
            Err(Error::InvalidArgument(format!(
                "q-norm potential needs q > 1, got {q}"
            )))
        }
    }

    /// `ℓ1+ε` surrogate for the ℓ1 norm.
    pub fn l1_epsilon(eps: f64) -> Result<Self> {
        if eps > 0.0 {
            Self::q_norm(1.0 + eps)
        } else {
            Err(Error::InvalidArgument(format!(
                "l1eps needs epsilon > 0, got {eps}"
            )))
        }
    }

    pub fn linf() -> Self {
        Self::QNorm(LINF_Q)
    }

    /// Whether `w` is a valid point for this potential.
    pub fn check_domain(&self, w: &[f64]) -> Result<()> {
        for (index, &value) in w.iter().enumerate() {
            let ok = match self {
                Self::NegativeEntropy => value > 0.0 && value.is_finite(),
                _ => value.is_finite(),
            };
            if !ok {
                return Err(Error::DomainError { index, value });
            }
        }
        Ok(())
    }

    /// `ψ'(x)` for one coordinate. Callers check the domain.
    #[inline]
    pub fn grad_scalar(&self, x: f64) -> f64 {
        match *self {
            Self::SquaredL2 => x,
            Self::QNorm(q) => signed_pow(x, q - 1.0),
            Self::NegativeEntropy => 1.0 + x.ln(),
        }
    }

    /// `(ψ')⁻¹(v)` for one coordinate.
    #[inline]
    pub fn grad_inverse_scalar(&self, v: f64) -> f64 {
        match *self {
            Self::SquaredL2 => v,
            Self::QNorm(q) => signed_pow(v, 1.0 / (q - 1.0)),
            Self::NegativeEntropy => (v - 1.0).exp(),
        }
    }

    /// Derivative of `(ψ')⁻¹` at `v`; infinite where the inverse has a
    /// vertical tangent (`q > 2` at the origin).
    pub fn grad_inverse_derivative_scalar(&self, v: f64) -> f64 {
        match *self {
            Self::SquaredL2 => 1.0,
            Self::QNorm(q) => {
                let e = 1.0 / (q - 1.0);
                e * v.abs().powf(e - 1.0)
            }
            Self::NegativeEntropy => (v - 1.0).exp(),
        }
    }

    #[inline]
    fn value_scalar(&self, x: f64) -> f64 {
        match *self {
            Self::SquaredL2 => 0.5 * x * x,
            Self::QNorm(q) => x.abs().powf(q) / q,
            Self::NegativeEntropy => x * x.ln(),
        }
    }

    /// Second derivative `ψ''(x)`; used by the reference solvers.
    pub fn hessian_scalar(&self, x: f64) -> f64 {
        match *self {
            Self::SquaredL2 => 1.0,
            Self::QNorm(q) => (q - 1.0) * x.abs().powf(q - 2.0),
            Self::NegativeEntropy => 1.0 / x,
        }
    }

    /// `ψ(w)`
    pub fn value(&self, w: &[f64]) -> Result<f64> {
        self.check_domain(w)?;
        Ok(w.iter().map(|&x| self.value_scalar(x)).sum())
    }

    /// `∇ψ(w)`
    pub fn grad(&self, w: &[f64]) -> Result<DenseVector> {
        self.check_domain(w)?;
        Ok(w.iter().map(|&x| self.grad_scalar(x)).collect())
    }

    /// `(∇ψ)⁻¹(v)`; total for every supported potential.
    pub fn grad_inverse(&self, v: &[f64]) -> DenseVector {
        v.iter().map(|&x| self.grad_inverse_scalar(x)).collect()
    }

    /// `D_ψ(w, w_ref) = ψ(w) − ψ(w_ref) − ∇ψ(w_ref)ᵀ(w − w_ref)`
    pub fn bregman(&self, w: &[f64], w_ref: &[f64]) -> Result<BregmanValue> {
        if w.len() != w_ref.len() {
            return Err(Error::DimensionMismatch {
                context: "bregman",
                expected: w_ref.len(),
                found: w.len(),
            });
        }
        self.check_domain(w)?;
        self.check_domain(w_ref)?;
        let total: f64 = w
            .iter()
            .zip(w_ref)
            .map(|(&a, &b)| match *self {
                Self::SquaredL2 => 0.5 * (a - b) * (a - b),
                // KL form avoids cancellation between the two log terms
                Self::NegativeEntropy => a * (a / b).ln() - a + b,
                _ => self.value_scalar(a) - self.value_scalar(b) - self.grad_scalar(b) * (a - b),
            })
            .sum();
        Ok(BregmanValue(total.max(0.0)))
    }

    /// In-place mirror step `w ← (∇ψ)⁻¹(∇ψ(w) + scale · direction)`.
    ///
    /// Fails without modifying `w` if the input or the result leaves the
    /// domain; the result is never clamped.
    pub fn mirror_step(&self, w: &mut [f64], direction: &[f64], scale: f64) -> Result<()> {
        if w.len() != direction.len() {
            return Err(Error::DimensionMismatch {
                context: "mirror step",
                expected: w.len(),
                found: direction.len(),
            });
        }
        self.check_domain(w)?;
        match *self {
            Self::SquaredL2 => {
                w.iter_mut()
                    .zip(direction)
                    .for_each(|(x, d)| *x += scale * d);
            }
            Self::NegativeEntropy => {
                // multiplicative form of exp(ln w + s·d)
                for (index, (x, d)) in w.iter().zip(direction).enumerate() {
                    let next = x * (scale * d).exp();
                    if !(next > 0.0 && next.is_finite()) {
                        return Err(Error::DomainError { index, value: next });
                    }
                }
                w.iter_mut()
                    .zip(direction)
                    .for_each(|(x, d)| *x *= (scale * d).exp());
            }
            Self::QNorm(_) => {
                w.iter_mut().zip(direction).for_each(|(x, d)| {
                    *x = self.grad_inverse_scalar(self.grad_scalar(*x) + scale * d);
                });
            }
        }
        Ok(())
    }

    /// The unconstrained minimizer of `ψ`, i.e. the point whose mirror image
    /// is zero.
    pub fn minimizer(&self, len: usize) -> DenseVector {
        self.grad_inverse(&vec![0.0; len])
    }
}

/// `|x|^e · sign(x)` with `sign(0) = 0`.
#[inline]
fn signed_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(e)
    }
}

impl FromStr for PotentialSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse_real = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad number `{v}` in potential `{s}`")))
        };
        match s.split_once(':') {
            None => match s {
                "l2" => Ok(Self::SquaredL2),
                "entropy" => Ok(Self::NegativeEntropy),
                "linf" => Ok(Self::linf()),
                "l1eps" => Self::l1_epsilon(L1_EPSILON),
                _ => Err(Error::InvalidArgument(format!("unknown potential `{s}`"))),
            },
            Some(("q", v)) => Self::q_norm(parse_real(v)?),
            Some(("l1eps", v)) => Self::l1_epsilon(parse_real(v)?),
            Some(_) => Err(Error::InvalidArgument(format!("unknown potential `{s}`"))),
        }
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SquaredL2 => f.write_str("l2"),
            Self::QNorm(q) => write!(f, "q:{q}"),
            Self::NegativeEntropy => f.write_str("entropy"),
        }
    }
}
