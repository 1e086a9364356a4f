//! Latent codes, Gaussian divergences and interpolation operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Below this angle (radians) slerp degenerates to lerp.
pub const SLERP_MIN_ANGLE: f64 = 1e-6;

/// Diagonal-Gaussian posterior parameters and the latent point derived from
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode<T> {
    pub mu: Vec<T>,
    pub logvar: Vec<T>,
    pub z: Vec<T>,
}

impl<T: Scalar> LatentCode<T> {
    /// A code whose point is its mean (zero reparameterization noise).
    pub fn from_mean(mu: Vec<T>, logvar: Vec<T>) -> Self {
        let z = mu.clone();
        Self { mu, logvar, z }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Dimension { left: a, right: b })
    }
}

/// `KL(N(mu, diag(exp(logvar))) || N(0, I))` in closed form.
pub fn kl_to_prior<T: Scalar>(mu: &[T], logvar: &[T]) -> Result<T> {
    same_len(mu.len(), logvar.len())?;
    let half = T::c(0.5);
    let kl: T = mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| half * (m * m + lv.exp() - T::one() - lv))
        .sum();
    Ok(kl.max(T::zero()))
}

/// `KL(a || b)` between two diagonal Gaussians.
pub fn gaussian_kl<T: Scalar>(a: &LatentCode<T>, b: &LatentCode<T>) -> Result<T> {
    same_len(a.dim(), b.dim())?;
    same_len(a.logvar.len(), b.logvar.len())?;
    let half = T::c(0.5);
    let kl: T = (0..a.dim())
        .map(|i| {
            let d = a.mu[i] - b.mu[i];
            half * (b.logvar[i] - a.logvar[i] + (a.logvar[i].exp() + d * d) / b.logvar[i].exp() - T::one())
        })
        .sum();
    Ok(kl.max(T::zero()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// `(KL(a||b) + KL(b||a)) / 2`.
    #[default]
    SymmetricGaussianKl,
    /// `|KL(a||prior) - KL(b||prior)|`.
    KlToPriorGap,
}

pub fn pairwise_distance<T: Scalar>(a: &LatentCode<T>, b: &LatentCode<T>, mode: DistanceMode) -> Result<T> {
    same_len(a.dim(), b.dim())?;
    match mode {
        DistanceMode::SymmetricGaussianKl => Ok(T::c(0.5) * (gaussian_kl(a, b)? + gaussian_kl(b, a)?)),
        DistanceMode::KlToPriorGap => {
            Ok((kl_to_prior(&a.mu, &a.logvar)? - kl_to_prior(&b.mu, &b.logvar)?).abs())
        }
    }
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if alpha >= T::zero() && alpha <= T::one() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("alpha {alpha} outside [0, 1]")))
    }
}

/// `(1 - alpha) * from + alpha * to`.
pub fn lerp<T: Scalar>(from: &[T], to: &[T], alpha: T) -> Result<Vec<T>> {
    same_len(from.len(), to.len())?;
    check_alpha(alpha)?;
    let keep = T::one() - alpha;
    Ok(from.iter().zip(to).map(|(&a, &b)| keep * a + alpha * b).collect())
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

/// Spherical interpolation along the great arc between `from` and `to`.
///
/// Falls back to [`lerp`] when the vectors are (anti)parallel within
/// [`SLERP_MIN_ANGLE`], where the arc is undefined or ill-conditioned.
pub fn slerp<T: Scalar>(from: &[T], to: &[T], alpha: T) -> Result<Vec<T>> {
    same_len(from.len(), to.len())?;
    check_alpha(alpha)?;
    let (na, nb) = (norm(from), norm(to));
    if na == T::zero() || nb == T::zero() {
        return Err(Error::Precondition("slerp of a zero vector".into()));
    }
    let dot: T = from.iter().zip(to).map(|(&a, &b)| a * b).sum();
    let cos = (dot / (na * nb)).max(-T::one()).min(T::one());
    let omega = cos.acos();
    let eps = T::c(SLERP_MIN_ANGLE);
    if omega < eps || T::c(std::f64::consts::PI) - omega < eps {
        return lerp(from, to, alpha);
    }
    let sin_omega = omega.sin();
    let ca = ((T::one() - alpha) * omega).sin() / sin_omega;
    let cb = (alpha * omega).sin() / sin_omega;
    Ok(from.iter().zip(to).map(|(&a, &b)| ca * a + cb * b).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Lerp,
    Slerp,
}

impl Interpolation {
    pub fn apply<T: Scalar>(self, from: &[T], to: &[T], alpha: T) -> Result<Vec<T>> {
        match self {
            Interpolation::Lerp => lerp(from, to, alpha),
            Interpolation::Slerp => slerp(from, to, alpha),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Interpolation::Lerp => "lerp",
            Interpolation::Slerp => "slerp",
        }
    }
}
