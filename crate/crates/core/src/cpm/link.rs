use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scalar::{lit, norm_cdf, norm_pdf, norm_quantile, norm_quantile_upper, norm_sf, Scalar};

/// Inverse link `G` of a cumulative probability model, i.e. the latent error
/// distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    #[default]
    Probit,
    Logit,
    Loglog,
    Cloglog,
}

impl LinkFunction {
    pub const ALL: [LinkFunction; 4] = [Self::Probit, Self::Logit, Self::Loglog, Self::Cloglog];

    pub fn name(self) -> &'static str {
        match self {
            Self::Probit => "probit",
            Self::Logit => "logit",
            Self::Loglog => "loglog",
            Self::Cloglog => "cloglog",
        }
    }

    /// Symmetric links satisfy `g(1/2) = 0`, so cluster coefficients are
    /// cluster medians on the latent scale.
    pub fn is_symmetric(self) -> bool {
        matches!(self, Self::Probit | Self::Logit)
    }

    /// `G(η)`.
    pub fn cdf<T: Scalar>(self, eta: T) -> T {
        if eta == T::infinity() {
            return T::one();
        }
        if eta == T::neg_infinity() {
            return T::zero();
        }
        match self {
            Self::Probit => norm_cdf(eta),
            Self::Logit => logistic(eta),
            Self::Cloglog => -(-eta.exp()).exp_m1(),
            Self::Loglog => (-(-eta).exp()).exp(),
        }
    }

    /// `1 − G(η)` without cancellation.
    pub fn sf<T: Scalar>(self, eta: T) -> T {
        if eta == T::infinity() {
            return T::zero();
        }
        if eta == T::neg_infinity() {
            return T::one();
        }
        match self {
            Self::Probit => norm_sf(eta),
            Self::Logit => logistic(-eta),
            Self::Cloglog => (-eta.exp()).exp(),
            Self::Loglog => -(-(-eta).exp()).exp_m1(),
        }
    }

    /// Density `G'(η)`.
    pub fn pdf<T: Scalar>(self, eta: T) -> T {
        if !eta.is_finite() {
            return T::zero();
        }
        match self {
            Self::Probit => norm_pdf(eta),
            Self::Logit => {
                let e = (-eta.abs()).exp();
                e / ((T::one() + e) * (T::one() + e))
            }
            Self::Cloglog => (eta - eta.exp()).exp(),
            Self::Loglog => (-eta - (-eta).exp()).exp(),
        }
    }

    /// `G''(η)`.
    pub fn dpdf<T: Scalar>(self, eta: T) -> T {
        let f = self.pdf(eta);
        if f == T::zero() {
            return T::zero();
        }
        match self {
            Self::Probit => -eta * f,
            Self::Logit => f * (self.sf(eta) - self.cdf(eta)),
            Self::Cloglog => f * (T::one() - eta.exp()),
            Self::Loglog => f * ((-eta).exp() - T::one()),
        }
    }

    /// Link `g(p) = G⁻¹(p)`.
    pub fn quantile<T: Scalar>(self, p: T) -> T {
        match self {
            Self::Probit => norm_quantile(p),
            Self::Logit => p.ln() - (-p).ln_1p(),
            Self::Cloglog => (-(-p).ln_1p()).ln(),
            Self::Loglog => -(-p.ln()).ln(),
        }
    }

    /// `g(1 − q)`, accurate when `q` is a small upper-tail probability.
    pub fn quantile_upper<T: Scalar>(self, q: T) -> T {
        match self {
            Self::Probit => norm_quantile_upper(q),
            Self::Logit => (-q).ln_1p() - q.ln(),
            Self::Cloglog => (-q.ln()).ln(),
            Self::Loglog => -(-(-q).ln_1p()).ln(),
        }
    }

    /// `G(u) − G(l)` for `l < u`, using upper tails when both lie in the
    /// right half so small cell probabilities keep their precision.
    pub fn interval<T: Scalar>(self, l: T, u: T) -> T {
        if l >= T::zero() {
            self.sf(l) - self.sf(u)
        } else {
            self.cdf(u) - self.cdf(l)
        }
    }

    /// Round-trip `g(G(η))` through whichever tail carries the precision.
    pub fn roundtrip<T: Scalar>(self, eta: T) -> T {
        let p = self.cdf(eta);
        if p <= lit(0.5) {
            self.quantile(p)
        } else {
            self.quantile_upper(self.sf(eta))
        }
    }
}

fn logistic<T: Scalar>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

impl fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "probit" => Ok(Self::Probit),
            "logit" => Ok(Self::Logit),
            "loglog" => Ok(Self::Loglog),
            "cloglog" => Ok(Self::Cloglog),
            other => Err(Error::InvalidArgument(format!("unknown link `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_over_representable_range() {
        for link in LinkFunction::ALL {
            let mut eta = -8.0_f64;
            while eta <= 8.0 {
                let tail = link.cdf(eta).min(link.sf(eta));
                if tail > 1e-300 {
                    let back = link.roundtrip(eta);
                    assert!((back - eta).abs() < 1e-10, "{link} at {eta}: {back}");
                }
                eta += 0.01;
            }
        }
    }

    #[test]
    fn densities_match_differences() {
        let h = 1e-5;
        for link in LinkFunction::ALL {
            for &eta in &[-3.0_f64, -1.2, -0.1, 0.0, 0.4, 1.7, 3.5] {
                let fd = (link.cdf(eta + h) - link.cdf(eta - h)) / (2.0 * h);
                assert!((fd - link.pdf(eta)).abs() < 1e-8, "{link} pdf at {eta}");
                let fd2 = (link.pdf(eta + h) - link.pdf(eta - h)) / (2.0 * h);
                assert!((fd2 - link.dpdf(eta)).abs() < 1e-8, "{link} dpdf at {eta}");
                assert!((link.cdf(eta) + link.sf(eta) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn symmetric_links_center_at_zero() {
        assert_eq!(LinkFunction::Probit.quantile(0.5_f64), 0.0);
        assert!(LinkFunction::Logit.quantile(0.5_f64).abs() < 1e-16);
        assert!(LinkFunction::Cloglog.quantile(0.5_f64).abs() > 0.3);
        assert!("LOGIT".parse::<LinkFunction>().is_ok());
        assert!("identity".parse::<LinkFunction>().is_err());
    }
}
