//! Central and noncentral F / chi-square tails and samplers.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::special::{beta_reg, beta_reg_complement, gamma_q, ln_gamma};

/// Upper tail `P(F > f)` of the central F distribution with `(df1, df2)`
/// degrees of freedom.
///
/// `f = +inf` yields 0 and `f <= 0` yields 1. NaN input or non-positive
/// degrees of freedom yield NaN; callers decide whether that is an error.
pub fn f_upper_tail(f: f64, df1: f64, df2: f64) -> f64 {
    if f.is_nan() || !(df1 > 0.0 && df2 > 0.0) {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let denom = df2 + df1 * f;
    // Work with whichever of x, 1-x is better resolved.
    let x = df2 / denom;
    let one_minus_x = df1 * f / denom;
    if x < 0.5 {
        beta_reg(df2 / 2.0, df1 / 2.0, x)
    } else {
        beta_reg_complement(df1 / 2.0, df2 / 2.0, one_minus_x)
    }
}

/// Smallest `f` with `P(F > f) <= alpha`, by bisection on the tail.
pub fn f_upper_quantile(alpha: f64, df1: f64, df2: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f_upper_tail(hi, df1, df2) > alpha {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f_upper_tail(mid, df1, df2) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Upper tail of the noncentral F distribution with noncentrality `lambda`,
/// as a Poisson(lambda/2) mixture of incomplete beta tails.
pub fn noncentral_f_upper_tail(f: f64, df1: f64, df2: f64, lambda: f64) -> f64 {
    assert!(lambda >= 0.0, "noncentrality must be non-negative");
    if lambda == 0.0 {
        return f_upper_tail(f, df1, df2);
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let half = lambda / 2.0;
    let x = df2 / (df2 + df1 * f);
    // Start at the Poisson mode and walk both ways until weights vanish.
    let mode = half.floor();
    let weight = |j: f64| (-half + j * half.ln() - ln_gamma(j + 1.0)).exp();
    let term = |j: f64| beta_reg(df2 / 2.0, df1 / 2.0 + j, x);
    let mut total = 0.0;
    let mut j = mode;
    loop {
        let w = weight(j);
        total += w * term(j);
        if (w < 1e-18 && j > mode) || j > mode + 10_000.0 {
            break;
        }
        j += 1.0;
    }
    let mut j = mode - 1.0;
    while j >= 0.0 {
        let w = weight(j);
        total += w * term(j);
        if w < 1e-18 {
            break;
        }
        j -= 1.0;
    }
    total.clamp(0.0, 1.0)
}

/// Upper tail of the central chi-square distribution.
pub fn chi2_upper_tail(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0)
}

/// Noncentral chi-square sampler: `(Z + sqrt(lambda))^2 + chi2(df - 1)`.
#[derive(Debug, Clone)]
pub struct NoncentralChiSquared {
    df: f64,
    shift: f64,
    rest: Option<ChiSquared<f64>>,
}

impl NoncentralChiSquared {
    pub fn new(df: f64, lambda: f64) -> Self {
        assert!(df >= 1.0, "df must be at least 1");
        assert!(lambda >= 0.0, "noncentrality must be non-negative");
        let rest = if df > 1.0 {
            Some(ChiSquared::new(df - 1.0).expect("positive df"))
        } else {
            None
        };
        Self {
            df,
            shift: lambda.sqrt(),
            rest,
        }
    }

    pub fn df(&self) -> f64 {
        self.df
    }
}

impl Distribution<f64> for NoncentralChiSquared {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let head = (z + self.shift).powi(2);
        match &self.rest {
            Some(chi) => head + chi.sample(rng),
            None => head,
        }
    }
}
