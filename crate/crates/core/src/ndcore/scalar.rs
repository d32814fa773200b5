//! Numerically stable scalar transforms.

/// `ln(1 + e^x)` without overflow for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log σ(x) = -softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `log(1 - σ(x)) = -softplus(x)`.
pub fn log1m_sigmoid(x: f64) -> f64 {
    -softplus(x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Log density of `N(mean, sd^2)` at `x`.
pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// `log Σ exp(v)`, stable; `-inf` for an empty or all `-inf` input.
pub fn logsumexp(v: &[f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    mx + v.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_values() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(40.0) - 40.0).abs() < 1e-12);
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(softplus(700.0).is_finite());
        assert!(softplus(-700.0) >= 0.0);
    }

    proptest! {
        #[test]
        fn log_sigmoid_pair_closure(x in -30.0f64..30.0) {
            let lhs = -softplus(-x) - softplus(x);
            let rhs = log_sigmoid(x) + log1m_sigmoid(x);
            prop_assert!((lhs - rhs).abs() < 1e-12);
            // against the naive form where it is well conditioned
            if x.abs() < 10.0 {
                let naive = sigmoid(x).ln() + (1.0 - sigmoid(x)).ln();
                prop_assert!((lhs - naive).abs() < 1e-9);
            }
        }
    }
}
