//! Gauss–Legendre node tables on arbitrary intervals and Gauss–Hermite
//! tables for the standard normal measure.

use gauss_quad::hermite::GaussHermite;
use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// `(node, weight)` pairs of the `n`-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<Vec<(f64, f64)>> {
    let rule = GaussLegendre::new(n)
        .map_err(|_| Error::InvalidParameter(format!("Gauss-Legendre order must be >= 2, got {n}")))?;
    let (half, mid) = (0.5 * (b - a), 0.5 * (b + a));
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(pairs)
}

/// Composite rule: `panels` equal panels of an `n`-point rule each.
pub fn composite_gauss_legendre(n: usize, panels: usize, a: f64, b: f64) -> Result<Vec<(f64, f64)>> {
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(n * panels);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        out.extend(gauss_legendre(n, lo, lo + h)?);
    }
    Ok(out)
}

/// `n`-point rule for `∫ f(t) e^{-t²/2}/√(2π) dt`; weights sum to one.
pub fn standard_normal_rule(n: usize) -> Result<Vec<(f64, f64)>> {
    let rule = GaussHermite::new(n)
        .map_err(|_| Error::InvalidParameter(format!("Gauss-Hermite order must be >= 2, got {n}")))?;
    let norm = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / norm))
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_rule_moments() {
        let rule = standard_normal_rule(12).unwrap();
        let m = |k: i32| rule.iter().map(|(t, w)| w * t.powi(k)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-14);
        assert!(m(1).abs() < 1e-14);
        assert!((m(2) - 1.0).abs() < 1e-13);
        assert!((m(4) - 3.0).abs() < 1e-12);
        assert!((m(6) - 15.0).abs() < 1e-11);
    }

    #[test]
    fn integrates_polynomials_exactly() {
        let rule = gauss_legendre(4, 0.0, 2.0).unwrap();
        let v: f64 = rule.iter().map(|(x, w)| w * x.powi(7)).sum();
        assert!((v - 2f64.powi(8) / 8.0).abs() < 1e-12);
        let c = composite_gauss_legendre(3, 5, -1.0, 1.0).unwrap();
        let v: f64 = c.iter().map(|(x, w)| w * x.powi(4)).sum();
        assert!((v - 0.4).abs() < 1e-14);
    }

    #[test]
    fn rejects_order_below_two() {
        assert!(gauss_legendre(1, 0.0, 1.0).is_err());
    }
}
