use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Classical one-way ANOVA. Returns the F statistic and its upper-tail
/// p-value under F(k - 1, N - k).
///
/// Zero within-group variance with distinct group means gives `F = inf`,
/// `p = 0`; all-equal data gives `F = 0`, `p = 1`.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<(f64, f64)> {
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "ANOVA needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some(g) = groups.iter().position(|g| g.len() < 2) {
        return Err(Error::InsufficientData(format!(
            "group {} has {} values, need at least 2",
            g + 1,
            groups[g].len()
        )));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite value in ANOVA input".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let k = groups.len();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut between = 0.0;
    let mut within = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        between += g.len() as f64 * (m - grand).powi(2);
        within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let (d1, d2) = ((k - 1) as f64, (n - k) as f64);
    if within == 0.0 {
        return Ok(if between == 0.0 { (0.0, 1.0) } else { (f64::INFINITY, 0.0) });
    }
    let f = (between / d1) / (within / d2);
    let p = beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
    Ok((f, p))
}
