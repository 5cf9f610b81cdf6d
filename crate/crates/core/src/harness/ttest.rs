use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Which sample the mean paired difference favours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    FavorsA,
    FavorsB,
    Neither,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TTest {
    pub t_stat: f64,
    pub critical: f64,
    pub significant: bool,
    pub direction: Direction,
}

/// Two-sided paired t-test on `b − a`.
///
/// Differences with zero variance are significant exactly when their mean is
/// nonzero.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::config("paired t-test needs at least two pairs"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha must lie in (0, 1)"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::numeric("non-finite paired difference"));
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();

    let dist = StudentsT::new(0.0, 1.0, nf - 1.0).map_err(|e| Error::numeric(e.to_string()))?;
    let critical = dist.inverse_cdf(1.0 - alpha / 2.0);

    let direction = if mean > 0.0 {
        Direction::FavorsB
    } else if mean < 0.0 {
        Direction::FavorsA
    } else {
        Direction::Neither
    };
    let (t_stat, significant) = if sd == 0.0 {
        if mean == 0.0 {
            (0.0, false)
        } else {
            (mean.signum() * f64::INFINITY, true)
        }
    } else {
        let t = mean / (sd / nf.sqrt());
        (t, t.abs() > critical)
    };
    Ok(TTest {
        t_stat,
        critical,
        significant,
        direction,
    })
}
