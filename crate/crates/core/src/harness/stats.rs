//! Robust aggregates and projections for reporting.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::{Error, Result};

/// Interquartile mean: drops the `floor(n/4)` lowest and highest values and
/// averages the rest.
pub fn iqm(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Config("iqm of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(iqm_sorted(&v))
}

fn iqm_sorted(v: &[f64]) -> f64 {
    let cut = v.len() / 4;
    let mid = &v[cut..v.len() - cut];
    mid.iter().sum::<f64>() / mid.len() as f64
}

/// IQM of the last `fraction` of `returns` (at least one value).
pub fn final_window_iqm(returns: &[f64], fraction: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::Config("no finished episodes to summarise".into()));
    }
    let n = ((returns.len() as f64 * fraction).ceil() as usize).clamp(1, returns.len());
    iqm(&returns[returns.len() - n..])
}

/// Linearly interpolated percentile `q` in `[0, 1]` of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile confidence interval of the across-seed IQM at every
/// timepoint.
///
/// `curves[s][t]` is seed `s` at timepoint `t`. Each resample draws seeds
/// with replacement (the same draw is used for all timepoints) and
/// recomputes the IQM.
pub fn stratified_bootstrap_ci<R: Rng + ?Sized>(curves: &[Vec<f64>], n_resamples: usize, level: f64, rng: &mut R) -> Result<Vec<(f64, f64)>> {
    let n_seeds = curves.len();
    if n_seeds == 0 || n_resamples == 0 {
        return Err(Error::Config("bootstrap needs at least one curve and one resample".into()));
    }
    let len = curves[0].len();
    if curves.iter().any(|c| c.len() != len) {
        return Err(Error::Config("bootstrap curves differ in length".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let mut stats = vec![Vec::with_capacity(n_resamples); len];
    let mut idx = vec![0; n_seeds];
    let mut buf = vec![0.0; n_seeds];
    for _ in 0..n_resamples {
        for i in &mut idx {
            *i = rng.random_range(0..n_seeds);
        }
        for (t, out) in stats.iter_mut().enumerate() {
            for (b, &i) in buf.iter_mut().zip(&idx) {
                *b = curves[i][t];
            }
            buf.sort_by(f64::total_cmp);
            out.push(iqm_sorted(&buf));
        }
    }
    let alpha = (1.0 - level) / 2.0;
    Ok(stats
        .into_iter()
        .map(|mut s| {
            s.sort_by(f64::total_cmp);
            (percentile(&s, alpha), percentile(&s, 1.0 - alpha))
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// One row of `out_dims` coordinates per input row.
    pub rows: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Unit principal directions, strongest first.
    pub components: Vec<Vec<f64>>,
    /// Every covariance eigenvalue, descending.
    pub eigenvalues: Vec<f64>,
}

/// Mean-centred projection onto the top `out_dims` principal components of
/// the (population) covariance.
pub fn pca_project(rows: &[Vec<f64>], out_dims: usize) -> Result<Projection> {
    let n = rows.len();
    if n < out_dims || n == 0 {
        return Err(Error::Config(format!("projection to {out_dims} dims needs at least that many rows, got {n}")));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) || out_dims > d {
        return Err(Error::Config(format!("rows must share a width of at least {out_dims}")));
    }
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let components: Vec<Vec<f64>> = order[..out_dims].iter().map(|&k| eig.eigenvectors.column(k).iter().copied().collect()).collect();
    let projected = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| c.iter().zip(x.row(i).iter()).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        rows: projected,
        mean,
        components,
        eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
    })
}
