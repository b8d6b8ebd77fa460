//! Estimators for the residual budget: the variance of the per-point sample
//! means, from replicated runs when available, otherwise from local pooling
//! over a partition of the domain.

use crate::data::{Dataset, DomainBox};
use crate::error::{Error, Result};

/// Design points with r responses per point (rectangular layout).
#[derive(Debug, Clone)]
pub struct ReplicatedDataset {
    points: Vec<Vec<f64>>,
    reps: Vec<Vec<f64>>,
}

impl ReplicatedDataset {
    pub fn new(points: Vec<Vec<f64>>, reps: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() || points.len() != reps.len() {
            return Err(Error::InvalidParameter(format!(
                "need one nonempty response row per design point, got {} points and {} rows",
                points.len(),
                reps.len()
            )));
        }
        let d = points[0].len();
        let r = reps[0].len();
        if d == 0 || r == 0 {
            return Err(Error::InvalidParameter(
                "design points and response rows must be nonempty".into(),
            ));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            if reps[i].len() != r {
                return Err(Error::InvalidParameter(format!(
                    "response row {i} has {} entries, expected {r}",
                    reps[i].len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) || reps[i].iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("row {i} contains a non-finite value")));
            }
        }
        Ok(Self { points, reps })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Replications per design point.
    pub fn r(&self) -> usize {
        self.reps[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn reps(&self) -> &[Vec<f64>] {
        &self.reps
    }

    /// Per-point means as a plain dataset, the input the fits consume.
    pub fn collapse(&self) -> Dataset {
        let y: Vec<f64> = self
            .reps
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect();
        Dataset::new(self.points.clone(), y).expect("validated at construction")
    }
}

/// Residual budget from replicated responses plus the collapsed means.
#[derive(Debug, Clone)]
pub struct ReplicateEstimate {
    /// Average of the per-point sample variances, divided by r: the
    /// estimated variance of a per-point mean, averaged over points.
    pub s_n: f64,
    pub collapsed: Dataset,
}

/// Needs at least two replications per point.
pub fn replicate_s_n(data: &ReplicatedDataset) -> Result<ReplicateEstimate> {
    let r = data.r();
    if r < 2 {
        return Err(Error::InvalidParameter(format!(
            "replicate variance needs at least 2 responses per point, got {r}"
        )));
    }
    let n = data.len();
    let mut acc = 0.0;
    for row in data.reps() {
        let mean = row.iter().sum::<f64>() / r as f64;
        let ss: f64 = row.iter().map(|&v| (v - mean) * (v - mean)).sum();
        acc += ss / (r as f64 - 1.0);
    }
    Ok(ReplicateEstimate {
        s_n: acc / (n as f64 * r as f64),
        collapsed: data.collapse(),
    })
}

/// Residual budget from single observations pooled within partition cells.
#[derive(Debug, Clone)]
pub struct PartitionEstimate {
    pub s_n: f64,
    /// Cells that contributed (at least two points).
    pub cells_used: usize,
    /// Nonempty cells skipped for having a single point.
    pub cells_skipped: usize,
}

/// Splits the domain into `cells_per_axis` half-open intervals per axis
/// (the last interval closed) and averages the within-cell sample variances
/// over cells holding at least two points.
pub fn partition_s_n(data: &Dataset, domain: &DomainBox, cells_per_axis: usize) -> Result<PartitionEstimate> {
    partition_s_n_impl(data, domain, cells_per_axis, None)
}

/// Weighted variant: `weights` has one nonnegative entry per cell, laid out
/// with axis 0 varying slowest. Cells with fewer than two points or zero
/// weight are excluded; the rest average with their weights.
pub fn partition_s_n_weighted(
    data: &Dataset,
    domain: &DomainBox,
    cells_per_axis: usize,
    weights: &[f64],
) -> Result<PartitionEstimate> {
    partition_s_n_impl(data, domain, cells_per_axis, Some(weights))
}

fn partition_s_n_impl(
    data: &Dataset,
    domain: &DomainBox,
    cells_per_axis: usize,
    weights: Option<&[f64]>,
) -> Result<PartitionEstimate> {
    if cells_per_axis == 0 {
        return Err(Error::InvalidParameter("need at least one cell per axis".into()));
    }
    let d = domain.dim();
    if data.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: data.dim() });
    }
    let cell_count = cells_per_axis
        .checked_pow(d as u32)
        .ok_or_else(|| Error::InvalidParameter("partition cell count overflows".into()))?;
    if let Some(w) = weights {
        if w.len() != cell_count {
            return Err(Error::InvalidParameter(format!(
                "expected {cell_count} cell weights, got {}",
                w.len()
            )));
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("cell weights must be finite and nonnegative".into()));
        }
    }

    let mut cells: Vec<Vec<f64>> = vec![Vec::new(); cell_count];
    for (i, (p, &y)) in data.points().iter().zip(data.y()).enumerate() {
        let mut id = 0usize;
        for j in 0..d {
            let lo = domain.lo()[j];
            let hi = domain.hi()[j];
            if p[j] < lo || p[j] > hi {
                return Err(Error::InvalidParameter(format!(
                    "design point {i} lies outside the domain on axis {j} ({} not in [{lo}, {hi}])",
                    p[j]
                )));
            }
            let t = (p[j] - lo) / (hi - lo);
            let idx = ((t * cells_per_axis as f64) as usize).min(cells_per_axis - 1);
            id = id * cells_per_axis + idx;
        }
        cells[id].push(y);
    }

    let mut acc = 0.0;
    let mut wsum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (id, ys) in cells.iter().enumerate() {
        if ys.len() < 2 {
            if !ys.is_empty() {
                skipped += 1;
            }
            continue;
        }
        let w = weights.map(|w| w[id]).unwrap_or(1.0);
        if w == 0.0 {
            skipped += 1;
            continue;
        }
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (ys.len() as f64 - 1.0);
        acc += w * var;
        wsum += w;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidParameter(
            "every partition cell has fewer than two points (or zero weight); cannot pool variances".into(),
        ));
    }
    Ok(PartitionEstimate {
        s_n: acc / wsum,
        cells_used: used,
        cells_skipped: skipped,
    })
}
