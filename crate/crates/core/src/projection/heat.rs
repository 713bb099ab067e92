use serde::{Deserialize, Serialize};

use super::ProjectionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatMode {
    Error,
    TemplateImportance,
}

/// Weights deposited on a `resolution × resolution` grid, row-major with
/// row 0 at `y_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatGrid {
    pub mode: HeatMode,
    pub resolution: usize,
    /// `[x_min, x_max, y_min, y_max]`
    pub bounds: [f64; 4],
    pub cells: Vec<f64>,
}

impl HeatGrid {
    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }
}

/// Bounding box of the points padded by `pad` on every side.
pub fn padded_bounds(points: &[[f64; 2]], pad: f64) -> [f64; 4] {
    if points.is_empty() {
        return [-1.0, 1.0, -1.0, 1.0];
    }
    let mut b = [
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    ];
    for p in points {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].max(p[0]);
        b[2] = b[2].min(p[1]);
        b[3] = b[3].max(p[1]);
    }
    let pad = if pad > 0.0 { pad } else { 1.0 };
    [b[0] - pad, b[1] + pad, b[2] - pad, b[3] + pad]
}

/// Gaussian deposition of each point's weight onto cell centres. Each
/// point's kernel is renormalized to sum to its weight, so the grid total
/// equals the total input weight. A vanishing bandwidth puts each weight on
/// its nearest cell.
pub fn heatmap_grid(
    points: &[[f64; 2]],
    weights: &[f64],
    resolution: usize,
    bandwidth: f64,
    mode: HeatMode,
) -> Result<HeatGrid, ProjectionError> {
    if resolution == 0 {
        return Err(ProjectionError::Argument(
            "heat grid resolution must be positive".into(),
        ));
    }
    if points.len() != weights.len() {
        return Err(ProjectionError::Argument(format!(
            "{} points but {} weights",
            points.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(ProjectionError::Argument(format!(
            "heat weight {w} is not a finite non-negative number"
        )));
    }
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(ProjectionError::Argument(format!(
            "bandwidth {bandwidth} must be positive"
        )));
    }
    let bounds = padded_bounds(points, bandwidth);
    let cw = (bounds[1] - bounds[0]) / resolution as f64;
    let ch = (bounds[3] - bounds[2]) / resolution as f64;
    let xs: Vec<f64> = (0..resolution)
        .map(|k| bounds[0] + (k as f64 + 0.5) * cw)
        .collect();
    let ys: Vec<f64> = (0..resolution)
        .map(|k| bounds[2] + (k as f64 + 0.5) * ch)
        .collect();
    let mut cells = vec![0.0; resolution * resolution];
    let mut kernel = vec![0.0; resolution * resolution];
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    for (p, &w) in points.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (r, y) in ys.iter().enumerate() {
            for (c, x) in xs.iter().enumerate() {
                kernel[r * resolution + c] = (x - p[0]).powi(2) + (y - p[1]).powi(2);
            }
        }
        let nearest = kernel.iter().copied().fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        for k in kernel.iter_mut() {
            *k = if *k == nearest {
                1.0
            } else {
                (-(*k - nearest) * inv).exp()
            };
            sum += *k;
        }
        for (cell, k) in cells.iter_mut().zip(&kernel) {
            *cell += w * (k / sum);
        }
    }
    Ok(HeatGrid {
        mode,
        resolution,
        bounds,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_point_conserves() {
        let g = heatmap_grid(&[[0.3, -0.2]], &[1.0], 16, 0.5, HeatMode::Error).unwrap();
        assert!((g.total() - 1.0).abs() < 1e-12);
        assert!(g.cells.iter().all(|c| *c >= 0.0));
    }

    #[test]
    fn zero_weights_zero_grid() {
        let g = heatmap_grid(
            &[[0.0, 0.0], [1.0, 1.0]],
            &[0.0, 0.0],
            8,
            0.5,
            HeatMode::Error,
        )
        .unwrap();
        assert!(g.cells.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn split_point_equals_whole() {
        let a = heatmap_grid(
            &[[0.2, 0.1], [0.2, 0.1], [2.0, 1.0]],
            &[0.5, 0.5, 0.0],
            20,
            0.4,
            HeatMode::TemplateImportance,
        )
        .unwrap();
        let b = heatmap_grid(
            &[[0.2, 0.1], [2.0, 1.0]],
            &[1.0, 0.0],
            20,
            0.4,
            HeatMode::TemplateImportance,
        )
        .unwrap();
        assert_eq!(a.bounds, b.bounds);
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn arguments_checked() {
        assert!(heatmap_grid(&[[0.0, 0.0]], &[1.0], 0, 0.5, HeatMode::Error).is_err());
        assert!(heatmap_grid(&[[0.0, 0.0]], &[-1.0], 4, 0.5, HeatMode::Error).is_err());
        assert!(heatmap_grid(&[[0.0, 0.0]], &[], 4, 0.5, HeatMode::Error).is_err());
    }

    #[test]
    fn tiny_bandwidth_falls_back_to_nearest_cell() {
        let g = heatmap_grid(
            &[[0.0, 0.0], [100.0, 100.0]],
            &[1.0, 2.0],
            4,
            1e-200,
            HeatMode::Error,
        )
        .unwrap();
        assert!((g.total() - 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn conservation(pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.0f64..5.0), 1..30), res in 1usize..24, bw in 0.05f64..3.0) {
            let points: Vec<[f64; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
            let weights: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let g = heatmap_grid(&points, &weights, res, bw, HeatMode::Error).unwrap();
            let total: f64 = weights.iter().sum();
            prop_assert!((g.total() - total).abs() <= 1e-9 * total.max(1.0));
        }
    }
}
