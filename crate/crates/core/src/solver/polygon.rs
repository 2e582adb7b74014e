use std::f64::consts::PI;

use super::SolverError;

/// One linear constraint `a·P + b·Q ≤ c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HalfPlane {
    pub fn contains(&self, x: f64, y: f64, slack: f64) -> bool {
        self.a * x + self.b * y <= self.c + slack
    }
}

/// Inner polygonal approximation of the disk `P² + Q² ≤ radius²`.
///
/// The polygon is regular with vertices on the circle at angles
/// `π/segments + 2πk/segments`, so the facets have outward normals at
/// `2πk/segments` and sit at distance `radius·cos(π/segments)` from the origin.
pub fn polygonize_disk(radius: f64, segments: usize) -> Result<Vec<HalfPlane>, SolverError> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(SolverError::InvalidInput(format!(
            "disk radius must be positive and finite, got {radius}"
        )));
    }
    if segments < 4 {
        return Err(SolverError::InvalidInput(format!(
            "polygon needs at least 4 segments, got {segments}"
        )));
    }
    let offset = radius * (PI / segments as f64).cos();
    Ok((0..segments)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / segments as f64;
            HalfPlane {
                a: angle.cos(),
                b: angle.sin(),
                c: offset,
            }
        })
        .collect())
}

/// Vertices of the polygon returned by [`polygonize_disk`], counter-clockwise.
pub fn polygon_vertices(radius: f64, segments: usize) -> Vec<(f64, f64)> {
    (0..segments)
        .map(|k| {
            let angle = PI / segments as f64 + 2.0 * PI * k as f64 / segments as f64;
            (radius * angle.cos(), radius * angle.sin())
        })
        .collect()
}
