//! White convex polygons on black; the per-pixel label is the edge count
//! minus two, so triangles are class 1, squares class 2, and so on.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SegSample;
use crate::error::{Result, WaveError};
use crate::field::{Field, Real};

#[derive(Debug, Clone)]
pub struct PolygonsSpec {
    pub count: usize,
    pub canvas: usize,
    pub shapes_min: usize,
    pub shapes_max: usize,
    pub edges_min: usize,
    pub edges_max: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub seed: u64,
}

impl Default for PolygonsSpec {
    fn default() -> Self {
        PolygonsSpec {
            count: 100,
            canvas: 75,
            shapes_min: 1,
            shapes_max: 2,
            edges_min: 3,
            edges_max: 6,
            radius_min: 15.0,
            radius_max: 20.0,
            seed: 0,
        }
    }
}

impl PolygonsSpec {
    pub fn class_count(&self) -> usize {
        // background + one class per edge count
        self.edges_max - self.edges_min + 2
    }

    fn validate(&self) -> Result<()> {
        if self.edges_min < 3 || self.edges_max < self.edges_min {
            return Err(WaveError::Config("polygon edge range invalid".into()));
        }
        if self.shapes_min < 1 || self.shapes_max < self.shapes_min {
            return Err(WaveError::Config("polygon shape-count range invalid".into()));
        }
        if !(self.radius_min > 1.0) || self.radius_max < self.radius_min {
            return Err(WaveError::Config("polygon radius range invalid".into()));
        }
        if (self.canvas as f64) < 2.0 * self.radius_max + 2.0 {
            return Err(WaveError::Config(format!(
                "canvas {} too small for radius {}",
                self.canvas, self.radius_max
            )));
        }
        Ok(())
    }
}

/// A convex polygon as CCW-ordered vertices on its circumscribing circle.
#[derive(Debug, Clone)]
pub struct Polygon {
    pub vertices: Vec<(f64, f64)>, // (x, y)
}

impl Polygon {
    /// Point-in-convex-polygon test: all edge cross products share a sign.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let n = self.vertices.len();
        let mut sign = 0.0f64;
        for i in 0..n {
            let (x0, y0) = self.vertices[i];
            let (x1, y1) = self.vertices[(i + 1) % n];
            let cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
            if cross != 0.0 {
                if sign == 0.0 {
                    sign = cross.signum();
                } else if cross.signum() != sign {
                    return false;
                }
            }
        }
        true
    }
}

/// Sample one polygon: vertices at regular angles on a circle of radius `r`
/// centered at `(cx, cy)`, each jittered by +-15 degrees, in ascending angle
/// (hence convex).
fn sample_polygon(rng: &mut ChaCha8Rng, edges: usize, cx: f64, cy: f64, r: f64) -> Polygon {
    let rot = rng.random_range(0.0..std::f64::consts::TAU);
    let jitter = std::f64::consts::PI / 12.0;
    let vertices = (0..edges)
        .map(|k| {
            let theta = rot + std::f64::consts::TAU * k as f64 / edges as f64
                + rng.random_range(-jitter..jitter);
            (cx + r * theta.cos(), cy + r * theta.sin())
        })
        .collect();
    Polygon { vertices }
}

/// Generate `spec.count` samples. Shapes are placed by rejection sampling on
/// filled pixels; after 1000 failed placements generation aborts.
pub fn gen_polygons(spec: &PolygonsSpec) -> Result<Vec<SegSample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.count)
        .map(|_| gen_one(spec, &mut rng))
        .collect()
}

/// Generate one sample and also return the analytic shapes; test oracle
/// hook.
pub fn gen_one_with_shapes(
    spec: &PolygonsSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(SegSample, Vec<(Polygon, u8)>)> {
    let n = spec.canvas;
    let mut image = Field::zeros(1, n, n);
    let mut mask = vec![0u8; n * n];
    let n_shapes = rng.random_range(spec.shapes_min..=spec.shapes_max);
    let mut shapes = Vec::with_capacity(n_shapes);
    for _ in 0..n_shapes {
        let mut placed = false;
        for _attempt in 0..1000 {
            let edges = rng.random_range(spec.edges_min..=spec.edges_max);
            let r = rng.random_range(spec.radius_min..=spec.radius_max);
            let margin = r + 1.0;
            let cx = rng.random_range(margin..(n as f64 - margin));
            let cy = rng.random_range(margin..(n as f64 - margin));
            let poly = sample_polygon(rng, edges, cx, cy, r);
            // rasterize at pixel centers, checking overlap as we go
            let label = (edges - 2) as u8;
            let mut pixels = Vec::new();
            let mut overlap = false;
            let y_lo = ((cy - r).floor().max(0.0)) as usize;
            let y_hi = ((cy + r).ceil() as usize).min(n - 1);
            let x_lo = ((cx - r).floor().max(0.0)) as usize;
            let x_hi = ((cx + r).ceil() as usize).min(n - 1);
            'scan: for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    if poly.contains(x as f64 + 0.5, y as f64 + 0.5) {
                        if mask[y * n + x] != 0 {
                            overlap = true;
                            break 'scan;
                        }
                        pixels.push(y * n + x);
                    }
                }
            }
            if overlap || pixels.is_empty() {
                continue;
            }
            for &p in &pixels {
                mask[p] = label;
                image.data_mut()[p] = 1.0 as Real;
            }
            shapes.push((poly, label));
            placed = true;
            break;
        }
        if !placed {
            return Err(WaveError::Generation(
                "polygon placement failed after 1000 rejections".into(),
            ));
        }
    }
    let sample = SegSample {
        image,
        mask,
        class_count: spec.class_count(),
    };
    sample.validate()?;
    Ok((sample, shapes))
}

fn gen_one(spec: &PolygonsSpec, rng: &mut ChaCha8Rng) -> Result<SegSample> {
    gen_one_with_shapes(spec, rng).map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_spec(count: usize, seed: u64) -> PolygonsSpec {
        PolygonsSpec {
            count,
            canvas: 32,
            shapes_min: 1,
            shapes_max: 2,
            edges_min: 3,
            edges_max: 4,
            radius_min: 5.0,
            radius_max: 8.0,
            seed,
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = gen_polygons(&desk_spec(10, 7)).unwrap();
        let b = gen_polygons(&desk_spec(10, 7)).unwrap();
        assert_eq!(a, b);
        let c = gen_polygons(&desk_spec(10, 8)).unwrap();
        assert!(a != c);
    }

    #[test]
    fn labels_match_edge_counts_and_fit_class_count() {
        let spec = desk_spec(20, 1);
        let samples = gen_polygons(&spec).unwrap();
        assert_eq!(spec.class_count(), 3);
        for s in &samples {
            assert!(s.mask.iter().all(|&m| m < 3));
            // foreground pixels are white, background black
            for (p, &m) in s.mask.iter().enumerate() {
                if m > 0 {
                    assert_eq!(s.image.data()[p], 1.0);
                } else {
                    assert_eq!(s.image.data()[p], 0.0);
                }
            }
        }
        // both classes appear somewhere in 20 samples
        let hist = super::super::class_histogram(&samples, 3);
        assert!(hist[1] > 0 && hist[2] > 0);
    }

    #[test]
    fn triangle_only_masks_are_single_component() {
        let spec = PolygonsSpec {
            count: 5,
            shapes_min: 1,
            shapes_max: 1,
            edges_min: 3,
            edges_max: 3,
            ..desk_spec(5, 3)
        };
        for s in gen_polygons(&spec).unwrap() {
            assert!(s.mask.iter().all(|&m| m <= 1));
            // flood fill from any labeled pixel covers all labeled pixels
            let n = 32;
            let start = s.mask.iter().position(|&m| m == 1).unwrap();
            let mut seen = vec![false; n * n];
            let mut stack = vec![start];
            seen[start] = true;
            let mut count = 0;
            while let Some(p) = stack.pop() {
                count += 1;
                let (y, x) = (p / n, p % n);
                let mut push = |yy: usize, xx: usize, stack: &mut Vec<usize>, seen: &mut Vec<bool>| {
                    let q = yy * n + xx;
                    if s.mask[q] == 1 && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                };
                if y > 0 {
                    push(y - 1, x, &mut stack, &mut seen);
                }
                if y < n - 1 {
                    push(y + 1, x, &mut stack, &mut seen);
                }
                if x > 0 {
                    push(y, x - 1, &mut stack, &mut seen);
                }
                if x < n - 1 {
                    push(y, x + 1, &mut stack, &mut seen);
                }
            }
            let total = s.mask.iter().filter(|&&m| m == 1).count();
            assert_eq!(count, total, "triangle mask not 4-connected");
        }
    }

    #[test]
    fn foreground_pixels_lie_inside_analytic_shapes() {
        let spec = desk_spec(8, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for _ in 0..spec.count {
            let (s, shapes) = gen_one_with_shapes(&spec, &mut rng).unwrap();
            for (p, &m) in s.mask.iter().enumerate() {
                if m == 0 {
                    continue;
                }
                let (y, x) = (p / spec.canvas, p % spec.canvas);
                let inside = shapes.iter().any(|(poly, label)| {
                    *label == m && poly.contains(x as f64 + 0.5, y as f64 + 0.5)
                });
                assert!(inside, "labeled pixel ({y},{x}) outside analytic region");
            }
        }
    }
}
