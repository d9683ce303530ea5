//! Tetris-like blocks of six shape classes {I, O, T, S, L, J}, random 90
//! degree rotations and palette colors, scaled so the long axis spans a
//! configurable pixel range. Color is drawn independently of the class so
//! shape, not color, carries the label.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SegSample;
use crate::error::{Result, WaveError};
use crate::field::{Field, Real};

#[derive(Debug, Clone)]
pub struct TetrominoesSpec {
    pub count: usize,
    pub canvas: usize,
    pub blocks_min: usize,
    pub blocks_max: usize,
    /// Long-axis extent in pixels, inclusive.
    pub len_min: usize,
    pub len_max: usize,
    pub seed: u64,
}

impl Default for TetrominoesSpec {
    fn default() -> Self {
        TetrominoesSpec {
            count: 100,
            canvas: 64,
            blocks_min: 1,
            blocks_max: 5,
            len_min: 14,
            len_max: 28,
            seed: 0,
        }
    }
}

pub const CLASS_COUNT: usize = 7; // background + 6 shapes

/// Cell patterns (row, col); class label is index + 1.
const SHAPES: [&[(usize, usize)]; 6] = [
    &[(0, 0), (0, 1), (0, 2), (0, 3)], // I
    &[(0, 0), (0, 1), (1, 0), (1, 1)], // O
    &[(0, 0), (0, 1), (0, 2), (1, 1)], // T
    &[(0, 1), (0, 2), (1, 0), (1, 1)], // S
    &[(0, 0), (1, 0), (2, 0), (2, 1)], // L
    &[(0, 1), (1, 1), (2, 1), (2, 0)], // J
];

/// Fixed palette, uncorrelated with class.
const PALETTE: [(f64, f64, f64); 6] = [
    (1.0, 0.2, 0.2),
    (0.2, 1.0, 0.2),
    (0.3, 0.4, 1.0),
    (1.0, 0.9, 0.2),
    (0.9, 0.3, 0.9),
    (0.2, 0.9, 0.9),
];

fn rotate_cells(cells: &[(usize, usize)], quarter_turns: usize) -> Vec<(usize, usize)> {
    let mut cur: Vec<(isize, isize)> = cells.iter().map(|&(r, c)| (r as isize, c as isize)).collect();
    for _ in 0..quarter_turns % 4 {
        // (r, c) -> (c, -r), then renormalize to nonnegative coords
        for cell in &mut cur {
            *cell = (cell.1, -cell.0);
        }
        let min_r = cur.iter().map(|c| c.0).min().unwrap();
        let min_c = cur.iter().map(|c| c.1).min().unwrap();
        for cell in &mut cur {
            *cell = (cell.0 - min_r, cell.1 - min_c);
        }
    }
    cur.into_iter().map(|(r, c)| (r as usize, c as usize)).collect()
}

fn cell_extent(cells: &[(usize, usize)]) -> (usize, usize) {
    let rows = cells.iter().map(|c| c.0).max().unwrap() + 1;
    let cols = cells.iter().map(|c| c.1).max().unwrap() + 1;
    (rows, cols)
}

pub fn gen_tetrominoes(spec: &TetrominoesSpec) -> Result<Vec<SegSample>> {
    if spec.blocks_min < 1 || spec.blocks_max < spec.blocks_min {
        return Err(WaveError::Config("tetromino block-count range invalid".into()));
    }
    if spec.len_min < 4 || spec.len_max < spec.len_min {
        return Err(WaveError::Config("tetromino length range invalid".into()));
    }
    if spec.canvas < spec.len_max + 2 {
        return Err(WaveError::Config(format!(
            "canvas {} too small for blocks up to {} px",
            spec.canvas, spec.len_max
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.count).map(|_| gen_one(spec, &mut rng)).collect()
}

fn gen_one(spec: &TetrominoesSpec, rng: &mut ChaCha8Rng) -> Result<SegSample> {
    let n = spec.canvas;
    let mut image = Field::zeros(3, n, n);
    let mut mask = vec![0u8; n * n];
    let blocks = rng.random_range(spec.blocks_min..=spec.blocks_max);
    for _ in 0..blocks {
        let mut placed = false;
        for _attempt in 0..1000 {
            let shape_idx = rng.random_range(0..SHAPES.len());
            let turns = rng.random_range(0..4usize);
            let color = PALETTE[rng.random_range(0..PALETTE.len())];
            let target_len = rng.random_range(spec.len_min..=spec.len_max);
            let cells = rotate_cells(SHAPES[shape_idx], turns);
            let (rows, cols) = cell_extent(cells.as_slice());
            let long_cells = rows.max(cols);
            let scale = target_len as f64 / long_cells as f64;
            let px_rows = (rows as f64 * scale).round() as usize;
            let px_cols = (cols as f64 * scale).round() as usize;
            if px_rows >= n || px_cols >= n {
                continue;
            }
            let top = rng.random_range(0..(n - px_rows));
            let left = rng.random_range(0..(n - px_cols));
            // rasterize cells as scaled boxes
            let mut pixels = Vec::new();
            let mut overlap = false;
            'cells: for &(r, c) in &cells {
                let y0 = top + (r as f64 * scale).round() as usize;
                let y1 = top + ((r + 1) as f64 * scale).round() as usize;
                let x0 = left + (c as f64 * scale).round() as usize;
                let x1 = left + ((c + 1) as f64 * scale).round() as usize;
                for y in y0..y1.min(n) {
                    for x in x0..x1.min(n) {
                        if mask[y * n + x] != 0 {
                            overlap = true;
                            break 'cells;
                        }
                        pixels.push(y * n + x);
                    }
                }
            }
            if overlap || pixels.is_empty() {
                continue;
            }
            let label = (shape_idx + 1) as u8;
            for &p in &pixels {
                mask[p] = label;
                image.data_mut()[p] = color.0 as Real;
                let np = n * n;
                image.data_mut()[np + p] = color.1 as Real;
                image.data_mut()[2 * np + p] = color.2 as Real;
            }
            placed = true;
            break;
        }
        if !placed {
            return Err(WaveError::Generation(
                "tetromino placement failed after 1000 rejections".into(),
            ));
        }
    }
    let sample = SegSample {
        image,
        mask,
        class_count: CLASS_COUNT,
    };
    sample.validate()?;
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn o_piece_is_a_filled_square() {
        let spec = TetrominoesSpec {
            count: 1,
            blocks_min: 1,
            blocks_max: 1,
            ..TetrominoesSpec::default()
        };
        // search seeds until the single block is an O piece (label 2)
        for seed in 0..100 {
            let s = gen_tetrominoes(&TetrominoesSpec { seed, ..spec.clone() }).unwrap();
            let sample = &s[0];
            if sample.mask.iter().any(|&m| m == 2) {
                let n = spec.canvas;
                let ys: Vec<usize> = (0..n * n)
                    .filter(|&p| sample.mask[p] == 2)
                    .map(|p| p / n)
                    .collect();
                let xs: Vec<usize> = (0..n * n)
                    .filter(|&p| sample.mask[p] == 2)
                    .map(|p| p % n)
                    .collect();
                let (y0, y1) = (*ys.iter().min().unwrap(), *ys.iter().max().unwrap());
                let (x0, x1) = (*xs.iter().min().unwrap(), *xs.iter().max().unwrap());
                // bounding box fully filled and square
                assert_eq!(ys.len(), (y1 - y0 + 1) * (x1 - x0 + 1));
                assert_eq!(y1 - y0, x1 - x0);
                return;
            }
        }
        panic!("no O piece in 100 seeds");
    }

    #[test]
    fn block_long_axis_within_range() {
        let spec = TetrominoesSpec {
            count: 20,
            ..TetrominoesSpec::default()
        };
        let samples = gen_tetrominoes(&spec).unwrap();
        let n = spec.canvas;
        for s in &samples {
            // per connected component of one label, check bbox long side
            let mut seen = vec![false; n * n];
            for start in 0..n * n {
                if s.mask[start] == 0 || seen[start] {
                    continue;
                }
                let label = s.mask[start];
                let mut stack = vec![start];
                seen[start] = true;
                let (mut y0, mut y1, mut x0, mut x1) = (n, 0, n, 0);
                while let Some(p) = stack.pop() {
                    let (y, x) = (p / n, p % n);
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                    for (dy, dx) in [(0isize, 1isize), (0, -1), (1, 0), (-1, 0)] {
                        let (yy, xx) = (y as isize + dy, x as isize + dx);
                        if yy < 0 || xx < 0 || yy >= n as isize || xx >= n as isize {
                            continue;
                        }
                        let q = yy as usize * n + xx as usize;
                        if !seen[q] && s.mask[q] == label {
                            seen[q] = true;
                            stack.push(q);
                        }
                    }
                }
                let long = (y1 - y0 + 1).max(x1 - x0 + 1);
                assert!(
                    (spec.len_min..=spec.len_max).contains(&long),
                    "block long axis {long} outside [{}, {}]",
                    spec.len_min,
                    spec.len_max
                );
            }
        }
    }

    #[test]
    fn at_most_requested_components_and_determinism() {
        let spec = TetrominoesSpec {
            count: 10,
            blocks_min: 5,
            blocks_max: 5,
            ..TetrominoesSpec::default()
        };
        let a = gen_tetrominoes(&spec).unwrap();
        let b = gen_tetrominoes(&spec).unwrap();
        assert_eq!(a, b);
        for s in &a {
            // count 4-connected foreground components (all labels together);
            // blocks of the same class may touch, so <= 5.
            let n = spec.canvas;
            let mut seen = vec![false; n * n];
            let mut components = 0;
            for start in 0..n * n {
                if s.mask[start] == 0 || seen[start] {
                    continue;
                }
                components += 1;
                let mut stack = vec![start];
                seen[start] = true;
                while let Some(p) = stack.pop() {
                    let (y, x) = (p / n, p % n);
                    for (dy, dx) in [(0isize, 1isize), (0, -1), (1, 0), (-1, 0)] {
                        let (yy, xx) = (y as isize + dy, x as isize + dx);
                        if yy < 0 || xx < 0 || yy >= n as isize || xx >= n as isize {
                            continue;
                        }
                        let q = yy as usize * n + xx as usize;
                        if !seen[q] && s.mask[q] != 0 {
                            seen[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
            assert!(components <= 5);
        }
    }
}
