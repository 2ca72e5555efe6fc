use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::GenConfig;
use crate::error::{Error, Result};
use crate::seed::{stream_rng, Stream};

/// An `height x width` torus of cell states in `0..alphabet`, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    height: usize,
    width: usize,
    alphabet: usize,
    cells: Vec<u8>,
}

impl Grid {
    pub fn new(height: usize, width: usize, alphabet: usize, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != height * width {
            return Err(Error::config(format!(
                "{} cells do not fill a {height}x{width} grid",
                cells.len()
            )));
        }
        if let Some(&bad) = cells.iter().find(|&&c| c as usize >= alphabet) {
            return Err(Error::InvalidCell {
                value: bad as u32,
                alphabet,
            });
        }
        Ok(Grid {
            height,
            width,
            alphabet,
            cells,
        })
    }

    pub fn zeros(height: usize, width: usize, alphabet: usize) -> Self {
        Grid {
            height,
            width,
            alphabet,
            cells: vec![0; height * width],
        }
    }

    /// Caller guarantees every cell is `< alphabet` and the length matches.
    pub(crate) fn from_raw(height: usize, width: usize, alphabet: usize, cells: Vec<u8>) -> Self {
        debug_assert_eq!(cells.len(), height * width);
        debug_assert!(cells.iter().all(|&c| (c as usize) < alphabet));
        Grid {
            height,
            width,
            alphabet,
            cells,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    /// Cell at a signed offset from `(row, col)`, wrapping in both axes.
    #[inline]
    pub fn get_wrapped(&self, row: isize, col: isize) -> u8 {
        let r = row.rem_euclid(self.height as isize) as usize;
        let c = col.rem_euclid(self.width as isize) as usize;
        self.cells[r * self.width + c]
    }

    /// Shifts the grid by `(dy, dx)` on the torus: the cell at `(r, c)` moves to
    /// `(r + dy, c + dx)` modulo the grid size.
    pub fn translate(&self, dy: isize, dx: isize) -> Grid {
        let mut out = vec![0u8; self.cells.len()];
        for r in 0..self.height {
            for c in 0..self.width {
                let nr = (r as isize + dy).rem_euclid(self.height as isize) as usize;
                let nc = (c as isize + dx).rem_euclid(self.width as isize) as usize;
                out[nr * self.width + nc] = self.get(r, c);
            }
        }
        Grid::from_raw(self.height, self.width, self.alphabet, out)
    }
}

/// Initial grid for a sequence: every cell i.i.d. uniform over the alphabet.
pub fn sample_init(rule_seed: u64, config: &GenConfig) -> Grid {
    let mut rng = stream_rng(rule_seed, Stream::InitGrid);
    let n = config.alphabet_n;
    let cells = (0..config.cells_per_grid())
        .map(|_| rng.random_range(0..n) as u8)
        .collect();
    Grid::from_raw(config.grid_h, config.grid_w, n, cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_alphabet_cells() {
        let err = Grid::new(1, 2, 3, vec![0, 3]).unwrap_err();
        assert!(matches!(err, Error::InvalidCell { value: 3, alphabet: 3 }));
        assert!(Grid::new(2, 2, 3, vec![0, 1]).is_err());
    }

    #[test]
    fn init_range_and_determinism() {
        let cfg = GenConfig::default();
        let g = sample_init(99, &cfg);
        assert_eq!(g.cells().len(), 144);
        assert!(g.cells().iter().all(|&c| c < 10));
        assert_eq!(g, sample_init(99, &cfg));
        assert_ne!(g, sample_init(100, &cfg));
    }

    #[test]
    fn init_histogram_is_uniform() {
        // 10 000 grids x 144 cells; each state frequency within 1% (relative) of 1/n.
        let cfg = GenConfig::default();
        let mut counts = [0u64; 10];
        for seed in 0..10_000u64 {
            for &c in sample_init(seed, &cfg).cells() {
                counts[c as usize] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        for (state, &k) in counts.iter().enumerate() {
            let freq = k as f64 / total as f64;
            assert!((freq - 0.1).abs() < 0.001, "state {state}: {freq}");
        }
    }

    #[test]
    fn translate_wraps_and_inverts() {
        let g = Grid::new(2, 3, 6, vec![0, 1, 2, 3, 4, 5]).unwrap();
        let t = g.translate(1, 1);
        assert_eq!(t.cells(), &[5, 3, 4, 2, 0, 1]);
        assert_eq!(t.translate(-1, -1), g);
        assert_eq!(g.translate(2, 3), g);
        assert_eq!(g.get_wrapped(-1, -1), 5);
    }
}
