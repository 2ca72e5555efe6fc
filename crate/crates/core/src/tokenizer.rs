//! Patch tokenization of grids, with per-timestep delimiters.
//!
//! Each non-overlapping `patch_h x patch_w` block of cells becomes one token,
//! its cells read row-major as base-`n` digits (most significant first).
//! A timestep serializes as `<grid>`, the patch tokens scanning patch rows
//! top to bottom and patch columns left to right, then `</grid>`. The two
//! delimiters take the ids directly after the patch vocabulary. There is no
//! beginning-of-sequence token.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nca::{Grid, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSpec {
    pub alphabet_n: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub patch_vocab_size: u32,
}

impl VocabSpec {
    pub fn new(alphabet_n: usize, patch_h: usize, patch_w: usize) -> Result<Self> {
        if alphabet_n < 2 || patch_h == 0 || patch_w == 0 {
            return Err(Error::config(format!(
                "invalid vocabulary shape n={alphabet_n}, patch {patch_h}x{patch_w}"
            )));
        }
        let digits = (patch_h * patch_w) as u32;
        let size = (alphabet_n as u64)
            .checked_pow(digits)
            .filter(|&v| v + 2 <= u32::MAX as u64)
            .ok_or_else(|| {
                Error::config(format!(
                    "{alphabet_n}^{digits} patch tokens do not fit 32-bit token ids"
                ))
            })?;
        Ok(VocabSpec {
            alphabet_n,
            patch_h,
            patch_w,
            patch_vocab_size: size as u32,
        })
    }

    pub fn patch_cells(&self) -> usize {
        self.patch_h * self.patch_w
    }

    pub fn grid_open_id(&self) -> u32 {
        self.patch_vocab_size
    }

    pub fn grid_close_id(&self) -> u32 {
        self.patch_vocab_size + 1
    }

    pub fn total_vocab(&self) -> u32 {
        self.patch_vocab_size + 2
    }

    pub fn is_delimiter(&self, token: u32) -> bool {
        token == self.grid_open_id() || token == self.grid_close_id()
    }
}

/// Base-`n` positional code of a patch's cells (row-major, first cell most significant).
pub fn encode_patch(cells: &[u8], n: usize) -> Result<u32> {
    let mut id: u64 = 0;
    for &c in cells {
        if c as usize >= n {
            return Err(Error::InvalidCell {
                value: c as u32,
                alphabet: n,
            });
        }
        id = id * n as u64 + c as u64;
    }
    u32::try_from(id).map_err(|_| Error::config("patch code overflows 32 bits"))
}

/// Inverse of [`encode_patch`] for a patch of `num_cells` cells.
pub fn decode_patch(id: u32, n: usize, num_cells: usize) -> Result<Vec<u8>> {
    let limit = (n as u64).saturating_pow(num_cells as u32);
    if id as u64 >= limit {
        return Err(Error::InvalidToken { id, vocab: limit });
    }
    let mut cells = vec![0u8; num_cells];
    let mut rest = id as u64;
    for cell in cells.iter_mut().rev() {
        *cell = (rest % n as u64) as u8;
        rest /= n as u64;
    }
    Ok(cells)
}

/// Serialized patch-token stream of one trajectory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub vocab: VocabSpec,
    pub grid_h: usize,
    pub grid_w: usize,
    pub rule_seed: u64,
}

impl TokenSequence {
    pub fn patches_per_step(&self) -> usize {
        (self.grid_h / self.vocab.patch_h) * (self.grid_w / self.vocab.patch_w)
    }

    pub fn block_len(&self) -> usize {
        self.patches_per_step() + 2
    }
}

fn check_divisible(grid_h: usize, grid_w: usize, vocab: &VocabSpec) -> Result<()> {
    if grid_h == 0 || grid_w == 0 || !grid_h.is_multiple_of(vocab.patch_h) || !grid_w.is_multiple_of(vocab.patch_w) {
        return Err(Error::config(format!(
            "grid {grid_h}x{grid_w} is not divisible into {}x{} patches",
            vocab.patch_h, vocab.patch_w
        )));
    }
    Ok(())
}

/// Appends one grid's delimited patch tokens to `out`.
pub fn serialize_grid(grid: &Grid, vocab: &VocabSpec, out: &mut Vec<u32>) -> Result<()> {
    check_divisible(grid.height(), grid.width(), vocab)?;
    if grid.alphabet() != vocab.alphabet_n {
        return Err(Error::config(format!(
            "grid alphabet {} does not match vocabulary alphabet {}",
            grid.alphabet(),
            vocab.alphabet_n
        )));
    }
    let n = vocab.alphabet_n as u32;
    out.push(vocab.grid_open_id());
    for pr in (0..grid.height()).step_by(vocab.patch_h) {
        for pc in (0..grid.width()).step_by(vocab.patch_w) {
            let mut id = 0u32;
            for r in pr..pr + vocab.patch_h {
                for c in pc..pc + vocab.patch_w {
                    id = id * n + grid.get(r, c) as u32;
                }
            }
            out.push(id);
        }
    }
    out.push(vocab.grid_close_id());
    Ok(())
}

pub fn serialize_trajectory(trajectory: &Trajectory, vocab: &VocabSpec) -> Result<TokenSequence> {
    let (grid_h, grid_w) = trajectory
        .grids
        .first()
        .map(|g| (g.height(), g.width()))
        .unwrap_or((vocab.patch_h, vocab.patch_w));
    check_divisible(grid_h, grid_w, vocab)?;
    let block = (grid_h / vocab.patch_h) * (grid_w / vocab.patch_w) + 2;
    let mut tokens = Vec::with_capacity(block * trajectory.grids.len());
    for g in &trajectory.grids {
        if (g.height(), g.width()) != (grid_h, grid_w) {
            return Err(Error::config("trajectory grids differ in shape"));
        }
        serialize_grid(g, vocab, &mut tokens)?;
    }
    Ok(TokenSequence {
        tokens,
        vocab: *vocab,
        grid_h,
        grid_w,
        rule_seed: trajectory.rule_seed,
    })
}

/// Parses delimited patch tokens back into grids.
pub fn deserialize_tokens(seq: &TokenSequence) -> Result<Trajectory> {
    let grids = parse_grids(&seq.tokens, &seq.vocab, seq.grid_h, seq.grid_w)?;
    Ok(Trajectory::new(seq.rule_seed, grids))
}

/// Parses `(open patch^k close)*` framing; errors carry the offending token offset.
pub fn parse_grids(tokens: &[u32], vocab: &VocabSpec, grid_h: usize, grid_w: usize) -> Result<Vec<Grid>> {
    check_divisible(grid_h, grid_w, vocab)?;
    let patches_w = grid_w / vocab.patch_w;
    let k = (grid_h / vocab.patch_h) * patches_w;
    let mut grids = Vec::with_capacity(tokens.len() / (k + 2));
    let mut pos = 0;
    let fail = |offset: usize, reason: String| Error::Parse { offset, reason };
    while pos < tokens.len() {
        if tokens[pos] != vocab.grid_open_id() {
            return Err(fail(pos, format!("expected <grid>, found {}", tokens[pos])));
        }
        let mut cells = vec![0u8; grid_h * grid_w];
        for p in 0..k {
            let offset = pos + 1 + p;
            let id = *tokens
                .get(offset)
                .ok_or_else(|| fail(offset, "sequence ends inside a grid".into()))?;
            if id >= vocab.patch_vocab_size {
                return Err(fail(offset, format!("expected patch token, found {id}")));
            }
            let patch = decode_patch(id, vocab.alphabet_n, vocab.patch_cells())?;
            let (pr, pc) = ((p / patches_w) * vocab.patch_h, (p % patches_w) * vocab.patch_w);
            for (i, &v) in patch.iter().enumerate() {
                let (r, c) = (pr + i / vocab.patch_w, pc + i % vocab.patch_w);
                cells[r * grid_w + c] = v;
            }
        }
        let close = pos + k + 1;
        match tokens.get(close) {
            Some(&t) if t == vocab.grid_close_id() => {}
            Some(&t) => return Err(fail(close, format!("expected </grid>, found {t}"))),
            None => return Err(fail(close, "sequence ends before </grid>".into())),
        }
        grids.push(Grid::new(grid_h, grid_w, vocab.alphabet_n, cells)?);
        pos = close + 1;
    }
    Ok(grids)
}
