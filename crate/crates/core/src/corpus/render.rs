//! Text and image renderings of stored trajectories.
//!
//! ASCII: each timestep is a `t=<index>` line followed by one line per grid
//! row, one glyph per cell (`0-9`, `a-z`, `A-Z`), and a blank separator line.
//! PGM: one binary (`P5`) 8-bit frame per timestep, state `s` mapped to gray
//! `s * 255 / (n - 1)`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::shard::Shard;
use crate::error::{Error, Result};
use crate::nca::Grid;

const GLYPHS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderFormat {
    Ascii,
    PgmFrames,
}

impl FromStr for RenderFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ascii" => Ok(RenderFormat::Ascii),
            "pgm" | "pgm-frames" => Ok(RenderFormat::PgmFrames),
            other => Err(Error::config(format!("unknown render format {other:?}"))),
        }
    }
}

pub fn render_ascii(grids: &[Grid]) -> Result<String> {
    let mut out = String::new();
    for (t, g) in grids.iter().enumerate() {
        if g.alphabet() > GLYPHS.len() {
            return Err(Error::config(format!(
                "ASCII rendering supports at most {} states",
                GLYPHS.len()
            )));
        }
        out.push_str(&format!("t={t}\n"));
        for r in 0..g.height() {
            out.extend((0..g.width()).map(|c| GLYPHS[g.get(r, c) as usize] as char));
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_ascii(text: &str, alphabet: usize) -> Result<Vec<Grid>> {
    let mut grids = Vec::new();
    let mut rows: Vec<Vec<u8>> = Vec::new();
    let flush = |rows: &mut Vec<Vec<u8>>, grids: &mut Vec<Grid>| -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let w = rows[0].len();
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::config("ragged ASCII grid"));
        }
        let h = rows.len();
        grids.push(Grid::new(h, w, alphabet, rows.concat())?);
        rows.clear();
        Ok(())
    };
    for line in text.lines() {
        if line.starts_with("t=") || line.trim().is_empty() {
            flush(&mut rows, &mut grids)?;
            continue;
        }
        let row = line
            .bytes()
            .map(|b| {
                GLYPHS
                    .iter()
                    .position(|&g| g == b)
                    .map(|p| p as u8)
                    .ok_or_else(|| Error::config(format!("unknown glyph {:?}", b as char)))
            })
            .collect::<Result<Vec<u8>>>()?;
        rows.push(row);
    }
    flush(&mut rows, &mut grids)?;
    Ok(grids)
}

pub fn pgm_bytes(grid: &Grid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    let top = (grid.alphabet().max(2) - 1) as u32;
    out.extend(grid.cells().iter().map(|&s| (s as u32 * 255 / top) as u8));
    out
}

/// Writes `frame_000.pgm`, `frame_001.pgm`, ... into `dir`.
pub fn write_pgm_frames(grids: &[Grid], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    grids
        .iter()
        .enumerate()
        .map(|(t, g)| {
            let path = dir.join(format!("frame_{t:03}.pgm"));
            fs::write(&path, pgm_bytes(g))?;
            Ok(path)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rendered {
    Ascii(String),
    Frames(Vec<PathBuf>),
}

/// Renders sequence `index` of an NCA shard. PGM frames go to `out_dir`.
pub fn render_trajectory(
    shard_path: impl AsRef<Path>,
    index: u64,
    format: RenderFormat,
    out_dir: impl AsRef<Path>,
) -> Result<Rendered> {
    let shard = Shard::open(shard_path)?;
    let grids = shard.grids(index)?;
    match format {
        RenderFormat::Ascii => Ok(Rendered::Ascii(render_ascii(&grids)?)),
        RenderFormat::PgmFrames => Ok(Rendered::Frames(write_pgm_frames(&grids, out_dir)?)),
    }
}
