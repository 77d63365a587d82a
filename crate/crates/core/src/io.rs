//! File formats: PFM for real-valued grids, binary PGM for validity masks.
//!
//! PFM (portable float map): header `Pf`, `width height`, then a scale whose
//! sign encodes endianness (negative = little-endian). The raster stores rows
//! bottom-up, 4-byte IEEE floats. We write little-endian with scale `-1.0`
//! and read either endianness. Only the grayscale `Pf` variant is supported.
//!
//! PGM: binary `P5` with maxval <= 255; nonzero bytes mark valid pixels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, Unit, ValidityMask};
use crate::Scalar;

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn read_token(r: &mut impl Read) -> Result<String> {
    let mut tok = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        let n = r.read(&mut byte)?;
        if n == 0 {
            if tok.is_empty() {
                return Err(Error::Parse("unexpected end of header".into()));
            }
            return Ok(tok);
        }
        let ch = byte[0] as char;
        if in_comment {
            if ch == '\n' {
                in_comment = false;
            }
            continue;
        }
        if ch == '#' {
            in_comment = true;
            continue;
        }
        if ch.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(ch);
    }
}

/// Reads a PFM file into a grid with the given unit tag.
pub fn read_pfm<T: Scalar>(path: impl AsRef<Path>, unit: Unit) -> Result<ScalarGrid<T>> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_token(&mut r)?;
    if magic == "PF" {
        return Err(Error::Parse("color PFM (PF) is not supported, expected Pf".into()));
    }
    if magic != "Pf" {
        return Err(Error::Parse(format!("bad PFM magic {magic:?}, expected Pf")));
    }
    let cols: usize = read_token(&mut r)?
        .parse()
        .map_err(|e| Error::Parse(format!("bad PFM width: {e}")))?;
    let rows: usize = read_token(&mut r)?
        .parse()
        .map_err(|e| Error::Parse(format!("bad PFM height: {e}")))?;
    let scale: f64 = read_token(&mut r)?
        .parse()
        .map_err(|e| Error::Parse(format!("bad PFM scale: {e}")))?;
    if scale == 0.0 {
        return Err(Error::Parse("PFM scale must be nonzero".into()));
    }
    let little_endian = scale < 0.0;
    if rows == 0 || cols == 0 {
        return Err(Error::Parse("PFM dimensions must be positive".into()));
    }
    let mut raw = vec![0u8; rows * cols * 4];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Parse("PFM raster truncated".into()))?;
    let mut values = vec![T::zero(); rows * cols];
    // raster rows are stored bottom-up
    for sr in 0..rows {
        let gr = rows - 1 - sr;
        for c in 0..cols {
            let off = (sr * cols + c) * 4;
            let b = [raw[off], raw[off + 1], raw[off + 2], raw[off + 3]];
            let f = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            values[gr * cols + c] = T::of_f64(f as f64);
        }
    }
    ScalarGrid::new(rows, cols, values, unit)
}

/// Writes a grid as little-endian PFM with scale header `-1.0`.
pub fn write_pfm<T: Scalar>(path: impl AsRef<Path>, grid: &ScalarGrid<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "Pf\n{} {}\n-1.0\n", grid.cols(), grid.rows())?;
    let (rows, cols) = (grid.rows(), grid.cols());
    for sr in 0..rows {
        let gr = rows - 1 - sr;
        for c in 0..cols {
            let v = grid.get(gr, c).as_f64() as f32;
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary 8-bit PGM as a validity mask (nonzero = valid).
pub fn read_pgm_mask(path: impl AsRef<Path>) -> Result<ValidityMask> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_token(&mut r)?;
    if magic != "P5" {
        return Err(Error::Parse(format!("bad PGM magic {magic:?}, expected P5")));
    }
    let cols: usize = read_token(&mut r)?
        .parse()
        .map_err(|e| Error::Parse(format!("bad PGM width: {e}")))?;
    let rows: usize = read_token(&mut r)?
        .parse()
        .map_err(|e| Error::Parse(format!("bad PGM height: {e}")))?;
    let maxval: usize = read_token(&mut r)?
        .parse()
        .map_err(|e| Error::Parse(format!("bad PGM maxval: {e}")))?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("unsupported PGM maxval {maxval}, need 1..=255")));
    }
    let mut raw = vec![0u8; rows * cols];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Parse("PGM raster truncated".into()))?;
    ValidityMask::new(rows, cols, raw.into_iter().map(|b| b != 0).collect())
}

/// Writes a mask as binary PGM (255 = valid, 0 = invalid).
pub fn write_pgm_mask(path: impl AsRef<Path>, mask: &ValidityMask) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", mask.cols(), mask.rows())?;
    let bytes: Vec<u8> = mask.flags().iter().map(|&f| if f { 255 } else { 0 }).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_and_bottom_up_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pfm");
        let g = ScalarGrid::from_fn(2, 3, Unit::Disparity, |r, c| (r * 3 + c) as f64).unwrap();
        write_pfm(&path, &g).unwrap();

        // header + bottom row first in the raster
        let bytes = std::fs::read(&path).unwrap();
        let header = b"Pf\n3 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let first = f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap());
        assert_eq!(first, 3.0); // grid (1, 0) is the bottom-left pixel

        let back: ScalarGrid<f64> = read_pfm(&path, Unit::Disparity).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn pfm_big_endian_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("be.pfm");
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_be_bytes());
        std::fs::write(&path, bytes).unwrap();
        let g: ScalarGrid<f32> = read_pfm(&path, Unit::Dimensionless).unwrap();
        assert_eq!(g.values(), &[1.5, -2.0]);
    }

    #[test]
    fn pfm_rejects_color_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pfm");
        std::fs::write(&path, b"PF\n1 1\n-1.0\n\0\0\0\0").unwrap();
        assert!(matches!(
            read_pfm::<f64>(&path, Unit::Disparity),
            Err(Error::Parse(_))
        ));
        std::fs::write(&path, b"Pf\n2 2\n-1.0\n\0\0\0\0").unwrap();
        assert!(matches!(
            read_pfm::<f64>(&path, Unit::Disparity),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn pgm_round_trip_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let m = ValidityMask::new(2, 2, vec![true, false, false, true]).unwrap();
        write_pgm_mask(&path, &m).unwrap();
        assert_eq!(read_pgm_mask(&path).unwrap(), m);

        let with_comment = b"P5\n# a comment\n2 2\n255\n\xff\x00\x00\x01".to_vec();
        std::fs::write(&path, with_comment).unwrap();
        assert_eq!(read_pgm_mask(&path).unwrap(), m);
    }
}
