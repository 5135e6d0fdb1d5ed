//! Binary morphology with square structuring elements.
//!
//! Erosion treats out-of-bounds neighbors as background; dilation ignores
//! them. Both run as two separable 1D passes.

use crate::error::{Error, Result};

use super::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    /// Dilation then erosion: fills holes and gaps up to the kernel size.
    Close,
    /// Erosion then dilation: removes specks below the kernel size.
    Open,
}

/// Apply `op` with a `kernel`×`kernel` square structuring element.
pub fn morphology(mask: &BinaryMask, op: MorphOp, kernel: usize) -> Result<BinaryMask> {
    if kernel < 1 || kernel.is_multiple_of(2) {
        return Err(Error::Invalid(format!(
            "structuring element size must be odd and ≥ 1, got {kernel}"
        )));
    }
    Ok(match op {
        MorphOp::Close => close(mask, kernel),
        MorphOp::Open => open(mask, kernel),
    })
}

pub fn close(mask: &BinaryMask, kernel: usize) -> BinaryMask {
    erode(&dilate(mask, kernel), kernel)
}

pub fn open(mask: &BinaryMask, kernel: usize) -> BinaryMask {
    dilate(&erode(mask, kernel), kernel)
}

pub fn dilate(mask: &BinaryMask, kernel: usize) -> BinaryMask {
    sweep(mask, kernel, true)
}

pub fn erode(mask: &BinaryMask, kernel: usize) -> BinaryMask {
    sweep(mask, kernel, false)
}

fn sweep(mask: &BinaryMask, kernel: usize, dilating: bool) -> BinaryMask {
    let h = mask.grid.height();
    let w = mask.grid.width();
    let r = kernel / 2;

    // set pixels can only influence cells within r of the occupied bounding
    // box, so the passes run over that window only
    let Some((r0, c0, r1, c1)) = mask.bounding_box() else {
        return BinaryMask::empty(mask.grid);
    };
    let row_lo = r0.saturating_sub(r);
    let row_hi = (r1 + r).min(h - 1);
    let col_lo = c0.saturating_sub(r);
    let col_hi = (c1 + r).min(w - 1);

    let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
        let mut dst = vec![false; src.len()];
        for row in row_lo..=row_hi {
            for col in col_lo..=col_hi {
                let (pos, limit) = if horizontal { (col, w) } else { (row, h) };
                // erosion: neighborhoods clipped by the raster border lack
                // support
                if !dilating && (pos < r || pos + r >= limit) {
                    continue;
                }
                let lo = pos.saturating_sub(r);
                let hi = (pos + r).min(limit - 1);
                let mut acc = !dilating;
                for k in lo..=hi {
                    let idx = if horizontal { row * w + k } else { k * w + col };
                    if dilating {
                        acc |= src[idx];
                    } else {
                        acc &= src[idx];
                    }
                }
                dst[row * w + col] = acc;
            }
        }
        dst
    };
    let tmp = pass(mask.raster(), true);
    let out = pass(&tmp, false);
    BinaryMask::from_raster(out, mask.grid).expect("same raster size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pillar_encoder::GridConfig;

    fn small_grid() -> GridConfig {
        GridConfig::new(0.0, 1.6, 0.0, 1.6, -1.0, 1.0, 0.16, 32).unwrap()
    }

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let grid = small_grid();
        let mut mask = BinaryMask::empty(grid);
        for (r, line) in rows.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                if ch == '#' {
                    mask.set(r, c, true);
                }
            }
        }
        mask
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mask = mask_from(&["..........", ".###......", ".#.#......", ".###......"]);
        assert_eq!(morphology(&mask, MorphOp::Close, 1).unwrap(), mask);
        assert_eq!(morphology(&mask, MorphOp::Open, 1).unwrap(), mask);
    }

    #[test]
    fn even_kernel_rejected() {
        let mask = BinaryMask::empty(small_grid());
        assert!(morphology(&mask, MorphOp::Close, 2).is_err());
        assert!(morphology(&mask, MorphOp::Open, 0).is_err());
    }

    #[test]
    fn opening_removes_isolated_pixel() {
        let mask = mask_from(&["..........", "....#....."]);
        assert!(open(&mask, 3).is_empty());
    }

    #[test]
    fn closing_restores_removed_center() {
        // 3×3 filled square with the center removed; a 3×3 closing puts the
        // center back: dilation grows the ring to a 5×5 block, erosion
        // shrinks it to the full 3×3 square
        let holed = mask_from(&["..........", ".###......", ".#.#......", ".###......"]);
        let expect = mask_from(&["..........", ".###......", ".###......", ".###......"]);
        assert_eq!(close(&holed, 3), expect);
    }

    #[test]
    fn closing_is_extensive_and_opening_anti_extensive() {
        let mask = mask_from(&["..........", "..##.#....", "..###.....", "....##...."]);
        let closed = close(&mask, 3);
        let opened = open(&mask, 3);
        for (row, col) in mask.set_pixels() {
            assert!(closed.get(row, col), "closing must keep ({row},{col})");
        }
        for (row, col) in opened.set_pixels() {
            assert!(mask.get(row, col), "opening must not add ({row},{col})");
        }
    }

    #[test]
    fn open_close_idempotent() {
        let mask = mask_from(&["..........", "..##.#....", "..###.##..", "....##.#.."]);
        let closed = close(&mask, 3);
        assert_eq!(close(&closed, 3), closed);
        let opened = open(&mask, 3);
        assert_eq!(open(&opened, 3), opened);
    }

    #[test]
    fn erosion_clears_border_touching_blocks() {
        // full raster: every neighborhood is clipped somewhere only at the
        // border ring, so erosion keeps the interior
        let grid = small_grid();
        let mut mask = BinaryMask::empty(grid);
        for r in 0..grid.height() {
            for c in 0..grid.width() {
                mask.set(r, c, true);
            }
        }
        let eroded = erode(&mask, 3);
        assert_eq!(eroded.area(), (grid.height() - 2) * (grid.width() - 2));
        assert!(!eroded.get(0, 0));
        assert!(eroded.get(1, 1));
    }
}
