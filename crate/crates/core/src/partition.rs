//! Picture tiling into fixed-size coding blocks and their four sub-blocks.
//!
//! A grid covers the picture with `cu_size` x `cu_size` regions in raster
//! order; regions at the right and bottom edges are truncated to the picture
//! bounds. Each region splits into four quadrant sub-blocks at its floor
//! midpoints.

use crate::{Error, Result};

pub const SUPPORTED_CU_SIZES: [usize; 3] = [16, 32, 64];

/// Pixel-aligned rectangle, `x`/`y` origin plus actual width and height.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }
}

/// Quadrant split of a coding block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubBlocks {
    /// Top-left, top-right, bottom-left, bottom-right.
    Quad([Rect; 4]),
    /// Region too small to split (width or height below 2).
    Degenerate(Rect),
}

impl SubBlocks {
    pub fn iter(&self) -> impl Iterator<Item = &Rect> {
        match self {
            SubBlocks::Quad(rects) => rects.iter(),
            SubBlocks::Degenerate(rect) => std::slice::from_ref(rect).iter(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, SubBlocks::Degenerate(_))
    }
}

/// Raster-order tiling of a picture at one coding-block size.
#[derive(Debug, Clone)]
pub struct CuGrid {
    pub cu_size: usize,
    pub cols: usize,
    pub rows: usize,
    pub width: usize,
    pub height: usize,
    regions: Vec<Rect>,
}

impl CuGrid {
    pub fn regions(&self) -> &[Rect] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

pub fn build_grid(width: usize, height: usize, cu_size: usize) -> Result<CuGrid> {
    if !SUPPORTED_CU_SIZES.contains(&cu_size) {
        return Err(Error::UnsupportedCuSize(cu_size));
    }
    if width < 2 || height < 2 {
        return Err(Error::PictureTooSmall { width, height });
    }
    let cols = width.div_ceil(cu_size);
    let rows = height.div_ceil(cu_size);
    let mut regions = Vec::with_capacity(cols * rows);
    for row in 0..rows {
        for col in 0..cols {
            let x = col * cu_size;
            let y = row * cu_size;
            regions.push(Rect {
                x,
                y,
                w: cu_size.min(width - x),
                h: cu_size.min(height - y),
            });
        }
    }
    Ok(CuGrid { cu_size, cols, rows, width, height, regions })
}

/// Splits a region into quadrants at `floor(w/2)`, `floor(h/2)`.
pub fn sub_blocks(region: &Rect) -> SubBlocks {
    if region.w < 2 || region.h < 2 {
        return SubBlocks::Degenerate(*region);
    }
    let lw = region.w / 2;
    let th = region.h / 2;
    let rw = region.w - lw;
    let bh = region.h - th;
    let (x, y) = (region.x, region.y);
    SubBlocks::Quad([
        Rect { x, y, w: lw, h: th },
        Rect { x: x + lw, y, w: rw, h: th },
        Rect { x, y: y + th, w: lw, h: bh },
        Rect { x: x + lw, y: y + th, w: rw, h: bh },
    ])
}
