//! Pixel-to-patch-grid coordinate mapping and feature-grid sampling.
//!
//! Features are taken to live at patch centers: pixel coordinates are mapped
//! into the resized/padded image, divided by the patch size, and shifted by
//! half a patch so that the center of patch `(row i, col j)` lands on `(j, i)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("all image dimensions must be positive")]
    NonPositive,
    #[error("target size {target} is not divisible by patch size {patch}")]
    NotDivisible { target: u32, patch: u32 },
    #[error("point ({x}, {y}) lies outside the {w}x{h} image")]
    OutOfBounds { x: f64, y: f64, w: u32, h: u32 },
    #[error("invalid box [{0}, {1}, {2}, {3}]")]
    InvalidBox(f64, f64, f64, f64),
    #[error("empty feature grid")]
    EmptyGrid,
    #[error("non-finite value")]
    NonFinite,
    #[error("grid shape {actual:?} does not match expected {expected:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("inconsistent transform: {0}")]
    InvalidTransform(String),
}

/// How an original image was resized and padded before patchification.
///
/// `scale_x`/`scale_y` are equal under letterboxing; a naive resize may
/// stretch the axes independently. `pad_x`/`pad_y` are the left/top pads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageTransform {
    pub orig_w: u32,
    pub orig_h: u32,
    pub scale_x: f64,
    pub scale_y: f64,
    pub pad_x: u32,
    pub pad_y: u32,
    pub patch_size: u32,
    pub grid_h: u32,
    pub grid_w: u32,
}

/// Aspect-preserving resize into a `target`×`target` square, centered with
/// zero padding on the short axis. An odd remainder puts the extra pixel on
/// the right/bottom.
pub fn letterbox_params(
    orig_w: u32,
    orig_h: u32,
    target: u32,
    patch_size: u32,
) -> Result<ImageTransform, GeometryError> {
    if orig_w == 0 || orig_h == 0 || target == 0 || patch_size == 0 {
        return Err(GeometryError::NonPositive);
    }
    if !target.is_multiple_of(patch_size) {
        return Err(GeometryError::NotDivisible {
            target,
            patch: patch_size,
        });
    }
    let scale = target as f64 / orig_w.max(orig_h) as f64;
    let resized_w = resized_len(orig_w, scale).min(target);
    let resized_h = resized_len(orig_h, scale).min(target);
    let grid = target / patch_size;
    Ok(ImageTransform {
        orig_w,
        orig_h,
        scale_x: scale,
        scale_y: scale,
        pad_x: (target - resized_w) / 2,
        pad_y: (target - resized_h) / 2,
        patch_size,
        grid_h: grid,
        grid_w: grid,
    })
}

/// Naive (possibly aspect-distorting) resize to exactly `target_w`×`target_h`.
pub fn resize_params(
    orig_w: u32,
    orig_h: u32,
    target_w: u32,
    target_h: u32,
    patch_size: u32,
) -> Result<ImageTransform, GeometryError> {
    if orig_w == 0 || orig_h == 0 || target_w == 0 || target_h == 0 || patch_size == 0 {
        return Err(GeometryError::NonPositive);
    }
    for target in [target_w, target_h] {
        if !target.is_multiple_of(patch_size) {
            return Err(GeometryError::NotDivisible {
                target,
                patch: patch_size,
            });
        }
    }
    Ok(ImageTransform {
        orig_w,
        orig_h,
        scale_x: target_w as f64 / orig_w as f64,
        scale_y: target_h as f64 / orig_h as f64,
        pad_x: 0,
        pad_y: 0,
        patch_size,
        grid_h: target_h / patch_size,
        grid_w: target_w / patch_size,
    })
}

/// Naive resize to a fixed height; the width keeps the aspect ratio, rounded
/// to the nearest whole number of patches (at least one).
pub fn resize_to_height(
    orig_w: u32,
    orig_h: u32,
    target_h: u32,
    patch_size: u32,
) -> Result<ImageTransform, GeometryError> {
    if orig_w == 0 || orig_h == 0 || patch_size == 0 {
        return Err(GeometryError::NonPositive);
    }
    let width = orig_w as f64 * target_h as f64 / orig_h as f64;
    let patches = ((width / patch_size as f64).round() as u32).max(1);
    resize_params(orig_w, orig_h, patches * patch_size, target_h, patch_size)
}

fn resized_len(orig: u32, scale: f64) -> u32 {
    (orig as f64 * scale).round() as u32
}

impl ImageTransform {
    /// Identity mapping: one pixel per pixel, no padding.
    pub fn identity(width: u32, height: u32, patch_size: u32) -> Result<Self, GeometryError> {
        resize_params(width, height, width, height, patch_size)
    }

    /// Checks the structural invariants (used when a transform is read from a manifest).
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.orig_w == 0 || self.orig_h == 0 || self.patch_size == 0 {
            return Err(GeometryError::NonPositive);
        }
        if self.grid_w == 0 || self.grid_h == 0 {
            return Err(GeometryError::InvalidTransform("empty grid".into()));
        }
        let axes = [
            ("x", self.orig_w, self.scale_x, self.pad_x, self.grid_w),
            ("y", self.orig_h, self.scale_y, self.pad_y, self.grid_h),
        ];
        for (axis, orig, scale, pad, grid) in axes {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(GeometryError::InvalidTransform(format!(
                    "scale_{axis} must be positive"
                )));
            }
            let padded = grid as i64 * self.patch_size as i64;
            let remainder = padded - resized_len(orig, scale) as i64;
            if remainder < 0 || pad as i64 != remainder / 2 {
                return Err(GeometryError::InvalidTransform(format!(
                    "axis {axis}: resized {} + pads does not fill {padded} px with pad {pad}",
                    resized_len(orig, scale)
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.orig_w as f64 && y < self.orig_h as f64
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.patch_size as f64;
        (
            (x * self.scale_x + self.pad_x as f64) / p - 0.5,
            (y * self.scale_y + self.pad_y as f64) / p - 0.5,
        )
    }

    /// Inverse of [`pixel_to_grid`], without bounds checks.
    pub fn grid_to_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        let p = self.patch_size as f64;
        (
            ((u + 0.5) * p - self.pad_x as f64) / self.scale_x,
            ((v + 0.5) * p - self.pad_y as f64) / self.scale_y,
        )
    }
}

/// Maps an original-image pixel position to continuous grid coordinates `(u, v)`.
pub fn pixel_to_grid(x: f64, y: f64, t: &ImageTransform) -> Result<(f64, f64), GeometryError> {
    if !(x.is_finite() && y.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    if !t.contains(x, y) {
        return Err(GeometryError::OutOfBounds {
            x,
            y,
            w: t.orig_w,
            h: t.orig_h,
        });
    }
    Ok(t.map(x, y))
}

/// Axis-aligned box in pixel space, `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl PixelBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        PixelBox { x0, y0, x1, y1 }
    }

    pub fn within(&self, w: u32, h: u32) -> bool {
        let finite = [self.x0, self.y0, self.x1, self.y1]
            .iter()
            .all(|v| v.is_finite());
        finite
            && self.x0 >= 0.0
            && self.y0 >= 0.0
            && self.x0 < self.x1
            && self.y0 < self.y1
            && self.x1 <= w as f64
            && self.y1 <= h as f64
    }
}

/// A box in continuous grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    /// No patch center falls inside the box.
    pub degenerate: bool,
    grid_w: usize,
    grid_h: usize,
}

impl GridBox {
    /// Patch cells `(row, col)` whose centers fall inside `[x0, x1) × [y0, y1)`.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = center_range(self.x0, self.x1, self.grid_w);
        let rows = center_range(self.y0, self.y1, self.grid_h);
        rows.flat_map(move |i| cols.clone().map(move |j| (i, j)))
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }
}

fn center_range(lo: f64, hi: f64, n: usize) -> std::ops::Range<usize> {
    let start = lo.ceil().max(0.0);
    let end = (hi.ceil()).min(n as f64);
    if end <= start {
        0..0
    } else {
        start as usize..end as usize
    }
}

pub fn box_to_grid(b: &PixelBox, t: &ImageTransform) -> Result<GridBox, GeometryError> {
    if !b.within(t.orig_w, t.orig_h) {
        return Err(GeometryError::InvalidBox(b.x0, b.y0, b.x1, b.y1));
    }
    let (x0, y0) = t.map(b.x0, b.y0);
    let (x1, y1) = t.map(b.x1, b.y1);
    let mut gb = GridBox {
        x0,
        y0,
        x1,
        y1,
        degenerate: false,
        grid_w: t.grid_w as usize,
        grid_h: t.grid_h as usize,
    };
    let empty = gb.cells().next().is_none();
    gb.degenerate = empty;
    Ok(gb)
}

/// A `[grid_h × grid_w × channels]` feature map tied to its image transform.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub layer: String,
    grid_h: usize,
    grid_w: usize,
    channels: usize,
    data: Vec<f32>,
    pub transform: ImageTransform,
}

impl PatchGrid {
    pub fn new(
        layer: impl Into<String>,
        grid_h: usize,
        grid_w: usize,
        channels: usize,
        data: Vec<f32>,
        transform: ImageTransform,
    ) -> Result<Self, GeometryError> {
        if data.len() != grid_h * grid_w * channels {
            return Err(GeometryError::ShapeMismatch {
                expected: vec![grid_h, grid_w, channels],
                actual: vec![data.len()],
            });
        }
        if (transform.grid_h as usize, transform.grid_w as usize) != (grid_h, grid_w) {
            return Err(GeometryError::ShapeMismatch {
                expected: vec![transform.grid_h as usize, transform.grid_w as usize],
                actual: vec![grid_h, grid_w],
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(PatchGrid {
            layer: layer.into(),
            grid_h,
            grid_w,
            channels,
            data,
            transform,
        })
    }

    /// Builds a grid from a `[H, W, C]` or `[H, W]` tensor.
    pub fn from_tensor(
        layer: impl Into<String>,
        tensor: &Tensor,
        transform: ImageTransform,
    ) -> crate::Result<Self> {
        let (h, w, c) = match *tensor.shape() {
            [h, w, c] => (h, w, c),
            [h, w] => (h, w, 1),
            _ => {
                return Err(GeometryError::ShapeMismatch {
                    expected: vec![transform.grid_h as usize, transform.grid_w as usize, 0],
                    actual: tensor.shape().to_vec(),
                }
                .into())
            }
        };
        Ok(PatchGrid::new(layer, h, w, c, tensor.to_f32()?, transform)?)
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Feature vector of cell `(row, col)`.
    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.grid_w + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Bilinear interpolation at continuous `(u, v)`, clamped to the grid.
    pub fn bilinear_sample(&self, u: f64, v: f64) -> Result<Vec<f32>, GeometryError> {
        if self.is_empty() {
            return Err(GeometryError::EmptyGrid);
        }
        if !(u.is_finite() && v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let u = u.clamp(0.0, (self.grid_w - 1) as f64);
        let v = v.clamp(0.0, (self.grid_h - 1) as f64);
        let j0 = u.floor() as usize;
        let i0 = v.floor() as usize;
        let j1 = (j0 + 1).min(self.grid_w - 1);
        let i1 = (i0 + 1).min(self.grid_h - 1);
        let fu = u - j0 as f64;
        let fv = v - i0 as f64;
        let corners = [
            (self.cell(i0, j0), (1.0 - fu) * (1.0 - fv)),
            (self.cell(i0, j1), fu * (1.0 - fv)),
            (self.cell(i1, j0), (1.0 - fu) * fv),
            (self.cell(i1, j1), fu * fv),
        ];
        Ok((0..self.channels)
            .map(|c| {
                corners
                    .iter()
                    .filter(|(_, w)| *w != 0.0)
                    .map(|(f, w)| f[c] as f64 * w)
                    .sum::<f64>() as f32
            })
            .collect())
    }

    /// Samples the grid at an original-image pixel position.
    pub fn sample_pixel(&self, x: f64, y: f64) -> Result<Vec<f32>, GeometryError> {
        let (u, v) = pixel_to_grid(x, y, &self.transform)?;
        self.bilinear_sample(u, v)
    }
}

/// Averages a full-resolution `[orig_h × orig_w]` map into per-patch values.
///
/// Each pixel is assigned to the patch containing its center after the
/// transform; patches that receive no pixel (pure padding) yield `None`.
pub fn pixel_cell_means(
    values: &[f32],
    t: &ImageTransform,
) -> Result<Vec<Option<f64>>, GeometryError> {
    let (w, h) = (t.orig_w as usize, t.orig_h as usize);
    if values.len() != w * h {
        return Err(GeometryError::ShapeMismatch {
            expected: vec![h, w],
            actual: vec![values.len()],
        });
    }
    let (gw, gh) = (t.grid_w as usize, t.grid_h as usize);
    let mut sums = vec![0.0f64; gw * gh];
    let mut counts = vec![0u32; gw * gh];
    for y in 0..h {
        let (_, v) = t.map(0.0, y as f64 + 0.5);
        let row = ((v + 0.5).floor().max(0.0) as usize).min(gh - 1);
        for x in 0..w {
            let (u, _) = t.map(x as f64 + 0.5, 0.0);
            let col = ((u + 0.5).floor().max(0.0) as usize).min(gw - 1);
            let value = values[y * w + x];
            if !value.is_finite() {
                return Err(GeometryError::NonFinite);
            }
            sums[row * gw + col] += value as f64;
            counts[row * gw + col] += 1;
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, n)| (n > 0).then(|| s / n as f64))
        .collect())
}
