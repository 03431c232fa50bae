//! 8-bit raster maps: aerial tiles, historical maps and label masks.

mod draw;
mod peaks;

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use thiserror::Error;

use crate::geometry::Point2;

pub use draw::{
    instance_mask_label, intersection_label, intersection_label_with, rasterize_graph,
    stroke_polyline, InstanceMask, KeyPoints,
};
pub use peaks::{local_peaks, merge_heatmaps};

/// Stroke width of the road-segment label.
pub const SEGMENT_THICKNESS: f64 = 3.0;
/// Stroke width of the historical map.
pub const HISTORY_THICKNESS: f64 = 1.0;
/// Radius of the key-point discs in the intersection label.
pub const INTERSECTION_RADIUS: f64 = 3.0;
pub const DEFAULT_PEAK_THRESHOLD: u8 = 128;
pub const DEFAULT_NMS_RADIUS: f64 = 16.0;
pub const DEFAULT_ROI_SIZE: u32 = 128;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("buffer length {len} does not match {width}x{height}x{channels}")]
    BufferSize {
        width: u32,
        height: u32,
        channels: u8,
        len: usize,
    },
    #[error("unsupported channel count {0}")]
    Channels(u8),
    #[error("ROI size must be even and at least 32, got {0}")]
    RoiSize(u32),
    #[error("map dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("png: {0}")]
    Png(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit raster with 1 (mask) or 3 (RGB) interleaved channels.
#[derive(Clone, PartialEq, Eq)]
pub struct GridMap {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl std::fmt::Debug for GridMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridMap")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .field("nonzero", &self.count_nonzero())
            .finish()
    }
}

impl GridMap {
    pub fn new(width: u32, height: u32, channels: u8) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            width,
            height,
            channels,
            data: vec![0; width as usize * height as usize * channels as usize],
        }
    }

    pub fn mask(width: u32, height: u32) -> Self {
        Self::new(width, height, 1)
    }

    pub fn from_raw(
        width: u32,
        height: u32,
        channels: u8,
        data: Vec<u8>,
    ) -> Result<Self, RasterError> {
        if channels != 1 && channels != 3 {
            return Err(RasterError::Channels(channels));
        }
        if data.len() != width as usize * height as usize * channels as usize {
            return Err(RasterError::BufferSize {
                width,
                height,
                channels,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    /// First channel at `(x, y)`.
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[self.offset(x, y)]
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    /// Sets every channel at `(x, y)` to `value`.
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        self.data[o..o + c].fill(value);
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    pub fn count_nonzero(&self) -> usize {
        self.data
            .chunks(self.channels as usize)
            .filter(|px| px.iter().any(|&v| v != 0))
            .count()
    }

    /// True when every sample is 0 or 255.
    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0 || v == 255)
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, RasterError> {
        let image = self.to_dynamic();
        let mut out = Cursor::new(Vec::new());
        image.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Decodes a PNG; grayscale images load as one channel, everything else
    /// as RGB.
    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self, RasterError> {
        let image = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        Ok(Self::from_dynamic(image))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        std::fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let bytes = std::fs::read(path)?;
        Self::from_png_bytes(&bytes)
    }

    fn to_dynamic(&self) -> DynamicImage {
        match self.channels {
            1 => DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("buffer size checked on construction"),
            ),
            _ => DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("buffer size checked on construction"),
            ),
        }
    }

    fn from_dynamic(image: DynamicImage) -> Self {
        match image {
            DynamicImage::ImageLuma8(gray) => {
                let (w, h) = gray.dimensions();
                Self {
                    width: w,
                    height: h,
                    channels: 1,
                    data: gray.into_raw(),
                }
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                Self {
                    width: w,
                    height: h,
                    channels: 3,
                    data: rgb.into_raw(),
                }
            }
        }
    }
}

/// Square window centered on an integer pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RoiWindow {
    pub center: (i64, i64),
    pub size: u32,
}

impl RoiWindow {
    pub fn new(center: (i64, i64), size: u32) -> Result<Self, RasterError> {
        if size < 32 || !size.is_multiple_of(2) {
            return Err(RasterError::RoiSize(size));
        }
        Ok(Self { center, size })
    }

    /// Window centered on `p` rounded to the nearest pixel.
    pub fn around(p: Point2, size: u32) -> Result<Self, RasterError> {
        Self::new((p.x.round() as i64, p.y.round() as i64), size)
    }

    /// Tile coordinates of the window's pixel `(0, 0)`.
    pub fn origin(&self) -> (i64, i64) {
        let half = (self.size / 2) as i64;
        (self.center.0 - half, self.center.1 - half)
    }

    pub fn center_point(&self) -> Point2 {
        Point2::new(self.center.0 as f64, self.center.1 as f64)
    }

    /// Tile position of a window-center-relative offset.
    pub fn absolute(&self, offset: Point2) -> Point2 {
        self.center_point() + offset
    }

    pub fn offset_of(&self, p: Point2) -> Point2 {
        p - self.center_point()
    }
}

/// Crops `win` out of `m`, zero-padding wherever the window overhangs.
pub fn crop_roi(m: &GridMap, win: &RoiWindow) -> GridMap {
    let size = win.size;
    let mut out = GridMap::new(size, size, m.channels);
    let (ox, oy) = win.origin();
    let c = m.channels as usize;
    for j in 0..size as i64 {
        let ty = oy + j;
        if ty < 0 || ty >= m.height as i64 {
            continue;
        }
        let x_lo = (-ox).clamp(0, size as i64);
        let x_hi = (m.width as i64 - ox).clamp(0, size as i64);
        if x_lo >= x_hi {
            continue;
        }
        let src = m.offset((ox + x_lo) as u32, ty as u32);
        let dst = out.offset(x_lo as u32, j as u32);
        let n = (x_hi - x_lo) as usize * c;
        out.data[dst..dst + n].copy_from_slice(&m.data[src..src + n]);
    }
    out
}

/// Writes `roi` back into `m` at `win`, dropping overhanging pixels.
pub fn paste_roi(m: &mut GridMap, roi: &GridMap, win: &RoiWindow) {
    let (ox, oy) = win.origin();
    for j in 0..roi.height {
        for i in 0..roi.width {
            let (tx, ty) = (ox + i as i64, oy + j as i64);
            if m.contains(tx, ty) {
                let src = roi.offset(i, j);
                let dst = m.offset(tx as u32, ty as u32);
                let c = m.channels as usize;
                m.data[dst..dst + c].copy_from_slice(&roi.data[src..src + c]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(w: u32, h: u32, v: u8) -> GridMap {
        GridMap::from_raw(w, h, 1, vec![v; (w * h) as usize]).unwrap()
    }

    #[test]
    fn roi_size_validation() {
        assert!(RoiWindow::new((0, 0), 128).is_ok());
        assert!(RoiWindow::new((0, 0), 30).is_err());
        assert!(RoiWindow::new((0, 0), 65).is_err());
    }

    #[test]
    fn crop_at_tile_center_of_full_map() {
        let m = filled(256, 256, 255);
        let roi = crop_roi(&m, &RoiWindow::new((128, 128), 128).unwrap());
        assert!(roi.data().iter().all(|&v| v == 255));
    }

    #[test]
    fn crop_at_corner_pads_three_quadrants() {
        let m = filled(256, 256, 255);
        let roi = crop_roi(&m, &RoiWindow::new((0, 0), 128).unwrap());
        for y in 0..128 {
            for x in 0..128 {
                let inside = x >= 64 && y >= 64;
                assert_eq!(roi.get(x, y), if inside { 255 } else { 0 }, "({x},{y})");
            }
        }
    }

    #[test]
    fn crop_then_paste_restores_window() {
        let mut m = GridMap::mask(100, 80);
        for (i, v) in m.data_mut().iter_mut().enumerate() {
            *v = (i * 7 % 251) as u8;
        }
        let win = RoiWindow::new((90, 10), 64).unwrap();
        let roi = crop_roi(&m, &win);
        let mut blank = GridMap::mask(100, 80);
        paste_roi(&mut blank, &roi, &win);
        let (ox, oy) = win.origin();
        for y in 0..80i64 {
            for x in 0..100i64 {
                let inside = x >= ox && x < ox + 64 && y >= oy && y < oy + 64;
                let expect = if inside { m.get(x as u32, y as u32) } else { 0 };
                assert_eq!(blank.get(x as u32, y as u32), expect);
            }
        }
    }

    #[test]
    fn rgb_crop_keeps_channels() {
        let mut m = GridMap::new(40, 40, 3);
        m.data_mut()[(5 * 40 + 7) * 3..(5 * 40 + 7) * 3 + 3].copy_from_slice(&[1, 2, 3]);
        let roi = crop_roi(&m, &RoiWindow::new((7, 5), 32).unwrap());
        assert_eq!(roi.pixel(16, 16), &[1, 2, 3]);
    }

    #[test]
    fn png_round_trip() {
        let mut m = GridMap::new(9, 5, 3);
        m.set(2, 3, 200);
        let back = GridMap::from_png_bytes(&m.to_png_bytes().unwrap()).unwrap();
        assert_eq!(back, m);
        let g = filled(4, 4, 255);
        assert_eq!(GridMap::from_png_bytes(&g.to_png_bytes().unwrap()).unwrap(), g);
    }

    #[test]
    fn raw_buffer_validation() {
        assert!(GridMap::from_raw(2, 2, 1, vec![0; 3]).is_err());
        assert!(GridMap::from_raw(2, 2, 2, vec![0; 8]).is_err());
    }
}
