use tracing::warn;

use crate::geometry::Point2;

use super::{GridMap, RasterError, RoiWindow};

/// Stitches per-window heatmap tiles into a `width` x `height` map by
/// per-pixel maximum. Pixels covered by no tile stay 0 and are reported.
pub fn merge_heatmaps(
    tiles: &[(RoiWindow, GridMap)],
    width: u32,
    height: u32,
) -> Result<GridMap, RasterError> {
    let channels = tiles.first().map_or(1, |(_, t)| t.channels());
    let mut out = GridMap::new(width, height, channels);
    let mut covered = vec![false; width as usize * height as usize];
    for (win, tile) in tiles {
        if tile.channels() != channels {
            return Err(RasterError::Channels(tile.channels()));
        }
        if tile.width() != win.size || tile.height() != win.size {
            return Err(RasterError::DimensionMismatch(
                tile.width(),
                tile.height(),
                win.size,
                win.size,
            ));
        }
        let (ox, oy) = win.origin();
        for j in 0..tile.height() {
            for i in 0..tile.width() {
                let (x, y) = (ox + i as i64, oy + j as i64);
                if !out.contains(x, y) {
                    continue;
                }
                let (x, y) = (x as u32, y as u32);
                covered[y as usize * width as usize + x as usize] = true;
                let src = tile.pixel(i, j);
                let o = (y as usize * width as usize + x as usize) * channels as usize;
                for (c, &v) in src.iter().enumerate() {
                    let d = &mut out.data_mut()[o + c];
                    *d = (*d).max(v);
                }
            }
        }
    }
    let gaps = covered.iter().filter(|&&c| !c).count();
    if gaps > 0 {
        warn!(gaps, "heatmap tiles leave pixels uncovered");
    }
    Ok(out)
}

/// Greedy non-maximum suppression over the first channel.
///
/// Pixels at or above `threshold` are visited from brightest to dimmest
/// (row-major among equals). Each unsuppressed pixel yields a peak at the
/// centroid of its equal-valued, unsuppressed, 8-connected plateau within
/// `nms_radius`, so flat-topped blobs report their center rather than a
/// corner. Everything within `nms_radius` of the peak is then suppressed.
/// Returned peaks are pairwise more than `nms_radius` apart.
pub fn local_peaks(m: &GridMap, threshold: u8, nms_radius: f64) -> Vec<Point2> {
    let (w, h) = (m.width() as usize, m.height() as usize);
    let value = |i: usize| m.data()[i * m.channels() as usize];
    let mut order: Vec<usize> = (0..w * h).filter(|&i| value(i) >= threshold).collect();
    order.sort_by(|&a, &b| value(b).cmp(&value(a)).then(a.cmp(&b)));

    let r_sq = nms_radius * nms_radius;
    let mut suppressed = vec![false; w * h];
    let mut peaks: Vec<Point2> = Vec::new();
    let mut stack = Vec::new();
    let mut plateau = Vec::new();
    for &start in &order {
        if suppressed[start] {
            continue;
        }
        let v = value(start);
        let origin = Point2::new((start % w) as f64, (start / w) as f64);

        plateau.clear();
        stack.clear();
        stack.push(start);
        let mut seen = std::collections::HashSet::from([start]);
        while let Some(i) = stack.pop() {
            plateau.push(i);
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    let np = Point2::new(nx as f64, ny as f64);
                    if !suppressed[n] && value(n) == v && np.dist_sq(origin) <= r_sq && seen.insert(n)
                    {
                        stack.push(n);
                    }
                }
            }
        }
        let (sx, sy) = plateau.iter().fold((0.0, 0.0), |(sx, sy), &i| {
            (sx + (i % w) as f64, sy + (i / w) as f64)
        });
        let n = plateau.len() as f64;
        let centroid = Point2::new(sx / n, sy / n);
        let peak = if peaks.iter().any(|q| q.dist_sq(centroid) <= r_sq) {
            origin
        } else {
            centroid
        };

        let x_lo = (peak.x - nms_radius).floor().max(0.0) as usize;
        let x_hi = ((peak.x + nms_radius).ceil() as usize).min(w - 1);
        let y_lo = (peak.y - nms_radius).floor().max(0.0) as usize;
        let y_hi = ((peak.y + nms_radius).ceil() as usize).min(h - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                if Point2::new(x as f64, y as f64).dist_sq(peak) <= r_sq {
                    suppressed[y * w + x] = true;
                }
            }
        }
        peaks.push(peak);
    }
    peaks
}
