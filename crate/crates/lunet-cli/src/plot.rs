//! Static rasters: line plots of training curves and mask-boundary overlays.

use lunet::volume::SliceImage;

const MARGIN: usize = 6;
const AXIS: f32 = 0.4;

/// `values` against their index on a black canvas, scaled to fill it.
/// Non-finite values are skipped.
pub fn line_plot(values: &[f64], width: usize, height: usize) -> SliceImage {
    let width = width.max(2 * MARGIN + 2);
    let height = height.max(2 * MARGIN + 2);
    let mut px = vec![0.0f32; width * height];
    let (x0, x1) = (MARGIN, width - 1 - MARGIN);
    let (y0, y1) = (MARGIN, height - 1 - MARGIN);
    for x in x0..=x1 {
        px[y1 * width + x] = AXIS;
    }
    for y in y0..=y1 {
        px[y * width + x0] = AXIS;
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let last = values.len().saturating_sub(1).max(1) as f64;
    let to_px = |i: usize, v: f64| {
        let x = x0 as f64 + i as f64 / last * (x1 - x0) as f64;
        let y = y1 as f64 - (v - lo) / span * (y1 - y0) as f64;
        (x.round() as i64, y.round() as i64)
    };
    let mut prev = None;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            prev = None;
            continue;
        }
        let p = to_px(i, v);
        draw_line(&mut px, width, prev.unwrap_or(p), p);
        prev = Some(p);
    }
    SliceImage::new(height, width, px).expect("canvas is non-empty")
}

fn draw_line(px: &mut [f32], width: usize, (mut x, mut y): (i64, i64), (xe, ye): (i64, i64)) {
    let (dx, dy) = ((xe - x).abs(), -(ye - y).abs());
    let (sx, sy) = ((xe - x).signum(), (ye - y).signum());
    let mut err = dx + dy;
    loop {
        px[y as usize * width + x as usize] = 1.0;
        if x == xe && y == ye {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Copy of `image` with every foreground pixel of `mask` that touches the
/// background (4-neighbourhood) or the border set to 1.0.
pub fn overlay(image: &SliceImage, mask: &SliceImage) -> SliceImage {
    let (h, w) = (mask.height, mask.width);
    let fg = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && mask.at(r as usize, c as usize) > 0.5;
    let mut px = image.pixels.clone();
    for r in 0..h as isize {
        for c in 0..w as isize {
            if fg(r, c) && [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|(dr, dc)| !fg(r + dr, c + dc)) {
                px[r as usize * w + c as usize] = 1.0;
            }
        }
    }
    image.with_pixels(h, w, px)
}
