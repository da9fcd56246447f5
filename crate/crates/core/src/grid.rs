//! Small raster helpers shared by the estimation stages.

/// Summed-area table over a `width x height` grid.
pub(crate) struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl IntegralImage {
    pub fn new(width: usize, height: usize, values: impl Fn(usize) -> f64) -> Self {
        let stride = width + 1;
        let mut table = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += values(y * width + x);
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
            }
        }
        Self { width, height, table }
    }

    /// Sum over the square of half-size `half` centered at `(x, y)`, clipped
    /// to the grid.
    pub fn window_sum(&self, x: usize, y: usize, half: usize) -> f64 {
        let x0 = x.saturating_sub(half);
        let y0 = y.saturating_sub(half);
        let x1 = (x + half + 1).min(self.width);
        let y1 = (y + half + 1).min(self.height);
        let s = self.width + 1;
        self.table[y1 * s + x1] - self.table[y0 * s + x1] - self.table[y1 * s + x0]
            + self.table[y0 * s + x0]
    }
}

/// Coordinates beyond this magnitude are treated as off every raster.
pub(crate) const MAX_COORDINATE: f64 = 1e15;

/// `x.floor()` as an integer, for `|x| < MAX_COORDINATE`, without the library
/// call baseline x86-64 makes for `floor`.
#[inline(always)]
pub(crate) fn floor_i64(x: f64) -> i64 {
    debug_assert!(x.abs() < MAX_COORDINATE);
    // SAFETY: callers guarantee |x| < 1e15, which is finite and in range.
    let t: i64 = unsafe { x.to_int_unchecked() };
    t - i64::from((t as f64) > x)
}

pub(crate) const NEIGHBORS_8: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Iterative neighbor filling with double buffering.
///
/// Every iteration, each `target` pixel still holding `None` whose 8-neighbors
/// include at least one value (as of the previous iteration) is set to
/// `average(neighbor values)`; a `None` from `average` leaves the pixel for a
/// later iteration. Stops after `max_iterations`, when every target is filled,
/// or when an iteration changes nothing. Returns the iterations performed.
pub(crate) fn fill_from_neighbors<T: Copy>(
    width: usize,
    height: usize,
    values: &mut [Option<T>],
    targets: &[bool],
    max_iterations: Option<usize>,
    average: impl Fn(&[T]) -> Option<T>,
) -> usize {
    let mut pending: Vec<usize> = (0..values.len())
        .filter(|&i| targets[i] && values[i].is_none())
        .collect();
    let mut iterations = 0;
    let mut scratch = Vec::with_capacity(8);
    let mut updates = Vec::new();
    while !pending.is_empty() && max_iterations.is_none_or(|m| iterations < m) {
        updates.clear();
        for &i in &pending {
            let (x, y) = ((i % width) as i64, (i / width) as i64);
            scratch.clear();
            for (dx, dy) in NEIGHBORS_8 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    continue;
                }
                if let Some(v) = values[ny as usize * width + nx as usize] {
                    scratch.push(v);
                }
            }
            if scratch.is_empty() {
                continue;
            }
            if let Some(v) = average(&scratch) {
                updates.push((i, v));
            }
        }
        if updates.is_empty() {
            break;
        }
        for &(i, v) in &updates {
            values[i] = Some(v);
        }
        pending.retain(|&i| values[i].is_none());
        iterations += 1;
    }
    iterations
}

/// Erodes a mask by `margin` pixels (square structuring element); pixels within
/// `margin` of the raster border are removed as well.
pub(crate) fn erode(width: usize, height: usize, mask: &[bool], margin: usize) -> Vec<bool> {
    if margin == 0 {
        return mask.to_vec();
    }
    let holes = IntegralImage::new(width, height, |i| if mask[i] { 0.0 } else { 1.0 });
    (0..width * height)
        .map(|i| {
            let (x, y) = (i % width, i / width);
            mask[i]
                && x >= margin
                && y >= margin
                && x + margin < width
                && y + margin < height
                && holes.window_sum(x, y, margin) == 0.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_sums_match_brute_force() {
        let (w, h) = (7, 5);
        let vals: Vec<f64> = (0..w * h).map(|i| (i * i % 13) as f64).collect();
        let ii = IntegralImage::new(w, h, |i| vals[i]);
        for y in 0..h {
            for x in 0..w {
                for half in 0..4 {
                    let mut s = 0.0;
                    for yy in y.saturating_sub(half)..(y + half + 1).min(h) {
                        for xx in x.saturating_sub(half)..(x + half + 1).min(w) {
                            s += vals[yy * w + xx];
                        }
                    }
                    assert_eq!(ii.window_sum(x, y, half), s);
                }
            }
        }
    }

    #[test]
    fn fill_is_double_buffered() {
        // A 1x5 strip seeded at the left end fills one pixel per iteration.
        let mut v = vec![Some(1.0), None, None, None, None];
        let iters = fill_from_neighbors(5, 1, &mut v, &[true; 5], Some(2), |n| {
            Some(n.iter().sum::<f64>() / n.len() as f64)
        });
        assert_eq!(iters, 2);
        assert_eq!(v, vec![Some(1.0), Some(1.0), Some(1.0), None, None]);
    }

    #[test]
    fn erosion_strips_border_and_holes() {
        let mut mask = vec![true; 49];
        mask[3 * 7 + 3] = false;
        let e = erode(7, 7, &mask, 1);
        assert_eq!(e.iter().filter(|&&m| m).count(), 25 - 9);
    }
}
