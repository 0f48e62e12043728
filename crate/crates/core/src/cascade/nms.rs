use std::cmp::Ordering;

use crate::imaging::Plane;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak<T> {
    pub row: usize,
    pub col: usize,
    pub score: T,
}

/// Greedy non-max suppression over a response grid.
///
/// Cells are visited by descending score, ties by `(row, col)`. Each emitted
/// cell suppresses every cell within `±nw/2` columns and `±nh/2` rows of it,
/// plus the 4-connected plateau of cells carrying exactly its score. Stops
/// after `budget` emissions.
pub fn nms_local_maxima<T: Scalar>(
    scores: &Plane<T>,
    neighborhood_w: usize,
    neighborhood_h: usize,
    budget: usize,
) -> Vec<Peak<T>> {
    let (w, h) = (scores.width(), scores.height());
    let data = scores.data();
    let mut order: Vec<u32> = (0..data.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        data[b as usize]
            .partial_cmp(&data[a as usize])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let (rx, ry) = (neighborhood_w.max(1) / 2, neighborhood_h.max(1) / 2);
    let mut suppressed = vec![false; data.len()];
    let mut flooded = vec![false; data.len()];
    let mut stack = Vec::new();
    let mut peaks = Vec::new();
    for idx in order {
        if peaks.len() >= budget {
            break;
        }
        let idx = idx as usize;
        if suppressed[idx] {
            continue;
        }
        let (row, col) = (idx / w, idx % w);
        let score = data[idx];
        peaks.push(Peak { row, col, score });

        for y in row.saturating_sub(ry)..=(row + ry).min(h - 1) {
            let base = y * w;
            suppressed[base + col.saturating_sub(rx)..=base + (col + rx).min(w - 1)].fill(true);
        }
        flooded[idx] = true;
        stack.push(idx);
        while let Some(i) = stack.pop() {
            suppressed[i] = true;
            let (r, c) = (i / w, i % w);
            let neighbours = [
                (r > 0).then(|| i - w),
                (r + 1 < h).then(|| i + w),
                (c > 0).then(|| i - 1),
                (c + 1 < w).then(|| i + 1),
            ];
            for j in neighbours.into_iter().flatten() {
                if !flooded[j] && data[j] == score {
                    flooded[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    peaks
}
