//! Spatial over-segmentation of a cube into spectrally homogeneous regions.
//!
//! Two stages: a robust spectral gradient (largest surviving pairwise spectral
//! distance in each 3x3 neighborhood after iteratively discarding the most
//! extreme pixel pairs), then an immersion watershed that floods from every
//! regional minimum. Over-segmentation is deliberate — downstream stages want
//! many small, pure regions rather than a few mixed ones.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::cube::{HsiCube, Spectrum};
use crate::error::{Error, Result};
use crate::real::Real;

/// Per-pixel spectral gradient magnitude.
#[derive(Debug, Clone)]
pub struct GradientMap<R = f64> {
    rows: usize,
    cols: usize,
    values: Vec<R>,
}

impl<R: Real> GradientMap<R> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn value_at(&self, r: usize, c: usize) -> R {
        self.values[r * self.cols + c]
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }
}

/// Watershed label map, with per-segment pixel lists and mean spectra once
/// [`segment_stats`] has filled them. Labels are contiguous `1..=K`.
#[derive(Debug, Clone)]
pub struct SegmentMap<R = f64> {
    rows: usize,
    cols: usize,
    labels: Vec<u32>,
    num_segments: usize,
    segments: Vec<SegmentInfo<R>>,
}

/// Pixel membership and mean spectrum of one segment.
#[derive(Debug, Clone)]
pub struct SegmentInfo<R = f64> {
    pub label: u32,
    /// Linear pixel indices (`r * cols + c`) in row-major order.
    pub pixels: Vec<u32>,
    pub mean: Spectrum<R>,
}

impl<R: Real> SegmentMap<R> {
    /// Wraps an existing label image. Labels must be exactly `1..=K` with
    /// every value in that range present.
    pub fn from_labels(rows: usize, cols: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "label map {rows}x{cols} needs {} labels, got {}",
                rows * cols,
                labels.len()
            )));
        }
        let k = *labels.iter().max().unwrap_or(&0) as usize;
        if k == 0 {
            return Err(Error::InvalidParam("label map has no labeled pixels".into()));
        }
        let mut seen = vec![false; k];
        for label in &labels {
            if *label == 0 {
                return Err(Error::InvalidParam("label 0 (unlabeled pixel) in label map".into()));
            }
            seen[(*label - 1) as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParam(format!(
                "labels must be contiguous 1..={k}, label {} is missing",
                missing + 1
            )));
        }
        Ok(SegmentMap { rows, cols, labels, num_segments: k, segments: Vec::new() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label_at(&self, r: usize, c: usize) -> u32 {
        self.labels[r * self.cols + c]
    }

    /// Per-segment pixel lists and means; empty until [`segment_stats`] runs.
    pub fn segments(&self) -> &[SegmentInfo<R>] {
        &self.segments
    }

    pub fn has_stats(&self) -> bool {
        !self.segments.is_empty()
    }

    /// Info for one label (requires stats to be filled).
    pub fn segment(&self, label: u32) -> &SegmentInfo<R> {
        &self.segments[(label - 1) as usize]
    }
}

/// Upper bound (exclusive) on `pairs_removed`: a full 3x3 neighborhood has
/// 9 pixels and therefore 36 distinct pairs.
pub const MAX_PAIRS_REMOVED: usize = 36;

/// Robust spectral gradient over clipped 3x3 neighborhoods.
///
/// For each pixel, all pairwise spectral Euclidean distances among the
/// neighborhood pixels are formed; `pairs_removed` times, the two pixels
/// forming the currently largest pair are discarded (which is what makes a
/// single outlier pixel harmless); the gradient is the largest distance among
/// the survivors. Near borders the neighborhood is clipped, and removal stops
/// early if it would leave fewer than two pixels.
pub fn spectral_gradient<R: Real>(cube: &HsiCube<R>, pairs_removed: usize) -> Result<GradientMap<R>> {
    if pairs_removed >= MAX_PAIRS_REMOVED {
        return Err(Error::InvalidParam(format!(
            "pairs_removed = {pairs_removed} must be below {MAX_PAIRS_REMOVED}"
        )));
    }
    let table = cube.to_pixel_major();
    let (rows, cols) = (cube.rows(), cube.cols());
    let mut values = vec![R::zero(); rows * cols];

    let mut nb = [0usize; 9];
    for r in 0..rows {
        for c in 0..cols {
            let mut m = 0usize;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr >= 0 && nr < rows as i64 && nc >= 0 && nc < cols as i64 {
                        nb[m] = nr as usize * cols + nc as usize;
                        m += 1;
                    }
                }
            }

            let mut d2 = [[R::zero(); 9]; 9];
            for i in 0..m {
                let a = table.row(nb[i]);
                for j in (i + 1)..m {
                    let b = table.row(nb[j]);
                    let mut acc = R::zero();
                    for (x, y) in a.iter().zip(b) {
                        let d = *x - *y;
                        acc = acc + d * d;
                    }
                    d2[i][j] = acc;
                }
            }

            let mut alive = [true; 9];
            let mut alive_count = m;
            let mut rounds = 0usize;
            while rounds < pairs_removed && alive_count >= 4 {
                let (mut bi, mut bj) = (usize::MAX, usize::MAX);
                let mut best = R::neg_infinity();
                for i in 0..m {
                    if !alive[i] {
                        continue;
                    }
                    for j in (i + 1)..m {
                        if alive[j] && d2[i][j] > best {
                            best = d2[i][j];
                            bi = i;
                            bj = j;
                        }
                    }
                }
                alive[bi] = false;
                alive[bj] = false;
                alive_count -= 2;
                rounds += 1;
            }

            let mut best = R::zero();
            for i in 0..m {
                if !alive[i] {
                    continue;
                }
                for j in (i + 1)..m {
                    if alive[j] && d2[i][j] > best {
                        best = d2[i][j];
                    }
                }
            }
            values[r * cols + c] = best.sqrt();
        }
    }
    Ok(GradientMap { rows, cols, values })
}

#[derive(Debug)]
struct FloodEntry<R> {
    value: R,
    seq: u64,
    pixel: u32,
}

impl<R: Real> PartialEq for FloodEntry<R> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl<R: Real> Eq for FloodEntry<R> {}
impl<R: Real> PartialOrd for FloodEntry<R> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<R: Real> Ord for FloodEntry<R> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse so the lowest gradient pops first,
        // with FIFO (insertion sequence) breaking ties within a level.
        other
            .value
            .partial_cmp(&self.value)
            .unwrap_or(Ordering::Equal)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Immersion watershed over a gradient map.
///
/// Every regional minimum (plateau-aware, 4-connected) seeds one label, in
/// row-major discovery order. Flooding proceeds in increasing gradient order
/// with FIFO tie-breaking inside a level; a pixel on a ridge between basins
/// joins whichever basin reaches it first, neighbors being scanned in the
/// fixed north, east, south, west order. Every pixel ends up labeled, labels
/// are contiguous `1..=K`, and the result is fully deterministic.
pub fn watershed<R: Real>(gradient: &GradientMap<R>) -> Result<SegmentMap<R>> {
    let (rows, cols) = (gradient.rows(), gradient.cols());
    let n = rows * cols;
    let g = gradient.values();
    for v in g {
        if !v.is_finite() {
            return Err(Error::NonFinite("gradient map contains a non-finite value".into()));
        }
    }

    // Neighbor offsets in north, east, south, west order.
    let neighbors = |p: usize, out: &mut [usize; 4]| -> usize {
        let (r, c) = (p / cols, p % cols);
        let mut m = 0;
        if r > 0 {
            out[m] = p - cols;
            m += 1;
        }
        if c + 1 < cols {
            out[m] = p + 1;
            m += 1;
        }
        if r + 1 < rows {
            out[m] = p + cols;
            m += 1;
        }
        if c > 0 {
            out[m] = p - 1;
            m += 1;
        }
        m
    };

    // Stage 1: regional minima. A plateau (maximal 4-connected set of equal
    // gradient) is a minimum iff no pixel adjacent to it is strictly lower.
    let mut labels = vec![0u32; n];
    let mut visited = vec![false; n];
    let mut seeds: Vec<u32> = Vec::new();
    let mut k = 0u32;
    let mut nbuf = [0usize; 4];
    let mut plateau: Vec<usize> = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let level = g[start];
        plateau.clear();
        queue.clear();
        visited[start] = true;
        queue.push_back(start);
        plateau.push(start);
        let mut is_minimum = true;
        while let Some(p) = queue.pop_front() {
            let m = neighbors(p, &mut nbuf);
            for &q in &nbuf[..m] {
                if g[q] == level {
                    if !visited[q] {
                        visited[q] = true;
                        queue.push_back(q);
                        plateau.push(q);
                    }
                } else if g[q] < level {
                    is_minimum = false;
                }
            }
        }
        if is_minimum {
            k += 1;
            for &p in &plateau {
                labels[p] = k;
                seeds.push(p as u32);
            }
        }
    }

    // Stage 2: flood from all seeds at once.
    let mut heap: BinaryHeap<FloodEntry<R>> = BinaryHeap::with_capacity(n);
    let mut seq = 0u64;
    for &p in &seeds {
        heap.push(FloodEntry { value: g[p as usize], seq, pixel: p });
        seq += 1;
    }
    while let Some(entry) = heap.pop() {
        let p = entry.pixel as usize;
        let label = labels[p];
        let m = neighbors(p, &mut nbuf);
        for &q in &nbuf[..m] {
            if labels[q] == 0 {
                labels[q] = label;
                heap.push(FloodEntry { value: g[q], seq, pixel: q as u32 });
                seq += 1;
            }
        }
    }

    Ok(SegmentMap { rows, cols, labels, num_segments: k as usize, segments: Vec::new() })
}

/// Fills per-segment pixel lists and mean spectra from the cube.
pub fn segment_stats<R: Real>(cube: &HsiCube<R>, map: &SegmentMap<R>) -> Result<SegmentMap<R>> {
    if cube.rows() != map.rows() || cube.cols() != map.cols() {
        return Err(Error::Dimension(format!(
            "cube is {}x{} but label map is {}x{}",
            cube.rows(),
            cube.cols(),
            map.rows(),
            map.cols()
        )));
    }
    let k = map.num_segments();
    let ch = cube.channels();
    let n = cube.num_pixels();

    let mut pixels: Vec<Vec<u32>> = vec![Vec::new(); k];
    for (i, label) in map.labels().iter().enumerate() {
        pixels[(*label - 1) as usize].push(i as u32);
    }

    let mut sums = vec![R::zero(); k * ch];
    for kc in 0..ch {
        let plane = cube.plane(kc);
        for i in 0..n {
            let s = (map.labels()[i] - 1) as usize;
            sums[s * ch + kc] = sums[s * ch + kc] + plane[i];
        }
    }

    let mut segments = Vec::with_capacity(k);
    for s in 0..k {
        let count = R::of(pixels[s].len() as f64);
        let mean: Vec<R> = sums[s * ch..(s + 1) * ch].iter().map(|v| *v / count).collect();
        segments.push(SegmentInfo {
            label: (s + 1) as u32,
            pixels: std::mem::take(&mut pixels[s]),
            mean: Spectrum::new(mean),
        });
    }

    Ok(SegmentMap {
        rows: map.rows(),
        cols: map.cols(),
        labels: map.labels().to_vec(),
        num_segments: k,
        segments,
    })
}
