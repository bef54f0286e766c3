//! Contamination-tolerant spectral similarity and clean-pixel gathering.
//!
//! Plume pixels differ from their own background mostly in the gas-affected
//! channels, so distances that may ignore the worst channels (TED) and set
//! linkages that may ignore the worst pixel pairs (TAL) can still recognize
//! which scene segments share a plume segment's background material. Those
//! rankings drive the donor search that assembles a clean-pixel set for each
//! contaminated segment.

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{PixelMask, PixelTable};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::segment::SegmentMap;

/// Candidate segments larger than this are uniformly subsampled (seeded)
/// before the pairwise distance computation, bounding the `|A|*|B|` cost.
/// Gathering still appends the whole segment.
pub const TAL_SUBSAMPLE_CAP: usize = 4096;

/// Knobs of the truncated distance, the linkage, and the donor search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityParams {
    /// Fraction of the worst channels each pairwise distance may ignore
    /// (`0 <= gamma < 1`; 0 is the plain Euclidean distance).
    pub gamma: f64,
    /// Fraction of the worst pixel pairs the linkage may ignore
    /// (`0 <= beta < 1`; 0 averages all pairs, values near 1 approach the
    /// single best pair).
    pub beta: f64,
    /// Minimum number of donor pixels to gather beyond the segment's own
    /// clean pixels (at least 1).
    pub min_k: usize,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams { gamma: 0.20, beta: 0.80, min_k: 16 }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParam(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !self.beta.is_finite() || !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidParam(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if self.min_k == 0 {
            return Err(Error::InvalidParam("min_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Number of (smallest) squared channel differences a distance keeps:
/// `max(1, round((1 - gamma) * channels))`.
pub fn kept_channels(channels: usize, gamma: f64) -> usize {
    (((1.0 - gamma) * channels as f64).round() as usize).max(1)
}

/// Number of (smallest) pairwise distances the linkage keeps:
/// `max(1, round((1 - beta) * pairs))`.
pub fn kept_pairs(pairs: usize, beta: f64) -> usize {
    (((1.0 - beta) * pairs as f64).round() as usize).max(1)
}

/// Truncated Euclidean distance between two spectra: the square root of the
/// sum of the `kept_channels` smallest squared per-channel differences.
/// `gamma = 0` keeps every channel and is exactly the Euclidean distance.
pub fn ted<R: Real>(a: &[R], b: &[R], gamma: f64) -> Result<R> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "spectra of lengths {} and {} cannot be compared",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Dimension("cannot compare empty spectra".into()));
    }
    if !gamma.is_finite() || !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParam(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    let keep = kept_channels(a.len(), gamma);
    let mut scratch = vec![R::zero(); a.len()];
    Ok(ted_from_rows(a, b, keep, &mut scratch))
}

/// Unchecked kernel shared by [`ted`] and the pairwise computations.
#[inline]
fn ted_from_rows<R: Real>(a: &[R], b: &[R], keep: usize, scratch: &mut [R]) -> R {
    let c = a.len();
    if keep >= c {
        let mut acc = R::zero();
        for (x, y) in a.iter().zip(b) {
            let d = *x - *y;
            acc = acc + d * d;
        }
        return acc.sqrt();
    }
    for ((s, x), y) in scratch.iter_mut().zip(a).zip(b) {
        let d = *x - *y;
        *s = d * d;
    }
    scratch.select_nth_unstable_by(keep - 1, |u, v| u.partial_cmp(v).unwrap_or(Ordering::Equal));
    let mut acc = R::zero();
    for s in &scratch[..keep] {
        acc = acc + *s;
    }
    acc.sqrt()
}

/// All `|a| * |b|` pairwise truncated distances, sorted ascending. Useful
/// when several `beta` values have to be evaluated over the same pair set.
pub fn pairwise_ted_sorted<R: Real>(a: &[&[R]], b: &[&[R]], gamma: f64) -> Result<Vec<R>> {
    let dists = pairwise_ted(a, b, gamma)?;
    let mut dists = dists;
    dists.sort_by(|u, v| u.partial_cmp(v).unwrap_or(Ordering::Equal));
    Ok(dists)
}

fn pairwise_ted<R: Real>(a: &[&[R]], b: &[&[R]], gamma: f64) -> Result<Vec<R>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate("pairwise distances need two nonempty pixel sets".into()));
    }
    let c = a[0].len();
    if c == 0 {
        return Err(Error::Dimension("cannot compare empty spectra".into()));
    }
    if !gamma.is_finite() || !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParam(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    for s in a.iter().chain(b.iter()) {
        if s.len() != c {
            return Err(Error::Dimension("pixel sets mix spectrum lengths".into()));
        }
    }
    let keep = kept_channels(c, gamma);
    let mut scratch = vec![R::zero(); c];
    let mut dists = Vec::with_capacity(a.len() * b.len());
    for ra in a {
        for rb in b {
            dists.push(ted_from_rows(ra, rb, keep, &mut scratch));
        }
    }
    Ok(dists)
}

/// Truncated average linkage between two pixel sets: the mean of the
/// `kept_pairs` smallest pairwise truncated distances. `beta = 0` averages
/// every pair; `beta` near 1 keeps only the single closest pair.
pub fn tal<R: Real>(a: &[&[R]], b: &[&[R]], beta: f64, gamma: f64) -> Result<R> {
    if !beta.is_finite() || !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidParam(format!("beta must lie in [0, 1), got {beta}")));
    }
    let mut dists = pairwise_ted(a, b, gamma)?;
    let keep = kept_pairs(dists.len(), beta);
    if keep < dists.len() {
        dists.select_nth_unstable_by(keep - 1, |u, v| u.partial_cmp(v).unwrap_or(Ordering::Equal));
        dists.truncate(keep);
        dists.sort_by(|u, v| u.partial_cmp(v).unwrap_or(Ordering::Equal));
    }
    let n = R::of(keep as f64);
    let mut acc = R::zero();
    for d in &dists[..keep] {
        acc = acc + *d;
    }
    Ok(acc / n)
}

/// Linkage value for a precomputed ascending distance list (see
/// [`pairwise_ted_sorted`]), without recomputing the pairs.
pub fn tal_from_sorted<R: Real>(sorted: &[R], beta: f64) -> Result<R> {
    if sorted.is_empty() {
        return Err(Error::Degenerate("linkage over an empty distance list".into()));
    }
    if !beta.is_finite() || !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidParam(format!("beta must lie in [0, 1), got {beta}")));
    }
    let keep = kept_pairs(sorted.len(), beta);
    let mut acc = R::zero();
    for d in &sorted[..keep] {
        acc = acc + *d;
    }
    Ok(acc / R::of(keep as f64))
}

/// One candidate segment with its linkage distance to the target set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedSegment<R = f64> {
    pub label: u32,
    pub distance: R,
}

/// Ranks candidate segments by ascending linkage distance to the target
/// pixel set, ties broken by ascending label. Candidates above
/// [`TAL_SUBSAMPLE_CAP`] pixels are subsampled (uniform, seeded per label)
/// for the distance computation only.
pub fn rank_candidate_segments<R: Real>(
    target: &[&[R]],
    candidates: &[(u32, Vec<&[R]>)],
    params: &SimilarityParams,
    subsample_seed: u64,
) -> Result<Vec<RankedSegment<R>>> {
    params.validate()?;
    if target.is_empty() {
        return Err(Error::Degenerate("cannot rank candidates against an empty target set".into()));
    }
    let mut ranked = Vec::with_capacity(candidates.len());
    for (label, rows) in candidates {
        let distance = if rows.len() > TAL_SUBSAMPLE_CAP {
            let picked = subsample_rows(rows, TAL_SUBSAMPLE_CAP, subsample_seed, *label);
            tal(target, &picked, params.beta, params.gamma)?
        } else {
            tal(target, rows, params.beta, params.gamma)?
        };
        ranked.push(RankedSegment { label: *label, distance });
    }
    sort_ranked(&mut ranked);
    Ok(ranked)
}

pub(crate) fn sort_ranked<R: Real>(ranked: &mut [RankedSegment<R>]) {
    ranked.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap_or(Ordering::Equal)
            .then(a.label.cmp(&b.label))
    });
}

/// Deterministic uniform subsample of `count` rows, seeded by the global
/// seed mixed with the segment label so the draw is stable per segment.
pub(crate) fn subsample_rows<'a, R: Real>(
    rows: &[&'a [R]],
    count: usize,
    subsample_seed: u64,
    label: u32,
) -> Vec<&'a [R]> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(subsample_seed ^ (label as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut picks = rand::seq::index::sample(&mut rng, rows.len(), count).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|i| rows[i]).collect()
}

/// Clean pixels assembled for one contaminated segment.
#[derive(Debug, Clone)]
pub struct CleanPixelSet<R = f64> {
    /// Linear pixel indices: the segment's own out-of-region pixels first,
    /// then whole donor segments in ranked order.
    pub pixels: Vec<u32>,
    /// How many entries at the front of `pixels` are the segment's own.
    pub own_clean: usize,
    /// Donor segments actually appended, in the order they were taken.
    pub donors: Vec<RankedSegment<R>>,
}

/// Assembles the clean-pixel set for `plume_label`.
///
/// The segment's own pixels outside `roi` are clean and come first. Donor
/// candidates are the segments that do not touch `roi` at all (segments that
/// partially overlap it are never donors); they are ranked by linkage
/// distance between the plume segment's **in-region** pixels (those carry the
/// contamination the distance must tolerate) and the candidate, then appended
/// whole until at least `min_k` donor pixels have been gathered. A segment
/// entirely outside the region uses its own pixels as the ranking target.
pub fn gather_clean_pixels<R: Real>(
    table: &PixelTable<R>,
    map: &SegmentMap<R>,
    roi: &PixelMask,
    plume_label: u32,
    params: &SimilarityParams,
    subsample_seed: u64,
) -> Result<CleanPixelSet<R>> {
    params.validate()?;
    if !map.has_stats() {
        return Err(Error::InvalidParam(
            "gather_clean_pixels needs a segment map with filled statistics".into(),
        ));
    }
    if roi.rows() != map.rows() || roi.cols() != map.cols() {
        return Err(Error::Dimension(format!(
            "region mask is {}x{} but label map is {}x{}",
            roi.rows(),
            roi.cols(),
            map.rows(),
            map.cols()
        )));
    }
    if plume_label == 0 || plume_label as usize > map.num_segments() {
        return Err(Error::InvalidParam(format!(
            "segment label {plume_label} is out of range 1..={}",
            map.num_segments()
        )));
    }

    let own = &map.segment(plume_label).pixels;
    let mut own_clean: Vec<u32> = Vec::new();
    let mut target_idx: Vec<u32> = Vec::new();
    for &p in own {
        if roi.get_linear(p as usize) {
            target_idx.push(p);
        } else {
            own_clean.push(p);
        }
    }
    // A segment that never touches the region ranks donors against its own
    // (clean) pixels instead of an empty contaminated set.
    let target_src: &[u32] = if target_idx.is_empty() { own } else { &target_idx };
    let target: Vec<&[R]> = target_src.iter().map(|&p| table.row(p as usize)).collect();

    let mut candidates: Vec<(u32, Vec<&[R]>)> = Vec::new();
    for info in map.segments() {
        if info.label == plume_label {
            continue;
        }
        if info.pixels.iter().any(|&p| roi.get_linear(p as usize)) {
            continue;
        }
        let rows: Vec<&[R]> = info.pixels.iter().map(|&p| table.row(p as usize)).collect();
        candidates.push((info.label, rows));
    }
    let ranked = rank_candidate_segments(&target, &candidates, params, subsample_seed)?;

    let set = assemble_clean_set(&own_clean, &ranked, map, params.min_k);
    if set.pixels.is_empty() {
        return Err(Error::Degenerate(format!(
            "segment {plume_label} has no clean pixels and no donor candidates exist"
        )));
    }
    Ok(set)
}

/// The donor walk shared by [`gather_clean_pixels`] and the sweep's
/// cached-ranking path: own clean pixels first, then whole ranked segments
/// until at least `min_k` donor pixels have been appended (or the ranking is
/// exhausted).
pub(crate) fn assemble_clean_set<R: Real>(
    own_clean: &[u32],
    ranked: &[RankedSegment<R>],
    map: &SegmentMap<R>,
    min_k: usize,
) -> CleanPixelSet<R> {
    let mut pixels = own_clean.to_vec();
    let mut donors = Vec::new();
    let mut appended = 0usize;
    for r in ranked {
        if appended >= min_k {
            break;
        }
        let seg = map.segment(r.label);
        pixels.extend_from_slice(&seg.pixels);
        appended += seg.pixels.len();
        donors.push(*r);
    }
    CleanPixelSet { pixels, own_clean: own_clean.len(), donors }
}
