//! Geometrically consistent propagation.
//!
//! For every reference pixel `i` and every neighbour `j` of a `k x k` window,
//! the reference depth ladder is mapped into `j`'s depth space through the
//! planar depth ratio `r_ji`, `j`'s cost is linearly interpolated at the
//! mapped depths and the `k²` propagated costs are stacked along the channel
//! axis. A `1 x 1 x k_d` convolution over that expanded channel axis reduces
//! them back to `M` channels.

use alloc::vec::Vec;

use crate::costvol::CostVolume;
use crate::error::{Error, Result};
use crate::geometry::{depth_ratio, CameraModel, PixelCoord, DEFAULT_RAY_EPSILON};
use crate::hypotheses::HypothesisVolume;
use crate::linalg::Vec3;
use crate::normals::NormalMap;

/// Which pixel's normal defines the local plane used for `r_ji`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalAnchor {
    /// The neighbour's own normal; the plane passes through the neighbour.
    #[default]
    Neighbor,
    /// The reference pixel's normal.
    Reference,
}

/// Treatment of mapped depths that fall outside the neighbour's ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutOfRange {
    /// Use the cost at the nearest ladder end.
    #[default]
    Clamp,
    /// Use zero.
    ZeroFill,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub anchor: NormalAnchor,
    pub out_of_range: OutOfRange,
    pub ray_epsilon: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            anchor: NormalAnchor::Neighbor,
            out_of_range: OutOfRange::Clamp,
            ray_epsilon: DEFAULT_RAY_EPSILON,
        }
    }
}

fn check_window(k: usize) -> Result<()> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Config("window size must be odd"));
    }
    Ok(())
}

/// Pixel index of window slot `slot` around `(x, y)`, replicating edges.
#[inline]
pub fn window_neighbor(x: usize, y: usize, slot: usize, k: usize, w: usize, h: usize) -> (usize, usize) {
    let r = (k / 2) as isize;
    let dy = (slot / k) as isize - r;
    let dx = (slot % k) as isize - r;
    let nx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
    let ny = (y as isize + dy).clamp(0, h as isize - 1) as usize;
    (nx, ny)
}

/// Window-unfolded hypotheses and normals, `k²` slots per pixel in row-major
/// window order. The centre slot `k² / 2` is the pixel itself.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedClues {
    pub k: usize,
    pub width: usize,
    pub height: usize,
    pub num_hyps: usize,
    /// `hyps[((pixel * k²) + slot) * L + l]`.
    pub hyps: Vec<f64>,
    /// `normals[pixel * k² + slot]`, `None` where the source normal is invalid.
    pub normals: Vec<Option<Vec3>>,
    /// Source pixel coordinates of each slot, `coords[pixel * k² + slot]`.
    pub coords: Vec<(usize, usize)>,
}

impl UnfoldedClues {
    pub fn slots(&self) -> usize {
        self.k * self.k
    }

    pub fn ladder(&self, pixel: usize, slot: usize) -> &[f64] {
        let i = (pixel * self.slots() + slot) * self.num_hyps;
        &self.hyps[i..i + self.num_hyps]
    }

    pub fn normal(&self, pixel: usize, slot: usize) -> Option<Vec3> {
        self.normals[pixel * self.slots() + slot]
    }

    pub fn coord(&self, pixel: usize, slot: usize) -> (usize, usize) {
        self.coords[pixel * self.slots() + slot]
    }
}

pub fn unfold_clues(hyps: &HypothesisVolume, normals: &NormalMap, k: usize) -> Result<UnfoldedClues> {
    check_window(k)?;
    if (hyps.width, hyps.height) != (normals.width, normals.height) {
        return Err(Error::Shape {
            what: "hypotheses vs normals",
            expected: hyps.width * hyps.height,
            found: normals.width * normals.height,
        });
    }
    let (w, h, l) = (hyps.width, hyps.height, hyps.num_samples);
    let slots = k * k;
    let mut out_h = Vec::with_capacity(w * h * slots * l);
    let mut out_n = Vec::with_capacity(w * h * slots);
    let mut coords = Vec::with_capacity(w * h * slots);
    for y in 0..h {
        for x in 0..w {
            for s in 0..slots {
                let (nx, ny) = window_neighbor(x, y, s, k, w, h);
                out_h.extend_from_slice(hyps.ladder(nx, ny));
                out_n.push(normals.get(nx, ny));
                coords.push((nx, ny));
            }
        }
    }
    Ok(UnfoldedClues {
        k,
        width: w,
        height: h,
        num_hyps: l,
        hyps: out_h,
        normals: out_n,
        coords,
    })
}

/// `k²·M x L` propagated costs per pixel plus per-slot validity.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedCost {
    pub k: usize,
    pub channels: usize,
    pub num_hyps: usize,
    pub width: usize,
    pub height: usize,
    /// `values[((pixel * k² + slot) * L + l) * M + c]`.
    pub values: Vec<f64>,
    /// `validity[pixel * k² + slot]`.
    pub validity: Vec<bool>,
}

impl PropagatedCost {
    pub fn slots(&self) -> usize {
        self.k * self.k
    }

    fn block_len(&self) -> usize {
        self.slots() * self.num_hyps * self.channels
    }

    /// `L x M` block of one slot.
    pub fn slot(&self, pixel: usize, slot: usize) -> &[f64] {
        let n = self.num_hyps * self.channels;
        let i = (pixel * self.slots() + slot) * n;
        &self.values[i..i + n]
    }

    pub fn slot_valid(&self, pixel: usize, slot: usize) -> bool {
        self.validity[pixel * self.slots() + slot]
    }

    /// Channel-summed propagated cost of one slot at hypothesis `l`.
    pub fn summed(&self, pixel: usize, slot: usize, l: usize) -> f64 {
        let m = self.channels;
        self.slot(pixel, slot)[l * m..(l + 1) * m].iter().sum()
    }
}

/// Interpolates `cost` (an `L x M` block over ladder `nb_ladder`) at the
/// increasing depths `mapped`, writing an `L x M` block to `out`.
fn interpolate_along_ladder(
    cost: &[f64],
    channels: usize,
    nb_ladder: &[f64],
    mapped: &[f64],
    policy: OutOfRange,
    out: &mut [f64],
) {
    let m = channels;
    let last = nb_ladder.len() - 1;
    let mut seg = 0usize;
    for (l, &d) in mapped.iter().enumerate() {
        let dst = &mut out[l * m..(l + 1) * m];
        if d <= nb_ladder[0] {
            if d == nb_ladder[0] || policy == OutOfRange::Clamp {
                dst.copy_from_slice(&cost[..m]);
            } else {
                dst.iter_mut().for_each(|v| *v = 0.0);
            }
            continue;
        }
        if d >= nb_ladder[last] {
            if d == nb_ladder[last] || policy == OutOfRange::Clamp {
                dst.copy_from_slice(&cost[last * m..(last + 1) * m]);
            } else {
                dst.iter_mut().for_each(|v| *v = 0.0);
            }
            continue;
        }
        // Mapped depths increase with l, so the segment index only moves forward.
        while nb_ladder[seg + 1] <= d {
            seg += 1;
        }
        let lo = &cost[seg * m..(seg + 1) * m];
        let t = (d - nb_ladder[seg]) / (nb_ladder[seg + 1] - nb_ladder[seg]);
        if t == 0.0 {
            dst.copy_from_slice(lo);
        } else {
            let hi = &cost[(seg + 1) * m..(seg + 2) * m];
            for ((o, &a), &b) in dst.iter_mut().zip(lo).zip(hi) {
                *o = a + (b - a) * t;
            }
        }
    }
}

/// Propagates the cost of neighbour `(qx, qy)` into the depth space of
/// reference pixel `(x, y)`. Returns false, after copying the reference's own
/// cost into `out`, when the neighbour is geometrically unusable.
#[allow(clippy::too_many_arguments)]
fn propagate_slot(
    cost: &CostVolume,
    (x, y): (usize, usize),
    (qx, qy): (usize, usize),
    ref_ladder: &[f64],
    nb_ladder: &[f64],
    normal: Option<Vec3>,
    cam: &CameraModel,
    opts: &PropagationOptions,
    mapped: &mut [f64],
    out: &mut [f64],
) -> bool {
    let ref_pixel = y * cost.width + x;
    let nb_pixel = qy * cost.width + qx;
    let ratio = normal.and_then(|n| {
        depth_ratio(
            PixelCoord::new(x as f64, y as f64),
            PixelCoord::new(qx as f64, qy as f64),
            n,
            cam,
            opts.ray_epsilon,
        )
        .ok()
    });
    let ratio = match ratio {
        Some(r) if r > 0.0 && r.is_finite() => r,
        _ => {
            out.copy_from_slice(cost.pixel(ref_pixel));
            return false;
        }
    };
    for (o, &d) in mapped.iter_mut().zip(ref_ladder) {
        *o = ratio * d;
    }
    interpolate_along_ladder(
        cost.pixel(nb_pixel),
        cost.channels,
        nb_ladder,
        mapped,
        opts.out_of_range,
        out,
    );
    true
}

fn normal_for(normals: &NormalMap, anchor: NormalAnchor, reference: (usize, usize), nb: (usize, usize)) -> Option<Vec3> {
    match anchor {
        NormalAnchor::Neighbor => normals.get(nb.0, nb.1),
        NormalAnchor::Reference => normals.get(reference.0, reference.1),
    }
}

/// Materialised propagation over unfolded clues. `cam` must describe the
/// cost volume's resolution.
pub fn propagate_cost(
    cost: &CostVolume,
    clues: &UnfoldedClues,
    cam: &CameraModel,
    opts: &PropagationOptions,
) -> Result<PropagatedCost> {
    if cost.num_hyps != clues.num_hyps || cost.width != clues.width || cost.height != clues.height {
        return Err(Error::Shape {
            what: "cost vs clues",
            expected: clues.num_hyps * clues.width * clues.height,
            found: cost.num_hyps * cost.width * cost.height,
        });
    }
    if (cam.width, cam.height) != (cost.width, cost.height) {
        return Err(Error::Shape {
            what: "camera vs cost resolution",
            expected: cost.width * cost.height,
            found: cam.width * cam.height,
        });
    }
    let slots = clues.slots();
    let center = slots / 2;
    let (l, m) = (cost.num_hyps, cost.channels);
    let mut prop = PropagatedCost {
        k: clues.k,
        channels: m,
        num_hyps: l,
        width: cost.width,
        height: cost.height,
        values: alloc::vec![0.0; cost.width * cost.height * slots * l * m],
        validity: alloc::vec![false; cost.width * cost.height * slots],
    };
    let block = prop.block_len();
    let mut mapped = alloc::vec![0.0; l];
    for y in 0..cost.height {
        for x in 0..cost.width {
            let p = y * cost.width + x;
            let ref_ladder = clues.ladder(p, center);
            let dst = &mut prop.values[p * block..(p + 1) * block];
            for s in 0..slots {
                let q = clues.coord(p, s);
                let normal = match opts.anchor {
                    NormalAnchor::Neighbor => clues.normal(p, s),
                    NormalAnchor::Reference => clues.normal(p, center),
                };
                let ok = propagate_slot(
                    cost,
                    (x, y),
                    q,
                    ref_ladder,
                    clues.ladder(p, s),
                    normal,
                    cam,
                    opts,
                    &mut mapped,
                    &mut dst[s * l * m..(s + 1) * l * m],
                );
                prop.validity[p * slots + s] = ok;
            }
        }
    }
    Ok(prop)
}

/// `1 x 1 x k_d` convolution weights over `k²·M` input channels producing
/// `M` output channels. Layout `weights[((o * slots + s) * M + c) * k_d + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationKernel {
    pub slots: usize,
    pub channels: usize,
    pub depth_extent: usize,
    pub weights: Vec<f64>,
}

impl AggregationKernel {
    pub fn new(slots: usize, channels: usize, depth_extent: usize, weights: Vec<f64>) -> Result<Self> {
        if depth_extent % 2 == 0 {
            return Err(Error::Config("kernel depth extent must be odd"));
        }
        if slots == 0 || channels == 0 {
            return Err(Error::Config("kernel needs at least one slot and channel"));
        }
        let expected = channels * slots * channels * depth_extent;
        if weights.len() != expected {
            return Err(Error::Shape {
                what: "kernel weights",
                expected,
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("kernel weights"));
        }
        Ok(AggregationKernel {
            slots,
            channels,
            depth_extent,
            weights,
        })
    }

    /// Equal weight on every slot and depth tap, identity across channels.
    pub fn uniform(slots: usize, channels: usize, depth_extent: usize) -> Result<Self> {
        let mut w = alloc::vec![0.0; channels * slots * channels * depth_extent];
        let v = 1.0 / (slots * depth_extent) as f64;
        for o in 0..channels {
            for s in 0..slots {
                for t in 0..depth_extent {
                    w[((o * slots + s) * channels + o) * depth_extent + t] = v;
                }
            }
        }
        AggregationKernel::new(slots, channels, depth_extent, w)
    }

    /// Picks the centre slot only, identity across channels, single tap.
    pub fn center_delta(slots: usize, channels: usize) -> Result<Self> {
        let mut w = alloc::vec![0.0; channels * slots * channels];
        for o in 0..channels {
            w[(o * slots + slots / 2) * channels + o] = 1.0;
        }
        AggregationKernel::new(slots, channels, 1, w)
    }

    #[inline]
    pub fn weight(&self, out: usize, slot: usize, ch: usize, tap: usize) -> f64 {
        self.weights[((out * self.slots + slot) * self.channels + ch) * self.depth_extent + tap]
    }

    fn taps(&self) -> Vec<KernelTap> {
        let mut v = Vec::new();
        for o in 0..self.channels {
            for s in 0..self.slots {
                for c in 0..self.channels {
                    for t in 0..self.depth_extent {
                        let w = self.weight(o, s, c, t);
                        if w != 0.0 {
                            v.push(KernelTap {
                                out: o,
                                slot: s,
                                ch: c,
                                tap: t as isize - (self.depth_extent / 2) as isize,
                                weight: w,
                            });
                        }
                    }
                }
            }
        }
        v
    }
}

struct KernelTap {
    out: usize,
    slot: usize,
    ch: usize,
    tap: isize,
    weight: f64,
}

/// Applies the non-zero kernel taps to one pixel's `k² x L x M` block.
fn apply_taps(taps: &[KernelTap], block: &[f64], l: usize, m: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for tap in taps {
        let base = tap.slot * l * m + tap.ch;
        for h in 0..l {
            let src = h as isize + tap.tap;
            if src < 0 || src >= l as isize {
                continue;
            }
            out[h * m + tap.out] += tap.weight * block[base + src as usize * m];
        }
    }
}

fn check_kernel(kernel: &AggregationKernel, slots: usize, channels: usize) -> Result<()> {
    if kernel.slots != slots {
        return Err(Error::Config("kernel slot count does not match the window"));
    }
    if kernel.channels != channels {
        return Err(Error::Config("kernel channel count does not match the cost"));
    }
    if kernel.depth_extent % 2 == 0 {
        return Err(Error::Config("kernel depth extent must be odd"));
    }
    Ok(())
}

/// Zero-padded convolution along the hypothesis axis with weights over the
/// expanded `k²·M` channel axis.
pub fn aggregate_propagated(prop: &PropagatedCost, kernel: &AggregationKernel) -> Result<CostVolume> {
    check_kernel(kernel, prop.slots(), prop.channels)?;
    let taps = kernel.taps();
    let (l, m) = (prop.num_hyps, prop.channels);
    let mut out = CostVolume::zeros(m, l, prop.width, prop.height);
    let block = prop.block_len();
    for p in 0..prop.width * prop.height {
        apply_taps(
            &taps,
            &prop.values[p * block..(p + 1) * block],
            l,
            m,
            &mut out.values[p * l * m..(p + 1) * l * m],
        );
    }
    Ok(out)
}

/// Standard window unfolding without any depth remapping: slot `s` holds the
/// neighbour's raw cost at the same hypothesis index.
pub fn unfold_cost(cost: &CostVolume, k: usize) -> Result<PropagatedCost> {
    check_window(k)?;
    let slots = k * k;
    let (w, h, l, m) = (cost.width, cost.height, cost.num_hyps, cost.channels);
    let mut values = Vec::with_capacity(w * h * slots * l * m);
    for y in 0..h {
        for x in 0..w {
            for s in 0..slots {
                let (nx, ny) = window_neighbor(x, y, s, k, w, h);
                values.extend_from_slice(cost.pixel(ny * w + nx));
            }
        }
    }
    Ok(PropagatedCost {
        k,
        channels: m,
        num_hyps: l,
        width: w,
        height: h,
        values,
        validity: alloc::vec![true; w * h * slots],
    })
}

/// Propagation followed by aggregation, one pixel at a time, without
/// materialising the expanded volume. Equivalent to
/// `aggregate_propagated(propagate_cost(cost, unfold_clues(..)))`.
pub fn gcp_aggregate(
    cost: &CostVolume,
    hyps: &HypothesisVolume,
    normals: &NormalMap,
    cam: &CameraModel,
    k: usize,
    kernel: &AggregationKernel,
    opts: &PropagationOptions,
) -> Result<CostVolume> {
    check_window(k)?;
    if !cost.matches_hypotheses(hyps) {
        return Err(Error::Shape {
            what: "cost vs hypotheses",
            expected: hyps.num_samples * hyps.width * hyps.height,
            found: cost.num_hyps * cost.width * cost.height,
        });
    }
    if (normals.width, normals.height) != (cost.width, cost.height)
        || (cam.width, cam.height) != (cost.width, cost.height)
    {
        return Err(Error::Shape {
            what: "normals/camera vs cost resolution",
            expected: cost.width * cost.height,
            found: normals.width * normals.height,
        });
    }
    let slots = k * k;
    check_kernel(kernel, slots, cost.channels)?;
    let taps = kernel.taps();
    let (w, h, l, m) = (cost.width, cost.height, cost.num_hyps, cost.channels);
    let mut out = CostVolume::zeros(m, l, w, h);
    let mut block = alloc::vec![0.0; slots * l * m];
    let mut mapped = alloc::vec![0.0; l];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let ref_ladder = hyps.ladder_at(p);
            for s in 0..slots {
                let q = window_neighbor(x, y, s, k, w, h);
                propagate_slot(
                    cost,
                    (x, y),
                    q,
                    ref_ladder,
                    hyps.ladder(q.0, q.1),
                    normal_for(normals, opts.anchor, (x, y), q),
                    cam,
                    opts,
                    &mut mapped,
                    &mut block[s * l * m..(s + 1) * l * m],
                );
            }
            apply_taps(&taps, &block, l, m, &mut out.values[p * l * m..(p + 1) * l * m]);
        }
    }
    Ok(out)
}

/// Window aggregation of raw neighbour costs, the conventional `k x k x k_d`
/// regulariser that propagation replaces.
pub fn standard_aggregate(cost: &CostVolume, k: usize, kernel: &AggregationKernel) -> Result<CostVolume> {
    check_window(k)?;
    let slots = k * k;
    check_kernel(kernel, slots, cost.channels)?;
    let taps = kernel.taps();
    let (w, h, l, m) = (cost.width, cost.height, cost.num_hyps, cost.channels);
    let mut out = CostVolume::zeros(m, l, w, h);
    let mut block = alloc::vec![0.0; slots * l * m];
    for y in 0..h {
        for x in 0..w {
            for s in 0..slots {
                let (nx, ny) = window_neighbor(x, y, s, k, w, h);
                block[s * l * m..(s + 1) * l * m].copy_from_slice(cost.pixel(ny * w + nx));
            }
            let p = y * w + x;
            apply_taps(&taps, &block, l, m, &mut out.values[p * l * m..(p + 1) * l * m]);
        }
    }
    Ok(out)
}
