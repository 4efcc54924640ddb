use super::distance::distance_transform;
use super::labeling::connected_components;
use crate::mask::BinaryMask;

/// Zhang-Suen thinning to a one-pixel-wide skeleton.
///
/// Pixels outside the image count as background. Each component's pixel
/// farthest from the background (first in raster order) is never removed:
/// plain thinning can shrink a compact blob to a stub that misses the centre
/// of its largest inscribed disc, or erase a 2×2 block entirely.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut skel = mask.clone();
    let (h, w) = mask.shape();
    let anchors = medial_anchors(mask);
    let mut to_clear = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            to_clear.clear();
            for y in 0..h {
                for x in 0..w {
                    if !skel.get(y, x) || anchors.get(y, x) {
                        continue;
                    }
                    let (yi, xi) = (y as isize, x as isize);
                    let p = |dy: isize, dx: isize| skel.get_or(yi + dy, xi + dx, false) as u8;
                    // P2..P9 clockwise from north
                    let n = [
                        p(-1, 0),
                        p(-1, 1),
                        p(0, 1),
                        p(1, 1),
                        p(1, 0),
                        p(1, -1),
                        p(0, -1),
                        p(-1, -1),
                    ];
                    let b: u8 = n.iter().sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| n[i] == 0 && n[(i + 1) % 8] == 1).count();
                    if a != 1 {
                        continue;
                    }
                    let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
                    let keep = if pass == 0 {
                        p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0
                    } else {
                        p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0
                    };
                    if !keep {
                        to_clear.push((y, x));
                    }
                }
            }
            for &(y, x) in &to_clear {
                skel.set(y, x, false);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    skel
}

fn medial_anchors(mask: &BinaryMask) -> BinaryMask {
    let labels = connected_components(mask);
    let dist = distance_transform(mask);
    let mut best: Vec<Option<(f64, usize, usize)>> = vec![None; labels.count()];
    for (y, x) in mask.foreground() {
        let slot = &mut best[labels.get(y, x) as usize - 1];
        let d = dist.get(y, x);
        if slot.is_none_or(|(b, _, _)| d > b) {
            *slot = Some((d, y, x));
        }
    }
    let (h, w) = mask.shape();
    let mut anchors = BinaryMask::new(h, w);
    for (_, y, x) in best.into_iter().flatten() {
        anchors.set(y, x, true);
    }
    anchors
}
