//! Two-subiteration morphological thinning (Zhang-Suen) followed by removal
//! of redundant staircase pixels, producing 8-connected one-pixel-wide
//! skeletons.
//!
//! Deletions flagged by a parallel subiteration are committed one at a time
//! and re-validated against the current image, so a component can never be
//! disconnected or erased (the classic failure of plain Zhang-Suen on
//! two-pixel-thick lines and 2x2 squares).

use crate::mask::BinaryMask;

// Neighbours in Zhang-Suen order: P2 (north) clockwise to P9 (north-west).
const RING: [(i64, i64); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

fn ring(mask: &BinaryMask, x: usize, y: usize) -> [bool; 8] {
    let (x, y) = (x as i64, y as i64);
    RING.map(|(dx, dy)| mask.get_signed(x + dx, y + dy))
}

fn count(n: &[bool; 8]) -> usize {
    n.iter().filter(|&&b| b).count()
}

/// Number of 0 -> 1 transitions walking P2..P9 and back to P2.
fn transitions(n: &[bool; 8]) -> usize {
    (0..8).filter(|&k| !n[k] && n[(k + 1) % 8]).count()
}

/// Yokoi connectivity number for 8-connected foreground; a pixel whose
/// number is 1 can be removed without changing the topology.
fn yokoi8(n: &[bool; 8]) -> i32 {
    // Reorder to E, NE, N, NW, W, SW, S, SE.
    let x = [n[2], n[1], n[0], n[7], n[6], n[5], n[4], n[3]];
    let c = |k: usize| 1 - x[k % 8] as i32;
    [0, 2, 4, 6]
        .iter()
        .map(|&k| c(k) - c(k) * c(k + 1) * c(k + 2))
        .sum()
}

fn zs_deletable(n: &[bool; 8], first: bool) -> bool {
    let b = count(n);
    if !(2..=6).contains(&b) || transitions(n) != 1 {
        return false;
    }
    let [p2, _, p4, _, p6, _, p8, _] = *n;
    if first {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

fn subiteration(mask: &mut BinaryMask, first: bool) -> bool {
    let marked: Vec<(usize, usize)> = mask
        .foreground()
        .filter(|&(x, y)| zs_deletable(&ring(mask, x, y), first))
        .collect();
    let mut changed = false;
    for (x, y) in marked {
        let n = ring(mask, x, y);
        if count(&n) >= 2 && transitions(&n) == 1 {
            mask.set(x, y, false);
            changed = true;
        }
    }
    changed
}

/// Removes simple non-endpoint pixels until none remain (staircase corners
/// left behind by the thinning).
fn prune_redundant(mask: &mut BinaryMask) {
    loop {
        let mut changed = false;
        let pixels: Vec<(usize, usize)> = mask.foreground().collect();
        for (x, y) in pixels {
            let n = ring(mask, x, y);
            if count(&n) >= 2 && yokoi8(&n) == 1 {
                mask.set(x, y, false);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Thins `mask` to an 8-connected one-pixel-wide skeleton.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut out = mask.clone();
    loop {
        let a = subiteration(&mut out, true);
        let b = subiteration(&mut out, false);
        if !a && !b {
            break;
        }
    }
    prune_redundant(&mut out);
    out
}

/// True if some 2x2 block of the mask is entirely foreground.
pub fn has_full_2x2(mask: &BinaryMask) -> bool {
    (0..mask.height().saturating_sub(1)).any(|y| {
        (0..mask.width().saturating_sub(1)).any(|x| {
            mask.get(x, y) && mask.get(x + 1, y) && mask.get(x, y + 1) && mask.get(x + 1, y + 1)
        })
    })
}
