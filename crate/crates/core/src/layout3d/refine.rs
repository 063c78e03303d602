//! Layout-aware cleanup of instance masks.

use alloc::vec;
use alloc::vec::Vec;

use super::{PlaneMap, CEILING};
use crate::grid::{BinaryMask, ClassId};
use crate::instances::InstanceMap;
use crate::{Error, Result};

/// Which classes each refinement rule applies to.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefineRules {
    /// Clipped to their majority wall.
    pub wall_bound: Vec<ClassId>,
    /// Extended down their wall to the floor.
    pub doors: Vec<ClassId>,
    /// Lose any pixels on the ceiling.
    pub floor_standing: Vec<ClassId>,
    pub fill_holes: bool,
}

/// Fills every region of the complement that cannot reach the top or bottom
/// row through 4-connected, horizontally wrapping steps.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut outside = vec![false; w * h];
    let mut stack: Vec<usize> = Vec::new();
    for col in 0..w {
        for row in [0, h - 1] {
            let k = row * w + col;
            if !mask.data()[k] && !outside[k] {
                outside[k] = true;
                stack.push(k);
            }
        }
    }
    while let Some(k) = stack.pop() {
        let (row, col) = (k / w, k % w);
        let mut visit = |n: usize| {
            if !mask.data()[n] && !outside[n] {
                outside[n] = true;
                stack.push(n);
            }
        };
        visit(row * w + (col + 1) % w);
        visit(row * w + (col + w - 1) % w);
        if row > 0 {
            visit(k - w);
        }
        if row + 1 < h {
            visit(k + w);
        }
    }
    let mut out = mask.clone();
    for (k, v) in out.data_mut().iter_mut().enumerate() {
        *v = !outside[k];
    }
    out
}

fn majority_wall(pixels: &[usize], pm: &PlaneMap) -> Option<u16> {
    let mut hist: Vec<(u16, usize)> = Vec::new();
    for &k in pixels {
        let id = pm.data()[k];
        if id < 2 {
            continue;
        }
        match hist.iter_mut().find(|e| e.0 == id) {
            Some(e) => e.1 += 1,
            None => hist.push((id, 1)),
        }
    }
    // most pixels, lowest id on ties
    hist.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|e| e.0)
}

/// Applies the layout rules to every instance, in id order:
/// wall-bound classes are clipped to their majority wall, floor-standing
/// classes lose ceiling pixels, doors are extended down to the floor, and
/// holes are filled. Removed pixels become background; added pixels are
/// only taken from unassigned ones.
pub fn refine_masks(im: &InstanceMap, pm: &PlaneMap, rules: &RefineRules) -> Result<InstanceMap> {
    if !im.ids.same_shape(pm) {
        return Err(Error::ShapeMismatch("plane map and instance map differ in size"));
    }
    let (w, h) = (im.width(), im.height());
    let mut out = im.clone();
    for info in &im.instances {
        let (id, class) = (info.id, info.class_id);
        let mut pixels: Vec<usize> = (0..w * h).filter(|&k| out.ids.data()[k] == id).collect();
        if pixels.is_empty() {
            continue;
        }
        let mut remove = |keep: &dyn Fn(usize) -> bool, pixels: &mut Vec<usize>| {
            pixels.retain(|&k| {
                let ok = keep(k);
                if !ok {
                    out.ids.data_mut()[k] = 0;
                    out.semantic.data_mut()[k] = 0;
                }
                ok
            });
        };
        if rules.wall_bound.contains(&class) {
            if let Some(wall) = majority_wall(&pixels, pm) {
                remove(&|k| pm.data()[k] == wall, &mut pixels);
            }
        }
        if rules.floor_standing.contains(&class) {
            remove(&|k| pm.data()[k] != CEILING, &mut pixels);
        }
        let claim = |k: usize, out: &mut InstanceMap| {
            if out.ids.data()[k] == 0 {
                out.ids.data_mut()[k] = id;
                out.semantic.data_mut()[k] = class;
            }
        };
        if rules.doors.contains(&class) {
            if let Some(wall) = majority_wall(&pixels, pm) {
                let mut lowest: Vec<Option<usize>> = vec![None; w];
                for &k in &pixels {
                    let (row, col) = (k / w, k % w);
                    if lowest[col].is_none_or(|r| row > r) {
                        lowest[col] = Some(row);
                    }
                }
                for (col, low) in lowest.iter().enumerate() {
                    let Some(low) = *low else { continue };
                    for row in low + 1..h {
                        if pm.get(col, row) != wall {
                            break;
                        }
                        claim(row * w + col, &mut out);
                    }
                }
            }
        }
        if rules.fill_holes {
            let mask = out.ids.map(|&v| v == id);
            let filled = fill_holes(&mask);
            for k in 0..w * h {
                if filled.data()[k] && !mask.data()[k] {
                    claim(k, &mut out);
                }
            }
        }
    }
    out.recount();
    Ok(out)
}
