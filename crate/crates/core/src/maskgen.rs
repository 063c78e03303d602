//! Object masks from boundary points on the sphere, and their composition
//! into a semantic map under the pairwise occlusion rule.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::grid::{BinaryMask, ClassId, EquirectGrid, SemanticMap};
use crate::math::{self, Vec3, TAU};
use crate::sphere::{self, geodesic_arc, pixel_to_dir, PixelCoord, SphereDir};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectAnnotation {
    pub class_id: ClassId,
    pub instance_id: u16,
    /// Polygon vertices in pixel coordinates, in order.
    pub points: Vec<PixelCoord>,
}

/// Sum of the signed angles that the edges of `poly` sweep as seen from `p`
/// (tangent-plane directions of the great circles towards each vertex).
/// `±2π` inside, `0` outside, for polygons within the hemisphere around `p`.
pub fn spherical_winding(p: Vec3, poly: &[Vec3]) -> f64 {
    let mut total = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let ta = a - p * a.dot(p);
        let tb = b - p * b.dot(p);
        total += math::atan2(p.dot(ta.cross(tb)), ta.dot(tb));
    }
    total
}

/// Fills the spherical polygon whose edges are great-circle arcs between the
/// annotated vertices. A pixel belongs to the mask when its center is inside.
///
/// The polygon must fit in an open hemisphere. Pixels are evaluated relative
/// to the first vertex's column, so integer column shifts of the annotation
/// shift the mask exactly.
pub fn rasterize_spherical_polygon(ann: &ObjectAnnotation, width: usize, height: usize) -> Result<BinaryMask> {
    let mut mask = BinaryMask::empty(width, height)?;
    if ann.points.len() < 3 {
        return Err(Error::DegeneratePolygon);
    }
    let anchor = math::floor(ann.points[0].u);
    let rel = |u: f64| sphere::wrapped_delta(anchor, u, width);
    let verts: Vec<Vec3> = ann
        .points
        .iter()
        .map(|p| pixel_to_dir(PixelCoord::new(rel(p.u), p.v), width, height).vec())
        .collect();
    let center = verts
        .iter()
        .fold(Vec3::ZERO, |acc, v| acc + *v)
        .normalized()
        .ok_or(Error::PolygonTooLarge)?;
    if verts.iter().any(|v| v.dot(center) <= 1e-9) {
        return Err(Error::PolygonTooLarge);
    }

    // trace the edges to bound the candidate pixels
    let px_angle = TAU / width as f64;
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let cu = sphere::dir_to_pixel(SphereDir::new(center).ok_or(Error::PolygonTooLarge)?, width, height).u;
    for i in 0..verts.len() {
        let a = SphereDir::new(verts[i]).ok_or(Error::DegeneratePolygon)?;
        let b = SphereDir::new(verts[(i + 1) % verts.len()]).ok_or(Error::DegeneratePolygon)?;
        let len_px = sphere::angular_distance(a, b) / px_angle;
        let n = ((2.0 * len_px) as usize + 2).max(2);
        for p in geodesic_arc(a, b, n)? {
            let q = sphere::dir_to_pixel(p, width, height);
            rmin = rmin.min(q.v);
            rmax = rmax.max(q.v);
            let d = sphere::wrapped_delta(cu, q.u, width);
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
    }
    let h = height as i64;
    let mut r0 = (math::floor(rmin) as i64 - 1).max(0);
    let mut r1 = (math::floor(rmax) as i64 + 2).min(h - 1);
    let mut c0 = math::floor(cu + dmin) as i64 - 1;
    let mut c1 = math::floor(cu + dmax) as i64 + 2;
    let north = spherical_winding(Vec3::Z, &verts).abs() > 1.0 && Vec3::Z.dot(center) > 0.0;
    let south = spherical_winding(-Vec3::Z, &verts).abs() > 1.0 && (-Vec3::Z).dot(center) > 0.0;
    if north || south || c1 - c0 >= width as i64 {
        c0 = 0;
        c1 = width as i64 - 1;
    }
    if north {
        r0 = 0;
    }
    if south {
        r1 = h - 1;
    }

    let mut count = 0usize;
    for row in r0..=r1 {
        for col in c0..=c1 {
            let u = sphere::wrapped_delta(0.0, col as f64, width);
            let p = pixel_to_dir(PixelCoord::new(u, row as f64), width, height).vec();
            if p.dot(center) <= 0.0 {
                continue;
            }
            if spherical_winding(p, &verts).abs() > core::f64::consts::PI {
                let c = (col + anchor as i64).rem_euclid(width as i64) as usize;
                if !mask.get(c, row as usize) {
                    mask.set(c, row as usize, true);
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::DegeneratePolygon);
    }
    Ok(mask)
}

/// A rasterized object entering the composition.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask {
    pub mask: BinaryMask,
    pub class_id: ClassId,
    pub instance_id: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub semantic: SemanticMap,
    /// Index + 1 of the input object owning each pixel, 0 for background.
    pub owner: EquirectGrid<u16>,
    /// Input indices in painting order (lowest priority first).
    pub paint_order: Vec<usize>,
}

/// Which of two overlapping objects is in front, or `None` if they do not
/// overlap. With `overlap / min(area) > τ` the smaller one is considered
/// closer; otherwise the larger one is selected. Equal areas fall back to the
/// lower class id, then the lower instance id.
pub fn occlusion_winner(a: &ObjectMask, b: &ObjectMask, overlap: usize, tau: f64) -> Option<bool> {
    if overlap == 0 {
        return None;
    }
    let (aa, ab) = (a.mask.area(), b.mask.area());
    let frac = overlap as f64 / aa.min(ab) as f64;
    let a_wins = if aa == ab {
        (a.class_id, a.instance_id) <= (b.class_id, b.instance_id)
    } else if frac > tau {
        aa < ab
    } else {
        aa > ab
    };
    Some(a_wins)
}

/// Composes object masks into a semantic map.
///
/// Pairwise winners are counted per object; objects are painted in
/// ascending priority `(wins, smaller area, lower class, lower instance)`,
/// so the result does not depend on the input order and reproduces the
/// pairwise rule exactly for two objects.
pub fn compose_semantic(objects: &[ObjectMask], tau: f64) -> Result<Composition> {
    let Some(first) = objects.first() else {
        return Err(Error::InvalidParameter("compose_semantic needs at least one mask"));
    };
    let (w, h) = (first.mask.width(), first.mask.height());
    if objects.iter().any(|o| !o.mask.same_shape(&first.mask)) {
        return Err(Error::ShapeMismatch("masks differ in size"));
    }
    if objects.len() > u16::MAX as usize {
        return Err(Error::InvalidParameter("too many objects"));
    }
    let n = objects.len();
    let areas: Vec<usize> = objects.iter().map(|o| o.mask.area()).collect();
    let mut wins = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            let overlap = objects[i]
                .mask
                .data()
                .iter()
                .zip(objects[j].mask.data())
                .filter(|(a, b)| **a && **b)
                .count();
            match occlusion_winner(&objects[i], &objects[j], overlap, tau) {
                Some(true) => wins[i] += 1,
                Some(false) => wins[j] += 1,
                None => {}
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| {
        (
            wins[i],
            Reverse(areas[i]),
            Reverse(objects[i].class_id),
            Reverse(objects[i].instance_id),
        )
    });
    let mut semantic = SemanticMap::filled(w, h, 1, 0)?;
    let mut owner = EquirectGrid::filled(w, h, 1, 0u16)?;
    for &i in &order {
        let o = &objects[i];
        for (k, _) in o.mask.data().iter().enumerate().filter(|(_, b)| **b) {
            semantic.data_mut()[k] = o.class_id;
            owner.data_mut()[k] = (i + 1) as u16;
        }
    }
    Ok(Composition {
        semantic,
        owner,
        paint_order: order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{cos, PI};
    use alloc::vec;

    const W: usize = 512;
    const H: usize = 256;

    fn rect(u0: f64, v0: f64, u1: f64, v1: f64) -> ObjectAnnotation {
        ObjectAnnotation {
            class_id: 3,
            instance_id: 1,
            points: vec![
                PixelCoord::new(u0, v0),
                PixelCoord::new(u1, v0),
                PixelCoord::new(u1, v1),
                PixelCoord::new(u0, v1),
            ],
        }
    }

    fn block(u0: usize, v0: usize, u1: usize, v1: usize, class_id: ClassId, id: u16) -> ObjectMask {
        let mask = EquirectGrid::from_fn(64, 32, |c, r| c >= u0 && c < u1 && r >= v0 && r < v1).unwrap();
        ObjectMask {
            mask,
            class_id,
            instance_id: id,
        }
    }

    #[test]
    fn small_equatorial_square_fills_like_a_planar_square() {
        // edges on pixel boundaries around columns 250..=259, rows 123..=132
        let m = rasterize_spherical_polygon(&rect(249.5, 122.5, 259.5, 132.5), W, H).unwrap();
        let area = m.area() as f64;
        assert!((area - 100.0).abs() <= 2.0, "area {area}");
        // planar fill oracle
        let planar = (0..H)
            .flat_map(|r| (0..W).map(move |c| (c, r)))
            .filter(|&(c, r)| (250..=259).contains(&c) && (123..=132).contains(&r))
            .filter(|&(c, r)| m.get(c, r))
            .count();
        assert!(planar as f64 >= 98.0);
    }

    #[test]
    fn seam_translation_is_a_column_shift() {
        let base = ObjectAnnotation {
            class_id: 1,
            instance_id: 1,
            points: vec![
                PixelCoord::new(240.0, 100.0),
                PixelCoord::new(275.5, 96.0),
                PixelCoord::new(281.0, 140.25),
                PixelCoord::new(236.5, 133.0),
            ],
        };
        let m = rasterize_spherical_polygon(&base, W, H).unwrap();
        for k in [256i64, 270, -250, 7] {
            let moved = ObjectAnnotation {
                points: base
                    .points
                    .iter()
                    .map(|p| PixelCoord::new(math::rem_euclid(p.u + k as f64, W as f64), p.v))
                    .collect(),
                ..base.clone()
            };
            let mk = rasterize_spherical_polygon(&moved, W, H).unwrap();
            assert_eq!(mk, m.shift_columns(k), "shift {k}");
        }
    }

    #[test]
    fn polygon_across_the_seam_is_contiguous() {
        let m = rasterize_spherical_polygon(&rect(500.5, 100.5, 10.5, 120.5), W, H).unwrap();
        assert!(m.get(0, 110) && m.get(505, 110) && m.get(10, 110));
        assert!(!m.get(256, 110) && !m.get(20, 110));
    }

    #[test]
    fn wide_rectangle_at_high_latitude_curves() {
        let m = rasterize_spherical_polygon(&rect(156.0, 40.0, 356.0, 60.0), W, H).unwrap();
        let top_row = |c: usize| (0..H).find(|&r| m.get(c, r));
        let mid = top_row(256).unwrap();
        let side = top_row(165).unwrap();
        // the great circle between the top corners bulges towards the pole
        assert!(mid < side, "mid {mid} side {side}");
    }

    #[test]
    fn polygon_around_the_pole() {
        let ann = ObjectAnnotation {
            class_id: 1,
            instance_id: 1,
            points: (0..6).map(|i| PixelCoord::new(i as f64 * 512.0 / 6.0, 20.0)).collect(),
        };
        let m = rasterize_spherical_polygon(&ann, W, H).unwrap();
        assert!((0..W).all(|c| m.get(c, 0)));
        assert!(!m.get(0, 40));
    }

    #[test]
    fn degenerate_and_oversized_polygons() {
        let tiny = rect(100.1, 100.1, 100.2, 100.2);
        assert_eq!(rasterize_spherical_polygon(&tiny, W, H), Err(Error::DegeneratePolygon));
        let two = ObjectAnnotation {
            points: vec![PixelCoord::new(1.0, 1.0), PixelCoord::new(5.0, 5.0)],
            ..tiny.clone()
        };
        assert_eq!(rasterize_spherical_polygon(&two, W, H), Err(Error::DegeneratePolygon));
        let huge = ObjectAnnotation {
            points: vec![
                PixelCoord::new(0.0, 128.0),
                PixelCoord::new(200.0, 128.0),
                PixelCoord::new(400.0, 128.0),
            ],
            ..tiny
        };
        assert_eq!(rasterize_spherical_polygon(&huge, W, H), Err(Error::PolygonTooLarge));
    }

    /// Spherical excess of a convex polygon by a triangle fan
    /// (tan(E/2) = |a·(b×c)| / (1 + a·b + b·c + c·a)).
    fn spherical_area(verts: &[Vec3]) -> f64 {
        let mut e = 0.0;
        for i in 1..verts.len() - 1 {
            let (a, b, c) = (verts[0], verts[i], verts[i + 1]);
            let num = a.dot(b.cross(c)).abs();
            let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
            e += 2.0 * math::atan2(num, den);
        }
        e
    }

    #[test]
    fn area_matches_spherical_excess() {
        let polys = [
            vec![(200.0, 100.0), (260.0, 104.0), (250.0, 150.0), (190.0, 140.0)],
            vec![(10.0, 110.0), (40.0, 120.0), (20.0, 160.0)],
            vec![(300.0, 90.0), (340.0, 95.0), (360.0, 120.0), (330.0, 150.0), (295.0, 130.0)],
        ];
        let pixel_sa = |row: usize| (TAU / W as f64) * (PI / H as f64) * cos(sphere::lat_of_v(row as f64, H));
        for p in polys {
            let ann = ObjectAnnotation {
                class_id: 1,
                instance_id: 1,
                points: p.iter().map(|&(u, v)| PixelCoord::new(u, v)).collect(),
            };
            let m = rasterize_spherical_polygon(&ann, W, H).unwrap();
            let covered: f64 = (0..H)
                .map(|r| (0..W).filter(|&c| m.get(c, r)).count() as f64 * pixel_sa(r))
                .sum();
            let verts: Vec<Vec3> = ann.points.iter().map(|q| pixel_to_dir(*q, W, H).vec()).collect();
            let exact = spherical_area(&verts);
            assert!((covered - exact).abs() / exact < 0.02, "{covered} vs {exact}");
        }
    }

    #[test]
    fn disjoint_masks_union_in_any_order() {
        let a = block(0, 0, 10, 10, 1, 1);
        let b = block(20, 5, 30, 15, 2, 2);
        let ab = compose_semantic(&[a.clone(), b.clone()], 0.5).unwrap();
        let ba = compose_semantic(&[b, a], 0.5).unwrap();
        assert_eq!(ab.semantic, ba.semantic);
        assert_eq!(ab.semantic.get(5, 5), 1);
        assert_eq!(ab.semantic.get(25, 10), 2);
        assert_eq!(ab.semantic.get(40, 20), 0);
    }

    #[test]
    fn nested_small_object_stays_visible() {
        let big = block(0, 0, 40, 30, 1, 1);
        let small = block(10, 10, 20, 20, 2, 2);
        let c = compose_semantic(&[small, big], 0.5).unwrap();
        assert_eq!((10..20).flat_map(|x| (10..20).map(move |y| (x, y))).filter(|&(x, y)| c.semantic.get(x, y) == 2).count(), 100);
    }

    #[test]
    fn small_overlap_goes_to_the_larger_object() {
        let big = block(0, 0, 20, 20, 1, 1);
        let other = block(18, 0, 30, 20, 2, 2); // overlap 40 / 240 < 0.5
        let c = compose_semantic(&[big, other], 0.5).unwrap();
        assert_eq!(c.semantic.get(18, 5), 1);
        assert_eq!(c.semantic.get(25, 5), 2);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(compose_semantic(&[], 0.5).is_err());
        let a = block(0, 0, 4, 4, 1, 1);
        let b = ObjectMask {
            mask: BinaryMask::empty(32, 16).unwrap(),
            class_id: 1,
            instance_id: 2,
        };
        assert!(matches!(compose_semantic(&[a, b], 0.5), Err(Error::ShapeMismatch(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_block() -> impl Strategy<Value = (usize, usize, usize, usize, ClassId)> {
            (0usize..50, 0usize..25, 1usize..14, 1usize..8, 1u8..6).prop_map(|(x, y, w, h, c)| (x, y, x + w, y + h, c))
        }

        fn build(spec: &[(usize, usize, usize, usize, ClassId)]) -> Vec<ObjectMask> {
            spec.iter()
                .enumerate()
                .map(|(i, &(x0, y0, x1, y1, c))| block(x0, y0, x1, y1, c, i as u16 + 1))
                .collect()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn composition_ignores_input_order(spec in prop::collection::vec(arb_block(), 1..6), rot in 0usize..6) {
                let objs = build(&spec);
                let mut perm = objs.clone();
                perm.rotate_left(rot % objs.len());
                perm.reverse();
                let a = compose_semantic(&objs, 0.5).unwrap();
                let b = compose_semantic(&perm, 0.5).unwrap();
                prop_assert_eq!(a.semantic, b.semantic);
            }

            #[test]
            fn two_objects_follow_the_pair_rule(x in arb_block(), y in arb_block(), tau in 0.1f64..0.9) {
                let objs = build(&[x, y]);
                let c = compose_semantic(&objs, tau).unwrap();
                // brute force: decide the front object from counts alone
                let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
                for k in 0..objs[0].mask.data().len() {
                    let (p, q) = (objs[0].mask.data()[k], objs[1].mask.data()[k]);
                    na += p as usize;
                    nb += q as usize;
                    both += (p && q) as usize;
                }
                let front_a = if na == nb {
                    (objs[0].class_id, 1) <= (objs[1].class_id, 2)
                } else if both as f64 / na.min(nb) as f64 > tau {
                    na < nb
                } else {
                    na > nb
                };
                for k in 0..objs[0].mask.data().len() {
                    let (p, q) = (objs[0].mask.data()[k], objs[1].mask.data()[k]);
                    let want = match (p, q) {
                        (true, true) => if front_a { objs[0].class_id } else { objs[1].class_id },
                        (true, false) => objs[0].class_id,
                        (false, true) => objs[1].class_id,
                        _ => 0,
                    };
                    prop_assert_eq!(c.semantic.data()[k], want);
                }
            }

            #[test]
            fn union_of_masks_is_covered(spec in prop::collection::vec(arb_block(), 1..6)) {
                let objs = build(&spec);
                let c = compose_semantic(&objs, 0.5).unwrap();
                for k in 0..c.semantic.data().len() {
                    let any = objs.iter().any(|o| o.mask.data()[k]);
                    prop_assert_eq!(any, c.semantic.data()[k] != 0);
                    if any {
                        let o = &objs[c.owner.data()[k] as usize - 1];
                        prop_assert!(o.mask.data()[k]);
                    }
                }
            }
        }
    }
}
