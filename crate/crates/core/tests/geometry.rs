use hrc_core::model::Orientation;
use hrc_core::sensor::{camera_to_robot, iou, midpoint, orientation_from_bbox, BBox, CameraTransform, Point};
use hrc_core::SensorError;
use proptest::prelude::*;

/// Area of `a ∩ b` and `a ∪ b` by coordinate compression: split the plane
/// at every box edge and sum the cells covered by either box.
fn compressed_areas(a: &BBox, b: &BBox) -> (f64, f64) {
    let mut xs = vec![a.x1, a.x2, b.x1, b.x2];
    let mut ys = vec![a.y1, a.y2, b.y1, b.y2];
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let inside = |r: &BBox, x: f64, y: f64| r.x1 <= x && x <= r.x2 && r.y1 <= y && y <= r.y2;
    let (mut inter, mut union) = (0.0, 0.0);
    for xw in xs.windows(2) {
        for yw in ys.windows(2) {
            let area = (xw[1] - xw[0]) * (yw[1] - yw[0]);
            if area == 0.0 {
                continue;
            }
            let (cx, cy) = ((xw[0] + xw[1]) / 2.0, (yw[0] + yw[1]) / 2.0);
            match (inside(a, cx, cy), inside(b, cx, cy)) {
                (true, true) => {
                    inter += area;
                    union += area;
                }
                (true, false) | (false, true) => union += area,
                _ => {}
            }
        }
    }
    (inter, union)
}

/// IoU of integer boxes by counting unit pixels.
fn pixel_iou(a: [i32; 4], b: [i32; 4]) -> f64 {
    let (mut inter, mut union) = (0u32, 0u32);
    for x in a[0].min(b[0])..a[2].max(b[2]) {
        for y in a[1].min(b[1])..a[3].max(b[3]) {
            let ia = a[0] <= x && x < a[2] && a[1] <= y && y < a[3];
            let ib = b[0] <= x && x < b[2] && b[1] <= y && y < b[3];
            inter += u32::from(ia && ib);
            union += u32::from(ia || ib);
        }
    }
    f64::from(inter) / f64::from(union)
}

fn bbox() -> impl Strategy<Value = BBox> {
    (-1000.0..1000.0f64, -1000.0..1000.0f64, 0.01..500.0f64, 0.01..500.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn int_box() -> impl Strategy<Value = [i32; 4]> {
    (0..30i32, 0..30i32, 1..15i32, 1..15i32).prop_map(|(x, y, w, h)| [x, y, x + w, y + h])
}

fn to_box(r: [i32; 4]) -> BBox {
    BBox::new(r[0].into(), r[1].into(), r[2].into(), r[3].into()).unwrap()
}

fn transform() -> impl Strategy<Value = CameraTransform> {
    (
        prop::array::uniform4(-10.0..10.0f64),
        prop::array::uniform2(-500.0..500.0f64),
        0.0..200.0f64,
    )
        .prop_filter("well conditioned", |(m, _, _)| (m[0] * m[3] - m[1] * m[2]).abs() > 0.1)
        .prop_map(|(m, t, z)| CameraTransform::new([[m[0], m[1]], [m[2], m[3]]], t, z).unwrap())
}

fn point() -> impl Strategy<Value = Point> {
    (-1000.0..1000.0f64, -1000.0..1000.0f64).prop_map(|(x, y)| Point::new(x, y))
}

/// Analytic inverse of the affine map.
fn invert(t: &CameraTransform, x: f64, y: f64) -> (f64, f64) {
    let [[a, b], [c, d]] = t.matrix();
    let det = a * d - b * c;
    let (u, v) = (x - t.translation()[0], y - t.translation()[1]);
    ((d * u - b * v) / det, (-c * u + a * v) / det)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2500))]

    #[test]
    fn midpoint_is_mean_of_corners(b in bbox()) {
        let m = midpoint(&b);
        let corners = [(b.x1, b.y1), (b.x2, b.y2)];
        let mx = corners.iter().map(|c| c.0).sum::<f64>() * 0.5;
        let my = corners.iter().map(|c| c.1).sum::<f64>() * 0.5;
        prop_assert!((m.x - mx).abs() <= 1e-12 && (m.y - my).abs() <= 1e-12);
    }

    #[test]
    fn iou_matches_compressed_grid(a in bbox(), b in bbox()) {
        let (inter, union) = compressed_areas(&a, &b);
        let want = if inter == 0.0 { 0.0 } else { inter / union };
        let got = iou(&a, &b);
        prop_assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        prop_assert!((0.0..=1.0).contains(&got));
        prop_assert_eq!(got, iou(&b, &a));
    }

    #[test]
    fn iou_matches_pixel_count(a in int_box(), b in int_box()) {
        let got = iou(&to_box(a), &to_box(b));
        prop_assert!((got - pixel_iou(a, b)).abs() <= 1e-9);
    }

    #[test]
    fn orientation_follows_long_axis(b in bbox()) {
        let want = if b.x2 - b.x1 >= b.y2 - b.y1 { Orientation::Parallel } else { Orientation::Perpendicular };
        prop_assert_eq!(orientation_from_bbox(&b), want);
    }

    #[test]
    fn camera_to_robot_round_trips(t in transform(), p in point()) {
        let r = camera_to_robot(p, &t).unwrap();
        let (x, y) = invert(&t, r.x, r.y);
        prop_assert!((x - p.x).abs() <= 1e-9 && (y - p.y).abs() <= 1e-9, "({x}, {y}) vs {p:?}");
        prop_assert_eq!(r.z, t.fixed_z());
    }

    #[test]
    fn camera_to_robot_preserves_affine_combinations(t in transform(), p in point(), q in point(), l in 0.0..1.0f64) {
        let mix = Point::new(l * p.x + (1.0 - l) * q.x, l * p.y + (1.0 - l) * q.y);
        let (fp, fq, fm) = (camera_to_robot(p, &t).unwrap(), camera_to_robot(q, &t).unwrap(), camera_to_robot(mix, &t).unwrap());
        prop_assert!((fm.x - (l * fp.x + (1.0 - l) * fq.x)).abs() <= 1e-9);
        prop_assert!((fm.y - (l * fp.y + (1.0 - l) * fq.y)).abs() <= 1e-9);
    }

    #[test]
    fn near_singular_transforms_rejected(a in -10.0..10.0f64, b in -10.0..10.0f64, k in -10.0..10.0f64) {
        // Second row is a multiple of the first.
        let m = [[a, b], [k * a, k * b]];
        let rejected = matches!(CameraTransform::new(m, [0.0, 0.0], 0.0), Err(SensorError::DegenerateTransform { .. }));
        prop_assert!(rejected);
        let t = CameraTransform::new_unchecked(m, [0.0, 0.0], 0.0);
        prop_assert!(camera_to_robot(Point::new(1.0, 1.0), &t).is_err());
    }
}

#[test]
fn worked_examples() {
    let b = |x1, y1, x2, y2| BBox::new(x1, y1, x2, y2).unwrap();
    assert_eq!(midpoint(&b(2.0, 4.0, 10.0, 8.0)), Point::new(6.0, 6.0));
    assert!((iou(&b(0.0, 0.0, 10.0, 10.0), &b(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-12);
    assert!((iou(&b(0.0, 0.0, 10.0, 10.0), &b(4.0, 0.0, 14.0, 10.0)) - 60.0 / 140.0).abs() < 1e-12);
    let shift = CameraTransform::new([[1.0, 0.0], [0.0, 1.0]], [100.0, 50.0], 12.0).unwrap();
    let r = camera_to_robot(Point::new(0.0, 0.0), &shift).unwrap();
    assert_eq!((r.x, r.y, r.z), (100.0, 50.0, 12.0));
}
