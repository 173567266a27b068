//! Frustum containment checked with an independent pinhole projection.

use meshwright_bridge::{plan_cameras, BBox, FALLBACK_DISTANCE};
use proptest::prelude::*;

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Normalized image coordinates of `p` for a camera at `eye` looking at `at`
/// (Z up). Returns None when the point is behind the camera.
fn project(eye: [f64; 3], at: [f64; 3], p: [f64; 3]) -> Option<(f64, f64)> {
    let fwd = unit(sub(at, eye));
    let right = unit(cross(fwd, [0.0, 0.0, 1.0]));
    let up = cross(right, fwd);
    let v = sub(p, eye);
    let depth = dot(v, fwd);
    (depth > 0.0).then(|| (dot(v, right) / depth, dot(v, up) / depth))
}

fn bbox_strategy() -> impl Strategy<Value = BBox> {
    let coord = -100.0f64..100.0;
    let extent = 0.01f64..50.0;
    (prop::array::uniform3(coord), prop::array::uniform3(extent))
        .prop_map(|(min, ext)| BBox::new(min, [min[0] + ext[0], min[1] + ext[1], min[2] + ext[2]]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn every_corner_in_every_frustum(bbox in bbox_strategy()) {
        let plan = plan_cameras(&bbox, 5, 50.0, 1.2).unwrap();
        let half = (plan.fov_deg.to_radians() / 2.0).tan();
        for view in &plan.views {
            let eye = view.camera_position(plan.target, plan.distance);
            for c in bbox.corners() {
                let (x, y) = project(eye, plan.target, c).expect("corner behind camera");
                prop_assert!(x.abs() <= half && y.abs() <= half, "corner {c:?} at ({x}, {y}) for {view:?}");
            }
        }
    }
}

#[test]
fn degenerate_box_falls_back() {
    let plan = plan_cameras(&BBox::new([2.0; 3], [2.0; 3]), 5, 50.0, 1.2).unwrap();
    assert_eq!(plan.distance, FALLBACK_DISTANCE);
    assert_eq!(plan.views.len(), 5);
}
