//! Epipolar geometry between two pinhole cameras and the symmetric
//! epipolar distance of pixel matches.

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use scalekit::geometry::{
    essential_matrix, fundamental_between, fundamental_matrix, symmetric_epipolar_distance, Camera, Intrinsics,
    PixelMatch, Pose,
};

pub fn run_example() -> (f64, f64) {
    // Pure sideways motion with identity intrinsics: F equals E.
    let rel = Pose::new(Matrix3::identity(), Vector3::new(-1.0, 0.0, 0.0)).unwrap();
    let e = essential_matrix(&rel);
    let k = Intrinsics::unit();
    let f = fundamental_matrix(&e, &k, &k);
    let m = PixelMatch::new(Vector2::new(0.0, 0.0), Vector2::new(-0.5, 0.1));
    let hand = symmetric_epipolar_distance(&f, &m);
    println!("E =\n{e}");
    println!("SED of the off-line match: {hand}");

    // A real camera pair: project one 3D point into both views.
    let k = Intrinsics::centered(256, 60f64.to_radians());
    let a = Camera::new(k, Pose::identity());
    let r = Rotation3::from_euler_angles(0.0, 0.05, 0.0).into_inner();
    let b = Camera::new(k, Pose::new(r, Vector3::new(-0.3, 0.02, 0.1)).unwrap());
    let point = Vector3::new(0.4, -0.2, 3.0);
    let exact = PixelMatch::new(a.project(&point).unwrap(), b.project(&point).unwrap());
    let f = fundamental_between(&a, &b);
    let exact_sed = symmetric_epipolar_distance(&f, &exact);
    let nudged = PixelMatch::new(exact.p1, exact.p2 + Vector2::new(0.0, 2.0));
    println!(
        "exact match SED {exact_sed:.3e} px, nudged by 2 px vertically: {:.3} px",
        symmetric_epipolar_distance(&f, &nudged)
    );
    (hand, exact_sed)
}

#[allow(dead_code)]
fn main() {
    run_example();
}
