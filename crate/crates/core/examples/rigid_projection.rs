//! Rigid projection of a sheared field with a jump, and the skew moment by
//! its boundary and volume formulas.

use bdrelax::bdmodel::{SmoothTerm, StructuredBD};
use bdrelax::geometry::Aabb;
use bdrelax::rigid::{m_k_boundary, m_k_volume, project_out_rigid, rigid_projection};
use bdrelax::Mat;

fn main() -> bdrelax::Result<()> {
    let u = StructuredBD::from_json(
        r#"{"dim": 2,
            "smooth": [{"type": "affine", "a": [[0.2, -1.0], [1.4, 0.0]], "v": [0.5, 0.0]}],
            "jumps": [{"normal": [0, 1], "offset": 0.25, "delta": [1.0, 0.0]}]}"#,
    )?;
    let k = Aabb::unit_centered(2);
    let r = rigid_projection(&u, &k)?;
    println!("rigid part: L = {:?}, v = {:?}", r.l, r.v);

    let rest = project_out_rigid(&u, &k)?;
    println!("after projection, rigid part = {:?}", rigid_projection(&rest, &k)?.v);

    let smooth = StructuredBD::new(
        2,
        vec![SmoothTerm::Sinusoid { amp: vec![0.4, 0.1], k: vec![2.0, 1.0], phase: 0.3 }],
        vec![],
        None,
    )?;
    let unit = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0])?;
    for n in [8, 16, 32] {
        let gap: Mat = m_k_boundary(&smooth, &unit, n)? - m_k_volume(&smooth, &unit, n)?;
        println!("h = 1/{n:<2}  |M_boundary - M_volume| = {:.3e}", gap.norm());
    }
    Ok(())
}
