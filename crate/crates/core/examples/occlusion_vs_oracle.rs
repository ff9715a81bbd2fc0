//! Compare the binned depth-buffer visibility test with the exact ray oracle.

use std::time::Instant;

use scanmix::prelude::*;
use scanmix::vss::{compute_free_space_bev, sample_camera_poses, OcclusionConfig};

fn main() -> Result<()> {
    let cloud = generate_scene(&SceneTemplate::OneOccluder.canonical().with_density(1000.0), &mut RandomStream::new(3))?;
    let structural = StructuralClasses::from_taxonomy(cloud.taxonomy())?;
    let bev = compute_free_space_bev(&cloud, 0.25, &structural)?;
    let poses = sample_camera_poses(&cloud, &bev, 3, 0.1, &structural, &mut RandomStream::new(4))?;
    let fov = FovConfig::default();

    for (k, pose) in poses.iter().enumerate() {
        let t = Instant::now();
        let fast = visible_points(&cloud, pose, &fov, &OcclusionConfig::default())?;
        let fast_time = t.elapsed();
        let t = Instant::now();
        let exact = visibility_oracle(&cloud, pose, &fov, 0.02)?;
        let exact_time = t.elapsed();
        let in_range = visible_range_mask(&cloud, pose, &fov)?;
        let (mut agree, mut total) = (0, 0);
        for i in (0..cloud.len()).filter(|&i| in_range[i]) {
            total += 1;
            agree += usize::from(fast[i] == exact[i]);
        }
        println!(
            "pose {k}: agreement {:.2}% over {total} in-range points; fast {:.0?}, oracle {:.0?}",
            100.0 * agree as f64 / total as f64,
            fast_time,
            exact_time
        );
    }
    Ok(())
}
