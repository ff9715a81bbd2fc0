//! Virtual-scan a complete synthetic room with a few scanner setups.

use scanmix::prelude::*;

fn main() -> Result<()> {
    let mut rng = RandomStream::new(1);
    let cloud = generate_scene(&SceneTemplate::Cluttered.canonical().with_density(300.0), &mut rng)?;
    let structural = StructuralClasses::from_taxonomy(cloud.taxonomy())?;
    let prep = ScanPrep::new(&cloud, &VssConfig::default(), &structural)?;

    for (n_cameras, mode) in [(1, ViewingMode::Fixed), (4, ViewingMode::Fixed), (4, ViewingMode::Perspective), (8, ViewingMode::Parallel)] {
        let config = VssConfig { n_cameras, fov: FovConfig { mode, ..FovConfig::default() }, ..VssConfig::default() };
        let scan = simulate_scan_prepared(&cloud, &prep, &config, &structural, &mut rng.fork(n_cameras as u64))?;
        println!(
            "{n_cameras} cameras, {mode:?}: kept {} of {} points ({:.1}%)",
            scan.cloud.len(),
            cloud.len(),
            100.0 * scan.cloud.len() as f64 / cloud.len() as f64
        );
    }
    Ok(())
}
