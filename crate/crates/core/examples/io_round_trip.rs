//! Write a scene in every point file format and read it back.

use scanmix::io::{read_point_file, write_point_file, FileFormat};
use scanmix::prelude::*;

fn main() -> Result<()> {
    let cloud = generate_scene(&SceneTemplate::Corridor.canonical().with_density(100.0), &mut RandomStream::new(2))?;
    let dir = std::env::temp_dir().join("scanmix-io-example");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for format in FileFormat::ALL {
        let path = dir.join(format!("corridor.{}", format.extension()));
        write_point_file(&cloud, &path, format)?;
        let back = read_point_file(&path, format, cloud.taxonomy().clone())?;
        let err = cloud
            .positions()
            .iter()
            .zip(back.positions())
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
        println!(
            "{:<14} {size:>9} bytes  max coordinate error {err:.2e}  labels equal: {}",
            format.as_str(),
            back.labels() == cloud.labels()
        );
    }
    Ok(())
}
