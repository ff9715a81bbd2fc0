//! Generate one scene per room template and print per-class point counts.

use scanmix::prelude::*;

fn main() -> Result<()> {
    let mut rng = RandomStream::new(7);
    for template in SceneTemplate::ALL {
        let spec = template.randomized(&mut rng).with_density(150.0);
        let cloud = generate_scene(&spec, &mut rng)?;
        let counts: Vec<String> = cloud
            .class_counts()
            .iter()
            .enumerate()
            .map(|(c, n)| format!("{}={n}", cloud.taxonomy().names()[c]))
            .collect();
        println!("{:<12} {:>6} points  {}", template.name(), cloud.len(), counts.join(" "));
    }
    Ok(())
}
