//! Generating a synthetic dataset on disk and loading it back.

use scalekit::protocol::{generate_dataset, load_dataset, write_dataset, ProtocolConfig, SynthGenConfig};

pub fn run_example() -> usize {
    let cfg = SynthGenConfig {
        scenes: 3,
        image_size: 48,
        ..SynthGenConfig::default()
    };
    let data = generate_dataset(&cfg, 99).unwrap();
    let dir = std::env::temp_dir().join(format!("scalekit_synth_example_{}", std::process::id()));
    write_dataset(&dir, &data, &cfg, 99, &ProtocolConfig::default().magnitudes).unwrap();
    let loaded = load_dataset(&dir).unwrap();
    for seq in &loaded.sequences {
        println!(
            "{}: {} patches, {} frames, last frame {:.3} units from the first",
            seq.scene.id,
            seq.scene.patches.len(),
            seq.frames.len(),
            seq.nominal_distance(seq.frames.len() - 1)
        );
    }
    println!("outlier scenes (withheld): {:?}", data.outliers);
    std::fs::remove_dir_all(&dir).ok();
    loaded.sequences.len()
}

#[allow(dead_code)]
fn main() {
    run_example();
}
